#include "headfusion/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>

#include "headfusion/expression_tracker.hpp"
#include "headfusion/image_io.hpp"
#include "headfusion/renderer.hpp"
#include "headfusion/rigid_tracker.hpp"
#include "headfusion/sequence.hpp"

namespace headfusion {

bool OccluderSpec::covers(int px, int py) const {
    if (shape == "disk") {
        const double dx = px - x;
        const double dy = py - y;
        return dx * dx + dy * dy <= radius * radius;
    }
    return px >= x && px < x + width && py >= y && py < y + height;
}

ScenarioSpec ScenarioSpec::from_config(const Config& c) {
    ScenarioSpec s;
    s.frames = c.get_int("scenario.frames", s.frames);
    s.seed = static_cast<unsigned>(c.get_int("scenario.seed", static_cast<int>(s.seed)));

    s.rig_path = c.get_string("rig.path", "");
    s.toy_params.n = c.get_int("rig.expressions", s.toy_params.n);
    s.toy_params.grid = c.get_int("rig.grid", s.toy_params.grid);
    s.toy_params.radius = c.get_double("rig.radius", s.toy_params.radius);
    s.toy_params.aperture_deg = c.get_double("rig.aperture_deg", s.toy_params.aperture_deg);
    s.toy_params.bump_amplitude = c.get_double("rig.bump_amplitude", s.toy_params.bump_amplitude);
    s.toy_params.bump_sigma = c.get_double("rig.bump_sigma", s.toy_params.bump_sigma);
    s.rig_scale = c.get_double("rig.scale", s.rig_scale);
    s.texture_resolution = c.get_int("rig.texture_resolution", s.texture_resolution);

    s.intrinsics.fx = c.get_double("camera.fx", s.intrinsics.fx);
    s.intrinsics.fy = c.get_double("camera.fy", s.intrinsics.fy);
    s.intrinsics.cx = c.get_double("camera.cx", s.intrinsics.cx);
    s.intrinsics.cy = c.get_double("camera.cy", s.intrinsics.cy);
    s.intrinsics.width = c.get_int("camera.width", s.intrinsics.width);
    s.intrinsics.height = c.get_int("camera.height", s.intrinsics.height);

    s.trajectory_type = c.get_string("trajectory.type", s.trajectory_type);
    s.trajectory_file = c.get_string("trajectory.file", "");
    s.distance = c.get_double("trajectory.distance", s.distance);
    s.fps = c.get_double("trajectory.fps", s.fps);
    s.yaw_rate = c.get_double("trajectory.yaw_deg_per_s", 0.0);
    s.pitch_rate = c.get_double("trajectory.pitch_deg_per_s", 0.0);
    s.roll_rate = c.get_double("trajectory.roll_deg_per_s", 0.0);
    s.tx_rate = c.get_double("trajectory.tx_mm_per_s", 0.0);
    s.ty_rate = c.get_double("trajectory.ty_mm_per_s", 0.0);
    s.tz_rate = c.get_double("trajectory.tz_mm_per_s", 0.0);

    s.expression_type = c.get_string("expression.type", s.expression_type);
    for (double v : c.get_doubles("expression.active")) {
        s.active_coeffs.push_back(static_cast<int>(v));
    }
    s.amplitude = c.get_double("expression.amplitude", s.amplitude);
    s.period_s = c.get_double("expression.period_s", s.period_s);

    s.deviation_type = c.get_string("deviation.type", s.deviation_type);
    s.dev_amplitude_mm = c.get_double("deviation.amplitude_mm", s.dev_amplitude_mm);
    s.dev_bump_count = c.get_int("deviation.bump_count", s.dev_bump_count);
    s.dev_bump_sigma_texels = c.get_double("deviation.sigma_texels", s.dev_bump_sigma_texels);

    s.sigma_z_mm = c.get_double("noise.sigma_z_mm", 0.0);
    s.depth_noise_scaling = c.get_double("noise.depth_scaling", 0.0);
    s.lmk_sigma_mm = c.get_double("noise.lmk_sigma_mm", 0.0);

    // [occluder], [occluder2], [occluder3], ...
    for (int i = 1; i < 100; ++i) {
        const std::string sec = i == 1 ? "occluder" : "occluder" + std::to_string(i);
        if (!c.has(sec + ".shape") && !c.has(sec + ".depth_offset") && !c.has(sec + ".x")) {
            if (i == 1) continue;
            break;
        }
        OccluderSpec o;
        o.shape = c.get_string(sec + ".shape", o.shape);
        o.x = c.get_double(sec + ".x", o.x);
        o.y = c.get_double(sec + ".y", o.y);
        o.width = c.get_double(sec + ".width", o.width);
        o.height = c.get_double(sec + ".height", o.height);
        o.radius = c.get_double(sec + ".radius", o.radius);
        o.depth_offset = c.get_double(sec + ".depth_offset", o.depth_offset);
        o.start_frame = c.get_int(sec + ".start_frame", o.start_frame);
        o.end_frame = c.get_int(sec + ".end_frame", o.end_frame);
        const auto rgb = c.get_doubles(sec + ".color");
        if (rgb.size() == 3) {
            o.color = {static_cast<unsigned char>(rgb[0]), static_cast<unsigned char>(rgb[1]),
                       static_cast<unsigned char>(rgb[2])};
        }
        s.occluders.push_back(o);
    }
    return s;
}

ScenarioSpec ScenarioSpec::from_file(const std::string& path) {
    return from_config(Config::from_file(path));
}

Pose ScenarioSpec::pose_at(int frame) const {
    const double t = frame / fps;
    const double deg = std::numbers::pi / 180.0;
    const Mat3 r =
        (Eigen::AngleAxisd(roll_rate * t * deg, Vec3::UnitZ()) *
         Eigen::AngleAxisd(yaw_rate * t * deg, Vec3::UnitY()) *
         Eigen::AngleAxisd(pitch_rate * t * deg, Vec3::UnitX()))
            .toRotationMatrix();
    Pose pose;
    pose.rotation = r;
    pose.translation =
        Vec3(tx_rate * t * 1e-3, ty_rate * t * 1e-3, distance + tz_rate * t * 1e-3);
    return pose;
}

ExpressionCoefficients ScenarioSpec::coeffs_at(int frame, int n) const {
    ExpressionCoefficients x = ExpressionCoefficients::Zero(n);
    if (expression_type == "sine") {
        const double t = frame / fps;
        for (size_t j = 0; j < active_coeffs.size(); ++j) {
            const int i = active_coeffs[j];
            if (i < 0 || i >= n) continue;
            // Stagger periods so simultaneously active coefficients stay
            // distinguishable; every curve starts at 0 (neutral frame 0).
            const double period = period_s * (1.0 + 0.3 * j);
            x[i] = std::clamp(
                0.5 * amplitude * (1.0 - std::cos(2.0 * std::numbers::pi * t / period)), 0.0, 1.0);
        }
    }
    return x;
}

Image<double> make_gt_deviation(const ScenarioSpec& spec, const TextureImages& tex) {
    const int R = tex.resolution;
    Image<double> dev(R, R, 0.0);
    if (spec.deviation_type != "bumps") return dev;

    std::mt19937 rng(spec.seed);
    std::uniform_real_distribution<double> uni(0.1, 0.9);
    const double amp = spec.dev_amplitude_mm * 1e-3;
    const double sigma = spec.dev_bump_sigma_texels;
    for (int b = 0; b < spec.dev_bump_count; ++b) {
        const double cu = uni(rng) * R;
        const double cv = uni(rng) * R;
        const double sign = (b % 2 == 0) ? 1.0 : -1.0;
        for (const auto& [u, v] : tex.covered) {
            const double du = u - cu;
            const double dv = v - cv;
            dev(u, v) += sign * amp * std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
        }
    }
    return dev;
}

Image<Rgb8> make_gt_texture(int resolution) {
    Image<Rgb8> color(resolution, resolution, Rgb8{0, 0, 0});
    for (int v = 0; v < resolution; ++v) {
        for (int u = 0; u < resolution; ++u) {
            const double fu = static_cast<double>(u) / resolution;
            const double fv = static_cast<double>(v) / resolution;
            const auto ch = [](double base, double span, double phase) {
                return static_cast<unsigned char>(
                    std::clamp(base + span * std::sin(phase), 0.0, 255.0));
            };
            color(u, v) = {ch(185, 45, 6.0 * std::numbers::pi * fu),
                           ch(140, 35, 4.0 * std::numbers::pi * fv + 1.0),
                           ch(120, 25, 8.0 * std::numbers::pi * (fu + fv))};
        }
    }
    return color;
}

namespace {

// Nearest texel to a texture coordinate (texel centers at (i + 0.5) / R).
std::pair<int, int> nearest_texel(const Vec2& uv, int resolution) {
    const int u = std::clamp(static_cast<int>(std::lround(uv.x() * resolution - 0.5)), 0,
                             resolution - 1);
    const int v = std::clamp(static_cast<int>(std::lround(uv.y() * resolution - 0.5)), 0,
                             resolution - 1);
    return {u, v};
}

}  // namespace

void generate_sequence(const ScenarioSpec& spec, const std::string& out_dir) {
    // Frame-0 neutrality is a pipeline precondition.
    const Pose p0 = spec.pose_at(0);
    if ((p0.rotation - Mat3::Identity()).norm() > 1e-9 || p0.translation.x() != 0.0 ||
        p0.translation.y() != 0.0) {
        throw std::runtime_error("scenario violates frame-0 frontal pose");
    }

    ToyRig rig;
    if (spec.rig_path.empty()) {
        rig = make_toy_rig(spec.toy_params);
    } else {
        rig.set = load_blendshape_set(spec.rig_path);
        rig.landmark_table = load_landmark_vertex_table(spec.rig_path + "/landmarks.txt");
    }
    if (spec.rig_scale != 1.0) rig.set.scale_in_place(spec.rig_scale);
    const int n = rig.set.num_expressions();

    if (spec.coeffs_at(0, n).norm() != 0.0) {
        throw std::runtime_error("scenario violates frame-0 neutral expression");
    }

    std::vector<Pose> file_poses;
    if (spec.trajectory_type == "file") {
        for (const PoseLogEntry& e : read_pose_log(spec.trajectory_file)) {
            file_poses.push_back(e.pose);
        }
        if (static_cast<int>(file_poses.size()) < spec.frames) {
            throw std::runtime_error("trajectory file has fewer poses than frames");
        }
        const Pose& f0 = file_poses.front();
        if ((f0.rotation - Mat3::Identity()).norm() > 1e-9 ||
            std::abs(f0.translation.x()) > 1e-12 || std::abs(f0.translation.y()) > 1e-12) {
            throw std::runtime_error("scenario violates frame-0 frontal pose");
        }
    }

    const TextureImages tex = build_texture_images(rig.set, spec.texture_resolution);
    const Image<double> dev_gt = make_gt_deviation(spec, tex);
    const Image<Rgb8> albedo = make_gt_texture(spec.texture_resolution);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir + "/depth");
    fs::create_directories(out_dir + "/color");
    fs::create_directories(out_dir + "/landmarks");

    std::ofstream pose_log(out_dir + "/" + kGtPosesFile);
    std::ofstream coeff_log(out_dir + "/" + kGtCoeffsFile);
    if (!pose_log || !coeff_log) throw std::runtime_error("cannot write ground-truth logs");

    for (int frame = 0; frame < spec.frames; ++frame) {
        const Pose pose = spec.trajectory_type == "file" ? file_poses[frame] : spec.pose_at(frame);
        const ExpressionCoefficients x = spec.coeffs_at(frame, n);
        const BlendedImages blended = blend(tex, x);
        const RenderedModel render =
            render_surface(tex, blended, dev_gt, albedo, pose, spec.intrinsics);

        std::seed_seq seq{spec.seed, static_cast<unsigned>(frame)};
        std::mt19937 rng(seq);
        std::normal_distribution<double> gauss(0.0, 1.0);

        Image<double> depth = render.depth;
        if (spec.sigma_z_mm > 0.0) {
            for (size_t i = 0; i < depth.size(); ++i) {
                double& z = depth.data()[i];
                if (!depth_valid(z)) continue;
                const double sigma =
                    spec.sigma_z_mm * 1e-3 * (1.0 + spec.depth_noise_scaling * z * z);
                z = std::max(1e-3, z + sigma * gauss(rng));
            }
        }

        Image<Rgb8> color = render.color;
        for (const OccluderSpec& occ : spec.occluders) {
            if (!occ.active(frame)) continue;
            for (int py = 0; py < depth.height(); ++py) {
                for (int px = 0; px < depth.width(); ++px) {
                    if (!occ.covers(px, py)) continue;
                    const double behind = render.depth(px, py);
                    const double z_occ = (depth_valid(behind) ? behind : spec.distance) -
                                         occ.depth_offset;
                    depth(px, py) = std::max(1e-3, z_occ);
                    color(px, py) = occ.color;
                }
            }
        }

        write_depth_png(frame_path(out_dir, "depth", frame, ".png"), depth);
        write_color_png(frame_path(out_dir, "color", frame, ".png"), color);

        // Landmarks: blended landmark vertices pushed along the texture-grid
        // normal by the ground-truth deviation, optionally perturbed.
        std::vector<Landmark> landmarks;
        for (const auto& [lmk_index, vid] : rig.landmark_table) {
            Vec3 p = rig.set.shapes[0].vertices[vid];
            for (int i = 1; i <= n; ++i) {
                if (x[i - 1] == 0.0) continue;
                p += x[i - 1] * (rig.set.shapes[i].vertices[vid] - rig.set.shapes[0].vertices[vid]);
            }
            const auto [tu, tv] = nearest_texel(rig.set.texcoords[vid], tex.resolution);
            if (tex.is_covered(tu, tv)) {
                p += dev_gt(tu, tv) * blended.normal(tu, tv);
            }
            Vec3 p_cam = pose * p;
            if (spec.lmk_sigma_mm > 0.0) {
                p_cam += spec.lmk_sigma_mm * 1e-3 * Vec3(gauss(rng), gauss(rng), gauss(rng));
            }
            landmarks.push_back({lmk_index, p_cam});
        }
        write_landmarks(frame_path(out_dir, "landmarks", frame, ".txt"), landmarks);

        append_pose_log(pose_log, {frame, pose, 0.0, 0});
        append_coeff_log(coeff_log, {frame, x, 0.0, 0});
    }

    save_dev_grid(out_dir + "/" + kGtDevFile, dev_gt);
    write_intrinsics(out_dir + "/" + kIntrinsicsFile, spec.intrinsics);

    std::ofstream rig_file(out_dir + "/" + kRigFile);
    if (!rig_file) throw std::runtime_error("cannot write rig file");
    rig_file << "[rig]\n";
    if (spec.rig_path.empty()) {
        rig_file << "type = toy\n"
                 << "expressions = " << spec.toy_params.n << "\n"
                 << "grid = " << spec.toy_params.grid << "\n"
                 << "radius = " << spec.toy_params.radius << "\n"
                 << "aperture_deg = " << spec.toy_params.aperture_deg << "\n"
                 << "bump_amplitude = " << spec.toy_params.bump_amplitude << "\n"
                 << "bump_sigma = " << spec.toy_params.bump_sigma << "\n";
    } else {
        rig_file << "type = files\npath = " << spec.rig_path << "\n";
    }
    rig_file << "texture_resolution = " << spec.texture_resolution << "\n";
}

double MetricsReport::max_rotation_error_deg() const {
    return rotation_error_deg.empty()
               ? 0.0
               : *std::max_element(rotation_error_deg.begin(), rotation_error_deg.end());
}

double MetricsReport::max_translation_error_mm() const {
    return translation_error_mm.empty()
               ? 0.0
               : *std::max_element(translation_error_mm.begin(), translation_error_mm.end());
}

double MetricsReport::max_coeff_rmse() const {
    return coeff_rmse.empty() ? 0.0 : *std::max_element(coeff_rmse.begin(), coeff_rmse.end());
}

MetricsReport compute_metrics(const std::vector<Pose>& gt_poses,
                              const std::vector<Pose>& est_poses,
                              const std::vector<ExpressionCoefficients>& gt_coeffs,
                              const std::vector<ExpressionCoefficients>& est_coeffs,
                              const Image<double>& gt_dev, const Image<double>& est_dev,
                              const Image<std::uint32_t>& counts) {
    if (gt_poses.size() != est_poses.size() || gt_coeffs.size() != est_coeffs.size()) {
        throw std::runtime_error("ground-truth and estimate lengths differ");
    }
    MetricsReport report;
    for (size_t i = 0; i < gt_poses.size(); ++i) {
        const Mat3 dr = gt_poses[i].rotation.transpose() * est_poses[i].rotation;
        const double c = std::clamp((dr.trace() - 1.0) / 2.0, -1.0, 1.0);
        report.rotation_error_deg.push_back(std::acos(c) * 180.0 / std::numbers::pi);
        report.translation_error_mm.push_back(
            (gt_poses[i].translation - est_poses[i].translation).norm() * 1e3);
    }
    for (size_t i = 0; i < gt_coeffs.size(); ++i) {
        if (gt_coeffs[i].size() != est_coeffs[i].size()) {
            throw std::runtime_error("coefficient dimensions differ");
        }
        const double n = static_cast<double>(gt_coeffs[i].size());
        report.coeff_rmse.push_back(
            std::sqrt((gt_coeffs[i] - est_coeffs[i]).squaredNorm() / std::max(1.0, n)));
    }
    if (gt_dev.width() != est_dev.width() || gt_dev.width() != counts.width()) {
        throw std::runtime_error("deviation grid sizes differ");
    }
    double sq_sum = 0.0;
    for (size_t i = 0; i < gt_dev.size(); ++i) {
        if (counts.data()[i] < 1) continue;
        const double err = (est_dev.data()[i] - gt_dev.data()[i]) * 1e3;
        sq_sum += err * err;
        report.deviation_max_mm = std::max(report.deviation_max_mm, std::abs(err));
        ++report.updated_texels;
    }
    report.deviation_rmse_mm =
        report.updated_texels > 0 ? std::sqrt(sq_sum / report.updated_texels) : 0.0;
    return report;
}

MetricsReport evaluate_run(const std::string& gt_dir, const std::string& run_dir) {
    const auto to_poses = [](const std::vector<PoseLogEntry>& entries) {
        std::vector<Pose> poses;
        for (const auto& e : entries) poses.push_back(e.pose);
        return poses;
    };
    const auto to_coeffs = [](const std::vector<CoeffLogEntry>& entries) {
        std::vector<ExpressionCoefficients> coeffs;
        for (const auto& e : entries) coeffs.push_back(e.x);
        return coeffs;
    };
    const auto gt_poses = to_poses(read_pose_log(gt_dir + "/" + kGtPosesFile));
    const auto est_poses = to_poses(read_pose_log(run_dir + "/" + kPosesFile));
    const auto gt_coeffs = to_coeffs(read_coeff_log(gt_dir + "/" + kGtCoeffsFile));
    const auto est_coeffs = to_coeffs(read_coeff_log(run_dir + "/" + kCoeffsFile));

    const Image<double> gt_dev = load_dev_grid(gt_dir + "/" + kGtDevFile);
    const DeviationSnapshot snap = load_deviation_snapshot(run_dir + "/" + kSnapshotFile);
    Image<double> est_dev(snap.resolution, snap.resolution, 0.0);
    for (size_t i = 0; i < est_dev.size(); ++i) est_dev.data()[i] = snap.dev.data()[i];
    const Image<std::uint32_t> counts = load_count_grid(run_dir + "/" + kCountsFile);

    MetricsReport report =
        compute_metrics(gt_poses, est_poses, gt_coeffs, est_coeffs, gt_dev, est_dev, counts);

    // Optional per-frame stats: frame_id total preprocess rigid occlusion
    // expression fusion attempted accepted (times in ms).
    std::ifstream stats(run_dir + "/" + kStatsFile);
    if (stats) {
        std::string line;
        double total = 0.0, pre = 0.0, rigid = 0.0, occl = 0.0, expr = 0.0, fuse = 0.0;
        double attempted = 0.0, accepted = 0.0;
        int rows = 0;
        while (std::getline(stats, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ss(line);
            int frame_id;
            double t, a, b, c, d, e, att, acc;
            if (ss >> frame_id >> t >> a >> b >> c >> d >> e >> att >> acc) {
                total += t;
                pre += a;
                rigid += b;
                occl += c;
                expr += d;
                fuse += e;
                attempted += att;
                accepted += acc;
                ++rows;
            }
        }
        if (rows > 0) {
            report.mean_frame_ms = total / rows;
            report.mean_stage_ms["preprocess"] = pre / rows;
            report.mean_stage_ms["rigid"] = rigid / rows;
            report.mean_stage_ms["occlusion"] = occl / rows;
            report.mean_stage_ms["expression"] = expr / rows;
            report.mean_stage_ms["fusion"] = fuse / rows;
            report.fusion_acceptance_rate = attempted > 0.0 ? accepted / attempted : 0.0;
        }
    }
    return report;
}

void print_metrics(std::ostream& out, const MetricsReport& report) {
    out << "frames evaluated:        " << report.rotation_error_deg.size() << "\n";
    out << "rotation error (deg):    max " << report.max_rotation_error_deg() << "\n";
    out << "translation error (mm):  max " << report.max_translation_error_mm() << "\n";
    out << "coefficient RMSE:        max " << report.max_coeff_rmse() << "\n";
    out << "deviation RMSE (mm):     " << report.deviation_rmse_mm << " over "
        << report.updated_texels << " updated texels (max " << report.deviation_max_mm << ")\n";
    if (!report.mean_stage_ms.empty()) {
        out << "mean frame time (ms):    " << report.mean_frame_ms << "\n";
        for (const auto& [stage, ms] : report.mean_stage_ms) {
            out << "  " << stage << ": " << ms << " ms\n";
        }
        out << "fusion acceptance rate:  " << report.fusion_acceptance_rate << "\n";
    }
}

}  // namespace headfusion
