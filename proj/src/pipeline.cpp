#include "headfusion/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "headfusion/image_io.hpp"
#include "headfusion/sequence.hpp"

namespace headfusion {

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const Config& c) {
    PipelineConfig p;
    p.rig_path = c.get_string("rig.path", "");
    if (c.get_string("rig.type", p.rig_path.empty() ? "toy" : "files") == "files" &&
        p.rig_path.empty()) {
        throw std::runtime_error("rig.type = files requires rig.path");
    }
    p.toy_params.n = c.get_int("rig.expressions", p.toy_params.n);
    p.toy_params.grid = c.get_int("rig.grid", p.toy_params.grid);
    p.toy_params.radius = c.get_double("rig.radius", p.toy_params.radius);
    p.toy_params.aperture_deg = c.get_double("rig.aperture_deg", p.toy_params.aperture_deg);
    p.toy_params.bump_amplitude = c.get_double("rig.bump_amplitude", p.toy_params.bump_amplitude);
    p.toy_params.bump_sigma = c.get_double("rig.bump_sigma", p.toy_params.bump_sigma);
    p.rig_prescale = c.get_double("rig.prescale", p.rig_prescale);
    p.texture_resolution = c.get_int("rig.texture_resolution", p.texture_resolution);

    p.icp.max_icp_iterations = c.get_int("icp.iterations", p.icp.max_icp_iterations);
    p.icp.corr_dist_reject = c.get_double("icp.dist_reject", p.icp.corr_dist_reject);
    p.icp.corr_angle_reject_deg = c.get_double("icp.angle_reject_deg", p.icp.corr_angle_reject_deg);
    p.icp.lm_initial_damping = c.get_double("icp.lm_damping", p.icp.lm_initial_damping);
    p.icp.lm_max_inner_iterations = c.get_int("icp.lm_inner_iterations", p.icp.lm_max_inner_iterations);
    p.icp.min_correspondences = c.get_int("icp.min_correspondences", p.icp.min_correspondences);

    p.expression.landmark_weight = c.get_double("expression.w_l", p.expression.landmark_weight);
    p.expression.regularizer_weight = c.get_double("expression.w_s", p.expression.regularizer_weight);
    p.expression.outer_iterations = c.get_int("expression.iterations", p.expression.outer_iterations);
    p.expression.relaxation_iterations =
        c.get_int("expression.relaxation_iterations", p.expression.relaxation_iterations);
    p.expression.corr_dist_reject = p.icp.corr_dist_reject;
    p.expression.corr_angle_reject_deg = p.icp.corr_angle_reject_deg;
    p.expression.min_dense_correspondences =
        c.get_int("expression.min_correspondences", p.expression.min_dense_correspondences);

    p.fusion.lambda_empty = c.get_double("fusion.lambda_empty", p.fusion.lambda_empty);
    p.fusion.lambda_num = c.get_double("fusion.lambda_num", p.fusion.lambda_num);
    p.fusion.lambda_min = c.get_double("fusion.lambda_min", p.fusion.lambda_min);
    p.fusion.line_reject = c.get_double("fusion.line_reject", p.fusion.line_reject);
    p.fusion.tau_empty = c.get_double("fusion.tau_empty", p.fusion.tau_empty);
    p.fusion.tau_nonempty = c.get_double("fusion.tau_nonempty", p.fusion.tau_nonempty);
    p.fusion.normal_reject_deg = c.get_double("fusion.normal_reject_deg", p.fusion.normal_reject_deg);
    p.fusion.bilateral_sigma_s = c.get_double("fusion.bilateral_sigma_s", p.fusion.bilateral_sigma_s);
    p.fusion.bilateral_sigma_r = c.get_double("fusion.bilateral_sigma_r", p.fusion.bilateral_sigma_r);

    p.occlusion.tau_d = c.get_double("occlusion.tau_d", p.occlusion.tau_d);
    p.occlusion.tau_c = c.get_double("occlusion.tau_c", p.occlusion.tau_c);
    p.occlusion.cell_size = c.get_int("occlusion.cell_size", p.occlusion.cell_size);
    p.occlusion.compactness = c.get_double("occlusion.compactness", p.occlusion.compactness);
    p.occlusion.slic_iterations = c.get_int("occlusion.slic_iterations", p.occlusion.slic_iterations);
    p.occlusion.region_dilation = c.get_int("occlusion.region_dilation", p.occlusion.region_dilation);
    p.occlusion_enabled = c.get_bool("pipeline.occlusion", p.occlusion_enabled);

    p.validate();
    return p;
}

void PipelineConfig::validate() const {
    const auto require = [](bool ok, const char* what) {
        if (!ok) throw std::runtime_error(std::string("invalid pipeline config: ") + what);
    };
    require(texture_resolution >= 8 && texture_resolution <= 4096, "texture_resolution");
    require(rig_prescale > 0, "rig.prescale");
    require(toy_params.n >= 1 && toy_params.grid >= 3, "toy rig parameters");
    require(icp.max_icp_iterations > 0 && icp.lm_max_inner_iterations > 0, "icp iterations");
    require(icp.corr_dist_reject > 0 && icp.corr_angle_reject_deg > 0, "icp rejection thresholds");
    require(icp.lm_initial_damping > 0, "icp.lm_damping");
    require(icp.min_correspondences > 0, "icp.min_correspondences");
    require(expression.landmark_weight >= 0 && expression.regularizer_weight >= 0,
            "expression weights");
    require(expression.outer_iterations > 0 && expression.relaxation_iterations > 0,
            "expression iterations");
    require(fusion.lambda_empty > 0 && fusion.lambda_num > 0 && fusion.lambda_min > 0,
            "fusion segment half-lengths");
    require(fusion.line_reject > 0 && fusion.tau_empty > 0 && fusion.tau_nonempty > 0,
            "fusion rejection thresholds");
    require(fusion.normal_reject_deg > 0, "fusion.normal_reject_deg");
    require(fusion.bilateral_sigma_s > 0 && fusion.bilateral_sigma_r > 0, "bilateral sigmas");
    require(occlusion.tau_d > 0 && occlusion.tau_c > 0, "occlusion thresholds");
    require(occlusion.cell_size > 0 && occlusion.compactness > 0 && occlusion.slic_iterations > 0,
            "superpixel parameters");
    require(occlusion.region_dilation >= 0, "occlusion.region_dilation");
}

std::string PipelineConfig::rig_descriptor() const {
    std::ostringstream ss;
    ss.precision(12);
    if (rig_path.empty()) {
        ss << "type=toy expressions=" << toy_params.n << " grid=" << toy_params.grid
           << " radius=" << toy_params.radius << " aperture_deg=" << toy_params.aperture_deg
           << " bump_amplitude=" << toy_params.bump_amplitude
           << " bump_sigma=" << toy_params.bump_sigma;
    } else {
        ss << "type=files path=" << rig_path;
    }
    ss << " resolution=" << texture_resolution;
    return ss.str();
}

PipelineConfig parse_rig_descriptor(const std::string& descriptor) {
    PipelineConfig p;
    std::istringstream ss(descriptor);
    std::string token;
    while (ss >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        if (key == "path") p.rig_path = value;
        else if (key == "expressions") p.toy_params.n = std::stoi(value);
        else if (key == "grid") p.toy_params.grid = std::stoi(value);
        else if (key == "radius") p.toy_params.radius = std::stod(value);
        else if (key == "aperture_deg") p.toy_params.aperture_deg = std::stod(value);
        else if (key == "bump_amplitude") p.toy_params.bump_amplitude = std::stod(value);
        else if (key == "bump_sigma") p.toy_params.bump_sigma = std::stod(value);
        else if (key == "resolution") p.texture_resolution = std::stoi(value);
    }
    return p;
}

Pipeline::Pipeline(const PipelineConfig& config) : config_(config) {
    config_.validate();
    if (config_.rig_path.empty()) {
        rig_ = make_toy_rig(config_.toy_params);
    } else {
        rig_.set = load_blendshape_set(config_.rig_path);
        rig_.landmark_table = load_landmark_vertex_table(config_.rig_path + "/landmarks.txt");
    }
    if (config_.rig_prescale != 1.0) rig_.set.scale_in_place(config_.rig_prescale);
}

FrameReport Pipeline::initialize(const RgbdFrame& input) {
    if (initialized_) throw std::runtime_error("pipeline already initialized");
    const auto t_start = std::chrono::steady_clock::now();
    FrameReport report;
    report.frame_id = next_frame_;
    report.stages.push_back("preprocess");

    RgbdFrame frame = input;
    if (frame.vertex_map.size() != frame.depth.size()) preprocess_frame(frame);
    report.ms_preprocess = ms_since(t_start);

    report.stages.push_back("initialize");
    const FirstFrameFit fit = fit_first_frame(frame.landmarks, rig_.set, rig_.landmark_table);
    scale_ = fit.scale;
    pose_ = fit.pose;
    rig_.set.scale_in_place(scale_);
    tex_ = build_texture_images(rig_.set, config_.texture_resolution);
    model_ = std::make_unique<DeviationModel>(config_.texture_resolution);
    alpha_ = Image<std::uint8_t>(config_.texture_resolution, config_.texture_resolution, 1);
    x_ = ExpressionCoefficients::Zero(rig_.set.num_expressions());
    blended_ = blend(tex_, x_);

    report.stages.push_back("fusion");
    const auto t_fuse = std::chrono::steady_clock::now();
    report.fusion = fuse_frame(*model_, tex_, blended_, frame, pose_, alpha_, config_.fusion);
    report.ms_fusion = ms_since(t_fuse);

    report.stages.push_back("landmark_texels");
    model_->lmk_texels = find_landmark_texels(tex_, model_->dev_raw, pose_, frame.landmarks);

    report.pose = pose_;
    report.x = x_;
    report.ms_total = ms_since(t_start);
    initialized_ = true;
    ++next_frame_;
    return report;
}

FrameReport Pipeline::process_frame(const RgbdFrame& input) {
    if (!initialized_) throw std::runtime_error("pipeline not initialized");
    const auto t_start = std::chrono::steady_clock::now();
    FrameReport report;
    report.frame_id = next_frame_;

    report.stages.push_back("preprocess");
    RgbdFrame frame = input;
    if (frame.vertex_map.size() != frame.depth.size()) preprocess_frame(frame);
    report.ms_preprocess = ms_since(t_start);

    // Rigid tracking against the raw depth, gated by the previous frame's
    // visibility (all-visible on frame 1).  All in-loop consumers read the
    // median grid directly; the smoothed copy is only served outward, so the
    // filter bias can never feed back into tracking or fusion.
    report.stages.push_back("rigid");
    const auto t_rigid = std::chrono::steady_clock::now();
    const TrackResult track =
        track_rigid(tex_, blended_, model_->dev_raw, frame, pose_, alpha_, config_.icp);
    report.tracking_lost = track.lost;
    report.rigid_cost = track.cost;
    report.rigid_correspondences = track.n_correspondences;
    if (!track.lost) pose_ = track.pose;
    report.ms_rigid = ms_since(t_rigid);

    // Occlusion handling at the new pose with the previous coefficients.
    const auto t_occl = std::chrono::steady_clock::now();
    RgbdFrame completed;
    if (config_.occlusion_enabled) {
        report.stages.push_back("render");
        last_render_ = render_surface(tex_, blended_, model_->dev_raw, model_->color, pose_,
                                      frame.intrinsics);
        report.stages.push_back("segment");
        const PixelRect region = face_region(last_render_, config_.occlusion.region_dilation);
        const Image<int> labels = segment_superpixels(frame.color, region, config_.occlusion);
        report.stages.push_back("classify");
        OcclusionResult cls = classify_occlusion(frame, last_render_, labels, tex_, blended_,
                                                 model_->dev_raw, pose_, config_.occlusion);
        report.n_occluded_superpixels = cls.n_occluded_superpixels;
        report.stages.push_back("complete");
        completed = complete_frame(frame, last_render_, cls.occluded_pixels);
        completed.landmarks = frame.landmarks;
        alpha_ = std::move(cls.alpha);
        last_occlusion_ = std::move(cls.occluded_pixels);
        last_completed_ = completed;
    } else {
        completed = frame;
        alpha_.fill(1);
    }
    report.ms_occlusion = ms_since(t_occl);

    // Expression coefficients on the completed frame (no visibility gating:
    // occluded regions were replaced by the model itself).
    report.stages.push_back("expression");
    const auto t_expr = std::chrono::steady_clock::now();
    const ExpressionResult expr = solve_coefficients(tex_, model_->dev_raw, pose_, completed,
                                                     model_->lmk_texels, x_, config_.expression);
    report.expression_hold = expr.hold;
    report.expression_cost = expr.cost;
    x_ = expr.x;
    report.ms_expression = ms_since(t_expr);

    // Fuse the raw frame under the new visibility mask.
    report.stages.push_back("fusion");
    const auto t_fuse = std::chrono::steady_clock::now();
    blended_ = blend(tex_, x_);
    report.fusion = fuse_frame(*model_, tex_, blended_, frame, pose_, alpha_, config_.fusion);
    report.ms_fusion = ms_since(t_fuse);

    report.pose = pose_;
    report.x = x_;
    report.ms_total = ms_since(t_start);
    ++next_frame_;
    return report;
}

std::vector<FrameReport> run_pipeline(const PipelineConfig& config, const std::string& sequence_dir,
                                      const std::string& out_dir, const RunOptions& options) {
    namespace fs = std::filesystem;
    PipelineConfig cfg = config;
    cfg.occlusion_enabled = config.occlusion_enabled && options.occlusion_enabled;

    const CameraIntrinsics intrinsics = read_intrinsics(sequence_dir + "/" + kIntrinsicsFile);
    int n_frames = count_sequence_frames(sequence_dir);
    if (options.max_frames >= 0) n_frames = std::min(n_frames, options.max_frames);
    if (n_frames == 0) throw std::runtime_error("sequence has no frames: " + sequence_dir);

    fs::create_directories(out_dir);
    if (options.dump_debug) fs::create_directories(out_dir + "/debug");
    std::ofstream pose_log(out_dir + "/" + kPosesFile);
    std::ofstream coeff_log(out_dir + "/" + kCoeffsFile);
    std::ofstream stats(out_dir + "/" + kStatsFile);
    if (!pose_log || !coeff_log || !stats) {
        throw std::runtime_error("cannot write into output directory: " + out_dir);
    }
    stats << "# frame total_ms preprocess_ms rigid_ms occlusion_ms expression_ms fusion_ms "
             "attempted accepted\n";

    Pipeline pipeline(cfg);
    std::vector<FrameReport> reports;
    for (int i = 0; i < n_frames; ++i) {
        RgbdFrame frame;
        frame.depth = read_depth_png(frame_path(sequence_dir, "depth", i, ".png"));
        frame.color = read_color_png(frame_path(sequence_dir, "color", i, ".png"));
        frame.intrinsics = intrinsics;
        const std::string lmk_path = frame_path(sequence_dir, "landmarks", i, ".txt");
        if (fs::exists(lmk_path)) frame.landmarks = read_landmarks(lmk_path);

        const FrameReport report =
            i == 0 ? pipeline.initialize(frame) : pipeline.process_frame(frame);

        append_pose_log(pose_log,
                        {report.frame_id, report.pose, report.rigid_cost,
                         report.rigid_correspondences});
        int flags = 0;
        if (report.expression_hold) flags |= kFlagExpressionHold;
        if (report.tracking_lost) flags |= kFlagTrackingLost;
        append_coeff_log(coeff_log, {report.frame_id, report.x, report.expression_cost, flags});
        stats << report.frame_id << ' ' << report.ms_total << ' ' << report.ms_preprocess << ' '
              << report.ms_rigid << ' ' << report.ms_occlusion << ' ' << report.ms_expression
              << ' ' << report.ms_fusion << ' ' << report.fusion.attempted << ' '
              << report.fusion.accepted << '\n';

        if (options.dump_debug && i > 0 && cfg.occlusion_enabled) {
            const Image<std::uint8_t>& mask = pipeline.last_occlusion_mask();
            Image<std::uint8_t> mask255(mask.width(), mask.height(), 0);
            for (size_t p = 0; p < mask.size(); ++p) {
                mask255.data()[p] = mask.data()[p] ? 255 : 0;
            }
            char name[64];
            std::snprintf(name, sizeof(name), "/debug/occlusion_%06d.png", i);
            write_gray_png(out_dir + name, mask255);
            std::snprintf(name, sizeof(name), "/debug/completed_depth_%06d.png", i);
            write_depth_png(out_dir + name, pipeline.last_completed().depth);
            std::snprintf(name, sizeof(name), "/debug/completed_color_%06d.png", i);
            write_color_png(out_dir + name, pipeline.last_completed().color);
        }
        reports.push_back(report);
    }

    save_deviation_snapshot(out_dir + "/" + kSnapshotFile, pipeline.model(), pipeline.scale(),
                            cfg.rig_descriptor());
    save_count_grid(out_dir + "/" + kCountsFile, pipeline.model().insert_count);
    return reports;
}

void export_mesh(const DeviationSnapshot& snapshot, const ExpressionCoefficients& x,
                 const std::string& obj_path, double tear_threshold) {
    PipelineConfig rig_cfg = parse_rig_descriptor(snapshot.rig_descriptor);
    rig_cfg.texture_resolution = snapshot.resolution;

    ToyRig rig;
    if (rig_cfg.rig_path.empty()) {
        rig = make_toy_rig(rig_cfg.toy_params);
    } else {
        rig.set = load_blendshape_set(rig_cfg.rig_path);
    }
    if (snapshot.rig_scale != 1.0) rig.set.scale_in_place(snapshot.rig_scale);
    if (x.size() != rig.set.num_expressions()) {
        throw std::runtime_error("coefficient count does not match the rig");
    }

    const TextureImages tex = build_texture_images(rig.set, snapshot.resolution);
    if (tex.covered.empty()) throw std::runtime_error("empty model: no covered texels");

    Image<double> dev(snapshot.resolution, snapshot.resolution, 0.0);
    for (size_t i = 0; i < dev.size(); ++i) dev.data()[i] = snapshot.dev.data()[i];
    const BlendedImages blended = blend(tex, x);

    const int R = snapshot.resolution;
    std::vector<Vec3> vertices;
    std::vector<Rgb8> colors;
    std::vector<int> texel_to_vertex(static_cast<size_t>(R) * R, -1);
    for (const auto& [u, v] : tex.covered) {
        texel_to_vertex[static_cast<size_t>(v) * R + u] = static_cast<int>(vertices.size());
        vertices.push_back(blended.vertex(u, v) + dev(u, v) * blended.normal(u, v));
        colors.push_back(snapshot.color(u, v));
    }

    std::vector<std::array<int, 3>> faces;
    for_each_grid_quad_triangle(tex, [&](int i0, int i1, int i2) {
        const int a = texel_to_vertex[i0];
        const int b = texel_to_vertex[i1];
        const int c = texel_to_vertex[i2];
        if ((vertices[a] - vertices[b]).norm() > tear_threshold ||
            (vertices[b] - vertices[c]).norm() > tear_threshold ||
            (vertices[c] - vertices[a]).norm() > tear_threshold) {
            return;
        }
        faces.push_back({a, b, c});
    });

    save_obj(obj_path, vertices, faces, &colors);
}

}  // namespace headfusion
