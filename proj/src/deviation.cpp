#include "headfusion/deviation.hpp"

#include <climits>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace headfusion {

std::optional<Candidate> select_candidate(const RgbdFrame& frame, const Pose& pose,
                                          const Vec3& blended_vertex, const Vec3& blended_normal,
                                          double deviation, int list_size,
                                          const FusionParams& params) {
    const Vec3 dir_cam = pose.rotation * blended_normal;
    const double dir_norm = dir_cam.norm();
    if (dir_norm < 1e-12) return std::nullopt;

    const Vec3 center = pose * (blended_vertex + deviation * blended_normal);
    const double lambda = params.lambda_for(list_size);
    const Vec3 e0 = center - lambda * dir_cam;
    const Vec3 e1 = center + lambda * dir_cam;

    const auto p0 = project(e0, frame.intrinsics);
    const auto p1 = project(e1, frame.intrinsics);
    if (!p0 || !p1) return std::nullopt;

    const Vec3 line_origin = pose * blended_vertex;
    const Vec3 line_dir = dir_cam / dir_norm;

    // DDA over the projected segment, visiting each crossed pixel once.
    const Vec2 d = *p1 - *p0;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(d.x()), std::abs(d.y())))));

    std::optional<Candidate> best;
    int last_px = INT_MIN, last_py = INT_MIN;
    for (int s = 0; s <= steps; ++s) {
        const Vec2 pix = *p0 + (static_cast<double>(s) / steps) * d;
        const int px = static_cast<int>(std::lround(pix.x()));
        const int py = static_cast<int>(std::lround(pix.y()));
        if (px == last_px && py == last_py) continue;
        last_px = px;
        last_py = py;
        if (!frame.depth.contains(px, py)) continue;
        const Vec3& p = frame.vertex_map(px, py);
        if (!point_valid(p)) continue;
        const Vec3 diff = p - line_origin;
        const double line_distance = (diff - diff.dot(line_dir) * line_dir).norm();
        if (!best || line_distance < best->line_distance) {
            best = Candidate{p, frame.normal_map(px, py), Vec2(px, py), line_distance};
        }
    }
    return best;
}

FusionStats fuse_frame(DeviationModel& model, const TextureImages& tex,
                       const BlendedImages& blended, const RgbdFrame& frame, const Pose& pose,
                       const Image<std::uint8_t>& visibility, const FusionParams& params) {
    if (model.resolution != tex.resolution) {
        throw std::runtime_error("deviation model resolution does not match texture images");
    }
    const double cos_reject = std::cos(params.normal_reject_deg * std::numbers::pi / 180.0);
    FusionStats stats;

    for (const auto& [u, v] : tex.covered) {
        if (visibility(u, v) == 0) continue;
        ++stats.attempted;

        auto& list = model.lists(u, v);
        const Vec3& bv = blended.vertex(u, v);
        const Vec3& bn = blended.normal(u, v);
        const double dev_here = model.dev_raw(u, v);

        const auto cand = select_candidate(frame, pose, bv, bn, dev_here, list.size(), params);
        if (!cand) {
            ++stats.no_candidate;
            continue;
        }
        if (cand->line_distance > params.line_reject) {
            ++stats.rejected_line;
            continue;
        }
        const Vec3 surface_cam = pose * (bv + dev_here * bn);
        if ((cand->point - surface_cam).norm() > params.tau_for(list.size())) {
            ++stats.rejected_distance;
            continue;
        }
        const Vec3 n_model = (pose.rotation * bn).normalized();
        if (!normal_valid(cand->normal) || cand->normal.dot(n_model) < cos_reject) {
            ++stats.rejected_normal;
            continue;
        }

        const double d = (cand->point - pose * bv).dot(pose.rotation * bn);
        list.insert(d);
        model.dev_raw(u, v) = list.median();
        ++model.insert_count(u, v);
        ++stats.accepted;

        // Color is sampled by projecting the updated surface point.
        const Vec3 p_cam = pose * (bv + model.dev_raw(u, v) * bn);
        if (const auto pix = project(p_cam, frame.intrinsics)) {
            const int px = static_cast<int>(std::lround(pix->x()));
            const int py = static_cast<int>(std::lround(pix->y()));
            if (frame.color.contains(px, py)) {
                const Rgb8 c = frame.color(px, py);
                model.color_r(u, v).insert(c.r);
                model.color_g(u, v).insert(c.g);
                model.color_b(u, v).insert(c.b);
                model.color(u, v) = {model.color_r(u, v).median(), model.color_g(u, v).median(),
                                     model.color_b(u, v).median()};
            }
        }
    }

    refresh_served_deviation(model, tex, params);
    return stats;
}

Image<double> bilateral_smooth(const Image<double>& dev, const Image<int>& indx, double sigma_s,
                               double sigma_r) {
    const int R = dev.width();
    Image<double> out(R, R, 0.0);
    const double inv_2ss = 1.0 / (2.0 * sigma_s * sigma_s);
    const double inv_2sr = 1.0 / (2.0 * sigma_r * sigma_r);

    for (int v = 0; v < R; ++v) {
        for (int u = 0; u < R; ++u) {
            if (indx(u, v) < 0) continue;
            const double center = dev(u, v);
            double wsum = 0.0, acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nu = u + dx, nv = v + dy;
                    if (!indx.contains(nu, nv) || indx(nu, nv) < 0) continue;
                    const double value = dev(nu, nv);
                    const double diff = value - center;
                    const double w = std::exp(-(dx * dx + dy * dy) * inv_2ss) *
                                     std::exp(-diff * diff * inv_2sr);
                    wsum += w;
                    acc += w * value;
                }
            }
            out(u, v) = acc / wsum;
        }
    }
    return out;
}

void refresh_served_deviation(DeviationModel& model, const TextureImages& tex,
                              const FusionParams& params) {
    model.dev = bilateral_smooth(model.dev_raw, tex.indx, params.bilateral_sigma_s,
                                 params.bilateral_sigma_r);
}

namespace {
constexpr std::uint32_t kSnapshotMagic = 0x4846444d;  // "HFDM"

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}
}  // namespace

void save_deviation_snapshot(const std::string& path, const DeviationModel& model,
                             double rig_scale, const std::string& rig_descriptor) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write snapshot: " + path);
    write_pod(out, kSnapshotMagic);
    const std::int32_t R = model.resolution;
    write_pod(out, R);
    for (size_t i = 0; i < model.dev.size(); ++i) {
        write_pod(out, static_cast<float>(model.dev.data()[i]));
    }
    for (size_t i = 0; i < model.color.size(); ++i) {
        const Rgb8& c = model.color.data()[i];
        out.put(static_cast<char>(c.r));
        out.put(static_cast<char>(c.g));
        out.put(static_cast<char>(c.b));
    }
    const std::int32_t lmk_count = static_cast<std::int32_t>(model.lmk_texels.size());
    write_pod(out, lmk_count);
    for (const LandmarkTexel& t : model.lmk_texels) {
        write_pod(out, static_cast<std::int32_t>(t.index));
        write_pod(out, static_cast<std::int32_t>(t.u));
        write_pod(out, static_cast<std::int32_t>(t.v));
    }
    write_pod(out, rig_scale);
    const std::int32_t desc_len = static_cast<std::int32_t>(rig_descriptor.size());
    write_pod(out, desc_len);
    out.write(rig_descriptor.data(), desc_len);
}

DeviationSnapshot load_deviation_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open snapshot: " + path);
    std::uint32_t magic = 0;
    read_pod(in, magic);
    if (magic != kSnapshotMagic) throw std::runtime_error("not a deviation snapshot: " + path);
    std::int32_t R = 0;
    read_pod(in, R);
    if (R < 2 || R > 1 << 14) throw std::runtime_error("snapshot has bad resolution: " + path);

    DeviationSnapshot snap;
    snap.resolution = R;
    snap.dev = Image<float>(R, R, 0.0f);
    for (size_t i = 0; i < snap.dev.size(); ++i) read_pod(in, snap.dev.data()[i]);
    snap.color = Image<Rgb8>(R, R);
    for (size_t i = 0; i < snap.color.size(); ++i) {
        Rgb8& c = snap.color.data()[i];
        c.r = static_cast<unsigned char>(in.get());
        c.g = static_cast<unsigned char>(in.get());
        c.b = static_cast<unsigned char>(in.get());
    }
    std::int32_t lmk_count = 0;
    read_pod(in, lmk_count);
    for (int i = 0; i < lmk_count; ++i) {
        std::int32_t index, u, v;
        read_pod(in, index);
        read_pod(in, u);
        read_pod(in, v);
        snap.lmk_texels.push_back({index, u, v});
    }
    read_pod(in, snap.rig_scale);
    std::int32_t desc_len = 0;
    read_pod(in, desc_len);
    if (desc_len > 0 && desc_len < 1 << 16) {
        snap.rig_descriptor.resize(desc_len);
        in.read(snap.rig_descriptor.data(), desc_len);
    }
    if (!in) throw std::runtime_error("truncated snapshot: " + path);
    return snap;
}

}  // namespace headfusion
