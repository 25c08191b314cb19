#include "headfusion/expression_tracker.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace headfusion {

namespace {

// Per-texel affine decomposition of the transformed surface point:
// T * P^x(u,v) = base + sum_i x_i * dirs[i], already in camera frame.
struct AffinePoint {
    Vec3 base;
    std::vector<Vec3> dirs;
};

AffinePoint affine_surface_point(const TextureImages& tex, const Image<double>& dev,
                                 const Pose& pose, int u, int v) {
    const double d = dev(u, v);
    AffinePoint ap;
    ap.base = pose * (tex.vertex_images[0](u, v) + d * tex.normal_images[0](u, v));
    ap.dirs.resize(tex.num_expressions());
    for (int i = 0; i < tex.num_expressions(); ++i) {
        ap.dirs[i] =
            pose.rotation * Vec3(tex.diff_vertex[i](u, v) + d * tex.diff_normal[i](u, v));
    }
    return ap;
}

Vec3 eval_affine(const AffinePoint& ap, const ExpressionCoefficients& x) {
    Vec3 p = ap.base;
    for (int i = 0; i < static_cast<int>(ap.dirs.size()); ++i) {
        if (x[i] != 0.0) p += x[i] * ap.dirs[i];
    }
    return p;
}

}  // namespace

ExpressionSystem build_expression_system(const TextureImages& tex, const Image<double>& dev,
                                         const ExpressionCoefficients& x_lin, const Pose& pose,
                                         const RgbdFrame& frame,
                                         const std::vector<LandmarkTexel>& lmk_texels,
                                         const ExpressionCoefficients& x_prev,
                                         const ExpressionSolveConfig& config) {
    const int n = tex.num_expressions();
    ExpressionSystem sys;
    sys.h = Eigen::MatrixXd::Zero(n, n);
    sys.g = Eigen::VectorXd::Zero(n);

    const double cos_reject = std::cos(config.corr_angle_reject_deg * std::numbers::pi / 180.0);
    const BlendedImages blended = blend(tex, x_lin);

    // Pass 1: dense projective association at the linearization point. The
    // per-texel linear form is a[i] = n . R (dV_i + dev dN_i); folding the
    // rotation into the normal, a[i] = (R^T n) . dV_i + dev (R^T n) . dN_i.
    struct Accepted {
        int u, v;
        Vec3 n_model;  // R^T n, target normal in model frame
        double d;      // deviation at the texel
    };
    std::vector<Accepted> accepted;
    accepted.reserve(tex.covered.size());
    std::vector<double> residual_const;
    residual_const.reserve(tex.covered.size());

    for (const auto& [u, v] : tex.covered) {
        const Vec3& bn = blended.normal(u, v);
        Vec3 n_cam = pose.rotation * bn;
        const double nn = n_cam.norm();
        if (nn < 1e-12) continue;
        n_cam /= nn;
        const Vec3 p_cam = pose * (blended.vertex(u, v) + dev(u, v) * bn);

        const auto pix = project(p_cam, frame.intrinsics);
        if (!pix) continue;
        const int px = static_cast<int>(std::lround(pix->x()));
        const int py = static_cast<int>(std::lround(pix->y()));
        if (!frame.depth.contains(px, py)) continue;
        const Vec3& target = frame.vertex_map(px, py);
        const Vec3& target_n = frame.normal_map(px, py);
        if (!point_valid(target) || !normal_valid(target_n)) continue;
        if ((target - p_cam).norm() > config.corr_dist_reject) continue;
        if (target_n.dot(n_cam) < cos_reject) continue;

        const double d = dev(u, v);
        const Vec3 base_cam = pose * (tex.vertex_images[0](u, v) + d * tex.normal_images[0](u, v));
        accepted.push_back({u, v, pose.rotation.transpose() * target_n, d});
        residual_const.push_back(target_n.dot(base_cam - target));
    }
    sys.n_dense = static_cast<int>(accepted.size());

    // Pass 2: fill the design matrix one expression at a time so each diff
    // image is streamed once, then form the normal equations with a GEMM.
    const int m = sys.n_dense;
    if (m > 0) {
        Eigen::MatrixXd a(m, n);
        for (int i = 0; i < n; ++i) {
            const Image<Vec3>& dv = tex.diff_vertex[i];
            const Image<Vec3>& dn = tex.diff_normal[i];
            for (int t = 0; t < m; ++t) {
                const Accepted& acc = accepted[t];
                a(t, i) =
                    acc.n_model.dot(dv(acc.u, acc.v)) + acc.d * acc.n_model.dot(dn(acc.u, acc.v));
            }
        }
        const Eigen::Map<const Eigen::VectorXd> c(residual_const.data(), m);
        sys.h.noalias() = a.transpose() * a;
        sys.g.noalias() = -(a.transpose() * c);
        sys.constant += c.squaredNorm();
    }

    const double w_l = config.landmark_weight;
    for (const LandmarkTexel& lt : lmk_texels) {
        const Landmark* obs = nullptr;
        for (const Landmark& lm : frame.landmarks) {
            if (lm.index == lt.index) {
                obs = &lm;
                break;
            }
        }
        if (!obs) continue;
        const AffinePoint ap = affine_surface_point(tex, dev, pose, lt.u, lt.v);
        const Vec3 b = ap.base - obs->position;
        Eigen::MatrixXd aj(3, n);
        for (int i = 0; i < n; ++i) aj.col(i) = ap.dirs[i];
        sys.h += w_l * aj.transpose() * aj;
        sys.g -= w_l * aj.transpose() * b;
        sys.constant += w_l * b.squaredNorm();
        ++sys.n_landmarks;
    }

    const double w_s = config.regularizer_weight;
    sys.h += 2.0 * w_s * Eigen::MatrixXd::Identity(n, n);
    sys.g += w_s * x_prev;
    sys.constant += w_s * x_prev.squaredNorm();
    return sys;
}

double system_cost(const ExpressionSystem& system, const ExpressionCoefficients& x) {
    return x.dot(system.h * x) - 2.0 * system.g.dot(x) + system.constant;
}

Eigen::VectorXd system_gradient(const ExpressionSystem& system, const ExpressionCoefficients& x) {
    return 2.0 * (system.h * x - system.g);
}

double expression_cost(const ExpressionCoefficients& x, const Pose& pose, const TextureImages& tex,
                       const Image<double>& dev, const RgbdFrame& frame,
                       const std::vector<LandmarkTexel>& lmk_texels,
                       const ExpressionCoefficients& x_prev, const ExpressionSolveConfig& config) {
    const ExpressionSystem sys =
        build_expression_system(tex, dev, x, pose, frame, lmk_texels, x_prev, config);
    return system_cost(sys, x);
}

ExpressionCoefficients solve_box_ls(const Eigen::MatrixXd& h, const Eigen::VectorXd& g,
                                    const ExpressionCoefficients& x0, int sweeps) {
    const int n = static_cast<int>(g.size());
    ExpressionCoefficients x = clamped01(x0);
    // Projected Gauss-Seidel relaxation: each coordinate is set to the exact
    // minimizer of the quadratic along its axis, then clamped to [0, 1].  The
    // per-axis minimization makes every sweep monotone in the frozen cost.
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (int k = 0; k < n; ++k) {
            const double hkk = std::max(h(k, k), 1e-12);
            const double rest = h.row(k).dot(x) - h(k, k) * x[k];
            x[k] = std::clamp((g[k] - rest) / hkk, 0.0, 1.0);
        }
    }
    return x;
}

ExpressionResult solve_coefficients(const TextureImages& tex, const Image<double>& dev,
                                    const Pose& pose, const RgbdFrame& frame,
                                    const std::vector<LandmarkTexel>& lmk_texels,
                                    const ExpressionCoefficients& x_prev,
                                    const ExpressionSolveConfig& config) {
    ExpressionResult result;
    result.x = clamped01(x_prev);

    ExpressionCoefficients x = result.x;
    ExpressionSystem sys;
    for (int outer = 0; outer < config.outer_iterations; ++outer) {
        sys = build_expression_system(tex, dev, x, pose, frame, lmk_texels, x_prev, config);
        if (sys.n_landmarks == 0 && sys.n_dense < config.min_dense_correspondences) {
            result.hold = true;
            result.cost = system_cost(sys, result.x);
            result.n_dense = sys.n_dense;
            result.n_landmarks = sys.n_landmarks;
            return result;
        }
        x = solve_box_ls(sys.h, sys.g, x, config.relaxation_iterations);
    }

    result.x = x;
    result.cost = system_cost(sys, x);
    result.n_dense = sys.n_dense;
    result.n_landmarks = sys.n_landmarks;
    return result;
}

void append_coeff_log(std::ostream& out, const CoeffLogEntry& entry) {
    out.precision(10);
    out << entry.frame_id;
    for (int i = 0; i < entry.x.size(); ++i) out << ' ' << entry.x[i];
    out << ' ' << entry.cost << ' ' << entry.flags << '\n';
}

std::vector<CoeffLogEntry> read_coeff_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open coefficient log: " + path);
    std::vector<CoeffLogEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::vector<double> values;
        double value;
        CoeffLogEntry e;
        if (!(ss >> e.frame_id)) throw std::runtime_error("malformed coefficient log: " + line);
        while (ss >> value) values.push_back(value);
        if (values.size() < 3) throw std::runtime_error("malformed coefficient log: " + line);
        e.flags = static_cast<int>(values.back());
        values.pop_back();
        e.cost = values.back();
        values.pop_back();
        e.x = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
        entries.push_back(e);
    }
    return entries;
}

}  // namespace headfusion
