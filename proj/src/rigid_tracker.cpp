#include "headfusion/rigid_tracker.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace headfusion {

std::optional<Correspondence> associate(const Vec3& model_point_cam, const Vec3& model_normal_cam,
                                        const RgbdFrame& frame, const IcpConfig& config) {
    const auto pix = project(model_point_cam, frame.intrinsics);
    if (!pix) return std::nullopt;
    const int px = static_cast<int>(std::lround(pix->x()));
    const int py = static_cast<int>(std::lround(pix->y()));
    if (!frame.depth.contains(px, py)) return std::nullopt;

    const Vec3& v = frame.vertex_map(px, py);
    const Vec3& n = frame.normal_map(px, py);
    if (!point_valid(v) || !normal_valid(n)) return std::nullopt;
    if ((v - model_point_cam).norm() > config.corr_dist_reject) return std::nullopt;

    const double cos_reject = std::cos(config.corr_angle_reject_deg * std::numbers::pi / 180.0);
    if (n.dot(model_normal_cam) < cos_reject) return std::nullopt;

    Correspondence c;
    c.model_point = model_point_cam;
    c.target_point = v;
    c.target_normal = n;
    return c;
}

double icp_cost(const TwistVector& l, const std::vector<Correspondence>& correspondences) {
    const Pose t = exp_map(l);
    double cost = 0.0;
    for (const Correspondence& c : correspondences) {
        const double r = c.target_normal.dot(t * c.model_point - c.target_point);
        cost += c.visibility * r * r;
    }
    return cost;
}

namespace {

double pose_cost(const Pose& t, const std::vector<Correspondence>& correspondences) {
    double cost = 0.0;
    for (const Correspondence& c : correspondences) {
        const double r = c.target_normal.dot(t * c.model_point - c.target_point);
        cost += c.visibility * r * r;
    }
    return cost;
}

// One bounded Levenberg-Marquardt solve of the point-to-plane problem with
// frozen correspondences. Returns the accepted incremental transform.
Pose lm_solve(const std::vector<Correspondence>& correspondences, const IcpConfig& config,
              double* final_cost) {
    Pose t_inc = Pose::identity();
    double damping = config.lm_initial_damping;
    double cost = pose_cost(t_inc, correspondences);

    for (int iter = 0; iter < config.lm_max_inner_iterations; ++iter) {
        Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
        for (const Correspondence& c : correspondences) {
            if (c.visibility == 0.0) continue;
            const Vec3 q = t_inc * c.model_point;
            const Vec3& n = c.target_normal;
            const double r = n.dot(q - c.target_point);
            Eigen::Matrix<double, 6, 1> j;
            j.head<3>() = q.cross(n);
            j.tail<3>() = n;
            h.selfadjointView<Eigen::Lower>().rankUpdate(j, c.visibility);
            g += c.visibility * r * j;
        }
        h = h.selfadjointView<Eigen::Lower>();

        bool accepted = false;
        while (damping <= 1e10) {
            const Eigen::Matrix<double, 6, 6> h_damped =
                h + damping * Eigen::Matrix<double, 6, 6>::Identity();
            const Eigen::Matrix<double, 6, 1> delta = h_damped.ldlt().solve(-g);
            const Pose t_cand = (exp_map(delta) * t_inc).orthonormalized();
            const double cost_cand = pose_cost(t_cand, correspondences);
            if (cost_cand < cost) {
                t_inc = t_cand;
                cost = cost_cand;
                damping = std::max(damping / 10.0, 1e-12);
                accepted = true;
                if (delta.norm() < 1e-12) iter = config.lm_max_inner_iterations;
                break;
            }
            damping *= 10.0;
        }
        if (!accepted) break;
    }

    if (final_cost) *final_cost = cost;
    return t_inc;
}

}  // namespace

TrackResult track_rigid(const TextureImages& tex, const BlendedImages& blended,
                        const Image<double>& dev, const RgbdFrame& frame, const Pose& initial_pose,
                        const Image<std::uint8_t>& visibility, const IcpConfig& config) {
    TrackResult result;
    result.pose = initial_pose;

    Pose pose = initial_pose;
    for (int outer = 0; outer < config.max_icp_iterations; ++outer) {
        std::vector<Correspondence> correspondences;
        correspondences.reserve(tex.covered.size());
        for (const auto& [u, v] : tex.covered) {
            if (visibility(u, v) == 0) continue;
            const Vec3& bn = blended.normal(u, v);
            Vec3 n_cam = pose.rotation * bn;
            const double nn = n_cam.norm();
            if (nn < 1e-12) continue;
            n_cam /= nn;
            const Vec3 p_cam = pose * (blended.vertex(u, v) + dev(u, v) * bn);
            if (auto c = associate(p_cam, n_cam, frame, config)) {
                c->u = u;
                c->v = v;
                correspondences.push_back(*c);
            }
        }
        result.n_correspondences = static_cast<int>(correspondences.size());

        // A sparse early association (e.g. right after a fast motion) still
        // pulls the pose toward the surface; re-association then recovers the
        // full set. Fewer than six equations cannot constrain se(3): skip.
        if (result.n_correspondences >= 6) {
            double cost = 0.0;
            const Pose t_inc = lm_solve(correspondences, config, &cost);
            pose = (t_inc * pose).orthonormalized();
            result.cost = cost;
        }
    }

    // The lost decision is made on the final re-association: a pose that
    // cannot gather the correspondence floor by then is untrustworthy.
    if (result.n_correspondences < config.min_correspondences) {
        result.pose = initial_pose;
        result.lost = true;
        result.cost = 0.0;
        return result;
    }

    result.pose = pose;
    return result;
}

void append_pose_log(std::ostream& out, const PoseLogEntry& entry) {
    const Eigen::Quaterniond q(entry.pose.rotation);
    const Vec3& t = entry.pose.translation;
    out.precision(12);
    out << entry.frame_id << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.w() << ' '
        << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << entry.cost << ' '
        << entry.n_correspondences << '\n';
}

std::vector<PoseLogEntry> read_pose_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pose log: " + path);
    std::vector<PoseLogEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        PoseLogEntry e;
        double qw, qx, qy, qz;
        if (!(ss >> e.frame_id >> e.pose.translation.x() >> e.pose.translation.y() >>
              e.pose.translation.z() >> qw >> qx >> qy >> qz)) {
            throw std::runtime_error("malformed pose log line: " + line);
        }
        ss >> e.cost >> e.n_correspondences;  // optional trailing fields
        e.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
        entries.push_back(e);
    }
    return entries;
}

}  // namespace headfusion
