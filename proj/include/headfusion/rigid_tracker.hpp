#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "headfusion/blendshape.hpp"
#include "headfusion/geometry.hpp"
#include "headfusion/image.hpp"

namespace headfusion {

struct IcpConfig {
    int max_icp_iterations = 6;
    double corr_dist_reject = 0.01;      // meters
    double corr_angle_reject_deg = 30.0;
    double lm_initial_damping = 1e-4;
    int lm_max_inner_iterations = 10;
    int min_correspondences = 100;
};

// One projective association between an augmented-surface texel and the depth
// frame. model_point is the texel's surface point already transformed by the
// pose used during association (camera frame).
struct Correspondence {
    int u = 0;
    int v = 0;
    Vec3 model_point = Vec3::Zero();
    Vec3 target_point = Vec3::Zero();
    Vec3 target_normal = Vec3::Zero();
    double visibility = 1.0;
};

// Projectively associates a camera-frame surface point (with unit normal) to
// the frame's vertex map. Returns nothing if the projection misses the image,
// hits invalid depth, or fails the distance/angle rejection tests.
std::optional<Correspondence> associate(const Vec3& model_point_cam, const Vec3& model_normal_cam,
                                        const RgbdFrame& frame, const IcpConfig& config);

// Point-to-plane cost sum_i alpha_i * (n_i . (exp(l) * p_i - v_i))^2 with the
// incremental twist applied on top of the association pose baked into p_i.
double icp_cost(const TwistVector& l, const std::vector<Correspondence>& correspondences);

struct TrackResult {
    Pose pose;
    bool lost = false;
    double cost = 0.0;
    int n_correspondences = 0;
};

// Dense point-to-plane ICP of the augmented surface (blended grid + deviation)
// against the frame's depth, starting from initial_pose. Texels with
// visibility 0 are excluded. Tracking is lost when the final re-association
// finds fewer than min_correspondences; the initial pose is then returned
// unchanged with the lost flag set.
TrackResult track_rigid(const TextureImages& tex, const BlendedImages& blended,
                        const Image<double>& dev, const RgbdFrame& frame, const Pose& initial_pose,
                        const Image<std::uint8_t>& visibility, const IcpConfig& config = {});

// Pose log: one line per frame, `frame_id tx ty tz qw qx qy qz cost n_corr`.
struct PoseLogEntry {
    int frame_id = 0;
    Pose pose;
    double cost = 0.0;
    int n_correspondences = 0;
};

void append_pose_log(std::ostream& out, const PoseLogEntry& entry);
std::vector<PoseLogEntry> read_pose_log(const std::string& path);

}  // namespace headfusion
