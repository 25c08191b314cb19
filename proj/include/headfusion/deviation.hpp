#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "headfusion/blendshape.hpp"
#include "headfusion/geometry.hpp"
#include "headfusion/image.hpp"

namespace headfusion {

/// Capacity-bounded sorted list with a running lower median. When full, an
/// insertion evicts the element farthest from the post-insertion median
/// (ties: the larger value goes).
template <typename T, int Capacity = 100>
class MedianList {
public:
    void insert(T value) {
        auto it = std::upper_bound(values_.begin(), values_.end(), value);
        values_.insert(it, value);
        if (static_cast<int>(values_.size()) > Capacity) {
            const T m = median();
            const auto front_d = distance_to(values_.front(), m);
            const auto back_d = distance_to(values_.back(), m);
            if (back_d >= front_d) {
                values_.pop_back();
            } else {
                values_.erase(values_.begin());
            }
        }
    }

    /// Lower median: element at index floor((size-1)/2).
    T median() const { return values_[(values_.size() - 1) / 2]; }

    int size() const { return static_cast<int>(values_.size()); }
    bool empty() const { return values_.empty(); }
    const std::vector<T>& values() const { return values_; }

private:
    static double distance_to(T a, T m) { return std::abs(static_cast<double>(a) - static_cast<double>(m)); }

    std::vector<T> values_;
};

/// Fusion thresholds. Distances in meters, angles in radians.
struct FusionParams {
    double lambda_empty = 0.05;        // segment half-length, empty list
    double lambda_num = 0.05;          // lambda = max(lambda_min, lambda_num / s)
    double lambda_min = 0.01;
    double line_reject = 0.01;         // max distance from candidate to the normal line
    double tau_empty = 0.03;           // max distance from candidate to the surface point
    double tau_nonempty = 0.01;
    double normal_reject_deg = 45.0;
    double bilateral_sigma_s = 1.0;    // texels
    double bilateral_sigma_r = 0.002;  // meters

    double lambda_for(int list_size) const {
        return list_size == 0 ? lambda_empty : std::max(lambda_min, lambda_num / list_size);
    }
    double tau_for(int list_size) const { return list_size == 0 ? tau_empty : tau_nonempty; }
};

/// Texture-space model state: per-texel deviation median lists, the served
/// (bilaterally smoothed) deviation image, per-channel color medians, and the
/// landmark texel table. Untouched texels hold deviation 0.
struct DeviationModel {
    int resolution = 0;
    Image<MedianList<double>> lists;
    Image<double> dev_raw;  // current lower medians; tracking/fusion read this
    Image<double> dev;      // served grid: bilateral-filtered dev_raw, for
                            // display, snapshots and mesh export only
    Image<MedianList<std::uint8_t>> color_r, color_g, color_b;
    Image<Rgb8> color;
    Image<std::uint32_t> insert_count;
    std::vector<LandmarkTexel> lmk_texels;

    explicit DeviationModel(int R = 0)
        : resolution(R),
          lists(R, R),
          dev_raw(R, R, 0.0),
          dev(R, R, 0.0),
          color_r(R, R),
          color_g(R, R),
          color_b(R, R),
          color(R, R),
          insert_count(R, R, 0) {}
};

/// Per-frame fusion outcome counters.
struct FusionStats {
    int attempted = 0;       // covered texels with visibility 1
    int no_candidate = 0;
    int rejected_line = 0;
    int rejected_distance = 0;
    int rejected_normal = 0;
    int accepted = 0;
};

/// Best depth-image candidate for a texel: the 3D point under the projected
/// segment that is closest to the blended-normal line.
struct Candidate {
    Vec3 point;
    Vec3 normal;
    Vec2 pixel;
    double line_distance = 0.0;
};

/// Walks the projected segment [T.P - lambda.R.N ; T.P + lambda.R.N] in the
/// depth image and returns the valid depth point closest to the line through
/// T.V with direction R.N. Empty when nothing valid lies under the segment.
std::optional<Candidate> select_candidate(const RgbdFrame& frame, const Pose& pose,
                                          const Vec3& blended_vertex, const Vec3& blended_normal,
                                          double deviation, int list_size,
                                          const FusionParams& params);

///// One fusion pass: for every covered texel with visibility 1, selects a
/// candidate, applies the line / distance / normal-angle rejections, inserts
/// the signed deviation (p - T.V).(R.N) into the texel's list and refreshes
/// the raw median; color channels are fused on success. Texels with
/// visibility 0 are untouched. Finishes by refreshing the served grid.
FusionStats fuse_frame(DeviationModel& model, const TextureImages& tex,
                       const BlendedImages& blended, const RgbdFrame& frame, const Pose& pose,
                       const Image<std::uint8_t>& visibility, const FusionParams& params);

/// 3x3 bilateral gaussian over covered texels. Writes a fresh grid; the
/// median lists are never touched.
Image<double> bilateral_smooth(const Image<double>& dev, const Image<int>& indx,
                               double sigma_s, double sigma_r);

/// Recomputes model.dev from model.dev_raw.
void refresh_served_deviation(DeviationModel& model, const TextureImages& tex,
                              const FusionParams& params);

///// Snapshot file ("HFDM"): resolution, float32 deviation grid, RGB color
/// grid, landmark texel table, then trailing scale + rig descriptor used to
/// re-create the rig for mesh export.
void save_deviation_snapshot(const std::string& path, const DeviationModel& model,
                             double rig_scale, const std::string& rig_descriptor);

struct DeviationSnapshot {
    int resolution = 0;
    Image<float> dev;
    Image<Rgb8> color;
    std::vector<LandmarkTexel> lmk_texels;
    double rig_scale = 1.0;
    std::string rig_descriptor;
};

DeviationSnapshot load_deviation_snapshot(const std::string& path);

}  // namespace headfusion
