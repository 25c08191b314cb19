#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "headfusion/blendshape.hpp"
#include "headfusion/config.hpp"
#include "headfusion/geometry.hpp"
#include "headfusion/image.hpp"

namespace headfusion {

struct OccluderSpec {
    std::string shape = "rect";  // rect | disk
    double x = 0, y = 0;         // rect corner / disk center, pixels
    double width = 0, height = 0, radius = 0;
    double depth_offset = 0.05;  // meters in front of the surface behind
    int start_frame = 0;
    int end_frame = -1;          // inclusive
    Rgb8 color{40, 40, 40};

    bool active(int frame) const { return frame >= start_frame && frame <= end_frame; }
    bool covers(int px, int py) const;
};

// Everything needed to generate a deterministic synthetic sequence: rig,
// camera, parametric pose trajectory (ramped from frontal), coefficient
// animation, ground-truth deviation field, depth noise, and occluder scripts.
struct ScenarioSpec {
    // rig
    std::string rig_path;  // empty = procedural toy rig
    ToyRigParams toy_params;
    double rig_scale = 1.0;
    int texture_resolution = 240;

    // camera
    CameraIntrinsics intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480};

    // trajectory (frame 0 is always frontal at `distance` on the optical axis)
    std::string trajectory_type = "static";  // static | arc | file
    std::string trajectory_file;
    double distance = 0.6;  // meters
    double fps = 30.0;
    double yaw_rate = 0.0, pitch_rate = 0.0, roll_rate = 0.0;  // deg/s
    double tx_rate = 0.0, ty_rate = 0.0, tz_rate = 0.0;        // mm/s

    // expression animation (frame 0 is always neutral)
    std::string expression_type = "static";  // static (zero) | sine
    std::vector<int> active_coeffs;
    double amplitude = 0.0;
    double period_s = 2.0;

    // ground-truth deviation field
    std::string deviation_type = "none";  // none | bumps
    double dev_amplitude_mm = 2.0;
    int dev_bump_count = 12;
    double dev_bump_sigma_texels = 12.0;

    // noise
    double sigma_z_mm = 0.0;
    double depth_noise_scaling = 0.0;  // sigma(z) = sigma_z * (1 + scaling * z^2)
    double lmk_sigma_mm = 0.0;         // gaussian landmark perturbation

    std::vector<OccluderSpec> occluders;

    int frames = 30;
    unsigned seed = 1;

    static ScenarioSpec from_config(const Config& config);
    static ScenarioSpec from_file(const std::string& path);

    Pose pose_at(int frame) const;
    ExpressionCoefficients coeffs_at(int frame, int n) const;
};

// Procedural ground-truth deviation grid: zero, or signed gaussian bumps in
// texel space restricted to covered texels.
Image<double> make_gt_deviation(const ScenarioSpec& spec, const TextureImages& tex);

// Procedural per-texel albedo so color-based occlusion tests have signal.
Image<Rgb8> make_gt_texture(int resolution);

// Writes depth/color/landmark frames plus ground-truth logs, gt_dev.bin,
// intrinsics.txt and rig.txt into out_dir.
void generate_sequence(const ScenarioSpec& spec, const std::string& out_dir);

struct MetricsReport {
    std::vector<double> rotation_error_deg;
    std::vector<double> translation_error_mm;
    std::vector<double> coeff_rmse;
    double deviation_rmse_mm = 0.0;
    double deviation_max_mm = 0.0;
    int updated_texels = 0;
    double fusion_acceptance_rate = 0.0;
    std::map<std::string, double> mean_stage_ms;
    double mean_frame_ms = 0.0;

    double max_rotation_error_deg() const;
    double max_translation_error_mm() const;
    double max_coeff_rmse() const;
};

// Pure comparison of parsed logs/grids; counts gates which texels enter the
// deviation error (only texels fused at least once).
MetricsReport compute_metrics(const std::vector<Pose>& gt_poses,
                              const std::vector<Pose>& est_poses,
                              const std::vector<ExpressionCoefficients>& gt_coeffs,
                              const std::vector<ExpressionCoefficients>& est_coeffs,
                              const Image<double>& gt_dev, const Image<double>& est_dev,
                              const Image<std::uint32_t>& counts);

// Loads ground truth from gt_dir and pipeline outputs from run_dir and
// compares them. Frame-count mismatch is a hard error.
MetricsReport evaluate_run(const std::string& gt_dir, const std::string& run_dir);

void print_metrics(std::ostream& out, const MetricsReport& report);

}  // namespace headfusion
