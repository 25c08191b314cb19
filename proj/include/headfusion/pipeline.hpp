#pragma once

#include <memory>
#include <string>
#include <vector>

#include "headfusion/blendshape.hpp"
#include "headfusion/config.hpp"
#include "headfusion/deviation.hpp"
#include "headfusion/expression_tracker.hpp"
#include "headfusion/geometry.hpp"
#include "headfusion/occlusion.hpp"
#include "headfusion/renderer.hpp"
#include "headfusion/rigid_tracker.hpp"

namespace headfusion {

struct PipelineConfig {
    // rig
    std::string rig_path;  // empty = procedural toy rig
    ToyRigParams toy_params;
    double rig_prescale = 1.0;  // applied before landmark-based scale estimation
    int texture_resolution = 240;

    IcpConfig icp;
    ExpressionSolveConfig expression;
    FusionParams fusion;
    OcclusionParams occlusion;
    bool occlusion_enabled = true;

    static PipelineConfig from_config(const Config& config);
    void validate() const;  // throws on out-of-range parameters
    std::string rig_descriptor() const;
};

// Reconstructs the rig referenced by a snapshot's descriptor string.
PipelineConfig parse_rig_descriptor(const std::string& descriptor);

struct FrameReport {
    int frame_id = 0;
    Pose pose;
    ExpressionCoefficients x;
    bool tracking_lost = false;
    bool expression_hold = false;
    double rigid_cost = 0.0;
    int rigid_correspondences = 0;
    double expression_cost = 0.0;
    FusionStats fusion;
    int n_occluded_superpixels = 0;
    double ms_preprocess = 0.0, ms_rigid = 0.0, ms_occlusion = 0.0, ms_expression = 0.0,
           ms_fusion = 0.0, ms_total = 0.0;
    std::vector<std::string> stages;  // executed stage names, in order
};

// Per-frame loop: initialize on a neutral frontal first frame, then for each
// subsequent frame rigid-track on the raw depth (previous frame's visibility),
// render, classify and complete occlusions, solve coefficients on the
// completed frame, and fuse the raw frame under the new visibility mask.
class Pipeline {
public:
    explicit Pipeline(const PipelineConfig& config);

    // Frame 0: landmark-based scale/pose fit, first fusion at x = 0 with full
    // visibility, landmark texel lookup. Throws on initialization failure.
    FrameReport initialize(const RgbdFrame& frame);
    FrameReport process_frame(const RgbdFrame& frame);

    bool initialized() const { return initialized_; }
    double scale() const { return scale_; }
    const Pose& pose() const { return pose_; }
    const ExpressionCoefficients& coeffs() const { return x_; }
    const TextureImages& texture_images() const { return tex_; }
    const DeviationModel& model() const { return *model_; }
    const Image<std::uint8_t>& visibility() const { return alpha_; }
    const BlendshapeSet& rig() const { return rig_.set; }
    const PipelineConfig& config() const { return config_; }

    // Debug artifacts of the most recent frame (valid when occlusion ran).
    const RenderedModel& last_render() const { return last_render_; }
    const Image<std::uint8_t>& last_occlusion_mask() const { return last_occlusion_; }
    const RgbdFrame& last_completed() const { return last_completed_; }

private:
    PipelineConfig config_;
    ToyRig rig_;
    TextureImages tex_;
    std::unique_ptr<DeviationModel> model_;
    BlendedImages blended_;  // at the current coefficients
    Image<std::uint8_t> alpha_;
    ExpressionCoefficients x_;
    Pose pose_;
    double scale_ = 1.0;
    int next_frame_ = 0;
    bool initialized_ = false;

    RenderedModel last_render_;
    Image<std::uint8_t> last_occlusion_;
    RgbdFrame last_completed_;
};

struct RunOptions {
    bool dump_debug = false;
    bool occlusion_enabled = true;
    int max_frames = -1;  // -1 = all
};

// Reads a sequence directory (depth/color/landmarks + intrinsics.txt), runs
// the pipeline over every frame and writes poses.txt, coeffs.txt,
// snapshot.bin, fusion_counts.bin and stats.txt into out_dir.
std::vector<FrameReport> run_pipeline(const PipelineConfig& config, const std::string& sequence_dir,
                                      const std::string& out_dir, const RunOptions& options = {});

// Rebuilds the rig from the snapshot's descriptor and exports the augmented
// surface at coefficients x as a colored OBJ (one vertex per covered texel,
// grid-quad triangulation with a 5 mm tear threshold).
void export_mesh(const DeviationSnapshot& snapshot, const ExpressionCoefficients& x,
                 const std::string& obj_path, double tear_threshold = 0.005);

}  // namespace headfusion
