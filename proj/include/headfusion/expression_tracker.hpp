#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "headfusion/blendshape.hpp"
#include "headfusion/geometry.hpp"
#include "headfusion/rigid_tracker.hpp"

namespace headfusion {

struct ExpressionSolveConfig {
    double landmark_weight = 100.0;    // w_L
    double regularizer_weight = 4e-4;  // w_S
    int outer_iterations = 6;
    int relaxation_iterations = 20;
    // Dense association reuses the rigid tracker's rejection thresholds.
    double corr_dist_reject = 0.01;
    double corr_angle_reject_deg = 30.0;
    int min_dense_correspondences = 100;
};

// The coefficient cost, frozen at one set of dense/landmark associations.
// Because the surface is affine in x the full cost is exactly quadratic:
// f(x) = x^T H x - 2 g^T x + constant.
struct ExpressionSystem {
    Eigen::MatrixXd h;
    Eigen::VectorXd g;
    double constant = 0.0;
    int n_dense = 0;
    int n_landmarks = 0;
};

// Associates dense texels and landmarks at linearization point x_lin and
// accumulates the quadratic system for the total cost (dense point-to-plane +
// weighted landmark point-to-point + magnitude and temporal regularizers).
ExpressionSystem build_expression_system(const TextureImages& tex, const Image<double>& dev,
                                         const ExpressionCoefficients& x_lin, const Pose& pose,
                                         const RgbdFrame& frame,
                                         const std::vector<LandmarkTexel>& lmk_texels,
                                         const ExpressionCoefficients& x_prev,
                                         const ExpressionSolveConfig& config);

double system_cost(const ExpressionSystem& system, const ExpressionCoefficients& x);
Eigen::VectorXd system_gradient(const ExpressionSystem& system, const ExpressionCoefficients& x);

// Direct (non-frozen) evaluation of the total cost at x: re-associates the
// dense and landmark terms at x itself.
double expression_cost(const ExpressionCoefficients& x, const Pose& pose, const TextureImages& tex,
                       const Image<double>& dev, const RgbdFrame& frame,
                       const std::vector<LandmarkTexel>& lmk_texels,
                       const ExpressionCoefficients& x_prev, const ExpressionSolveConfig& config);

// Box-constrained least squares min_{x in [0,1]^n} x^T H x - 2 g^T x by
// Jacobi-style parallel relaxation: every coordinate is updated from the
// previous iterate with a row-sum scaled gradient step, then clamped. The
// scaling majorizes H, so the cost is non-increasing across sweeps.
ExpressionCoefficients solve_box_ls(const Eigen::MatrixXd& h, const Eigen::VectorXd& g,
                                    const ExpressionCoefficients& x0, int sweeps);

struct ExpressionResult {
    ExpressionCoefficients x;
    bool hold = false;
    double cost = 0.0;
    int n_dense = 0;
    int n_landmarks = 0;
};

// Alternates re-association and the relaxation solve for the configured number
// of outer iterations, starting from x_prev. If the frame provides no usable
// landmarks and fewer dense correspondences than the floor, returns x_prev
// with the hold flag set.
ExpressionResult solve_coefficients(const TextureImages& tex, const Image<double>& dev,
                                    const Pose& pose, const RgbdFrame& frame,
                                    const std::vector<LandmarkTexel>& lmk_texels,
                                    const ExpressionCoefficients& x_prev,
                                    const ExpressionSolveConfig& config = {});

// Coefficient log: one line per frame, `frame_id x_1 ... x_n cost flags`.
// flags is a bitmask: 1 = expression hold, 2 = rigid tracking lost.
constexpr int kFlagExpressionHold = 1;
constexpr int kFlagTrackingLost = 2;

struct CoeffLogEntry {
    int frame_id = 0;
    ExpressionCoefficients x;
    double cost = 0.0;
    int flags = 0;
};

void append_coeff_log(std::ostream& out, const CoeffLogEntry& entry);
std::vector<CoeffLogEntry> read_coeff_log(const std::string& path);

}  // namespace headfusion
