#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "headfusion/geometry.hpp"
#include "headfusion/image.hpp"
#include "headfusion/mesh.hpp"

namespace headfusion {

/// Blendshape coefficients, one per base expression, each in [0,1].
using ExpressionCoefficients = Eigen::VectorXd;

inline void clamp01(ExpressionCoefficients& x) {
    for (int i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], 0.0, 1.0);
}

inline ExpressionCoefficients clamped01(ExpressionCoefficients x) {
    clamp01(x);
    return x;
}

/// n+1 topologically identical meshes: shape 0 is the neutral expression.
/// Triangulation and per-vertex texture coordinates are shared by all shapes.
struct BlendshapeSet {
    std::vector<MeshShape> shapes;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec2> texcoords;

    int num_expressions() const { return static_cast<int>(shapes.size()) - 1; }
    int vertex_count() const { return shapes.empty() ? 0 : static_cast<int>(shapes[0].vertices.size()); }

    /// Isotropic scaling about the origin. Normal directions are unchanged.
    void scale_in_place(double s);
};

/// Maps detector landmark indices to vertex ids of the neutral shape.
using LandmarkVertexTable = std::vector<std::pair<int, int>>;

LandmarkVertexTable load_landmark_vertex_table(const std::string& path);
void save_landmark_vertex_table(const std::string& path, const LandmarkVertexTable& table);

/// Loads `shape_000.obj` (neutral) through `shape_NNN.obj` from a directory.
/// Shapes must agree on vertex count, triangulation and texture coordinates.
/// Missing normals are computed from the geometry.
BlendshapeSet load_blendshape_set(const std::string& dir);

/// Procedural test rig: a spherical head patch on a regular UV grid, with n
/// base expressions formed by localized radial bumps. Texture coordinates are
/// the grid parameters, so charts never overlap.
struct ToyRigParams {
    int n = 27;               // number of base expressions
    int grid = 33;            // vertices per side
    double radius = 0.09;     // meters
    double aperture_deg = 150.0;
    double bump_amplitude = 0.01;  // meters, radial, per expression
    double bump_sigma = 0.07;      // in UV units
};

struct ToyRig {
    BlendshapeSet set;
    LandmarkVertexTable landmark_table;
};

ToyRig make_toy_rig(const ToyRigParams& params = {});

/// Precomputed texture-space images at resolution R: triangle index and
/// barycentric weight per texel, plus per-shape interpolated vertex/normal
/// images and their differences to the neutral shape.
struct TextureImages {
    int resolution = 0;
    Image<int> indx;          // -1 where no triangle covers the texel
    Image<Vec3> weights;      // barycentric triple, sums to 1 at covered texels
    std::vector<Image<Vec3>> vertex_images;   // V_i, i in [0, n]
    std::vector<Image<Vec3>> normal_images;   // N_i, interpolated, not renormalized
    std::vector<Image<Vec3>> diff_vertex;     // V_i - V_0, i in [1, n]
    std::vector<Image<Vec3>> diff_normal;     // N_i - N_0, i in [1, n]
    std::vector<std::pair<int, int>> covered; // texels with a valid triangle index

    int num_expressions() const { return static_cast<int>(diff_vertex.size()); }
    bool is_covered(int u, int v) const { return indx.contains(u, v) && indx(u, v) >= 0; }
};

/// Rasterizes the shared texture triangulation: every texel whose center lies
/// inside a triangle receives that triangle's index and its barycentric
/// coordinates. Ties on shared edges are broken deterministically.
void compute_index_weight_images(const BlendshapeSet& set, int resolution, Image<int>& indx,
                                 Image<Vec3>& weights);

/// Interpolates per-shape vertex and normal images from precomputed
/// index/weight images and stores the differences to shape 0.
TextureImages compute_shape_images(const BlendshapeSet& set, Image<int> indx,
                                   Image<Vec3> weights);

/// Convenience wrapper: index/weight rasterization followed by shape images.
TextureImages build_texture_images(const BlendshapeSet& set, int resolution);

/// Index/weight cache file ("HFIW"): they depend only on the triangulation and
/// texture coordinates, so they can be computed once and reloaded.
void save_index_weight_cache(const std::string& path, const Image<int>& indx,
                             const Image<Vec3>& weights);
bool load_index_weight_cache(const std::string& path, Image<int>& indx, Image<Vec3>& weights);

/// Blended vertex and normal fields V^x, N^x. The normal field is a linear
/// combination and is left unnormalized.
struct BlendedImages {
    Image<Vec3> vertex;
    Image<Vec3> normal;
};

void blend(const TextureImages& tex, const ExpressionCoefficients& x, BlendedImages& out);
BlendedImages blend(const TextureImages& tex, const ExpressionCoefficients& x);

/// Surface point of a covered texel: blended position displaced along the
/// blended (unnormalized) normal by the deviation value.
inline Vec3 surface_point(const BlendedImages& blended, double deviation, int u, int v) {
    return blended.vertex(u, v) + deviation * blended.normal(u, v);
}

/// Result of the first-frame fit: isotropic scale from landmark distance
/// ratios and a rigid pose from least-squares point-set registration.
struct FirstFrameFit {
    double scale = 1.0;
    Pose pose;
    double rms_residual = 0.0;
};

/// Fits scale and pose of the neutral shape to the detected 3D landmarks of a
/// neutral, frontal first frame. Throws if fewer than 4 landmarks match the
/// table or the registration residual exceeds 3 cm.
FirstFrameFit fit_first_frame(const std::vector<Landmark>& landmarks, const BlendshapeSet& set,
                              const LandmarkVertexTable& table);

/// Landmark texel: the deviation-image pixel whose surface point is nearest
/// to a detected landmark.
struct LandmarkTexel {
    int index = -1;
    int u = 0, v = 0;
};

std::vector<LandmarkTexel> find_landmark_texels(const TextureImages& tex,
                                                const Image<double>& deviation, const Pose& pose,
                                                const std::vector<Landmark>& landmarks);

}  // namespace headfusion
