#pragma once

#include "headfusion/blendshape.hpp"
#include "headfusion/deviation.hpp"
#include "headfusion/geometry.hpp"
#include "headfusion/image.hpp"

namespace headfusion {

// Result of rasterizing the textured deviation-grid surface into a camera.
// depth is in meters with 0 = invalid; texel_id stores v * R + u of the
// dominant corner texel of the triangle covering each pixel (-1 = none).
struct RenderedModel {
    Image<double> depth;
    Image<Rgb8> color;
    Image<Vec3> normal;
    Image<int> texel_id;

    RenderedModel() = default;
    RenderedModel(int width, int height)
        : depth(width, height, kInvalidDepth),
          color(width, height, Rgb8{0, 0, 0}),
          normal(width, height, invalid_normal()),
          texel_id(width, height, -1) {}
};

struct RenderParams {
    // Triangles with a 3D edge longer than this are treated as tears in the
    // grid surface and skipped.
    double tear_threshold = 0.005;
};

// Invokes f(i00, i10, i01) and f(i10, i11, i01) for every grid quad whose four
// corner texels are all covered, where each index is v * R + u.
template <typename F>
void for_each_grid_quad_triangle(const TextureImages& tex, F&& f) {
    const int R = tex.resolution;
    for (int v = 0; v + 1 < R; ++v) {
        for (int u = 0; u + 1 < R; ++u) {
            if (!tex.is_covered(u, v) || !tex.is_covered(u + 1, v) ||
                !tex.is_covered(u, v + 1) || !tex.is_covered(u + 1, v + 1)) {
                continue;
            }
            const int i00 = v * R + u;
            const int i10 = v * R + u + 1;
            const int i01 = (v + 1) * R + u;
            const int i11 = (v + 1) * R + u + 1;
            f(i00, i10, i01);
            f(i10, i11, i01);
        }
    }
}

// Rasterizes the augmented surface P(u,v) = blended.vertex + dev * blended.normal
// (colored per texel) seen from the given camera. Depth-buffered, deterministic.
RenderedModel render_surface(const TextureImages& tex, const BlendedImages& blended,
                             const Image<double>& dev, const Image<Rgb8>& color,
                             const Pose& pose, const CameraIntrinsics& intrinsics,
                             const RenderParams& params = {});

/// Convenience wrapper: blends the rig at x and renders the model's served
// deviation and color grids.
RenderedModel render_model(const DeviationModel& model, const TextureImages& tex,
                           const ExpressionCoefficients& x, const Pose& pose,
                           const CameraIntrinsics& intrinsics, const RenderParams& params = {});

}  // namespace headfusion
