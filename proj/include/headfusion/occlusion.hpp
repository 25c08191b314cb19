#pragma once

#include <vector>

#include "headfusion/blendshape.hpp"
#include "headfusion/deviation.hpp"
#include "headfusion/geometry.hpp"
#include "headfusion/image.hpp"
#include "headfusion/renderer.hpp"

namespace headfusion {

struct OcclusionParams {
    double tau_d = 0.01;        // depth inlier threshold, meters
    double tau_c = 40.0;        // CIELAB color threshold
    int cell_size = 16;         // superpixel target size, pixels
    double compactness = 10.0;  // SLIC spatial weight
    int slic_iterations = 5;
    int region_dilation = 16;   // face-region bounding box dilation, pixels
};

// sRGB (0..255) to CIELAB under D65.
Vec3 rgb_to_cielab(const Rgb8& rgb);

// Axis-aligned pixel rectangle, inclusive bounds; x0 > x1 means empty.
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
    bool empty() const { return x0 > x1 || y0 > y1; }
    bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

// Bounding box of valid rendered depth, dilated and clamped to the image.
PixelRect face_region(const RenderedModel& rendered, int dilation);

// SLIC-style superpixels restricted to the given region: k-means over
// (L,a,b,u,v) seeded on a regular grid. Returns a full-image label grid with
// -1 outside the region; every region pixel is labeled.
Image<int> segment_superpixels(const Image<Rgb8>& color, const PixelRect& region,
                               const OcclusionParams& params = {});

struct OcclusionResult {
    Image<std::uint8_t> occluded_pixels;  // 1 = pixel lies in an occluded superpixel
    Image<std::uint8_t> alpha;            // R x R visibility over deviation texels
    int n_superpixels = 0;
    int n_occluded_superpixels = 0;
};

// Votes each labeled pixel inlier/outlier against the render (depth not in
// front of the model within tau_d AND CIELAB distance < tau_c), marks
// superpixels with an outlier majority as occluded, and gates each texel's
// visibility by the superpixel under its projection.
OcclusionResult classify_occlusion(const RgbdFrame& frame, const RenderedModel& rendered,
                                   const Image<int>& labels, const TextureImages& tex,
                                   const BlendedImages& blended, const Image<double>& dev,
                                   const Pose& pose, const OcclusionParams& params = {});

// Replaces occluded pixels with the rendered model (invalidating depth where
// the render has no coverage) and re-derives the vertex/normal maps.
// Non-occluded pixels are untouched.
RgbdFrame complete_frame(const RgbdFrame& frame, const RenderedModel& rendered,
                         const Image<std::uint8_t>& occluded_pixels);

}  // namespace headfusion
