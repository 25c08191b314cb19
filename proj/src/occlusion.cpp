#include "headfusion/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace headfusion {

Vec3 rgb_to_cielab(const Rgb8& rgb) {
    const auto linearize = [](double c) {
        c /= 255.0;
        return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
    };
    const double r = linearize(rgb.r);
    const double g = linearize(rgb.g);
    const double b = linearize(rgb.b);

    // sRGB D65 primaries.
    const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;

    const auto f = [](double t) {
        constexpr double delta = 6.0 / 29.0;
        return t > delta * delta * delta ? std::cbrt(t)
                                         : t / (3.0 * delta * delta) + 4.0 / 29.0;
    };
    const double fx = f(x / 0.95047);
    const double fy = f(y / 1.0);
    const double fz = f(z / 1.08883);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

PixelRect face_region(const RenderedModel& rendered, int dilation) {
    PixelRect r;
    r.x0 = rendered.depth.width();
    r.y0 = rendered.depth.height();
    r.x1 = -1;
    r.y1 = -1;
    for (int y = 0; y < rendered.depth.height(); ++y) {
        for (int x = 0; x < rendered.depth.width(); ++x) {
            if (!depth_valid(rendered.depth(x, y))) continue;
            r.x0 = std::min(r.x0, x);
            r.y0 = std::min(r.y0, y);
            r.x1 = std::max(r.x1, x);
            r.y1 = std::max(r.y1, y);
        }
    }
    if (r.empty()) return r;
    r.x0 = std::max(0, r.x0 - dilation);
    r.y0 = std::max(0, r.y0 - dilation);
    r.x1 = std::min(rendered.depth.width() - 1, r.x1 + dilation);
    r.y1 = std::min(rendered.depth.height() - 1, r.y1 + dilation);
    return r;
}

Image<int> segment_superpixels(const Image<Rgb8>& color, const PixelRect& region,
                               const OcclusionParams& params) {
    Image<int> labels(color.width(), color.height(), -1);
    if (region.empty()) return labels;

    const int rw = region.x1 - region.x0 + 1;
    const int rh = region.y1 - region.y0 + 1;
    const int s = std::max(1, params.cell_size);
    const int nx = std::max(1, (rw + s / 2) / s);
    const int ny = std::max(1, (rh + s / 2) / s);

    // 5-vector cluster centers: (L, a, b, x, y).
    struct Center {
        Vec3 lab;
        double x, y;
    };
    std::vector<Center> centers;
    centers.reserve(static_cast<size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const double cx = region.x0 + (i + 0.5) * rw / nx;
            const double cy = region.y0 + (j + 0.5) * rh / ny;
            const int px = std::clamp(static_cast<int>(cx), region.x0, region.x1);
            const int py = std::clamp(static_cast<int>(cy), region.y0, region.y1);
            centers.push_back({rgb_to_cielab(color(px, py)), static_cast<double>(px),
                               static_cast<double>(py)});
        }
    }

    Image<Vec3> lab(color.width(), color.height());
    for (int y = region.y0; y <= region.y1; ++y) {
        for (int x = region.x0; x <= region.x1; ++x) {
            lab(x, y) = rgb_to_cielab(color(x, y));
        }
    }

    const double spatial_scale = params.compactness * params.compactness /
                                 (static_cast<double>(s) * static_cast<double>(s));
    Image<double> best(color.width(), color.height(), std::numeric_limits<double>::infinity());

    for (int iter = 0; iter < params.slic_iterations; ++iter) {
        for (int y = region.y0; y <= region.y1; ++y) {
            for (int x = region.x0; x <= region.x1; ++x) {
                best(x, y) = std::numeric_limits<double>::infinity();
                labels(x, y) = -1;
            }
        }
        // Assignment: each center claims pixels within a 2s x 2s window.
        for (int k = 0; k < static_cast<int>(centers.size()); ++k) {
            const Center& c = centers[k];
            const int x0 = std::max(region.x0, static_cast<int>(c.x) - s);
            const int x1 = std::min(region.x1, static_cast<int>(c.x) + s);
            const int y0 = std::max(region.y0, static_cast<int>(c.y) - s);
            const int y1 = std::min(region.y1, static_cast<int>(c.y) + s);
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const double d_lab = (lab(x, y) - c.lab).squaredNorm();
                    const double dx = x - c.x;
                    const double dy = y - c.y;
                    const double d = d_lab + spatial_scale * (dx * dx + dy * dy);
                    if (d < best(x, y)) {
                        best(x, y) = d;
                        labels(x, y) = k;
                    }
                }
            }
        }
        // Pixels outside every window (possible after centers drift): nearest
        // center by full search, keeping every region pixel labeled.
        for (int y = region.y0; y <= region.y1; ++y) {
            for (int x = region.x0; x <= region.x1; ++x) {
                if (labels(x, y) >= 0) continue;
                double d_min = std::numeric_limits<double>::infinity();
                for (int k = 0; k < static_cast<int>(centers.size()); ++k) {
                    const Center& c = centers[k];
                    const double dx = x - c.x;
                    const double dy = y - c.y;
                    const double d = (lab(x, y) - c.lab).squaredNorm() +
                                     spatial_scale * (dx * dx + dy * dy);
                    if (d < d_min) {
                        d_min = d;
                        labels(x, y) = k;
                    }
                }
            }
        }
        // Update: centers move to the mean of their members.
        std::vector<Vec3> lab_sum(centers.size(), Vec3::Zero());
        std::vector<double> x_sum(centers.size(), 0.0), y_sum(centers.size(), 0.0);
        std::vector<int> count(centers.size(), 0);
        for (int y = region.y0; y <= region.y1; ++y) {
            for (int x = region.x0; x <= region.x1; ++x) {
                const int k = labels(x, y);
                lab_sum[k] += lab(x, y);
                x_sum[k] += x;
                y_sum[k] += y;
                ++count[k];
            }
        }
        for (size_t k = 0; k < centers.size(); ++k) {
            if (count[k] == 0) continue;
            centers[k].lab = lab_sum[k] / count[k];
            centers[k].x = x_sum[k] / count[k];
            centers[k].y = y_sum[k] / count[k];
        }
    }
    return labels;
}

OcclusionResult classify_occlusion(const RgbdFrame& frame, const RenderedModel& rendered,
                                   const Image<int>& labels, const TextureImages& tex,
                                   const BlendedImages& blended, const Image<double>& dev,
                                   const Pose& pose, const OcclusionParams& params) {
    OcclusionResult result;
    result.occluded_pixels =
        Image<std::uint8_t>(frame.depth.width(), frame.depth.height(), 0);
    result.alpha = Image<std::uint8_t>(tex.resolution, tex.resolution, 1);

    int n_labels = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        n_labels = std::max(n_labels, labels.data()[i] + 1);
    }
    result.n_superpixels = n_labels;
    if (n_labels == 0) return result;

    // Vote per superpixel. Only pixels the render covers can testify; invalid
    // frame depth under the render is an outlier (no supporting evidence).
    std::vector<int> inliers(n_labels, 0), outliers(n_labels, 0);
    for (int y = 0; y < frame.depth.height(); ++y) {
        for (int x = 0; x < frame.depth.width(); ++x) {
            const int k = labels(x, y);
            if (k < 0) continue;
            const double rd = rendered.depth(x, y);
            if (!depth_valid(rd)) continue;
            const double fd = frame.depth(x, y);
            if (!depth_valid(fd)) {
                ++outliers[k];
                continue;
            }
            const bool depth_ok = fd >= rd - params.tau_d;
            const bool color_ok =
                (rgb_to_cielab(frame.color(x, y)) - rgb_to_cielab(rendered.color(x, y))).norm() <
                params.tau_c;
            if (depth_ok && color_ok) {
                ++inliers[k];
            } else {
                ++outliers[k];
            }
        }
    }

    std::vector<std::uint8_t> occluded(n_labels, 0);
    for (int k = 0; k < n_labels; ++k) {
        if (outliers[k] > inliers[k]) {
            occluded[k] = 1;
            ++result.n_occluded_superpixels;
        }
    }

    for (int y = 0; y < frame.depth.height(); ++y) {
        for (int x = 0; x < frame.depth.width(); ++x) {
            const int k = labels(x, y);
            if (k >= 0 && occluded[k]) result.occluded_pixels(x, y) = 1;
        }
    }

    for (const auto& [u, v] : tex.covered) {
        const Vec3 p_cam = pose * (blended.vertex(u, v) + dev(u, v) * blended.normal(u, v));
        const auto pix = project(p_cam, frame.intrinsics);
        if (!pix) continue;
        const int px = static_cast<int>(std::lround(pix->x()));
        const int py = static_cast<int>(std::lround(pix->y()));
        if (!result.occluded_pixels.contains(px, py)) continue;
        if (result.occluded_pixels(px, py)) result.alpha(u, v) = 0;
    }
    return result;
}

RgbdFrame complete_frame(const RgbdFrame& frame, const RenderedModel& rendered,
                         const Image<std::uint8_t>& occluded_pixels) {
    RgbdFrame out;
    out.depth = frame.depth;
    out.color = frame.color;
    out.intrinsics = frame.intrinsics;
    out.landmarks = frame.landmarks;
    for (int y = 0; y < out.depth.height(); ++y) {
        for (int x = 0; x < out.depth.width(); ++x) {
            if (!occluded_pixels(x, y)) continue;
            const double rd = rendered.depth(x, y);
            if (depth_valid(rd)) {
                out.depth(x, y) = rd;
                out.color(x, y) = rendered.color(x, y);
            } else {
                out.depth(x, y) = kInvalidDepth;
            }
        }
    }
    preprocess_frame(out);
    return out;
}

}  // namespace headfusion
