#include "headfusion/renderer.hpp"

#include <algorithm>
#include <cmath>

namespace headfusion {

namespace {

struct Corner {
    Vec3 cam;     // camera-frame position
    Vec2 pix;     // projected pixel position
    Vec3 normal;  // camera-frame unit normal
    Rgb8 color;
    int texel_id;
};

void rasterize_triangle(RenderedModel& out, const Corner& a, const Corner& b, const Corner& c,
                        double tear_threshold) {
    if ((a.cam - b.cam).norm() > tear_threshold || (b.cam - c.cam).norm() > tear_threshold ||
        (c.cam - a.cam).norm() > tear_threshold) {
        return;
    }
    const Vec2 e1 = b.pix - a.pix;
    const Vec2 e2 = c.pix - a.pix;
    const double area = e1.x() * e2.y() - e1.y() * e2.x();
    if (std::abs(area) < 1e-12) return;

    const double min_x = std::min({a.pix.x(), b.pix.x(), c.pix.x()});
    const double max_x = std::max({a.pix.x(), b.pix.x(), c.pix.x()});
    const double min_y = std::min({a.pix.y(), b.pix.y(), c.pix.y()});
    const double max_y = std::max({a.pix.y(), b.pix.y(), c.pix.y()});
    const int x0 = std::max(0, static_cast<int>(std::ceil(min_x)));
    const int x1 = std::min(out.depth.width() - 1, static_cast<int>(std::floor(max_x)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(min_y)));
    const int y1 = std::min(out.depth.height() - 1, static_cast<int>(std::floor(max_y)));

    const double inv_area = 1.0 / area;
    for (int py = y0; py <= y1; ++py) {
        for (int px = x0; px <= x1; ++px) {
            const Vec2 p(static_cast<double>(px) - a.pix.x(), static_cast<double>(py) - a.pix.y());
            const double w1 = (p.x() * e2.y() - p.y() * e2.x()) * inv_area;
            const double w2 = (e1.x() * p.y() - e1.y() * p.x()) * inv_area;
            const double w0 = 1.0 - w1 - w2;
            if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;

            const double z = w0 * a.cam.z() + w1 * b.cam.z() + w2 * c.cam.z();
            if (z <= 0.0) continue;
            const double current = out.depth(px, py);
            if (depth_valid(current) && current <= z) continue;

            out.depth(px, py) = z;
            Vec3 n = w0 * a.normal + w1 * b.normal + w2 * c.normal;
            const double nn = n.norm();
            out.normal(px, py) = nn > 1e-12 ? Vec3(n / nn) : invalid_normal();
            const auto mix = [&](unsigned char ca, unsigned char cb, unsigned char cc) {
                const double value = w0 * ca + w1 * cb + w2 * cc;
                return static_cast<unsigned char>(std::clamp(std::lround(value), 0l, 255l));
            };
            out.color(px, py) = {mix(a.color.r, b.color.r, c.color.r),
                                 mix(a.color.g, b.color.g, c.color.g),
                                 mix(a.color.b, b.color.b, c.color.b)};
            const Corner& dominant = (w0 >= w1 && w0 >= w2) ? a : (w1 >= w2 ? b : c);
            out.texel_id(px, py) = dominant.texel_id;
        }
    }
}

}  // namespace

RenderedModel render_surface(const TextureImages& tex, const BlendedImages& blended,
                             const Image<double>& dev, const Image<Rgb8>& color,
                             const Pose& pose, const CameraIntrinsics& intrinsics,
                             const RenderParams& params) {
    RenderedModel out(intrinsics.width, intrinsics.height);
    const int R = tex.resolution;

    // Precompute per-texel camera positions and projections once; quads share
    // corners so this avoids redundant work during rasterization.
    std::vector<Corner> corners(static_cast<size_t>(R) * R);
    std::vector<std::uint8_t> projectable(static_cast<size_t>(R) * R, 0);
    for (const auto& [u, v] : tex.covered) {
        const int id = v * R + u;
        Corner& c = corners[id];
        const Vec3 p_model = blended.vertex(u, v) + dev(u, v) * blended.normal(u, v);
        c.cam = pose * p_model;
        const auto pix = project(c.cam, intrinsics);
        if (!pix) continue;
        c.pix = *pix;
        Vec3 n = pose.rotation * blended.normal(u, v);
        const double nn = n.norm();
        c.normal = nn > 1e-12 ? Vec3(n / nn) : invalid_normal();
        c.color = color(u, v);
        c.texel_id = id;
        projectable[id] = 1;
    }

    for_each_grid_quad_triangle(tex, [&](int i0, int i1, int i2) {
        if (!projectable[i0] || !projectable[i1] || !projectable[i2]) return;
        rasterize_triangle(out, corners[i0], corners[i1], corners[i2], params.tear_threshold);
    });
    return out;
}

RenderedModel render_model(const DeviationModel& model, const TextureImages& tex,
                           const ExpressionCoefficients& x, const Pose& pose,
                           const CameraIntrinsics& intrinsics, const RenderParams& params) {
    const BlendedImages blended = blend(tex, x);
    return render_surface(tex, blended, model.dev, model.color, pose, intrinsics, params);
}

}  // namespace headfusion
