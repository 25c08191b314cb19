#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "headfusion/occlusion.hpp"
#include "headfusion/renderer.hpp"

using namespace headfusion;

namespace {

CameraIntrinsics vga_camera() { return {500.0, 500.0, 320.0, 240.0, 640, 480}; }

Pose z_pose(double z) {
    Pose p;
    p.translation = Vec3(0.0, 0.0, z);
    return p;
}

struct OccScene {
    TextureImages tex;
    BlendedImages blended;
    Image<double> dev;
    Image<Rgb8> color;
};

// Gentle-slope rig (90 degree aperture) with a smooth, high-contrast color
// texture; texel pitch finer than the pixel pitch at the test pose.
const OccScene& occ_scene() {
    static const OccScene scene = [] {
        ToyRigParams params;
        params.aperture_deg = 90.0;
        const ToyRig rig = make_toy_rig(params);
        const int R = 192;
        OccScene s;
        s.tex = build_texture_images(rig.set, R);
        s.blended = blend(s.tex, ExpressionCoefficients::Zero(params.n));
        s.dev = Image<double>(R, R, 0.0);
        s.color = Image<Rgb8>(R, R, Rgb8{0, 0, 0});
        for (int v = 0; v < R; ++v) {
            for (int u = 0; u < R; ++u) {
                s.color(u, v) = Rgb8{static_cast<std::uint8_t>(90 + 70.0 * std::sin(u * 0.11)),
                                     static_cast<std::uint8_t>(110 + 60.0 * std::cos(v * 0.07)),
                                     static_cast<std::uint8_t>(120 + 50.0 * std::sin((u + v) * 0.05))};
            }
        }
        return s;
    }();
    return scene;
}

RgbdFrame frame_from_render(const RenderedModel& render, const CameraIntrinsics& k) {
    RgbdFrame frame;
    frame.intrinsics = k;
    frame.depth = render.depth;
    frame.color = render.color;
    preprocess_frame(frame);
    return frame;
}

}  // namespace

TEST_CASE("rendered depth matches projected texel depth") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    // Close enough that the half-pixel association error on the steepest
    // relief flank stays within the tolerance.
    const Pose pose = z_pose(0.30);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);

    std::vector<std::pair<int, int>> interior;
    for (const auto& [u, v] : scene.tex.covered) {
        if (u > 0 && v > 0 && u + 1 < scene.tex.resolution && v + 1 < scene.tex.resolution &&
            scene.tex.is_covered(u - 1, v) && scene.tex.is_covered(u + 1, v) &&
            scene.tex.is_covered(u, v - 1) && scene.tex.is_covered(u, v + 1)) {
            interior.emplace_back(u, v);
        }
    }
    std::mt19937 rng(7);
    std::uniform_int_distribution<size_t> pick(0, interior.size() - 1);
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto [u, v] = interior[pick(rng)];
        const Vec3 p = pose * surface_point(scene.blended, scene.dev(u, v), u, v);
        const auto px = project(p, k);
        REQUIRE(px.has_value());
        const int xi = static_cast<int>(std::lround(px->x()));
        const int yi = static_cast<int>(std::lround(px->y()));
        REQUIRE(render.depth.contains(xi, yi));
        REQUIRE(depth_valid(render.depth(xi, yi)));
        CHECK(std::abs(render.depth(xi, yi) - p.z()) < 1e-3);
        ++checked;
    }
    CHECK(checked == 1000);
}

TEST_CASE("rendered points and texel ids are consistent") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);

    int checked = 0;
    for (int y = 0; y < k.height; y += 3) {
        for (int x = 0; x < k.width; x += 3) {
            if (!depth_valid(render.depth(x, y))) continue;
            REQUIRE(render.texel_id(x, y) >= 0);
            const int u = render.texel_id(x, y) % scene.tex.resolution;
            const int v = render.texel_id(x, y) / scene.tex.resolution;
            REQUIRE(scene.tex.is_covered(u, v));
            const Vec3 texel_point = pose * surface_point(scene.blended, scene.dev(u, v), u, v);
            const auto pixel_point = back_project(x, y, render.depth(x, y), k);
            REQUIRE(pixel_point.has_value());
            CHECK((*pixel_point - texel_point).norm() < 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 2500);
}

TEST_CASE("self-occluding texels never win the depth test") {
    ToyRigParams params;  // default 150 degree aperture curls far around
    const ToyRig rig = make_toy_rig(params);
    const int R = 96;
    TextureImages tex = build_texture_images(rig.set, R);
    const BlendedImages blended = blend(tex, ExpressionCoefficients::Zero(params.n));
    const Image<double> dev(R, R, 0.0);
    const Image<Rgb8> color(R, R, Rgb8{128, 128, 128});
    const CameraIntrinsics k = vga_camera();
    Pose pose = z_pose(0.45);
    pose.rotation = Eigen::AngleAxisd(65.0 * EIGEN_PI / 180.0, Vec3::UnitY()).toRotationMatrix();

    const RenderedModel render = render_surface(tex, blended, dev, color, pose, k);

    // Bucket all covered texels by their projected pixel.
    std::map<std::pair<int, int>, std::vector<double>> buckets;
    for (const auto& [u, v] : tex.covered) {
        const Vec3 p = pose * surface_point(blended, dev(u, v), u, v);
        const auto px = project(p, k);
        if (!px) continue;
        const int xi = static_cast<int>(std::lround(px->x()));
        const int yi = static_cast<int>(std::lround(px->y()));
        if (!render.depth.contains(xi, yi)) continue;
        buckets[{xi, yi}].push_back(p.z());
    }

    int layered = 0;
    for (auto& [pixel, depths] : buckets) {
        const auto [xi, yi] = pixel;
        if (!depth_valid(render.depth(xi, yi))) continue;
        std::sort(depths.begin(), depths.end());
        // Split the depth set at its largest jump; pixels on silhouette folds
        // have a quasi-continuous set and are skipped.
        double gap = 0.0;
        size_t cut = 0;
        for (size_t i = 0; i + 1 < depths.size(); ++i) {
            if (depths[i + 1] - depths[i] > gap) {
                gap = depths[i + 1] - depths[i];
                cut = i;
            }
        }
        if (gap < 0.02) continue;
        ++layered;
        const double near_max = depths[cut];
        // The depth buffer keeps the near sheet...
        CHECK(render.depth(xi, yi) < near_max + 0.004);
        // ...and texel_id refers to it rather than to the hidden sheet.
        const int u = render.texel_id(xi, yi) % R;
        const int v = render.texel_id(xi, yi) / R;
        const Vec3 id_point = pose * surface_point(blended, dev(u, v), u, v);
        CHECK(id_point.z() < near_max + 0.006);
    }
    CHECK(layered > 100);
}

TEST_CASE("an empty model renders zero coverage") {
    TextureImages tex;  // resolution 0, nothing covered
    const BlendedImages blended = blend(tex, ExpressionCoefficients::Zero(0));
    const Image<double> dev;
    const Image<Rgb8> color;
    const CameraIntrinsics k = vga_camera();
    const RenderedModel render = render_surface(tex, blended, dev, color, z_pose(0.45), k);
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
            REQUIRE_FALSE(depth_valid(render.depth(x, y)));
            REQUIRE(render.texel_id(x, y) == -1);
        }
    }
}

TEST_CASE("render_model wrapper matches render_surface") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const int R = scene.tex.resolution;

    DeviationModel model(R);
    model.dev = scene.dev;
    model.color = scene.color;
    const ExpressionCoefficients x = ExpressionCoefficients::Zero(scene.tex.num_expressions());
    const RenderedModel a = render_model(model, scene.tex, x, pose, k);
    const RenderedModel b = render_surface(scene.tex, scene.blended, model.dev, model.color, pose, k);
    for (int y = 0; y < k.height; ++y) {
        for (int x2 = 0; x2 < k.width; ++x2) {
            REQUIRE(a.depth(x2, y) == b.depth(x2, y));
            REQUIRE(a.texel_id(x2, y) == b.texel_id(x2, y));
        }
    }
}

TEST_CASE("cielab conversion hits the reference values") {
    const Vec3 white = rgb_to_cielab(Rgb8{255, 255, 255});
    CHECK(white.x() == doctest::Approx(100.0).epsilon(0.001));
    CHECK(std::abs(white.y()) < 0.1);
    CHECK(std::abs(white.z()) < 0.1);

    const Vec3 black = rgb_to_cielab(Rgb8{0, 0, 0});
    CHECK(std::abs(black.x()) < 0.1);
    CHECK(std::abs(black.y()) < 0.1);
    CHECK(std::abs(black.z()) < 0.1);

    // Independent evaluation of the standard formula for mid-gray.
    const double c = 119.0 / 255.0;
    const double lin = std::pow((c + 0.055) / 1.055, 2.4);
    const double fy = std::cbrt(lin);  // lin is well above the linear-segment cutoff
    const double l_ref = 116.0 * fy - 16.0;
    const Vec3 gray = rgb_to_cielab(Rgb8{119, 119, 119});
    CHECK(gray.x() == doctest::Approx(l_ref).epsilon(1e-6));
    CHECK(std::abs(gray.y()) < 0.5);
    CHECK(std::abs(gray.z()) < 0.5);
}

TEST_CASE("uniform color yields a regular superpixel grid") {
    const int w = 64, h = 64;
    Image<Rgb8> color(w, h, Rgb8{120, 130, 140});
    const PixelRect region{0, 0, w - 1, h - 1};
    OcclusionParams params;
    const Image<int> labels = segment_superpixels(color, region, params);

    std::map<int, std::array<int, 4>> extents;  // label -> min/max x/y
    int labeled = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int l = labels(x, y);
            REQUIRE(l >= 0);
            ++labeled;
            auto it = extents.find(l);
            if (it == extents.end()) {
                extents[l] = {x, x, y, y};
            } else {
                it->second[0] = std::min(it->second[0], x);
                it->second[1] = std::max(it->second[1], x);
                it->second[2] = std::min(it->second[2], y);
                it->second[3] = std::max(it->second[3], y);
            }
        }
    }
    CHECK(labeled == w * h);
    CHECK(extents.size() == 16);  // 64/16 x 64/16 cells
    for (const auto& [label, e] : extents) {
        CHECK(e[1] - e[0] + 1 <= params.cell_size + 2);  // one-pixel slack each side
        CHECK(e[3] - e[2] + 1 <= params.cell_size + 2);
    }
}

TEST_CASE("superpixels respect a two-tone color edge") {
    const int w = 64, h = 64, edge = 32;
    Image<Rgb8> color(w, h, Rgb8{0, 0, 0});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            color(x, y) = x < edge ? Rgb8{200, 30, 30} : Rgb8{30, 30, 200};
        }
    }
    const PixelRect region{0, 0, w - 1, h - 1};
    const Image<int> labels = segment_superpixels(color, region);

    std::map<int, std::pair<int, int>> votes;  // label -> (left, right)
    int total = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            REQUIRE(labels(x, y) >= 0);
            ++total;
            if (x < edge) {
                votes[labels(x, y)].first++;
            } else {
                votes[labels(x, y)].second++;
            }
        }
    }
    CHECK(total == w * h);
    int sum = 0;
    for (const auto& [label, lr] : votes) {
        const int size = lr.first + lr.second;
        sum += size;
        CHECK(std::max(lr.first, lr.second) >= static_cast<int>(0.95 * size));
    }
    CHECK(sum == w * h);
}

TEST_CASE("a region smaller than one cell becomes a single superpixel") {
    Image<Rgb8> color(32, 32, Rgb8{100, 100, 100});
    const PixelRect region{4, 6, 11, 10};  // 8 x 5 pixels
    const Image<int> labels = segment_superpixels(color, region);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            if (region.contains(x, y)) {
                REQUIRE(labels(x, y) == 0);
            } else {
                REQUIRE(labels(x, y) == -1);
            }
        }
    }
}

TEST_CASE("a frame identical to the render is fully visible") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);
    const RgbdFrame frame = frame_from_render(render, k);
    const Image<int> labels = segment_superpixels(frame.color, face_region(render, 16));

    const OcclusionResult result =
        classify_occlusion(frame, render, labels, scene.tex, scene.blended, scene.dev, pose);
    CHECK(result.n_superpixels > 0);
    CHECK(result.n_occluded_superpixels == 0);
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) REQUIRE(result.occluded_pixels(x, y) == 0);
    }
    for (const auto& [u, v] : scene.tex.covered) REQUIRE(result.alpha(u, v) == 1);
}

TEST_CASE("a same-color occluder plane is caught by the depth test") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);
    const PixelRect region = face_region(render, 16);

    // Occlude the left 30% of the face region: 5 cm in front, identical color.
    RgbdFrame frame = frame_from_render(render, k);
    const int strip_end = region.x0 + static_cast<int>(0.3 * (region.x1 - region.x0 + 1));
    for (int y = region.y0; y <= region.y1; ++y) {
        for (int x = region.x0; x < strip_end; ++x) {
            if (depth_valid(frame.depth(x, y))) frame.depth(x, y) -= 0.05;
        }
    }
    preprocess_frame(frame);

    const Image<int> labels = segment_superpixels(frame.color, region);
    const OcclusionResult result =
        classify_occlusion(frame, render, labels, scene.tex, scene.blended, scene.dev, pose);
    CHECK(result.n_occluded_superpixels > 0);

    // Texels projecting well inside the strip are hidden; texels well to the
    // right of it stay visible (margin of one superpixel cell on either side).
    const int margin = 24;  // superpixels can drift past the strip boundary
    int hidden = 0, visible = 0;
    for (const auto& [u, v] : scene.tex.covered) {
        const Vec3 p = pose * surface_point(scene.blended, scene.dev(u, v), u, v);
        const auto px = project(p, k);
        REQUIRE(px.has_value());
        const int xi = static_cast<int>(std::lround(px->x()));
        const int yi = static_cast<int>(std::lround(px->y()));
        if (!render.depth.contains(xi, yi) || !depth_valid(render.depth(xi, yi))) continue;
        if (px->x() < strip_end - margin) {
            REQUIRE(result.alpha(u, v) == 0);
            ++hidden;
        } else if (px->x() > strip_end + margin) {
            REQUIRE(result.alpha(u, v) == 1);
            ++visible;
        }
    }
    CHECK(hidden > 500);
    CHECK(visible > 500);
}

TEST_CASE("data behind the model still counts as inlier") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);
    const PixelRect region = face_region(render, 16);

    RgbdFrame frame = frame_from_render(render, k);
    for (int y = region.y0; y <= region.y1; ++y) {
        for (int x = region.x0; x <= region.x1; ++x) {
            if (depth_valid(frame.depth(x, y))) frame.depth(x, y) += 0.05;
        }
    }
    preprocess_frame(frame);

    const Image<int> labels = segment_superpixels(frame.color, region);
    const OcclusionResult result =
        classify_occlusion(frame, render, labels, scene.tex, scene.blended, scene.dev, pose);
    CHECK(result.n_occluded_superpixels == 0);
}

TEST_CASE("a color-only occluder is caught by the cielab test") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);
    const PixelRect region = face_region(render, 16);

    RgbdFrame frame = frame_from_render(render, k);
    const int strip_end = region.x0 + (region.x1 - region.x0 + 1) / 2;
    for (int y = region.y0; y <= region.y1; ++y) {
        for (int x = region.x0; x < strip_end; ++x) frame.color(x, y) = Rgb8{20, 240, 20};
    }
    const Image<int> labels = segment_superpixels(frame.color, region);
    const OcclusionResult result =
        classify_occlusion(frame, render, labels, scene.tex, scene.blended, scene.dev, pose);
    CHECK(result.n_occluded_superpixels > 0);

    const int margin = 24;
    int hidden = 0;
    for (const auto& [u, v] : scene.tex.covered) {
        const Vec3 p = pose * surface_point(scene.blended, scene.dev(u, v), u, v);
        const auto px = project(p, k);
        REQUIRE(px.has_value());
        const int xi = static_cast<int>(std::lround(px->x()));
        const int yi = static_cast<int>(std::lround(px->y()));
        if (!render.depth.contains(xi, yi) || !depth_valid(render.depth(xi, yi))) continue;
        if (px->x() < strip_end - margin) {
            REQUIRE(result.alpha(u, v) == 0);
            ++hidden;
        }
    }
    CHECK(hidden > 500);
}

TEST_CASE("the outlier majority rule sits exactly at fifty percent") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);

    // One hand-built 10x10 superpixel in the middle of the rendered face.
    const PixelRect region = face_region(render, 0);
    const int cx = (region.x0 + region.x1) / 2, cy = (region.y0 + region.y1) / 2;
    Image<int> labels(k.width, k.height, -1);
    for (int y = cy; y < cy + 10; ++y) {
        for (int x = cx; x < cx + 10; ++x) {
            REQUIRE(depth_valid(render.depth(x, y)));
            labels(x, y) = 0;
        }
    }

    auto with_outliers = [&](int count) {
        RgbdFrame frame = frame_from_render(render, k);
        int made = 0;
        for (int y = cy; y < cy + 10 && made < count; ++y) {
            for (int x = cx; x < cx + 10 && made < count; ++x) {
                frame.depth(x, y) -= 0.05;
                ++made;
            }
        }
        preprocess_frame(frame);
        return classify_occlusion(frame, render, labels, scene.tex, scene.blended, scene.dev,
                                  pose);
    };

    CHECK(with_outliers(40).n_occluded_superpixels == 0);  // 40 vs 60: visible
    CHECK(with_outliers(50).n_occluded_superpixels == 0);  // tie is not a majority
    CHECK(with_outliers(51).n_occluded_superpixels == 1);  // one past the tie
}

TEST_CASE("invalid depth votes outlier") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);
    const PixelRect region = face_region(render, 0);
    const int cx = (region.x0 + region.x1) / 2, cy = (region.y0 + region.y1) / 2;
    Image<int> labels(k.width, k.height, -1);
    for (int y = cy; y < cy + 10; ++y) {
        for (int x = cx; x < cx + 10; ++x) labels(x, y) = 0;
    }

    auto with_holes = [&](int count) {
        RgbdFrame frame = frame_from_render(render, k);
        int made = 0;
        for (int y = cy; y < cy + 10 && made < count; ++y) {
            for (int x = cx; x < cx + 10 && made < count; ++x) {
                frame.depth(x, y) = kInvalidDepth;
                ++made;
            }
        }
        preprocess_frame(frame);
        return classify_occlusion(frame, render, labels, scene.tex, scene.blended, scene.dev,
                                  pose);
    };

    CHECK(with_holes(50).n_occluded_superpixels == 0);
    CHECK(with_holes(51).n_occluded_superpixels == 1);
}

TEST_CASE("larger thresholds never occlude more pixels") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);
    const PixelRect region = face_region(render, 16);

    RgbdFrame frame = frame_from_render(render, k);
    std::mt19937 rng(29);
    std::normal_distribution<double> depth_noise(0.0, 0.015);
    std::uniform_int_distribution<int> color_noise(-60, 60);
    for (int y = region.y0; y <= region.y1; ++y) {
        for (int x = region.x0; x <= region.x1; ++x) {
            if (depth_valid(frame.depth(x, y))) frame.depth(x, y) += depth_noise(rng);
            auto bump = [&](std::uint8_t c) {
                return static_cast<std::uint8_t>(std::clamp(c + color_noise(rng), 0, 255));
            };
            frame.color(x, y) = Rgb8{bump(frame.color(x, y).r), bump(frame.color(x, y).g),
                                     bump(frame.color(x, y).b)};
        }
    }
    preprocess_frame(frame);
    const Image<int> labels = segment_superpixels(frame.color, region);

    auto occluded_count = [&](double tau_d, double tau_c) {
        OcclusionParams params;
        params.tau_d = tau_d;
        params.tau_c = tau_c;
        const OcclusionResult result = classify_occlusion(frame, render, labels, scene.tex,
                                                          scene.blended, scene.dev, pose, params);
        long count = 0;
        for (int y = 0; y < k.height; ++y) {
            for (int x = 0; x < k.width; ++x) count += result.occluded_pixels(x, y);
        }
        return count;
    };

    const long d5 = occluded_count(0.005, 40.0);
    const long d10 = occluded_count(0.010, 40.0);
    const long d20 = occluded_count(0.020, 40.0);
    CHECK(d10 <= d5);
    CHECK(d20 <= d10);
    CHECK(d5 > 0);

    const long c10 = occluded_count(0.01, 10.0);
    const long c40 = occluded_count(0.01, 40.0);
    const long c80 = occluded_count(0.01, 80.0);
    CHECK(c40 <= c10);
    CHECK(c80 <= c40);
}

TEST_CASE("completion is the identity without occlusion") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);
    const RgbdFrame frame = frame_from_render(render, k);

    const Image<std::uint8_t> none(k.width, k.height, std::uint8_t{0});
    const RgbdFrame completed = complete_frame(frame, render, none);
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
            REQUIRE(completed.depth(x, y) == frame.depth(x, y));
            REQUIRE(completed.color(x, y).r == frame.color(x, y).r);
            REQUIRE(completed.color(x, y).g == frame.color(x, y).g);
            REQUIRE(completed.color(x, y).b == frame.color(x, y).b);
        }
    }
}

TEST_CASE("completion restores occluded pixels from the render") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);

    // The observed frame differs everywhere from the model render.
    RgbdFrame frame = frame_from_render(render, k);
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
            if (depth_valid(frame.depth(x, y))) frame.depth(x, y) += 0.02;
            frame.color(x, y).r = static_cast<std::uint8_t>(255 - frame.color(x, y).r);
        }
    }
    preprocess_frame(frame);

    // Left image half occluded.
    Image<std::uint8_t> occluded(k.width, k.height, std::uint8_t{0});
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width / 2; ++x) occluded(x, y) = 1;
    }

    const RgbdFrame completed = complete_frame(frame, render, occluded);
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
            if (occluded(x, y)) {
                if (depth_valid(render.depth(x, y))) {
                    REQUIRE(std::abs(completed.depth(x, y) - render.depth(x, y)) < 1e-3);
                    REQUIRE(completed.color(x, y).r == render.color(x, y).r);
                    REQUIRE(completed.color(x, y).g == render.color(x, y).g);
                    REQUIRE(completed.color(x, y).b == render.color(x, y).b);
                } else {
                    REQUIRE_FALSE(depth_valid(completed.depth(x, y)));
                }
            } else {
                REQUIRE(completed.depth(x, y) == frame.depth(x, y));
                REQUIRE(completed.color(x, y).r == frame.color(x, y).r);
            }
        }
    }
}

TEST_CASE("a fully occluded frame leaves the deviation model unchanged") {
    const OccScene& scene = occ_scene();
    const CameraIntrinsics k = vga_camera();
    const Pose pose = z_pose(0.45);
    const int R = scene.tex.resolution;
    const RenderedModel render =
        render_surface(scene.tex, scene.blended, scene.dev, scene.color, pose, k);
    const RgbdFrame frame = frame_from_render(render, k);

    // Claim every face pixel is occluded; alpha drops to zero everywhere.
    Image<int> labels(k.width, k.height, -1);
    const PixelRect region = face_region(render, 16);
    for (int y = region.y0; y <= region.y1; ++y) {
        for (int x = region.x0; x <= region.x1; ++x) labels(x, y) = 0;
    }
    RgbdFrame far_frame = frame;
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
            if (depth_valid(far_frame.depth(x, y))) far_frame.depth(x, y) -= 0.05;
        }
    }
    preprocess_frame(far_frame);
    const OcclusionResult result = classify_occlusion(far_frame, render, labels, scene.tex,
                                                      scene.blended, scene.dev, pose);
    REQUIRE(result.n_occluded_superpixels == 1);
    for (const auto& [u, v] : scene.tex.covered) REQUIRE(result.alpha(u, v) == 0);

    DeviationModel model(R);
    const FusionStats stats =
        fuse_frame(model, scene.tex, scene.blended, far_frame, pose, result.alpha, {});
    CHECK(stats.attempted == 0);
    CHECK(stats.accepted == 0);
    for (int v = 0; v < R; ++v) {
        for (int u = 0; u < R; ++u) {
            REQUIRE(model.insert_count(u, v) == 0);
            REQUIRE(model.lists(u, v).empty());
        }
    }
}
