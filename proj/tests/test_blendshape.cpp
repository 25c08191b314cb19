#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "headfusion/blendshape.hpp"
#include "headfusion/mesh.hpp"

using namespace headfusion;
namespace fs = std::filesystem;

namespace {

// One texture triangle at R=16 with vertex 0 exactly on the center of texel
// (3,3) and the centroid exactly on the center of texel (7,7).
BlendshapeSet single_triangle_set() {
    BlendshapeSet set;
    MeshShape neutral;
    neutral.vertices = {Vec3(0.0, 0.0, 1.0), Vec3(0.2, 0.0, 1.0), Vec3(0.0, 0.3, 1.2)};
    neutral.normals = {Vec3(0, 0, -1), Vec3(0, 0, -1), Vec3(0, 0, -1)};
    MeshShape expr = neutral;
    expr.vertices[0] += Vec3(0.01, 0.0, 0.0);
    expr.vertices[2] += Vec3(0.0, 0.0, -0.05);
    expr.normals[1] = Vec3(0.0, std::sqrt(0.5), -std::sqrt(0.5));
    set.shapes = {neutral, expr};
    set.faces = {{0, 1, 2}};
    set.texcoords = {Vec2(3.5 / 16, 3.5 / 16), Vec2(13.5 / 16, 3.5 / 16), Vec2(5.5 / 16, 15.5 / 16)};
    return set;
}

Pose make_pose(double angle, const Vec3& axis, const Vec3& t) {
    Pose p;
    p.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    p.translation = t;
    return p;
}

ExpressionCoefficients random_coeffs(int n, std::mt19937& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    ExpressionCoefficients x(n);
    for (int i = 0; i < n; ++i) x[i] = uni(rng);
    return x;
}

}  // namespace

TEST_CASE("toy rig has the advertised structure") {
    const ToyRig rig = make_toy_rig();
    CHECK(rig.set.num_expressions() == 27);
    CHECK(rig.set.vertex_count() == 33 * 33);
    CHECK(rig.set.faces.size() == 2u * 32 * 32);
    CHECK(rig.set.texcoords.size() == rig.set.shapes[0].vertices.size());
    for (const Vec2& t : rig.set.texcoords) {
        CHECK(t.x() >= 0.0);
        CHECK(t.x() <= 1.0);
        CHECK(t.y() >= 0.0);
        CHECK(t.y() <= 1.0);
    }
    for (const MeshShape& s : rig.set.shapes) {
        REQUIRE(s.normals.size() == s.vertices.size());
        for (const Vec3& n : s.normals) CHECK(std::abs(n.norm() - 1.0) < 1e-9);
    }
    REQUIRE(rig.landmark_table.size() >= 4u);
    for (const auto& [idx, vid] : rig.landmark_table) {
        CHECK(vid >= 0);
        CHECK(vid < rig.set.vertex_count());
    }
    // Expressions displace the neutral by roughly the bump amplitude.
    double max_disp = 0.0;
    for (int vid = 0; vid < rig.set.vertex_count(); ++vid) {
        max_disp = std::max(max_disp,
                            (rig.set.shapes[1].vertices[vid] - rig.set.shapes[0].vertices[vid]).norm());
    }
    CHECK(max_disp > 0.002);
    CHECK(max_disp < 0.02);
}

TEST_CASE("index weights: vertex texel, centroid texel, partition of unity") {
    const BlendshapeSet set = single_triangle_set();
    Image<int> indx;
    Image<Vec3> weights;
    compute_index_weight_images(set, 16, indx, weights);

    REQUIRE(indx(3, 3) == 0);
    const Vec3 wv = weights(3, 3);
    CHECK(std::abs(wv[0] - 1.0) < 1e-12);
    CHECK(std::abs(wv[1]) < 1e-12);
    CHECK(std::abs(wv[2]) < 1e-12);

    REQUIRE(indx(7, 7) == 0);
    const Vec3 wc = weights(7, 7);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(wc[k] - 1.0 / 3.0) < 1e-12);

    int covered = 0;
    for (int v = 0; v < 16; ++v) {
        for (int u = 0; u < 16; ++u) {
            if (indx(u, v) < 0) continue;
            ++covered;
            const Vec3 w = weights(u, v);
            CHECK(std::abs(w.sum() - 1.0) < 1e-12);
            for (int k = 0; k < 3; ++k) {
                CHECK(w[k] >= 0.0);
                CHECK(w[k] <= 1.0);
            }
            const Vec2 combo = w[0] * set.texcoords[0] + w[1] * set.texcoords[1] + w[2] * set.texcoords[2];
            const Vec2 center((u + 0.5) / 16.0, (v + 0.5) / 16.0);
            CHECK((combo - center).norm() < 1e-9);
        }
    }
    CHECK(covered > 20);  // half of a 10x12-texel triangle bbox, roughly
    CHECK(indx(0, 0) == -1);
    CHECK(indx(15, 0) == -1);
}

TEST_CASE("shared edges assign each texel center to exactly one triangle") {
    // Unit square split along the diagonal; centers on the diagonal must land
    // in one triangle only, and every interior texel is covered.
    BlendshapeSet set;
    MeshShape s;
    s.vertices = {Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(1, 1, 1), Vec3(0, 1, 1)};
    s.normals = std::vector<Vec3>(4, Vec3(0, 0, -1));
    set.shapes = {s};
    set.faces = {{0, 1, 2}, {0, 2, 3}};
    set.texcoords = {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};

    Image<int> indx;
    Image<Vec3> weights;
    compute_index_weight_images(set, 32, indx, weights);
    for (int v = 0; v < 32; ++v) {
        for (int u = 0; u < 32; ++u) {
            REQUIRE(indx(u, v) >= 0);  // full square: all texel centers covered
            REQUIRE(indx(u, v) < 2);
        }
    }
    // Diagonal texel centers u==v lie exactly on the shared edge.
    for (int d = 0; d < 32; ++d) {
        const Vec3 w = weights(d, d);
        CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("shape images interpolate vertices exactly") {
    const BlendshapeSet set = single_triangle_set();
    const TextureImages tex = build_texture_images(set, 16);
    REQUIRE(tex.num_expressions() == 1);
    REQUIRE(tex.vertex_images.size() == 2u);
    REQUIRE(tex.normal_images.size() == 2u);

    // Vertex texel reproduces the vertex attributes exactly.
    CHECK((tex.vertex_images[0](3, 3) - set.shapes[0].vertices[0]).norm() < 1e-12);
    CHECK((tex.normal_images[0](3, 3) - set.shapes[0].normals[0]).norm() < 1e-12);
    CHECK((tex.vertex_images[1](3, 3) - set.shapes[1].vertices[0]).norm() < 1e-12);

    // Independent barycentric oracle over all covered texels, both shapes.
    for (const auto& [u, v] : tex.covered) {
        const Vec3 w = tex.weights(u, v);
        for (int si = 0; si < 2; ++si) {
            const auto& verts = set.shapes[si].vertices;
            const auto& norms = set.shapes[si].normals;
            const Vec3 pv = w[0] * verts[0] + w[1] * verts[1] + w[2] * verts[2];
            const Vec3 pn = w[0] * norms[0] + w[1] * norms[1] + w[2] * norms[2];
            CHECK((tex.vertex_images[si](u, v) - pv).norm() < 1e-12);
            CHECK((tex.normal_images[si](u, v) - pn).norm() < 1e-12);
        }
        CHECK((tex.diff_vertex[0](u, v) -
               (tex.vertex_images[1](u, v) - tex.vertex_images[0](u, v))).norm() < 1e-12);
        CHECK((tex.diff_normal[0](u, v) -
               (tex.normal_images[1](u, v) - tex.normal_images[0](u, v))).norm() < 1e-12);
    }
}

TEST_CASE("blend: zero, one-hot, affinity") {
    const ToyRig rig = make_toy_rig();
    const TextureImages tex = build_texture_images(rig.set, 64);
    const int n = tex.num_expressions();
    REQUIRE(n == 27);

    ExpressionCoefficients zero = ExpressionCoefficients::Zero(n);
    const BlendedImages b0 = blend(tex, zero);
    for (const auto& [u, v] : tex.covered) {
        CHECK((b0.vertex(u, v) - tex.vertex_images[0](u, v)).norm() < 1e-12);
        CHECK((b0.normal(u, v) - tex.normal_images[0](u, v)).norm() < 1e-12);
    }

    for (int i : {0, 13, 26}) {
        ExpressionCoefficients onehot = ExpressionCoefficients::Zero(n);
        onehot[i] = 1.0;
        const BlendedImages bi = blend(tex, onehot);
        for (const auto& [u, v] : tex.covered) {
            CHECK((bi.vertex(u, v) - tex.vertex_images[i + 1](u, v)).norm() < 1e-12);
            CHECK((bi.normal(u, v) - tex.normal_images[i + 1](u, v)).norm() < 1e-12);
        }
    }

    std::mt19937 rng(17);
    const ExpressionCoefficients xa = random_coeffs(n, rng);
    const ExpressionCoefficients xb = random_coeffs(n, rng);
    const double alpha = 0.3;
    const ExpressionCoefficients xm = alpha * xa + (1.0 - alpha) * xb;
    const BlendedImages ba = blend(tex, xa);
    const BlendedImages bb = blend(tex, xb);
    const BlendedImages bm = blend(tex, xm);
    for (const auto& [u, v] : tex.covered) {
        const Vec3 mixv = alpha * ba.vertex(u, v) + (1.0 - alpha) * bb.vertex(u, v);
        const Vec3 mixn = alpha * ba.normal(u, v) + (1.0 - alpha) * bb.normal(u, v);
        CHECK((bm.vertex(u, v) - mixv).norm() < 1e-9);
        CHECK((bm.normal(u, v) - mixn).norm() < 1e-9);
        // Deviation-displaced surface points inherit the affinity.
        const double dev = 0.004;
        const Vec3 mixp = alpha * surface_point(ba, dev, u, v) + (1.0 - alpha) * surface_point(bb, dev, u, v);
        CHECK((surface_point(bm, dev, u, v) - mixp).norm() < 1e-9);
    }
}

TEST_CASE("index weight cache round-trips") {
    const ToyRig rig = make_toy_rig();
    Image<int> indx;
    Image<Vec3> weights;
    compute_index_weight_images(rig.set, 48, indx, weights);

    const std::string path = (fs::temp_directory_path() / "hf_iw_cache.bin").string();
    save_index_weight_cache(path, indx, weights);
    Image<int> indx2;
    Image<Vec3> weights2;
    REQUIRE(load_index_weight_cache(path, indx2, weights2));
    REQUIRE(indx2.width() == indx.width());
    REQUIRE(indx2.height() == indx.height());
    for (int v = 0; v < indx.height(); ++v) {
        for (int u = 0; u < indx.width(); ++u) {
            CHECK(indx2(u, v) == indx(u, v));
            CHECK((weights2(u, v) - weights(u, v)).norm() == 0.0);
        }
    }
    CHECK_FALSE(load_index_weight_cache((fs::temp_directory_path() / "hf_missing.bin").string(),
                                        indx2, weights2));
}

TEST_CASE("scale_in_place scales vertices and keeps normal directions") {
    ToyRig rig = make_toy_rig();
    const BlendshapeSet before = rig.set;
    rig.set.scale_in_place(2.0);
    for (size_t si = 0; si < before.shapes.size(); ++si) {
        for (int vid = 0; vid < before.vertex_count(); ++vid) {
            CHECK((rig.set.shapes[si].vertices[vid] - 2.0 * before.shapes[si].vertices[vid]).norm() <
                  1e-12);
            CHECK((rig.set.shapes[si].normals[vid] - before.shapes[si].normals[vid]).norm() < 1e-12);
        }
    }
}

TEST_CASE("fit_first_frame recovers scale and pose from exact landmarks") {
    const ToyRig rig = make_toy_rig();
    const Pose gt = make_pose(0.15, Vec3(0.2, 1.0, -0.1), Vec3(0.02, -0.01, 0.45));

    std::vector<Landmark> landmarks;
    for (const auto& [idx, vid] : rig.landmark_table) {
        landmarks.push_back({idx, gt * rig.set.shapes[0].vertices[vid]});
    }

    const FirstFrameFit fit = fit_first_frame(landmarks, rig.set, rig.landmark_table);
    CHECK(std::abs(fit.scale - 1.0) < 1e-3);
    CHECK((fit.pose.rotation - gt.rotation).norm() < 1e-6);
    CHECK((fit.pose.translation - gt.translation).norm() < 1e-6);
    CHECK(fit.rms_residual < 1e-9);

    // Prescaled template: the fitted scale compensates the prescale.
    ToyRig scaled = make_toy_rig();
    scaled.set.scale_in_place(1.2);
    const FirstFrameFit fit2 = fit_first_frame(landmarks, scaled.set, scaled.landmark_table);
    CHECK(std::abs(fit2.scale * 1.2 - 1.0) < 1e-2);

    // True non-unit head size at scale 1.1 model scale.
    std::vector<Landmark> big;
    for (const auto& [idx, vid] : rig.landmark_table) {
        big.push_back({idx, gt * (1.1 * rig.set.shapes[0].vertices[vid])});
    }
    const FirstFrameFit fit3 = fit_first_frame(big, rig.set, rig.landmark_table);
    CHECK(std::abs(fit3.scale - 1.1) < 1e-3);

    std::vector<Landmark> few(landmarks.begin(), landmarks.begin() + 3);
    CHECK_THROWS(fit_first_frame(few, rig.set, rig.landmark_table));
}

TEST_CASE("find_landmark_texels locates the nearest surface texel") {
    const ToyRig rig = make_toy_rig();
    const TextureImages tex = build_texture_images(rig.set, 64);
    const Image<double> dev(64, 64, 0.0);
    const Pose pose = make_pose(-0.1, Vec3(0, 1, 0), Vec3(0.0, 0.0, 0.5));

    std::vector<Landmark> landmarks;
    for (const auto& [idx, vid] : rig.landmark_table) {
        landmarks.push_back({idx, pose * rig.set.shapes[0].vertices[vid]});
    }
    const auto texels = find_landmark_texels(tex, dev, pose, landmarks);
    REQUIRE(texels.size() == landmarks.size());
    for (size_t i = 0; i < texels.size(); ++i) {
        const auto& lt = texels[i];
        CHECK(lt.index == landmarks[i].index);
        REQUIRE(tex.is_covered(lt.u, lt.v));
        const Vec3 surf = pose * tex.vertex_images[0](lt.u, lt.v);
        CHECK((surf - landmarks[i].position).norm() < 0.02);
        const Vec2 tc = rig.set.texcoords[rig.landmark_table[i].second];
        const Vec2 center((lt.u + 0.5) / 64.0, (lt.v + 0.5) / 64.0);
        CHECK((tc - center).norm() < 1.5 / 64.0);
    }
}

TEST_CASE("OBJ save and load round-trip") {
    const BlendshapeSet set = single_triangle_set();
    const std::string dir = (fs::temp_directory_path() / "hf_obj_rt").string();
    fs::create_directories(dir);

    save_obj(dir + "/tri.obj", set.shapes[0].vertices, set.faces, nullptr, &set.texcoords);
    const ObjMesh mesh = load_obj(dir + "/tri.obj");
    REQUIRE(mesh.vertices.size() == 3u);
    REQUIRE(mesh.faces.size() == 1u);
    REQUIRE(mesh.texcoords.size() == 3u);
    for (int i = 0; i < 3; ++i) {
        CHECK((mesh.vertices[i] - set.shapes[0].vertices[i]).norm() < 1e-6);
        CHECK((mesh.texcoords[i] - set.texcoords[i]).norm() < 1e-6);
    }
    CHECK(mesh.faces[0] == set.faces[0]);
}

TEST_CASE("blendshape set directory round-trip") {
    const BlendshapeSet set = single_triangle_set();
    const std::string dir = (fs::temp_directory_path() / "hf_rig_dir").string();
    fs::create_directories(dir);
    for (int si = 0; si < 2; ++si) {
        char name[64];
        std::snprintf(name, sizeof(name), "/shape_%03d.obj", si);
        save_obj(dir + name, set.shapes[si].vertices, set.faces, nullptr, &set.texcoords);
    }
    const BlendshapeSet loaded = load_blendshape_set(dir);
    REQUIRE(loaded.shapes.size() == 2u);
    REQUIRE(loaded.vertex_count() == 3);
    REQUIRE(loaded.faces == set.faces);
    for (int si = 0; si < 2; ++si) {
        for (int vid = 0; vid < 3; ++vid) {
            CHECK((loaded.shapes[si].vertices[vid] - set.shapes[si].vertices[vid]).norm() < 1e-6);
        }
        // Normals are recomputed from geometry when the OBJ has none.
        REQUIRE(loaded.shapes[si].normals.size() == 3u);
        CHECK(std::abs(loaded.shapes[si].normals[0].norm() - 1.0) < 1e-9);
    }
}

TEST_CASE("landmark vertex table round-trip") {
    const LandmarkVertexTable table = {{0, 12}, {4, 99}, {7, 3}};
    const std::string path = (fs::temp_directory_path() / "hf_lmk_table.txt").string();
    save_landmark_vertex_table(path, table);
    CHECK(load_landmark_vertex_table(path) == table);
}
