#include "headfusion/blendshape.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace headfusion {

void BlendshapeSet::scale_in_place(double s) {
    for (auto& shape : shapes) {
        for (auto& v : shape.vertices) v *= s;
    }
}

LandmarkVertexTable load_landmark_vertex_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open landmark table: " + path);
    LandmarkVertexTable table;
    int index, vertex;
    while (in >> index >> vertex) table.emplace_back(index, vertex);
    return table;
}

void save_landmark_vertex_table(const std::string& path, const LandmarkVertexTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write landmark table: " + path);
    for (const auto& [index, vertex] : table) out << index << " " << vertex << "\n";
}

BlendshapeSet load_blendshape_set(const std::string& dir) {
    BlendshapeSet set;
    for (int i = 0;; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "shape_%03d.obj", i);
        const std::filesystem::path path = std::filesystem::path(dir) / name;
        if (!std::filesystem::exists(path)) break;
        ObjMesh obj = load_obj(path.string());

        MeshShape shape;
        shape.vertices = std::move(obj.vertices);
        shape.normals = obj.normals.empty()
                            ? compute_vertex_normals(shape.vertices, obj.faces)
                            : std::move(obj.normals);
        if (set.shapes.empty()) {
            set.faces = std::move(obj.faces);
            set.texcoords = std::move(obj.texcoords);
        } else {
            if (shape.vertices.size() != set.shapes[0].vertices.size() ||
                obj.faces != set.faces) {
                throw std::runtime_error("blendshape " + path.string() +
                                         ": topology differs from shape_000");
            }
            for (size_t v = 0; v < obj.texcoords.size(); ++v) {
                if ((obj.texcoords[v] - set.texcoords[v]).norm() > 1e-6) {
                    throw std::runtime_error("blendshape " + path.string() +
                                             ": texture coordinates differ from shape_000");
                }
            }
        }
        set.shapes.push_back(std::move(shape));
    }
    if (set.shapes.size() < 2) {
        throw std::runtime_error("blendshape directory " + dir +
                                 ": need shape_000.obj plus at least one expression");
    }
    return set;
}

namespace {

// 2D low-discrepancy sequence (plastic constant) for bump placement.
Vec2 plastic_point(int i) {
    constexpr double a1 = 0.7548776662466927;
    constexpr double a2 = 0.5698402909980532;
    const double u = std::fmod(0.5 + (i + 1) * a1, 1.0);
    const double v = std::fmod(0.5 + (i + 1) * a2, 1.0);
    return {u, v};
}

}  // namespace

ToyRig make_toy_rig(const ToyRigParams& params) {
    const int g = params.grid;
    if (g < 4) throw std::runtime_error("toy rig grid must be at least 4");
    const double aperture = params.aperture_deg * M_PI / 180.0;

    ToyRig rig;
    BlendshapeSet& set = rig.set;

    set.texcoords.reserve(static_cast<size_t>(g) * g);
    std::vector<Vec3> directions(static_cast<size_t>(g) * g);
    for (int j = 0; j < g; ++j) {
        for (int i = 0; i < g; ++i) {
            const double u = static_cast<double>(i) / (g - 1);
            const double v = static_cast<double>(j) / (g - 1);
            set.texcoords.emplace_back(u, v);
            const double alpha = (u - 0.5) * aperture;
            const double beta = (v - 0.5) * aperture;
            directions[static_cast<size_t>(j) * g + i] =
                Vec3(std::sin(alpha) * std::cos(beta), std::sin(beta),
                     -std::cos(alpha) * std::cos(beta));
        }
    }

    // Grid quads split so that face normals point outward (along +direction).
    for (int j = 0; j + 1 < g; ++j) {
        for (int i = 0; i + 1 < g; ++i) {
            const int a = j * g + i;
            const int b = j * g + i + 1;
            const int c = (j + 1) * g + i;
            const int d = (j + 1) * g + i + 1;
            set.faces.push_back({a, c, b});
            set.faces.push_back({b, c, d});
        }
    }

    std::vector<Vec2> bump_centers(params.n);
    for (int e = 0; e < params.n; ++e) {
        const Vec2 p = plastic_point(e);
        bump_centers[e] = Vec2(0.18 + 0.64 * p.x(), 0.18 + 0.64 * p.y());
    }

    // Static facial relief shared by every shape: nose, brow and asymmetric
    // cheeks break the spherical symmetry of the patch so that rigid tracking
    // observes all six pose degrees of freedom.
    struct Feature {
        double cu, cv, amplitude, sigma;
    };
    static constexpr std::array<Feature, 4> kRelief = {{
        {0.50, 0.55, 0.022, 0.10},
        {0.50, 0.30, 0.008, 0.14},
        {0.28, 0.62, -0.007, 0.10},
        {0.72, 0.58, 0.005, 0.11},
    }};
    auto static_relief = [](const Vec2& uv) {
        double dr = 0.0;
        for (const Feature& f : kRelief) {
            const double d2 = (uv.x() - f.cu) * (uv.x() - f.cu) + (uv.y() - f.cv) * (uv.y() - f.cv);
            dr += f.amplitude * std::exp(-d2 / (2.0 * f.sigma * f.sigma));
        }
        return dr;
    };

    for (int shape_idx = 0; shape_idx <= params.n; ++shape_idx) {
        MeshShape shape;
        shape.vertices.resize(directions.size());
        for (int j = 0; j < g; ++j) {
            for (int i = 0; i < g; ++i) {
                const size_t vid = static_cast<size_t>(j) * g + i;
                const Vec2 uv(static_cast<double>(i) / (g - 1), static_cast<double>(j) / (g - 1));
                double r = params.radius + static_relief(uv);
                if (shape_idx > 0) {
                    const double d2 = (uv - bump_centers[shape_idx - 1]).squaredNorm();
                    r += params.bump_amplitude *
                         std::exp(-d2 / (2.0 * params.bump_sigma * params.bump_sigma));
                }
                shape.vertices[vid] = r * directions[vid];
            }
        }
        shape.normals = compute_vertex_normals(shape.vertices, set.faces);
        set.shapes.push_back(std::move(shape));
    }

    // Landmark layout loosely mimicking a sparse facial feature set.
    const std::array<Vec2, 13> fractions = {
        Vec2(0.50, 0.35), Vec2(0.35, 0.30), Vec2(0.65, 0.30), Vec2(0.25, 0.45),
        Vec2(0.75, 0.45), Vec2(0.50, 0.55), Vec2(0.40, 0.65), Vec2(0.60, 0.65),
        Vec2(0.50, 0.75), Vec2(0.30, 0.60), Vec2(0.70, 0.60), Vec2(0.20, 0.25),
        Vec2(0.80, 0.25)};
    for (size_t k = 0; k < fractions.size(); ++k) {
        const int i = static_cast<int>(std::lround(fractions[k].x() * (g - 1)));
        const int j = static_cast<int>(std::lround(fractions[k].y() * (g - 1)));
        rig.landmark_table.emplace_back(static_cast<int>(k), j * g + i);
    }
    return rig;
}

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Shared-edge tie break: of the two directed versions of an edge, exactly one
// is accepted, so a texel center on the edge lands in exactly one triangle.
bool accept_boundary_edge(const Vec2& d) {
    if (d.y() > 0.0) return true;
    if (d.y() < 0.0) return false;
    return d.x() > 0.0;
}

struct TexTriangle {
    Vec2 t0, t1, t2;   // original corner order
    double area2;      // signed, original order
    Vec2 p0, p1, p2;   // positively oriented copy
};

Vec3 barycentric(const TexTriangle& tri, const Vec2& c) {
    Vec3 w;
    w[0] = cross2(tri.t2 - tri.t1, c - tri.t1) / tri.area2;
    w[1] = cross2(tri.t0 - tri.t2, c - tri.t2) / tri.area2;
    w[2] = cross2(tri.t1 - tri.t0, c - tri.t0) / tri.area2;
    for (int k = 0; k < 3; ++k) w[k] = std::clamp(w[k], 0.0, 1.0);
    return w / w.sum();
}

}  // namespace

void compute_index_weight_images(const BlendshapeSet& set, int resolution, Image<int>& indx,
                                 Image<Vec3>& weights) {
    if (resolution < 2) throw std::runtime_error("texture resolution must be at least 2");
    const int R = resolution;
    indx = Image<int>(R, R, -1);
    weights = Image<Vec3>(R, R, Vec3::Zero());

    std::vector<TexTriangle> tris(set.faces.size());
    for (size_t f = 0; f < set.faces.size(); ++f) {
        TexTriangle& tri = tris[f];
        tri.t0 = set.texcoords[set.faces[f][0]];
        tri.t1 = set.texcoords[set.faces[f][1]];
        tri.t2 = set.texcoords[set.faces[f][2]];
        tri.area2 = cross2(tri.t1 - tri.t0, tri.t2 - tri.t0);
        if (std::abs(tri.area2) < 1e-14) {
            throw std::runtime_error("degenerate texture triangle at face " + std::to_string(f));
        }
        tri.p0 = tri.t0;
        tri.p1 = tri.area2 > 0 ? tri.t1 : tri.t2;
        tri.p2 = tri.area2 > 0 ? tri.t2 : tri.t1;
    }

    auto for_each_texel_in_bbox = [R](const TexTriangle& tri, auto&& fn) {
        const double umin = std::min({tri.t0.x(), tri.t1.x(), tri.t2.x()});
        const double umax = std::max({tri.t0.x(), tri.t1.x(), tri.t2.x()});
        const double vmin = std::min({tri.t0.y(), tri.t1.y(), tri.t2.y()});
        const double vmax = std::max({tri.t0.y(), tri.t1.y(), tri.t2.y()});
        const int u0 = std::max(0, static_cast<int>(std::floor(umin * R - 0.5)));
        const int u1 = std::min(R - 1, static_cast<int>(std::ceil(umax * R - 0.5)));
        const int v0 = std::max(0, static_cast<int>(std::floor(vmin * R - 0.5)));
        const int v1 = std::min(R - 1, static_cast<int>(std::ceil(vmax * R - 0.5)));
        for (int v = v0; v <= v1; ++v) {
            for (int u = u0; u <= u1; ++u) {
                fn(u, v, Vec2((u + 0.5) / R, (v + 0.5) / R));
            }
        }
    };

    // Strict pass: interior texels, with the directed-edge rule deciding
    // centers that fall exactly on shared edges.
    for (size_t f = 0; f < tris.size(); ++f) {
        const TexTriangle& tri = tris[f];
        for_each_texel_in_bbox(tri, [&](int u, int v, const Vec2& c) {
            if (indx(u, v) >= 0) return;
            const double e0 = cross2(tri.p1 - tri.p0, c - tri.p0);
            const double e1 = cross2(tri.p2 - tri.p1, c - tri.p1);
            const double e2 = cross2(tri.p0 - tri.p2, c - tri.p2);
            const bool in0 = e0 > 0 || (e0 == 0 && accept_boundary_edge(tri.p1 - tri.p0));
            const bool in1 = e1 > 0 || (e1 == 0 && accept_boundary_edge(tri.p2 - tri.p1));
            const bool in2 = e2 > 0 || (e2 == 0 && accept_boundary_edge(tri.p0 - tri.p2));
            if (in0 && in1 && in2) {
                indx(u, v) = static_cast<int>(f);
                weights(u, v) = barycentric(tri, c);
            }
        });
    }

    // Fallback: boundary texels of the atlas (centers on chart borders that no
    // directed edge accepted). Lowest face index wins.
    for (size_t f = 0; f < tris.size(); ++f) {
        const TexTriangle& tri = tris[f];
        for_each_texel_in_bbox(tri, [&](int u, int v, const Vec2& c) {
            if (indx(u, v) >= 0) return;
            const double e0 = cross2(tri.p1 - tri.p0, c - tri.p0);
            const double e1 = cross2(tri.p2 - tri.p1, c - tri.p1);
            const double e2 = cross2(tri.p0 - tri.p2, c - tri.p2);
            if (e0 >= 0 && e1 >= 0 && e2 >= 0) {
                indx(u, v) = static_cast<int>(f);
                weights(u, v) = barycentric(tri, c);
            }
        });
    }
}

TextureImages compute_shape_images(const BlendshapeSet& set, Image<int> indx,
                                   Image<Vec3> weights) {
    TextureImages tex;
    const int R = indx.width();
    tex.resolution = R;
    tex.indx = std::move(indx);
    tex.weights = std::move(weights);

    for (int v = 0; v < R; ++v) {
        for (int u = 0; u < R; ++u) {
            if (tex.indx(u, v) >= 0) tex.covered.emplace_back(u, v);
        }
    }

    const int n = set.num_expressions();
    tex.vertex_images.assign(n + 1, Image<Vec3>(R, R, Vec3::Zero()));
    tex.normal_images.assign(n + 1, Image<Vec3>(R, R, Vec3::Zero()));
    for (int i = 0; i <= n; ++i) {
        const MeshShape& shape = set.shapes[i];
        Image<Vec3>& vi = tex.vertex_images[i];
        Image<Vec3>& ni = tex.normal_images[i];
        for (const auto& [u, v] : tex.covered) {
            const auto& face = set.faces[tex.indx(u, v)];
            const Vec3& w = tex.weights(u, v);
            vi(u, v) = w[0] * shape.vertices[face[0]] + w[1] * shape.vertices[face[1]] +
                       w[2] * shape.vertices[face[2]];
            ni(u, v) = w[0] * shape.normals[face[0]] + w[1] * shape.normals[face[1]] +
                       w[2] * shape.normals[face[2]];
        }
    }

    tex.diff_vertex.assign(n, Image<Vec3>(R, R, Vec3::Zero()));
    tex.diff_normal.assign(n, Image<Vec3>(R, R, Vec3::Zero()));
    for (int i = 0; i < n; ++i) {
        for (const auto& [u, v] : tex.covered) {
            tex.diff_vertex[i](u, v) = tex.vertex_images[i + 1](u, v) - tex.vertex_images[0](u, v);
            tex.diff_normal[i](u, v) = tex.normal_images[i + 1](u, v) - tex.normal_images[0](u, v);
        }
    }
    return tex;
}

TextureImages build_texture_images(const BlendshapeSet& set, int resolution) {
    Image<int> indx;
    Image<Vec3> weights;
    compute_index_weight_images(set, resolution, indx, weights);
    return compute_shape_images(set, std::move(indx), std::move(weights));
}

namespace {
constexpr std::uint32_t kIndexWeightMagic = 0x48464957;  // "HFIW"
}

void save_index_weight_cache(const std::string& path, const Image<int>& indx,
                             const Image<Vec3>& weights) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write cache: " + path);
    const std::uint32_t magic = kIndexWeightMagic;
    const std::int32_t R = indx.width();
    out.write(reinterpret_cast<const char*>(&magic), 4);
    out.write(reinterpret_cast<const char*>(&R), 4);
    for (size_t i = 0; i < indx.size(); ++i) {
        const std::int32_t v = indx.data()[i];
        out.write(reinterpret_cast<const char*>(&v), 4);
    }
    for (size_t i = 0; i < weights.size(); ++i) {
        out.write(reinterpret_cast<const char*>(weights.data()[i].data()), 3 * sizeof(double));
    }
}

bool load_index_weight_cache(const std::string& path, Image<int>& indx, Image<Vec3>& weights) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::uint32_t magic = 0;
    std::int32_t R = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&R), 4);
    if (!in || magic != kIndexWeightMagic || R < 2 || R > 1 << 14) return false;
    indx = Image<int>(R, R, -1);
    weights = Image<Vec3>(R, R, Vec3::Zero());
    for (size_t i = 0; i < indx.size(); ++i) {
        std::int32_t v;
        in.read(reinterpret_cast<char*>(&v), 4);
        indx.data()[i] = v;
    }
    for (size_t i = 0; i < weights.size(); ++i) {
        in.read(reinterpret_cast<char*>(weights.data()[i].data()), 3 * sizeof(double));
    }
    return static_cast<bool>(in);
}

void blend(const TextureImages& tex, const ExpressionCoefficients& x, BlendedImages& out) {
    const int R = tex.resolution;
    const int n = tex.num_expressions();
    if (x.size() != n) throw std::runtime_error("coefficient count does not match rig");
    if (out.vertex.width() != R) {
        out.vertex = Image<Vec3>(R, R, Vec3::Zero());
        out.normal = Image<Vec3>(R, R, Vec3::Zero());
    }
    for (const auto& [u, v] : tex.covered) {
        Vec3 pv = tex.vertex_images[0](u, v);
        Vec3 pn = tex.normal_images[0](u, v);
        for (int i = 0; i < n; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            pv += xi * tex.diff_vertex[i](u, v);
            pn += xi * tex.diff_normal[i](u, v);
        }
        out.vertex(u, v) = pv;
        out.normal(u, v) = pn;
    }
}

BlendedImages blend(const TextureImages& tex, const ExpressionCoefficients& x) {
    BlendedImages out;
    blend(tex, x, out);
    return out;
}

FirstFrameFit fit_first_frame(const std::vector<Landmark>& landmarks, const BlendshapeSet& set,
                              const LandmarkVertexTable& table) {
    std::vector<Vec3> model_pts, frame_pts;
    for (const auto& [index, vertex] : table) {
        for (const Landmark& lm : landmarks) {
            if (lm.index == index) {
                model_pts.push_back(set.shapes[0].vertices[vertex]);
                frame_pts.push_back(lm.position);
                break;
            }
        }
    }
    const int m = static_cast<int>(model_pts.size());
    if (m < 4) {
        throw std::runtime_error("initialization failure: only " + std::to_string(m) +
                                 " landmarks matched (need at least 4)");
    }

    double model_dist = 0.0, frame_dist = 0.0;
    int pairs = 0;
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            model_dist += (model_pts[i] - model_pts[j]).norm();
            frame_dist += (frame_pts[i] - frame_pts[j]).norm();
            ++pairs;
        }
    }
    if (model_dist <= 0.0) throw std::runtime_error("initialization failure: degenerate landmarks");
    FirstFrameFit fit;
    fit.scale = frame_dist / model_dist;

    Vec3 model_mean = Vec3::Zero(), frame_mean = Vec3::Zero();
    for (int i = 0; i < m; ++i) {
        model_mean += fit.scale * model_pts[i];
        frame_mean += frame_pts[i];
    }
    model_mean /= m;
    frame_mean /= m;

    Mat3 cov = Mat3::Zero();
    for (int i = 0; i < m; ++i) {
        cov += (fit.scale * model_pts[i] - model_mean) * (frame_pts[i] - frame_mean).transpose();
    }
    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
    fit.pose.rotation = svd.matrixV() * d * svd.matrixU().transpose();
    fit.pose.translation = frame_mean - fit.pose.rotation * model_mean;

    double sq = 0.0;
    for (int i = 0; i < m; ++i) {
        sq += (fit.pose * (fit.scale * model_pts[i]) - frame_pts[i]).squaredNorm();
    }
    fit.rms_residual = std::sqrt(sq / m);
    if (fit.rms_residual > 0.03) {
        throw std::runtime_error("initialization failure: landmark registration residual " +
                                 std::to_string(fit.rms_residual * 100.0) + " cm exceeds 3 cm");
    }
    return fit;
}

std::vector<LandmarkTexel> find_landmark_texels(const TextureImages& tex,
                                                const Image<double>& deviation, const Pose& pose,
                                                const std::vector<Landmark>& landmarks) {
    ExpressionCoefficients zero = ExpressionCoefficients::Zero(tex.num_expressions());
    const BlendedImages neutral = blend(tex, zero);

    std::vector<LandmarkTexel> out;
    out.reserve(landmarks.size());
    for (const Landmark& lm : landmarks) {
        LandmarkTexel best;
        best.index = lm.index;
        double best_d2 = std::numeric_limits<double>::max();
        for (const auto& [u, v] : tex.covered) {
            const Vec3 p = pose * surface_point(neutral, deviation(u, v), u, v);
            const double d2 = (p - lm.position).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best.u = u;
                best.v = v;
            }
        }
        out.push_back(best);
    }
    return out;
}

}  // namespace headfusion
