#include "headfusion/mesh.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace headfusion {

std::vector<Vec3> compute_vertex_normals(const std::vector<Vec3>& vertices,
                                         const std::vector<std::array<int, 3>>& faces) {
    std::vector<Vec3> normals(vertices.size(), Vec3::Zero());
    for (const auto& f : faces) {
        const Vec3& a = vertices[f[0]];
        const Vec3& b = vertices[f[1]];
        const Vec3& c = vertices[f[2]];
        const Vec3 fn = (b - a).cross(c - a);  // length = 2 * area
        normals[f[0]] += fn;
        normals[f[1]] += fn;
        normals[f[2]] += fn;
    }
    for (auto& n : normals) {
        const double len = n.norm();
        if (len > 1e-12) n /= len;
    }
    return normals;
}

namespace {

// Parses one face corner "v", "v/vt", "v/vt/vn" or "v//vn" (1-based indices).
void parse_corner(const std::string& token, int& vi, int& ti, int& ni) {
    vi = ti = ni = 0;
    const auto s1 = token.find('/');
    if (s1 == std::string::npos) {
        vi = std::stoi(token);
        return;
    }
    vi = std::stoi(token.substr(0, s1));
    const auto s2 = token.find('/', s1 + 1);
    if (s2 == std::string::npos) {
        ti = std::stoi(token.substr(s1 + 1));
        return;
    }
    if (s2 > s1 + 1) ti = std::stoi(token.substr(s1 + 1, s2 - s1 - 1));
    if (s2 + 1 < token.size()) ni = std::stoi(token.substr(s2 + 1));
}

}  // namespace

ObjMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open OBJ: " + path);

    ObjMesh mesh;
    std::vector<Vec2> vt_pool;
    std::vector<Vec3> vn_pool;
    std::vector<int> vertex_vt;  // per-vertex resolved vt index, 0 = unset
    std::vector<int> vertex_vn;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3 p;
            ss >> p.x() >> p.y() >> p.z();
            mesh.vertices.push_back(p);
        } else if (tag == "vt") {
            Vec2 t;
            ss >> t.x() >> t.y();
            vt_pool.push_back(t);
        } else if (tag == "vn") {
            Vec3 n;
            ss >> n.x() >> n.y() >> n.z();
            vn_pool.push_back(n);
        } else if (tag == "f") {
            vertex_vt.resize(mesh.vertices.size(), 0);
            vertex_vn.resize(mesh.vertices.size(), 0);
            std::array<int, 3> face{};
            std::string token;
            int corner = 0;
            while (ss >> token) {
                if (corner >= 3) {
                    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                             ": only triangle faces are supported");
                }
                int vi, ti, ni;
                parse_corner(token, vi, ti, ni);
                if (vi <= 0 || vi > static_cast<int>(mesh.vertices.size())) {
                    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                             ": vertex index out of range");
                }
                face[corner] = vi - 1;
                if (ti > 0) {
                    if (ti > static_cast<int>(vt_pool.size())) {
                        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                                 ": texcoord index out of range");
                    }
                    int& slot = vertex_vt[vi - 1];
                    if (slot == 0) {
                        slot = ti;
                    } else if (slot != ti &&
                               (vt_pool[slot - 1] - vt_pool[ti - 1]).norm() > 1e-6) {
                        throw std::runtime_error(
                            path + ": vertex " + std::to_string(vi) +
                            " has conflicting texture coordinates; per-vertex UVs required");
                    }
                }
                if (ni > 0 && ni <= static_cast<int>(vn_pool.size())) vertex_vn[vi - 1] = ni;
                ++corner;
            }
            if (corner != 3) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": face with fewer than 3 corners");
            }
            mesh.faces.push_back(face);
        }
    }

    vertex_vt.resize(mesh.vertices.size(), 0);
    vertex_vn.resize(mesh.vertices.size(), 0);

    mesh.texcoords.resize(mesh.vertices.size(), Vec2::Zero());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        if (vertex_vt[i] == 0) {
            throw std::runtime_error(path + ": vertex " + std::to_string(i + 1) +
                                     " has no texture coordinate (vt required)");
        }
        mesh.texcoords[i] = vt_pool[vertex_vt[i] - 1];
    }

    if (!vn_pool.empty()) {
        mesh.normals.resize(mesh.vertices.size(), Vec3::Zero());
        for (size_t i = 0; i < mesh.vertices.size(); ++i) {
            if (vertex_vn[i] > 0) mesh.normals[i] = vn_pool[vertex_vn[i] - 1].normalized();
        }
    }
    return mesh;
}

void save_obj(const std::string& path, const std::vector<Vec3>& vertices,
              const std::vector<std::array<int, 3>>& faces, const std::vector<Rgb8>* colors,
              const std::vector<Vec2>* texcoords) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write OBJ: " + path);
    out.precision(9);
    for (size_t i = 0; i < vertices.size(); ++i) {
        const Vec3& v = vertices[i];
        out << "v " << v.x() << " " << v.y() << " " << v.z();
        if (colors && i < colors->size()) {
            const Rgb8& c = (*colors)[i];
            out << " " << c.r / 255.0 << " " << c.g / 255.0 << " " << c.b / 255.0;
        }
        out << "\n";
    }
    if (texcoords) {
        for (const Vec2& t : *texcoords) out << "vt " << t.x() << " " << t.y() << "\n";
    }
    for (const auto& f : faces) {
        if (texcoords) {
            out << "f " << f[0] + 1 << "/" << f[0] + 1 << " " << f[1] + 1 << "/" << f[1] + 1
                << " " << f[2] + 1 << "/" << f[2] + 1 << "\n";
        } else {
            out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
        }
    }
}

}  // namespace headfusion
