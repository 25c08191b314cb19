#pragma once

#include <array>
#include <string>
#include <vector>

#include "headfusion/geometry.hpp"

namespace headfusion {

/// Triangle mesh with per-vertex normals. Texture coordinates live on the
/// owning BlendshapeSet since they are shared across shapes.
struct MeshShape {
    std::vector<Vec3> vertices;
    std::vector<Vec3> normals;
};

/// Computes per-vertex normals as normalized area-weighted face normal sums.
std::vector<Vec3> compute_vertex_normals(const std::vector<Vec3>& vertices,
                                         const std::vector<std::array<int, 3>>& faces);

/// Loads a single OBJ with positions, optional normals and required texture
/// coordinates. Texture coordinates are resolved to per-vertex (the first vt
/// referenced by a face corner wins; conflicting assignments beyond 1e-6 are
/// an error).
struct ObjMesh {
    std::vector<Vec3> vertices;
    std::vector<Vec3> normals;    // empty if the file had no vn
    std::vector<Vec2> texcoords;  // per vertex
    std::vector<std::array<int, 3>> faces;
};

ObjMesh load_obj(const std::string& path);

/// Writes an OBJ with optional per-vertex colors ("v x y z r g b") and
/// optional texture coordinates.
void save_obj(const std::string& path, const std::vector<Vec3>& vertices,
              const std::vector<std::array<int, 3>>& faces,
              const std::vector<Rgb8>* colors = nullptr,
              const std::vector<Vec2>* texcoords = nullptr);

}  // namespace headfusion
