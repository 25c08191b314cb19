#include "headfusion/sequence.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace headfusion {

std::string frame_path(const std::string& dir, const std::string& kind, int frame,
                       const std::string& ext) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d", frame);
    return dir + "/" + kind + "/" + name + ext;
}

int count_sequence_frames(const std::string& dir) {
    int n = 0;
    while (std::filesystem::exists(frame_path(dir, "depth", n, ".png"))) ++n;
    return n;
}

std::vector<Landmark> read_landmarks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open landmark file: " + path);
    std::vector<Landmark> landmarks;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Landmark lm;
        if (!(ss >> lm.index >> lm.position.x() >> lm.position.y() >> lm.position.z())) {
            throw std::runtime_error("malformed landmark line: " + line);
        }
        landmarks.push_back(lm);
    }
    return landmarks;
}

void write_landmarks(const std::string& path, const std::vector<Landmark>& landmarks) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write landmark file: " + path);
    out.precision(9);
    for (const Landmark& lm : landmarks) {
        out << lm.index << ' ' << lm.position.x() << ' ' << lm.position.y() << ' '
            << lm.position.z() << '\n';
    }
}

CameraIntrinsics read_intrinsics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open intrinsics file: " + path);
    CameraIntrinsics k;
    if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height) || !k.valid()) {
        throw std::runtime_error("malformed intrinsics file: " + path);
    }
    return k;
}

void write_intrinsics(const std::string& path, const CameraIntrinsics& intrinsics) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write intrinsics file: " + path);
    out.precision(9);
    out << intrinsics.fx << ' ' << intrinsics.fy << ' ' << intrinsics.cx << ' ' << intrinsics.cy
        << ' ' << intrinsics.width << ' ' << intrinsics.height << '\n';
}

namespace {

template <typename T>
void save_square_grid(const std::string& path, const Image<T>& grid) {
    if (grid.width() != grid.height()) throw std::runtime_error("grid must be square: " + path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write grid file: " + path);
    const std::int32_t side = grid.width();
    out.write(reinterpret_cast<const char*>(&side), sizeof(side));
    out.write(reinterpret_cast<const char*>(grid.data()),
              static_cast<std::streamsize>(grid.size() * sizeof(T)));
}

template <typename T>
Image<T> load_square_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open grid file: " + path);
    std::int32_t side = 0;
    in.read(reinterpret_cast<char*>(&side), sizeof(side));
    if (!in || side < 1 || side > 1 << 14) {
        throw std::runtime_error("malformed grid file: " + path);
    }
    Image<T> grid(side, side);
    in.read(reinterpret_cast<char*>(grid.data()),
            static_cast<std::streamsize>(grid.size() * sizeof(T)));
    if (!in) throw std::runtime_error("truncated grid file: " + path);
    return grid;
}

}  // namespace

void save_dev_grid(const std::string& path, const Image<double>& grid) {
    Image<float> g(grid.width(), grid.height());
    for (size_t i = 0; i < grid.size(); ++i) g.data()[i] = static_cast<float>(grid.data()[i]);
    save_square_grid(path, g);
}

Image<double> load_dev_grid(const std::string& path) {
    const Image<float> g = load_square_grid<float>(path);
    Image<double> grid(g.width(), g.height());
    for (size_t i = 0; i < g.size(); ++i) grid.data()[i] = g.data()[i];
    return grid;
}

void save_count_grid(const std::string& path, const Image<std::uint32_t>& grid) {
    static_assert(sizeof(std::uint32_t) == 4);
    save_square_grid(path, grid);
}

Image<std::uint32_t> load_count_grid(const std::string& path) {
    return load_square_grid<std::uint32_t>(path);
}

}  // namespace headfusion
