#pragma once

#include <cassert>
#include <cstddef>
#include <utility>
#include <vector>

namespace headfusion {

/// Dense row-major 2D grid. Used for depth maps, color images, texture-space
/// grids (deviation, index, weight images) and masks.
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, T fill = T{})
        : width_(width), height_(height), data_(static_cast<size_t>(width) * height, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }

    bool contains(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }

    T& operator()(int x, int y) {
        assert(contains(x, y));
        return data_[static_cast<size_t>(y) * width_ + x];
    }
    const T& operator()(int x, int y) const {
        assert(contains(x, y));
        return data_[static_cast<size_t>(y) * width_ + x];
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    size_t size() const { return data_.size(); }

    void fill(const T& value) { std::fill(data_.begin(), data_.end(), value); }

    friend bool operator==(const Image& a, const Image& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

/// 8-bit RGB color triple, components in [0,255].
struct Rgb8 {
    unsigned char r = 0, g = 0, b = 0;

    friend bool operator==(const Rgb8& a, const Rgb8& b) {
        return a.r == b.r && a.g == b.g && a.b == b.b;
    }
};

}  // namespace headfusion
