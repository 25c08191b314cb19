#include "headfusion/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace headfusion {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

void open_read(PngReader& r, std::FILE* f, const std::string& path) {
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw std::runtime_error("png: create_read_struct failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw std::runtime_error("png: create_info_struct failed");
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png: failed to read " + path);
    png_init_io(r.png, f);
    png_read_info(r.png, r.info);
}

}  // namespace

Image<double> read_depth_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open depth file: " + path);

    PngReader r;
    open_read(r, f.get(), path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png: failed to read " + path);

    const int w = static_cast<int>(png_get_image_width(r.png, r.info));
    const int h = static_cast<int>(png_get_image_height(r.png, r.info));
    if (png_get_bit_depth(r.png, r.info) != 16 ||
        png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY) {
        throw std::runtime_error("depth file must be 16-bit grayscale PNG: " + path);
    }
    png_set_swap(r.png);  // PNG is big-endian on disk

    std::vector<std::uint16_t> row(static_cast<size_t>(w));
    Image<double> depth(w, h, 0.0);
    for (int y = 0; y < h; ++y) {
        png_read_row(r.png, reinterpret_cast<png_bytep>(row.data()), nullptr);
        for (int x = 0; x < w; ++x) depth(x, y) = row[x] * 1e-3;
    }
    return depth;
}

void write_depth_png(const std::string& path, const Image<double>& depth_m) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write depth file: " + path);

    PngWriter wt;
    wt.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wt.png) throw std::runtime_error("png: create_write_struct failed");
    wt.info = png_create_info_struct(wt.png);
    if (!wt.info) throw std::runtime_error("png: create_info_struct failed");
    if (setjmp(png_jmpbuf(wt.png))) throw std::runtime_error("png: failed to write " + path);

    const int w = depth_m.width();
    const int h = depth_m.height();
    png_init_io(wt.png, f.get());
    png_set_IHDR(wt.png, wt.info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wt.png, wt.info);
    png_set_swap(wt.png);

    std::vector<std::uint16_t> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double mm = depth_m(x, y) * 1e3;
            row[x] = static_cast<std::uint16_t>(std::clamp(std::lround(mm), 0L, 65535L));
        }
        png_write_row(wt.png, reinterpret_cast<png_bytep>(row.data()));
    }
    png_write_end(wt.png, nullptr);
}

Image<Rgb8> read_color_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open color file: " + path);

    PngReader r;
    open_read(r, f.get(), path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png: failed to read " + path);

    // Normalize any input layout to 8-bit RGB.
    png_set_expand(r.png);
    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_set_gray_to_rgb(r.png);
    png_read_update_info(r.png, r.info);

    const int w = static_cast<int>(png_get_image_width(r.png, r.info));
    const int h = static_cast<int>(png_get_image_height(r.png, r.info));
    if (png_get_rowbytes(r.png, r.info) != static_cast<size_t>(w) * 3) {
        throw std::runtime_error("unexpected color layout in " + path);
    }

    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    Image<Rgb8> color(w, h);
    for (int y = 0; y < h; ++y) {
        png_read_row(r.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            color(x, y) = {row[3 * x], row[3 * x + 1], row[3 * x + 2]};
        }
    }
    return color;
}

void write_color_png(const std::string& path, const Image<Rgb8>& color) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write color file: " + path);

    PngWriter wt;
    wt.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wt.png) throw std::runtime_error("png: create_write_struct failed");
    wt.info = png_create_info_struct(wt.png);
    if (!wt.info) throw std::runtime_error("png: create_info_struct failed");
    if (setjmp(png_jmpbuf(wt.png))) throw std::runtime_error("png: failed to write " + path);

    const int w = color.width();
    const int h = color.height();
    png_init_io(wt.png, f.get());
    png_set_IHDR(wt.png, wt.info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wt.png, wt.info);

    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Rgb8& c = color(x, y);
            row[3 * x] = c.r;
            row[3 * x + 1] = c.g;
            row[3 * x + 2] = c.b;
        }
        png_write_row(wt.png, row.data());
    }
    png_write_end(wt.png, nullptr);
}

void write_gray_png(const std::string& path, const Image<unsigned char>& gray) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write file: " + path);

    PngWriter wt;
    wt.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wt.png) throw std::runtime_error("png: create_write_struct failed");
    wt.info = png_create_info_struct(wt.png);
    if (!wt.info) throw std::runtime_error("png: create_info_struct failed");
    if (setjmp(png_jmpbuf(wt.png))) throw std::runtime_error("png: failed to write " + path);

    png_init_io(wt.png, f.get());
    png_set_IHDR(wt.png, wt.info, gray.width(), gray.height(), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wt.png, wt.info);
    for (int y = 0; y < gray.height(); ++y) {
        png_write_row(wt.png, const_cast<png_bytep>(gray.data() + static_cast<size_t>(y) * gray.width()));
    }
    png_write_end(wt.png, nullptr);
}

}  // namespace headfusion
