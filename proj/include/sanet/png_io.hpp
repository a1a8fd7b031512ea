#pragma once

// Thin libpng wrappers: decode to 8- or 16-bit samples, encode 8-bit RGB and
// 8/16-bit gray. Images are quantized only here; upstream is real-valued.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sanet/image.hpp"

namespace sanet::png {

class PngError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Raster {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;  // 1 or 3 after decoding
    int depth = 8;             // 8 or 16
    std::vector<std::uint16_t> pixels;
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open(const std::filesystem::path& p, const char* mode) {
    FilePtr f(std::fopen(p.string().c_str(), mode));
    if (!f) throw PngError("cannot open " + p.string());
    return f;
}

[[noreturn]] inline void on_error(png_structp png, png_const_charp msg) {
    auto* what = static_cast<std::string*>(png_get_error_ptr(png));
    if (what) *what = msg;
    longjmp(png_jmpbuf(png), 1);
}

inline void on_warning(png_structp, png_const_charp) {}

}  // namespace detail

// Decodes any PNG to 1 or 3 channels, dropping alpha; palette and low bit
// depth gray are expanded. 16-bit files are reduced to 8 unless keep_16.
inline Raster read(const std::filesystem::path& path, bool keep_16 = false) {
    auto file = detail::open(path, "rb");
    std::uint8_t sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw PngError(path.string() + ": not a PNG file");

    std::string msg;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &msg, detail::on_error, detail::on_warning);
    if (!png) throw PngError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    Raster r;
    std::vector<std::uint8_t> bytes;
    std::vector<png_bytep> rows;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        throw PngError(path.string() + ": " + (msg.empty() ? "decode failed" : msg));
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16 && !keep_16) png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    r.width = png_get_image_width(png, info);
    r.height = png_get_image_height(png, info);
    r.channels = png_get_channels(png, info);
    r.depth = png_get_bit_depth(png, info);
    const std::size_t bytes_per = r.depth == 16 ? 2 : 1;
    bytes.resize(r.width * r.height * r.channels * bytes_per);
    rows.resize(r.height);
    for (std::size_t y = 0; y < r.height; ++y) rows[y] = bytes.data() + y * r.width * r.channels * bytes_per;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    if (r.channels != 1 && r.channels != 3) throw PngError(path.string() + ": unsupported channel layout");
    r.pixels.resize(r.width * r.height * r.channels);
    for (std::size_t i = 0; i < r.pixels.size(); ++i)
        r.pixels[i] = bytes_per == 2 ? static_cast<std::uint16_t>(bytes[2 * i] << 8 | bytes[2 * i + 1]) : bytes[i];
    return r;
}

// `samples` holds width*height*channels values, 8- or 16-bit per `depth`;
// 16-bit samples are written big-endian as PNG requires.
inline void write_raw(const std::filesystem::path& path, std::size_t width, std::size_t height, int channels,
                      int depth, const std::vector<std::uint16_t>& samples) {
    auto file = detail::open(path, "wb");
    std::string msg;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &msg, detail::on_error, detail::on_warning);
    if (!png) throw PngError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    const std::size_t bytes_per = depth == 16 ? 2 : 1;
    std::vector<std::uint8_t> buf(width * height * channels * bytes_per);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (depth == 16) {
            buf[2 * i] = static_cast<std::uint8_t>(samples[i] >> 8);
            buf[2 * i + 1] = static_cast<std::uint8_t>(samples[i] & 0xff);
        } else {
            buf[i] = static_cast<std::uint8_t>(samples[i]);
        }
    }
    std::vector<png_bytep> rows(height);
    for (std::size_t y = 0; y < height; ++y) rows[y] = buf.data() + y * width * channels * bytes_per;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        throw PngError(path.string() + ": " + (msg.empty() ? "encode failed" : msg));
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline std::uint16_t quantize(double v, double max_code) {
    const double c = std::round(std::clamp(v, 0.0, 1.0) * max_code);
    return static_cast<std::uint16_t>(c);
}

inline ImageRGB read_rgb(const std::filesystem::path& path) {
    const Raster r = read(path);
    ImageRGB img(r.width, r.height);
    for (std::size_t i = 0; i < r.width * r.height; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            img.data[3 * i + c] = r.pixels[i * r.channels + (r.channels == 3 ? c : 0)] / 255.0;
    return img;
}

// First channel of the file, binarized at value > 127.
inline Mask read_mask(const std::filesystem::path& path) {
    const Raster r = read(path);
    Mask m(r.width, r.height);
    for (std::size_t i = 0; i < r.width * r.height; ++i) m.data[i] = r.pixels[i * r.channels] > 127 ? 1 : 0;
    return m;
}

inline void write_rgb(const std::filesystem::path& path, const ImageRGB& img) {
    std::vector<std::uint16_t> s(img.data.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = quantize(img.data[i], 255.0);
    write_raw(path, img.width, img.height, 3, 8, s);
}

inline void write_mask(const std::filesystem::path& path, const Mask& m) {
    std::vector<std::uint16_t> s(m.data.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = m.data[i] ? 255 : 0;
    write_raw(path, m.width, m.height, 1, 8, s);
}

inline std::vector<double> read_gray16(const std::filesystem::path& path, std::size_t& width, std::size_t& height) {
    const Raster r = read(path, true);
    const double max_code = r.depth == 16 ? 65535.0 : 255.0;
    width = r.width;
    height = r.height;
    std::vector<double> v(r.width * r.height);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = r.pixels[i * r.channels] / max_code;
    return v;
}

// Values in [0,1] as a 16-bit grayscale PNG.
inline void write_gray16(const std::filesystem::path& path, std::size_t width, std::size_t height,
                         const std::vector<double>& values) {
    std::vector<std::uint16_t> s(values.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = quantize(values[i], 65535.0);
    write_raw(path, width, height, 1, 16, s);
}

}  // namespace sanet::png
