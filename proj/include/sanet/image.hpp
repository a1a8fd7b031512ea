#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sanet {

struct SrgbSpace {};
struct LabSpace {};

// H x W x 3 interleaved storage, row-major, channel fastest.
// The Space tag keeps sRGB and L*a*b* buffers from being mixed up.
template <class Space>
struct Image3 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> data;

    Image3() = default;
    Image3(std::size_t w, std::size_t h, double fill = 0.0)
        : width(w), height(h), data(w * h * 3, fill) {}

    std::size_t pixels() const { return width * height; }
    bool empty() const { return pixels() == 0; }

    double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * 3 + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * 3 + c]; }

    bool operator==(const Image3&) const = default;
};

using ImageRGB = Image3<SrgbSpace>;
using ImageLAB = Image3<LabSpace>;

// Binary ground-truth or predicted mask; values are exactly 0 or 1.
struct Mask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), data(w * h, fill) {}

    std::size_t pixels() const { return width * height; }

    std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += v;
        return n;
    }

    bool operator==(const Mask&) const = default;
};

using MaskGT = Mask;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require_same_size(const Mask& a, const Mask& b, const char* what) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError(std::string(what) + ": mask sizes differ (" + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height) + ")");
}

}  // namespace sanet
