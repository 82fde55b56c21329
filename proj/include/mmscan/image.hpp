#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmscan/common.hpp"

namespace mmscan {

/// 8-bit grayscale image, row-major. The pixel (x, y) convention follows
/// image coordinates: x = column, y = row, origin at the top-left corner.
class ImageU8 {
public:
    ImageU8() = default;
    ImageU8(int width, int height, std::uint8_t fill = 0)
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
        if (width <= 0 || height <= 0) throw InvalidArgument("image dimensions must be positive");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    std::uint8_t& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    bool contains(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

    std::uint8_t* data() { return data_.data(); }
    const std::uint8_t* data() const { return data_.data(); }
    const std::vector<std::uint8_t>& pixels() const { return data_; }

    /// Bilinear sample at a subpixel position, clamped to the image border.
    double sample_bilinear(double x, double y) const;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Dense double-valued map with the same addressing as ImageU8 (scratch for
/// phase maps, depth maps and similar per-pixel quantities).
class MapF64 {
public:
    MapF64() = default;
    MapF64(int width, int height, double fill = 0.0)
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
        if (width <= 0 || height <= 0) throw InvalidArgument("map dimensions must be positive");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }

    double& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    const std::vector<double>& values() const { return data_; }
    std::vector<double>& values() { return data_; }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

/// Binary PGM (P5), 8-bit, row-major.
ImageU8 read_pgm(const std::string& path);
void write_pgm(const ImageU8& img, const std::string& path);

}  // namespace mmscan
