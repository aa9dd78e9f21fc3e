#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace facegate {

struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    long long area() const noexcept { return static_cast<long long>(w) * h; }
    bool fits_in(int width, int height) const noexcept {
        return x >= 0 && y >= 0 && w >= 1 && h >= 1 && x + w <= width && y + h <= height;
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct Size {
    int w = 0;
    int h = 0;
    friend bool operator==(const Size&, const Size&) = default;
};

/// Row-major 8-bit luma image, at least 1x1.
class GrayImage {
public:
    GrayImage(int width, int height, std::uint8_t fill = 0);
    GrayImage(int width, int height, std::vector<std::uint8_t> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::span<const std::uint8_t> data() const noexcept { return data_; }
    std::span<std::uint8_t> data() noexcept { return data_; }

    std::uint8_t at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> data_;
};

using Rgb = std::array<std::uint8_t, 3>;

/// Row-major interleaved R,G,B image, at least 1x1.
class RgbImage {
public:
    RgbImage(int width, int height, Rgb fill = {0, 0, 0});
    RgbImage(int width, int height, std::vector<std::uint8_t> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::span<const std::uint8_t> data() const noexcept { return data_; }
    std::span<std::uint8_t> data() noexcept { return data_; }

    Rgb pixel(int x, int y) const {
        const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
        return {data_[i], data_[i + 1], data_[i + 2]};
    }
    void set_pixel(int x, int y, Rgb v) {
        const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
        data_[i] = v[0];
        data_[i + 1] = v[1];
        data_[i + 2] = v[2];
    }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> data_;
};

using AnyImage = std::variant<GrayImage, RgbImage>;

/// Decodes binary PGM (P5) or PPM (P6) with maxval 255. Comments (`#` to end
/// of line) may appear anywhere whitespace is allowed in the header.
/// Throws ParseError with the byte offset of the problem.
AnyImage decode_netpbm(std::span<const std::uint8_t> bytes);

/// Canonical encoding: "P5\n<w> <h>\n255\n" followed by the payload.
std::vector<std::uint8_t> encode_netpbm(const GrayImage& img);
std::vector<std::uint8_t> encode_netpbm(const RgbImage& img);
std::vector<std::uint8_t> encode_netpbm(const AnyImage& img);

AnyImage read_netpbm_file(const std::string& path);
void write_netpbm_file(const std::string& path, const AnyImage& img);

/// Reads a P5 or P6 file and returns it as RGB (gray replicated).
RgbImage read_rgb_file(const std::string& path);

/// BT.601 luma, round half up: (299 R + 587 G + 114 B + 500) / 1000.
GrayImage to_grayscale(const RgbImage& img);
std::uint8_t luma(Rgb px) noexcept;

GrayImage to_grayscale(const AnyImage& img);
RgbImage to_rgb(const AnyImage& img);

RgbImage gray_to_rgb(const GrayImage& img);

/// Throws DataError when `r` does not lie inside the image.
RgbImage crop(const RgbImage& img, const Rect& r);

/// Nearest neighbour: output (i, j) samples input (i*inW/w, j*inH/h), floored.
RgbImage resize_nearest(const RgbImage& img, int w, int h);

}  // namespace facegate
