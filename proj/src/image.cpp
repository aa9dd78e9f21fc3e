#include "facegate/image.hpp"

#include "facegate/error.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace facegate {

namespace {

void check_dims(int width, int height) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("image dimensions must be at least 1x1");
    }
}

bool is_space(std::uint8_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Cursor over the Netpbm header. Whitespace and comments are skipped between
// tokens; a comment runs to the end of its line.
class HeaderReader {
public:
    HeaderReader(std::span<const std::uint8_t> bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

    std::size_t pos() const { return pos_; }

    void skip_separators() {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
            } else {
                break;
            }
        }
    }

    long read_uint(const char* what) {
        const std::size_t before = pos_;
        skip_separators();
        if (pos_ == before) {
            throw ParseError(ParseErrorKind::MalformedHeader, pos_,
                             std::string("expected whitespace before ") + what);
        }
        const std::size_t start = pos_;
        long value = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000) {
                throw ParseError(ParseErrorKind::MalformedHeader, start,
                                 std::string(what) + " is too large");
            }
            ++pos_;
        }
        if (pos_ == start) {
            throw ParseError(ParseErrorKind::MalformedHeader, pos_,
                             std::string("expected decimal ") + what);
        }
        return value;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
};

std::vector<std::uint8_t> header(char kind, int w, int h) {
    const std::string s = std::string("P") + kind + "\n" + std::to_string(w) + " " +
                          std::to_string(h) + "\n255\n";
    return {s.begin(), s.end()};
}

}  // namespace

GrayImage::GrayImage(int width, int height, std::uint8_t fill) : width_(width), height_(height) {
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * height) {
        throw std::invalid_argument("gray image payload size does not match dimensions");
    }
}

RgbImage::RgbImage(int width, int height, Rgb fill) : width_(width), height_(height) {
    check_dims(width, height);
    data_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) {
        data_[i] = fill[0];
        data_[i + 1] = fill[1];
        data_[i + 2] = fill[2];
    }
}

RgbImage::RgbImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * height * 3) {
        throw std::invalid_argument("rgb image payload size does not match dimensions");
    }
}

AnyImage decode_netpbm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw ParseError(ParseErrorKind::BadMagic, 0, "expected P5 or P6");
    }
    const bool rgb = bytes[1] == '6';

    HeaderReader body(bytes, 2);
    const std::size_t width_at = body.pos();
    const long width = body.read_uint("width");
    const std::size_t height_at = body.pos();
    const long height = body.read_uint("height");
    const std::size_t maxval_at = body.pos();
    const long maxval = body.read_uint("maxval");
    if (width < 1) throw ParseError(ParseErrorKind::MalformedHeader, width_at, "width must be >= 1");
    if (height < 1) throw ParseError(ParseErrorKind::MalformedHeader, height_at, "height must be >= 1");
    std::size_t pos = body.pos();
    if (maxval != 255) {
        throw ParseError(ParseErrorKind::UnsupportedMaxval, maxval_at,
                         "maxval " + std::to_string(maxval) + " (only 255 is supported)");
    }
    if (pos >= bytes.size() || !is_space(bytes[pos])) {
        throw ParseError(ParseErrorKind::MalformedHeader, pos,
                         "expected a single whitespace byte after maxval");
    }
    ++pos;

    const std::size_t channels = rgb ? 3 : 1;
    const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
    if (bytes.size() - pos < need) {
        throw ParseError(ParseErrorKind::TruncatedPayload, bytes.size(),
                         "payload has " + std::to_string(bytes.size() - pos) + " of " +
                             std::to_string(need) + " bytes");
    }
    std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    if (rgb) return RgbImage(static_cast<int>(width), static_cast<int>(height), std::move(data));
    return GrayImage(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

std::vector<std::uint8_t> encode_netpbm(const GrayImage& img) {
    auto out = header('5', img.width(), img.height());
    out.insert(out.end(), img.data().begin(), img.data().end());
    return out;
}

std::vector<std::uint8_t> encode_netpbm(const RgbImage& img) {
    auto out = header('6', img.width(), img.height());
    out.insert(out.end(), img.data().begin(), img.data().end());
    return out;
}

std::vector<std::uint8_t> encode_netpbm(const AnyImage& img) {
    return std::visit([](const auto& i) { return encode_netpbm(i); }, img);
}

AnyImage read_netpbm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_netpbm(bytes);
}

void write_netpbm_file(const std::string& path, const AnyImage& img) {
    const auto bytes = encode_netpbm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write image '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + path + "'");
}

RgbImage read_rgb_file(const std::string& path) { return to_rgb(read_netpbm_file(path)); }

std::uint8_t luma(Rgb px) noexcept {
    const int v = (299 * px[0] + 587 * px[1] + 114 * px[2] + 500) / 1000;
    return static_cast<std::uint8_t>(v > 255 ? 255 : v);
}

GrayImage to_grayscale(const RgbImage& img) {
    GrayImage out(img.width(), img.height());
    const auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = luma({src[3 * i], src[3 * i + 1], src[3 * i + 2]});
    }
    return out;
}

GrayImage to_grayscale(const AnyImage& img) {
    if (const auto* g = std::get_if<GrayImage>(&img)) return *g;
    return to_grayscale(std::get<RgbImage>(img));
}

RgbImage to_rgb(const AnyImage& img) {
    if (const auto* c = std::get_if<RgbImage>(&img)) return *c;
    return gray_to_rgb(std::get<GrayImage>(img));
}

RgbImage gray_to_rgb(const GrayImage& img) {
    RgbImage out(img.width(), img.height());
    const auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = src[i];
    }
    return out;
}

RgbImage crop(const RgbImage& img, const Rect& r) {
    if (!r.fits_in(img.width(), img.height())) {
        throw DataError("crop rect (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                        std::to_string(r.w) + "," + std::to_string(r.h) + ") outside " +
                        std::to_string(img.width()) + "x" + std::to_string(img.height()) + " image");
    }
    RgbImage out(r.w, r.h);
    const auto src = img.data();
    auto dst = out.data();
    const std::size_t row_bytes = static_cast<std::size_t>(r.w) * 3;
    for (int y = 0; y < r.h; ++y) {
        const std::size_t from = (static_cast<std::size_t>(r.y + y) * img.width() + r.x) * 3;
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(from), row_bytes,
                    dst.begin() + static_cast<std::ptrdiff_t>(y * row_bytes));
    }
    return out;
}

RgbImage resize_nearest(const RgbImage& img, int w, int h) {
    if (w < 1 || h < 1) throw std::invalid_argument("resize target must be at least 1x1");
    RgbImage out(w, h);
    for (int j = 0; j < h; ++j) {
        const int sy = static_cast<int>(static_cast<long long>(j) * img.height() / h);
        for (int i = 0; i < w; ++i) {
            const int sx = static_cast<int>(static_cast<long long>(i) * img.width() / w);
            out.set_pixel(i, j, img.pixel(sx, sy));
        }
    }
    return out;
}

}  // namespace facegate
