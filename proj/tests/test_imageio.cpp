#include "support.hpp"

#include "facegate/error.hpp"
#include "facegate/image.hpp"

#include <doctest.h>

#include <random>
#include <string>
#include <variant>

using namespace facegate;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

ParseErrorKind decode_error_kind(const std::string& s) {
    try {
        decode_netpbm(bytes_of(s));
    } catch (const ParseError& e) {
        return e.kind();
    }
    FAIL("decode unexpectedly succeeded");
    return ParseErrorKind::MalformedRow;
}

}  // namespace

TEST_SUITE("imageio") {

TEST_CASE("random images survive encode/decode and the file round trip") {
    std::mt19937_64 rng(20240501);
    testsupport::TempDir dir("netpbm");
    for (int i = 0; i < 100; ++i) {
        const int w = 1 + static_cast<int>(rng() % 40);
        const int h = 1 + static_cast<int>(rng() % 40);
        AnyImage img = testsupport::random_gray(rng, w, h);
        if (i % 2) {
            std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);
            for (auto& p : px) p = static_cast<std::uint8_t>(rng());
            img = RgbImage(w, h, std::move(px));
        }
        const auto bytes = encode_netpbm(img);
        const auto back = decode_netpbm(bytes);
        CHECK(back == img);
        CHECK(encode_netpbm(back) == bytes);

        const auto path = (dir / ("img" + std::to_string(i) + ".pnm")).string();
        write_netpbm_file(path, img);
        CHECK(read_netpbm_file(path) == img);
    }
}

TEST_CASE("canonical header layout") {
    const auto bytes = encode_netpbm(GrayImage(3, 2, 7));
    const std::string header(bytes.begin(), bytes.begin() + 11);
    CHECK(header == "P5\n3 2\n255\n");
    CHECK(bytes.size() == 11 + 6);
    const auto rgb = encode_netpbm(RgbImage(1, 1, Rgb{1, 2, 3}));
    CHECK(std::string(rgb.begin(), rgb.end()) == std::string("P6\n1 1\n255\n\x01\x02\x03", 14));
}

TEST_CASE("header comments and irregular whitespace are accepted") {
    const std::string text = std::string("P5 # comment\n#another\n 2\t# w\n1\n255\n") + "\x05\x09";
    const auto img = decode_netpbm(bytes_of(text));
    REQUIRE(std::holds_alternative<GrayImage>(img));
    const auto& g = std::get<GrayImage>(img);
    CHECK(g.width() == 2);
    CHECK(g.height() == 1);
    CHECK(g.at(0, 0) == 5);
    CHECK(g.at(1, 0) == 9);
}

TEST_CASE("trailing bytes after the payload are ignored") {
    const auto img = decode_netpbm(bytes_of(std::string("P5\n1 1\n255\n\x10XYZ")));
    CHECK(std::get<GrayImage>(img).at(0, 0) == 0x10);
}

TEST_CASE("decode errors are classified") {
    CHECK(decode_error_kind("P3\n1 1\n255\n1 2 3") == ParseErrorKind::BadMagic);
    CHECK(decode_error_kind("") == ParseErrorKind::BadMagic);
    CHECK(decode_error_kind("P5\n1 1\n65535\nAA") == ParseErrorKind::UnsupportedMaxval);
    CHECK(decode_error_kind("P5\n1 1\n15\nA") == ParseErrorKind::UnsupportedMaxval);
    CHECK(decode_error_kind("P5\n2 2\n255\nAA") == ParseErrorKind::TruncatedPayload);
    CHECK(decode_error_kind("P6\n2 1\n255\nAAA") == ParseErrorKind::TruncatedPayload);
    CHECK(decode_error_kind("P5\n0 1\n255\n") == ParseErrorKind::MalformedHeader);
    CHECK(decode_error_kind("P5\nx 1\n255\n") == ParseErrorKind::MalformedHeader);
    CHECK(decode_error_kind("P5\n1 1\n255") == ParseErrorKind::MalformedHeader);
}

TEST_CASE("decode errors carry the byte offset") {
    try {
        decode_netpbm(bytes_of("P5\n4 4\n255\nA"));
        FAIL("expected a ParseError");
    } catch (const ParseError& e) {
        CHECK(e.kind() == ParseErrorKind::TruncatedPayload);
        CHECK(e.offset() == 12);
    }
    try {
        decode_netpbm(bytes_of("P5\n4 4\n1024\n"));
        FAIL("expected a ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset() >= 6);
        CHECK(e.offset() <= 7);
    }
}

TEST_CASE("missing file is a DataError") {
    CHECK_THROWS_AS(read_netpbm_file("/nonexistent/definitely/missing.pgm"), DataError);
}

TEST_CASE("luma uses integer BT.601 weights rounded half up") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 5000; ++i) {
        const Rgb px{static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()),
                     static_cast<std::uint8_t>(rng())};
        const double exact = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        const int expect = (299 * px[0] + 587 * px[1] + 114 * px[2] + 500) / 1000;
        CHECK(luma(px) == expect);
        CHECK(std::abs(luma(px) - exact) <= 0.5 + 1e-9);
    }
    CHECK(luma({255, 255, 255}) == 255);
    CHECK(luma({0, 0, 0}) == 0);
    // (R,G,B) = (1,1,0) is 0.886 -> 1; (0,1,1) is 0.701 -> 1; (1,0,0) is 0.299 -> 0.
    CHECK(luma({1, 1, 0}) == 1);
    CHECK(luma({0, 1, 1}) == 1);
    CHECK(luma({1, 0, 0}) == 0);
}

TEST_CASE("grayscale conversion, gray-to-rgb and round trips") {
    std::mt19937_64 rng(4);
    const auto g = testsupport::random_gray(rng, 17, 9);
    const auto rgb = gray_to_rgb(g);
    CHECK(rgb.pixel(3, 4) == Rgb{g.at(3, 4), g.at(3, 4), g.at(3, 4)});
    CHECK(to_grayscale(rgb) == g);
    CHECK(to_grayscale(AnyImage(g)) == g);
    CHECK(to_rgb(AnyImage(g)) == rgb);
}

TEST_CASE("crop copies the exact region and rejects rects outside the image") {
    RgbImage img(5, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) img.set_pixel(x, y, {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y), 9});
    const auto c = crop(img, {1, 2, 3, 2});
    CHECK(c.width() == 3);
    CHECK(c.height() == 2);
    CHECK(c.pixel(0, 0) == Rgb{1, 2, 9});
    CHECK(c.pixel(2, 1) == Rgb{3, 3, 9});
    CHECK_THROWS_AS(crop(img, {3, 0, 3, 1}), DataError);
    CHECK_THROWS_AS(crop(img, {-1, 0, 2, 2}), DataError);
    CHECK_THROWS_AS(crop(img, {0, 0, 0, 2}), DataError);
}

TEST_CASE("nearest-neighbour resize samples floor(i * in / out)") {
    std::mt19937_64 rng(5);
    std::vector<std::uint8_t> px(13 * 7 * 3);
    for (auto& p : px) p = static_cast<std::uint8_t>(rng());
    const RgbImage src(13, 7, px);
    for (auto [w, h] : {std::pair{32, 32}, std::pair{5, 3}, std::pair{13, 7}, std::pair{1, 1}}) {
        const auto out = resize_nearest(src, w, h);
        for (int j = 0; j < h; ++j)
            for (int i = 0; i < w; ++i) CHECK(out.pixel(i, j) == src.pixel(i * 13 / w, j * 7 / h));
    }
    CHECK(resize_nearest(src, 13, 7) == src);
    CHECK_THROWS_AS(resize_nearest(src, 0, 4), std::invalid_argument);
}

TEST_CASE("images must be at least 1x1 and payloads must match") {
    CHECK_THROWS_AS(GrayImage(0, 1), std::invalid_argument);
    CHECK_THROWS_AS(RgbImage(2, 2, std::vector<std::uint8_t>(11)), std::invalid_argument);
}

}
