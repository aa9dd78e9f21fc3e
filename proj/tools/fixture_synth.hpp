// Synthetic images for the fixture cascade (data/fixtures/face12.xml).
//
// A "face" is drawn on a 12 x 12 unit grid scaled to the requested square:
// bright skin, two dark eyes on rows 3-4, a dark mouth on rows 8-9. Each
// identity adds its own texture so the reference embedder can tell
// identities apart; images of one identity differ in placement, background
// and noise only.
#pragma once

#include "facegate/encoding.hpp"
#include "facegate/image.hpp"

#include <algorithm>
#include <cstdint>

namespace facegate::synth {

struct Identity {
    int skin = 190;
    int eye = 40;
    int mouth = 70;
    /// The one-unit ring around the face (hairline, ears, jaw).
    int outline = 35;
    /// Seed of the identity's skin texture; 0 draws plain skin.
    std::uint64_t texture_seed = 0;
    /// 7-bit light/dark pattern over the code segments; 0 leaves them skin.
    unsigned code = 0;
    int texture_amplitude = 0;
};

inline Identity identity(int k) {
    Identity id;
    id.skin = 175 + 8 * (k % 4);
    id.eye = 30 + 6 * (k % 3);
    id.mouth = 60 + 5 * (k % 5);
    id.texture_seed = 0x5EED0000ULL + static_cast<std::uint64_t>(k) * 7919;
    id.texture_amplitude = 45;
    // Any two of these differ in at least four segments.
    static constexpr unsigned kCodes[] = {0b0001111, 0b0110011, 0b0111100, 0b1010101, 0b1101010};
    id.code = kCodes[k % 5];
    return id;
}

inline std::uint8_t clamp8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

inline bool is_outline_cell(int ux, int uy) { return ux == 0 || ux == 11 || uy == 0 || uy == 11; }

/// Value of the face pattern at unit cell (ux, uy), before texture.
inline int face_unit(const Identity& id, int ux, int uy) {
    if (is_outline_cell(ux, uy)) return id.outline;
    if (uy >= 3 && uy < 5 && ((ux >= 2 && ux < 5) || (ux >= 7 && ux < 10))) return id.eye;
    if (uy >= 8 && uy < 10 && ux >= 4 && ux < 8) return id.mouth;
    return id.skin;
}

/// Segment of the identity code that cell (ux, uy) belongs to, or -1. The
/// segments are skin cells only the ring feature reads: beside the
/// forehead, beside the mouth and along the chin.
inline int code_segment(int ux, int uy) {
    if (is_outline_cell(ux, uy)) return -1;
    if (uy <= 2) return ux == 1 ? 0 : ux == 10 ? 1 : -1;
    if (uy >= 7 && uy <= 9) return ux <= 2 ? 2 : ux >= 9 ? 3 : -1;
    if (uy == 10) return ux <= 3 ? 4 : ux <= 7 ? 5 : 6;
    return -1;
}

/// Draws a face into `img` covering `r` (a square; side a multiple of 12
/// keeps every unit cell the same size).
inline void draw_face(RgbImage& img, const Rect& r, const Identity& id) {
    XorShift64Star tex(id.texture_seed == 0 ? 1 : id.texture_seed);
    // One texture offset per 2x2-unit block, fixed per identity.
    int block[6][6];
    for (auto& row : block) {
        for (int& v : row) {
            v = id.texture_seed == 0 ? 0
                                     : static_cast<int>(tex.next_signed_unit() * id.texture_amplitude);
        }
    }
    for (int y = 0; y < r.h; ++y) {
        for (int x = 0; x < r.w; ++x) {
            const int ux = x * 12 / r.w;
            const int uy = y * 12 / r.h;
            int v = face_unit(id, ux, uy);
            if (const int seg = code_segment(ux, uy); id.code != 0 && seg >= 0) {
                v = (id.code >> seg) & 1 ? 235 : 15;
            } else if (v == id.skin) {
                v += block[uy / 2][ux / 2];
            }
            const auto c = clamp8(v);
            img.set_pixel(r.x + x, r.y + y, {c, c, c});
        }
    }
}

/// Smooth background: horizontal gradient plus per-pixel noise.
inline RgbImage background(int w, int h, int base, int slope, int noise, std::uint64_t seed) {
    RgbImage img(w, h);
    XorShift64Star rng(seed);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int n = noise == 0 ? 0 : static_cast<int>(rng.next_signed_unit() * noise);
            const auto c = clamp8(base + slope * x / std::max(1, w - 1) + n);
            img.set_pixel(x, y, {c, c, c});
        }
    }
    return img;
}

/// Adds per-pixel noise in [-amp, amp) to every channel.
inline void add_noise(RgbImage& img, int amp, std::uint64_t seed) {
    XorShift64Star rng(seed);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            auto p = img.pixel(x, y);
            const int n = static_cast<int>(rng.next_signed_unit() * amp);
            for (auto& ch : p) ch = clamp8(ch + n);
            img.set_pixel(x, y, p);
        }
    }
}

/// Non-face clutter: random axis-aligned boxes on a gradient.
inline RgbImage clutter(int w, int h, std::uint64_t seed) {
    RgbImage img = background(w, h, 90, 60, 6, seed);
    XorShift64Star rng(seed ^ 0xC1u);
    for (int k = 0; k < 14; ++k) {
        const int bw = 4 + static_cast<int>(rng.next() % 20);
        const int bh = 4 + static_cast<int>(rng.next() % 20);
        const int bx = static_cast<int>(rng.next() % static_cast<std::uint64_t>(w - bw));
        const int by = static_cast<int>(rng.next() % static_cast<std::uint64_t>(h - bh));
        const auto c = clamp8(static_cast<int>(rng.next() % 256));
        for (int y = by; y < by + bh; ++y) {
            for (int x = bx; x < bx + bw; ++x) img.set_pixel(x, y, {c, c, c});
        }
    }
    return img;
}

}  // namespace facegate::synth
