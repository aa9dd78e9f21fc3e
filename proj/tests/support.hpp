// Shared helpers for the test binaries: fixture locations, random inputs and
// the brute-force reference implementations the engine is checked against.
// The reference code here deliberately avoids the engine's own helpers.
#pragma once

#include "facegate/cascade.hpp"
#include "facegate/detector.hpp"
#include "facegate/image.hpp"
#include "../tools/fixture_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testsupport {

inline std::string model_path(const std::string& variant = "default") {
    return std::string(FACEGATE_MODEL_DIR) + "/haarcascade_frontalface_" + variant + ".xml";
}
inline std::string fixture_path(const std::string& name) { return std::string(FACEGATE_DATA_DIR) + "/fixtures/" + name; }
inline std::string corpus_dir() { return std::string(FACEGATE_DATA_DIR) + "/corpus"; }

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("facegate-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline facegate::GrayImage random_gray(std::mt19937_64& rng, int w, int h) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
    for (auto& p : px) p = static_cast<std::uint8_t>(rng() & 0xFF);
    return facegate::GrayImage(w, h, std::move(px));
}

/// Smooth blobs on a gradient; more cascade-friendly than white noise.
inline facegate::GrayImage blob_image(std::mt19937& rng, int w, int h, int blobs, double noise) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    struct Blob {
        double x, y, r, a;
    };
    std::vector<Blob> bs;
    for (int i = 0; i < blobs; ++i) {
        bs.push_back({u(rng) * w, u(rng) * h, 4 + u(rng) * (std::min(w, h) / 4.0), (u(rng) - 0.5) * 160});
    }
    facegate::GrayImage img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double v = 100 + 60.0 * x / w;
            for (const auto& b : bs) {
                const double d = ((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (b.r * b.r);
                v += b.a * std::exp(-d);
            }
            v += (u(rng) - 0.5) * 2 * noise;
            img.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return img;
}

/// The 640x480 image used for timing.
inline facegate::GrayImage perf_image() {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    struct Blob {
        double x, y, r, a;
    };
    std::vector<Blob> bs;
    for (int i = 0; i < 40; ++i) bs.push_back({u(rng) * 640, u(rng) * 480, 10 + u(rng) * 80, (u(rng) - 0.5) * 120});
    facegate::GrayImage img(640, 480);
    for (int y = 0; y < 480; ++y) {
        for (int x = 0; x < 640; ++x) {
            double v = 100 + 60.0 * x / 640;
            for (const auto& b : bs) {
                const double d = ((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (b.r * b.r);
                v += b.a * std::exp(-d);
            }
            v += (u(rng) - 0.5) * 20;
            img.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Reference implementations

inline std::int64_t naive_sum(const facegate::GrayImage& img, int x, int y, int w, int h) {
    std::int64_t s = 0;
    for (int j = y; j < y + h; ++j)
        for (int i = x; i < x + w; ++i) s += img.at(i, j);
    return s;
}

/// Plain 2-D prefix sums, rebuilt from scratch (row-then-column passes).
struct PrefixSums {
    int w, h;
    std::vector<std::int64_t> s, sq;

    explicit PrefixSums(const facegate::GrayImage& img) : w(img.width()), h(img.height()) {
        s.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0);
        sq = s;
        for (int y = 1; y <= h; ++y) {
            for (int x = 1; x <= w; ++x) {
                const std::int64_t v = img.at(x - 1, y - 1);
                s[idx(x, y)] = v + s[idx(x - 1, y)] + s[idx(x, y - 1)] - s[idx(x - 1, y - 1)];
                sq[idx(x, y)] = v * v + sq[idx(x - 1, y)] + sq[idx(x, y - 1)] - sq[idx(x - 1, y - 1)];
            }
        }
    }
    std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (w + 1) + x; }
    std::int64_t box(const std::vector<std::int64_t>& t, int x, int y, int bw, int bh) const {
        return t[idx(x + bw, y + bh)] - t[idx(x, y + bh)] - t[idx(x + bw, y)] + t[idx(x, y)];
    }
};

inline int half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

/// Evaluates every stage of the cascade (no early exit) on the window at
/// (x, y) and scale `s`; accepts when every stage clears its threshold.
/// `depth`, when given, receives the number of leading stages that pass.
inline bool full_cascade_accepts(const facegate::CascadeModel& m, const PrefixSums& ps, int x, int y, double s,
                                 int* depth = nullptr) {
    const int ww = half_up(m.window_w * s);
    const int wh = half_up(m.window_h * s);
    const double area = static_cast<double>(ww) * wh;
    const double mean = static_cast<double>(ps.box(ps.s, x, y, ww, wh)) / area;
    const double var = static_cast<double>(ps.box(ps.sq, x, y, ww, wh)) / area - mean * mean;
    const double sd = var > 1.0 ? std::sqrt(var) : 1.0;

    bool all_pass = true;
    int passed_prefix = 0;
    for (const auto& stage : m.stages) {
        double total = 0.0;
        for (const auto& stump : stage.stumps) {
            double acc = 0.0;
            for (const auto& wr : m.features[stump.feature].rects) {
                const int rx = half_up(wr.rect.x * s);
                const int ry = half_up(wr.rect.y * s);
                const int rw = std::max(0, std::min(half_up(wr.rect.w * s), ww - rx));
                const int rh = std::max(0, std::min(half_up(wr.rect.h * s), wh - ry));
                acc += wr.weight * static_cast<double>(ps.box(ps.s, x + rx, y + ry, rw, rh));
            }
            const double f = acc / area;
            total += f < stump.threshold * sd ? stump.left_leaf : stump.right_leaf;
        }
        all_pass = all_pass && !(total < stage.threshold);
        passed_prefix += all_pass;
    }
    if (depth != nullptr) *depth = passed_prefix;
    return all_pass;
}

/// Every placement on every scale of the pyramid, checked independently.
inline std::vector<facegate::Rect> exhaustive_scan(const facegate::CascadeModel& m, const facegate::GrayImage& img,
                                                   double factor, facegate::Size min_size) {
    const PrefixSums ps(img);
    const double s0 = std::max({1.0, static_cast<double>(min_size.w) / m.window_w,
                                static_cast<double>(min_size.h) / m.window_h});
    std::vector<facegate::Rect> out;
    for (int k = 0;; ++k) {
        const double s = s0 * std::pow(factor, k);
        const int ww = half_up(m.window_w * s);
        const int wh = half_up(m.window_h * s);
        if (ww > img.width() || wh > img.height()) break;
        const int step = std::max(1, half_up(s));
        for (int y = 0; y + wh <= img.height(); ++y) {
            for (int x = 0; x + ww <= img.width(); ++x) {
                if (x % step != 0 || y % step != 0) continue;
                if (full_cascade_accepts(m, ps, x, y, s)) out.push_back({x, y, ww, wh});
            }
        }
    }
    return out;
}

inline bool close_rects(const facegate::Rect& a, const facegate::Rect& b, double eps) {
    const double d = eps * (std::min(a.w, b.w) + std::min(a.h, b.h)) / 2.0;
    auto near = [d](int p, int q) { return std::abs(p - q) <= d; };
    return near(a.x, b.x) && near(a.y, b.y) && near(a.x + a.w, b.x + b.w) && near(a.y + a.h, b.y + b.h);
}

/// Connected components of the similarity graph by breadth-first search.
inline std::vector<facegate::Detection> bfs_group(const std::vector<facegate::Rect>& rects, int min_neighbors,
                                                  double eps) {
    std::vector<facegate::Detection> out;
    if (min_neighbors <= 0) {
        for (const auto& r : rects) out.push_back({r, 1});
        return out;
    }
    std::vector<int> comp(rects.size(), -1);
    for (std::size_t start = 0; start < rects.size(); ++start) {
        if (comp[start] >= 0) continue;
        comp[start] = static_cast<int>(start);
        std::deque<std::size_t> q{start};
        std::vector<std::size_t> members;
        while (!q.empty()) {
            const auto i = q.front();
            q.pop_front();
            members.push_back(i);
            for (std::size_t j = 0; j < rects.size(); ++j) {
                if (comp[j] < 0 && close_rects(rects[i], rects[j], eps)) {
                    comp[j] = static_cast<int>(start);
                    q.push_back(j);
                }
            }
        }
        if (static_cast<int>(members.size()) < min_neighbors) continue;
        double sx = 0, sy = 0, sw = 0, sh = 0;
        for (auto i : members) {
            sx += rects[i].x;
            sy += rects[i].y;
            sw += rects[i].w;
            sh += rects[i].h;
        }
        const double n = static_cast<double>(members.size());
        out.push_back({{static_cast<int>(std::floor(sx / n + 0.5)), static_cast<int>(std::floor(sy / n + 0.5)),
                        static_cast<int>(std::floor(sw / n + 0.5)), static_cast<int>(std::floor(sh / n + 0.5))},
                       static_cast<int>(members.size())});
    }
    return out;
}

/// Random candidate sets with deliberate clusters so grouping is non-trivial.
inline std::vector<facegate::Rect> random_candidates(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> nclusters(0, 6), nmembers(1, 12), pos(0, 200), size(12, 80), jitter(-6, 6);
    std::vector<facegate::Rect> out;
    const int c = nclusters(rng);
    for (int k = 0; k < c; ++k) {
        const facegate::Rect centre{pos(rng), pos(rng), size(rng), size(rng)};
        const int n = nmembers(rng);
        for (int i = 0; i < n; ++i) {
            out.push_back({centre.x + jitter(rng), centre.y + jitter(rng), std::max(1, centre.w + jitter(rng)),
                           std::max(1, centre.h + jitter(rng))});
        }
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

struct EarlyExitStats {
    int windows = 0;
    int accepted = 0;
    int disagreements = 0;
    int deep = 0;  // windows that clear at least half of the stages
};

/// Compares the engine's per-window decision with full evaluation on
/// `count` windows: half placed at random on smooth random images, half
/// jittered around synthetic faces so that many windows get deep into the
/// cascade and some are accepted.
inline EarlyExitStats early_exit_check(const facegate::CascadeModel& m, std::uint32_t seed, int count) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    EarlyExitStats st;
    const int per_image = 50;
    for (int done = 0; done < count;) {
        const bool faces = (done / per_image) % 2 == 1;
        facegate::GrayImage img(1, 1);
        facegate::Rect face{};
        if (faces) {
            auto rgb = facegate::synth::background(128, 128, 60 + static_cast<int>(u(rng) * 80), 20, 3, rng());
            const int side = 24 + static_cast<int>(u(rng) * 40);
            face = {static_cast<int>(u(rng) * (128 - side)), static_cast<int>(u(rng) * (128 - side)), side, side};
            const int k = static_cast<int>(rng() % 6);
            facegate::synth::draw_face(rgb, face, k == 5 ? facegate::synth::Identity{} : facegate::synth::identity(k));
            img = facegate::to_grayscale(rgb);
        } else {
            img = blob_image(rng, 128, 128, 12, 8);
        }
        const facegate::IntegralImage ii(img);
        const PrefixSums ps(img);
        for (int k = 0; k < per_image && done < count; ++k, ++done) {
            double s;
            int x, y;
            if (faces) {
                s = std::max(1.0, face.w / static_cast<double>(m.window_w) * (0.8 + 0.4 * u(rng)));
                const int ww = half_up(m.window_w * s), wh = half_up(m.window_h * s);
                x = std::clamp(face.x + static_cast<int>((u(rng) - 0.5) * 0.3 * face.w), 0, 128 - ww);
                y = std::clamp(face.y + static_cast<int>((u(rng) - 0.5) * 0.3 * face.h), 0, 128 - wh);
            } else {
                s = 1.0 + u(rng) * 3.5;
                const int ww = half_up(m.window_w * s), wh = half_up(m.window_h * s);
                x = static_cast<int>(rng() % static_cast<unsigned>(128 - ww + 1));
                y = static_cast<int>(rng() % static_cast<unsigned>(128 - wh + 1));
            }
            int depth = 0;
            const bool full = full_cascade_accepts(m, ps, x, y, s, &depth);
            const bool fast = facegate::eval_window(m, ii, x, y, s);
            ++st.windows;
            st.accepted += fast;
            st.disagreements += fast != full;
            st.deep += 2 * depth >= static_cast<int>(m.stages.size());
        }
    }
    return st;
}

}  // namespace testsupport
