#include "facegate/detector.hpp"

#include "facegate/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

#if defined(__x86_64__)
#include <immintrin.h>
#endif

namespace facegate {

IntegralImage::IntegralImage(const GrayImage& img)
    : width_(img.width()), height_(img.height()) {
    const std::size_t s = stride();
    sum_.assign(s * (static_cast<std::size_t>(height_) + 1), 0);
    sqsum_.assign(sum_.size(), 0);
    const auto px = img.data();
    for (int y = 0; y < height_; ++y) {
        std::int64_t row = 0;
        std::int64_t row_sq = 0;
        const std::size_t above = static_cast<std::size_t>(y) * s;
        const std::size_t here = above + s;
        for (int x = 0; x < width_; ++x) {
            const std::int64_t v = px[static_cast<std::size_t>(y) * width_ + x];
            row += v;
            row_sq += v * v;
            sum_[here + x + 1] = sum_[above + x + 1] + row;
            sqsum_[here + x + 1] = sqsum_[above + x + 1] + row_sq;
        }
    }
    sum32_.resize(sum_.size());
    std::transform(sum_.begin(), sum_.end(), sum32_.begin(),
                   [](std::int64_t v) { return static_cast<std::uint32_t>(v); });
}

std::int64_t IntegralImage::rect_sum(const Rect& r) const {
    return sum_at(r.x + r.w, r.y + r.h) - sum_at(r.x, r.y + r.h) - sum_at(r.x + r.w, r.y) + sum_at(r.x, r.y);
}

std::int64_t IntegralImage::rect_sqsum(const Rect& r) const {
    return sqsum_at(r.x + r.w, r.y + r.h) - sqsum_at(r.x, r.y + r.h) - sqsum_at(r.x + r.w, r.y) +
           sqsum_at(r.x, r.y);
}

void DetectParams::validate() const {
    if (!(scale_factor > 1.0)) throw std::invalid_argument("scaleFactor must be > 1");
    if (min_neighbors < 0) throw std::invalid_argument("minNeighbors must be >= 0");
    if (min_size.w < 0 || min_size.h < 0) throw std::invalid_argument("minSize must be non-negative");
    if (!(group_eps >= 0.0)) throw std::invalid_argument("group eps must be >= 0");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

Rect scale_feature_rect(const Rect& r, double scale, int scaled_w, int scaled_h) {
    Rect out{round_half_up(r.x * scale), round_half_up(r.y * scale), round_half_up(r.w * scale),
             round_half_up(r.h * scale)};
    // Independent rounding of origin and extent can overshoot by one pixel.
    out.w = std::max(0, std::min(out.w, scaled_w - out.x));
    out.h = std::max(0, std::min(out.h, scaled_h - out.y));
    return out;
}

ScaledCascade::ScaledCascade(const CascadeModel& model, double scale, std::size_t stride)
    : window_w_(round_half_up(model.window_w * scale)),
      window_h_(round_half_up(model.window_h * scale)),
      stride_(stride),
      area_(static_cast<double>(window_w_) * window_h_) {
    const auto s = static_cast<std::ptrdiff_t>(stride);
    for (const auto& stage : model.stages) {
        stages_.push_back({static_cast<std::uint32_t>(nodes_.size()),
                           static_cast<std::uint32_t>(stage.stumps.size()), stage.threshold});
        for (const auto& stump : stage.stumps) {
            const auto& feature = model.features.at(stump.feature);
            Node node{};
            node.threshold = stump.threshold;
            node.leaf[0] = stump.right_leaf;
            node.leaf[1] = stump.left_leaf;
            for (std::size_t i = 0; i < feature.rects.size() && i < 3; ++i) {
                const Rect r = scale_feature_rect(feature.rects[i].rect, scale, window_w_, window_h_);
                const std::ptrdiff_t p0 = r.y * s + r.x;
                const std::ptrdiff_t p2 = p0 + r.h * s;
                node.p[i][0] = p0;
                node.p[i][1] = p0 + r.w;
                node.p[i][2] = p2;
                node.p[i][3] = p2 + r.w;
                node.weight[i] = feature.rects[i].weight;
            }
            nodes_.push_back(node);
        }
    }
}

double ScaledCascade::window_std(const IntegralImage& ii, std::ptrdiff_t base) const {
    const std::uint32_t* const sum = ii.sum_table_mod32().data() + base;
    const std::int64_t* const sq = ii.sqsum_table().data() + base;
    const std::ptrdiff_t right = window_w_;
    const std::ptrdiff_t down = static_cast<std::ptrdiff_t>(window_h_) * static_cast<std::ptrdiff_t>(stride_);
    const std::uint32_t window_sum = sum[0] - sum[right] - sum[down] + sum[down + right];
    const std::int64_t window_sq = sq[0] - sq[right] - sq[down] + sq[down + right];
    const double mean = static_cast<double>(window_sum) / area_;
    const double var = static_cast<double>(window_sq) / area_ - mean * mean;
    return var > 1.0 ? std::sqrt(var) : 1.0;
}

bool ScaledCascade::accepts(const IntegralImage& ii, int x, int y) const {
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(y) * static_cast<std::ptrdiff_t>(stride_) + x;
    const std::uint32_t* const sum = ii.sum_table_mod32().data() + base;
    const double std_dev = window_std(ii, base);

    const Node* const nodes = nodes_.data();
    for (const auto& stage : stages_) {
        double stage_sum = 0.0;
        const Node* n = nodes + stage.first_node;
        const Node* const end = n + stage.node_count;
        for (; n != end; ++n) {
            double acc = 0.0;
            for (int t = 0; t < 3; ++t) {
                const auto* p = n->p[t];
                const std::uint32_t rs = sum[p[0]] - sum[p[1]] - sum[p[2]] + sum[p[3]];
                acc += n->weight[t] * static_cast<double>(rs);
            }
            const double f = acc / area_;
            stage_sum += n->leaf[f < n->threshold * std_dev];
        }
        if (stage_sum < stage.threshold) return false;
    }
    return true;
}

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))

namespace {

bool cpu_has_avx2() {
    static const bool has = __builtin_cpu_supports("avx2");
    return has;
}

}  // namespace

// Lane i evaluates the window at x + i*step. Each lane performs the scalar
// kernel's operations in the same order (no FMA), so decisions are identical.
template <bool Contiguous>
__attribute__((target("avx2"))) static int accepts4_avx2(const std::uint32_t* sum, std::ptrdiff_t step,
                                                         const void* nodes_v, std::size_t node_size,
                                                         const void* stages_v, std::size_t stage_count,
                                                         std::size_t stage_size, double area, const double std_dev[4]) {
    struct NodeView {
        std::ptrdiff_t p[3][4];
        double weight[3];
        double threshold;
        double leaf[2];
    };
    struct StageView {
        std::uint32_t first_node;
        std::uint32_t node_count;
        double threshold;
    };
    const auto* nodes = static_cast<const unsigned char*>(nodes_v);
    const auto* stages = static_cast<const unsigned char*>(stages_v);
    const __m128i lane_offsets = _mm_setr_epi32(0, static_cast<int>(step), static_cast<int>(2 * step),
                                                static_cast<int>(3 * step));
    // Lambdas do not inherit the target attribute, so the load stays inline here.
#define FACEGATE_LOAD4(p)                                                                                      \
    (Contiguous ? _mm_loadu_si128(reinterpret_cast<const __m128i*>(sum + (p)))                              \
                : _mm_i32gather_epi32(reinterpret_cast<const int*>(sum + (p)), lane_offsets, 4))

    const __m256d area_v = _mm256_set1_pd(area);
    const __m256d std_v = _mm256_loadu_pd(std_dev);
    int alive = 0xF;
    for (std::size_t s = 0; s < stage_count; ++s) {
        const auto* stage = reinterpret_cast<const StageView*>(stages + s * stage_size);
        __m256d stage_sum = _mm256_setzero_pd();
        for (std::uint32_t k = 0; k < stage->node_count; ++k) {
            const auto* n = reinterpret_cast<const NodeView*>(nodes + (stage->first_node + k) * node_size);
            __m256d acc = _mm256_setzero_pd();
            for (int t = 0; t < 3; ++t) {
                const __m128i rs = _mm_add_epi32(_mm_sub_epi32(_mm_sub_epi32(FACEGATE_LOAD4(n->p[t][0]), FACEGATE_LOAD4(n->p[t][1])),
                                                               FACEGATE_LOAD4(n->p[t][2])),
                                                 FACEGATE_LOAD4(n->p[t][3]));
                const __m256d prod = _mm256_mul_pd(_mm256_set1_pd(n->weight[t]), _mm256_cvtepi32_pd(rs));
                acc = _mm256_add_pd(acc, prod);
            }
            const __m256d f = _mm256_div_pd(acc, area_v);
            const __m256d limit = _mm256_mul_pd(_mm256_set1_pd(n->threshold), std_v);
            const __m256d below = _mm256_cmp_pd(f, limit, _CMP_LT_OQ);
            const __m256d leaf = _mm256_blendv_pd(_mm256_set1_pd(n->leaf[0]), _mm256_set1_pd(n->leaf[1]), below);
            stage_sum = _mm256_add_pd(stage_sum, leaf);
        }
        const __m256d fail = _mm256_cmp_pd(stage_sum, _mm256_set1_pd(stage->threshold), _CMP_LT_OQ);
        alive &= ~_mm256_movemask_pd(fail);
        if (alive == 0) break;
    }
#undef FACEGATE_LOAD4
    return alive;
}

bool ScaledCascade::accepts4(const IntegralImage& ii, int x, int y, int step, bool out[4]) const {
    // Lane arithmetic is signed 32-bit; every rect sum must stay below 2^31.
    constexpr long long kMaxPixels = 2147483647LL / 255;
    if (!cpu_has_avx2() || static_cast<long long>(ii.width()) * ii.height() > kMaxPixels) return false;

    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(y) * static_cast<std::ptrdiff_t>(stride_) + x;
    double std_dev[4];
    for (int i = 0; i < 4; ++i) std_dev[i] = window_std(ii, base + static_cast<std::ptrdiff_t>(i) * step);

    const std::uint32_t* sum = ii.sum_table_mod32().data() + base;
    const int alive = step == 1
                          ? accepts4_avx2<true>(sum, step, nodes_.data(), sizeof(Node), stages_.data(), stages_.size(),
                                                sizeof(StageRange), area_, std_dev)
                          : accepts4_avx2<false>(sum, step, nodes_.data(), sizeof(Node), stages_.data(),
                                                 stages_.size(), sizeof(StageRange), area_, std_dev);
    for (int i = 0; i < 4; ++i) out[i] = (alive >> i) & 1;
    return true;
}

#else

bool ScaledCascade::accepts4(const IntegralImage&, int, int, int, bool[4]) const { return false; }

#endif

bool eval_window(const CascadeModel& model, const IntegralImage& ii, int x, int y, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("scale must be positive");
    const ScaledCascade sc(model, scale, ii.stride());
    if (!Rect{x, y, sc.window_w(), sc.window_h()}.fits_in(ii.width(), ii.height())) {
        throw DataError("window " + std::to_string(sc.window_w()) + "x" + std::to_string(sc.window_h()) + " at (" +
                        std::to_string(x) + "," + std::to_string(y) + ") does not fit the image");
    }
    return sc.accepts(ii, x, y);
}

std::vector<double> scan_scales(const CascadeModel& model, int img_w, int img_h, const DetectParams& params) {
    params.validate();
    const double s0 = std::max({1.0, static_cast<double>(params.min_size.w) / model.window_w,
                                static_cast<double>(params.min_size.h) / model.window_h});
    std::vector<double> scales;
    for (int k = 0;; ++k) {
        const double s = s0 * std::pow(params.scale_factor, k);
        if (round_half_up(model.window_w * s) > img_w || round_half_up(model.window_h * s) > img_h) break;
        scales.push_back(s);
    }
    return scales;
}

namespace {

std::vector<Rect> scan_one_scale(const CascadeModel& model, const IntegralImage& ii, double scale, bool simd) {
    std::vector<Rect> out;
    const ScaledCascade sc(model, scale, ii.stride());
    const int step = std::max(1, round_half_up(scale));
    const int w = sc.window_w();
    const int h = sc.window_h();
    for (int y = 0; y + h <= ii.height(); y += step) {
        int x = 0;
        if (simd) {
            bool hits[4];
            for (; x + 3 * step + w <= ii.width(); x += 4 * step) {
                if (!sc.accepts4(ii, x, y, step, hits)) {
                    simd = false;
                    break;
                }
                for (int i = 0; i < 4; ++i) {
                    if (hits[i]) out.push_back({x + i * step, y, w, h});
                }
            }
        }
        for (; x + w <= ii.width(); x += step) {
            if (sc.accepts(ii, x, y)) out.push_back({x, y, w, h});
        }
    }
    return out;
}

}  // namespace

std::vector<Rect> scan(const CascadeModel& model, const IntegralImage& ii, const DetectParams& params) {
    const auto scales = scan_scales(model, ii.width(), ii.height(), params);
    std::vector<std::vector<Rect>> per_scale(scales.size());

    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(params.threads), scales.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < scales.size(); ++i) per_scale[i] = scan_one_scale(model, ii, scales[i], params.allow_simd);
    } else {
        // Strided assignment balances the cheap large scales against the
        // expensive small ones; results land in per-scale slots.
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < scales.size(); i += workers) {
                    per_scale[i] = scan_one_scale(model, ii, scales[i], params.allow_simd);
                }
            });
        }
    }

    std::vector<Rect> out;
    for (auto& v : per_scale) out.insert(out.end(), v.begin(), v.end());
    return out;
}

std::vector<Rect> scan(const CascadeModel& model, const GrayImage& img, const DetectParams& params) {
    return scan(model, IntegralImage(img), params);
}

bool similar_rects(const Rect& a, const Rect& b, double eps) {
    const double delta = eps * 0.5 * (std::min(a.w, b.w) + std::min(a.h, b.h));
    return std::abs(a.x - b.x) <= delta && std::abs(a.y - b.y) <= delta &&
           std::abs((a.x + a.w) - (b.x + b.w)) <= delta && std::abs((a.y + a.h) - (b.y + b.h)) <= delta;
}

namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t i) {
        while (parent_[i] != i) {
            parent_[i] = parent_[parent_[i]];
            i = parent_[i];
        }
        return i;
    }

    // The smaller index becomes the root so roots are first members.
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent_[b] = a;
    }

private:
    std::vector<std::size_t> parent_;
};

int rounded_mean(long long sum, long long n) {
    // floor(sum / n + 1/2); integer division truncates, so adjust for negatives.
    const long long num = 2 * sum + n;
    const long long den = 2 * n;
    long long q = num / den;
    if (num % den != 0 && num < 0) --q;
    return static_cast<int>(q);
}

}  // namespace

std::vector<Detection> group_rects(std::span<const Rect> candidates, int min_neighbors, double eps) {
    std::vector<Detection> out;
    if (min_neighbors <= 0) {
        out.reserve(candidates.size());
        for (const auto& r : candidates) out.push_back({r, 1});
        return out;
    }

    const std::size_t n = candidates.size();
    DisjointSets sets(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (similar_rects(candidates[i], candidates[j], eps)) sets.unite(i, j);
        }
    }

    struct Acc {
        long long x = 0, y = 0, w = 0, h = 0, count = 0;
    };
    std::vector<Acc> acc(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& a = acc[sets.find(i)];
        a.x += candidates[i].x;
        a.y += candidates[i].y;
        a.w += candidates[i].w;
        a.h += candidates[i].h;
        ++a.count;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = acc[i];
        if (a.count == 0 || a.count < min_neighbors) continue;
        out.push_back({Rect{rounded_mean(a.x, a.count), rounded_mean(a.y, a.count), rounded_mean(a.w, a.count),
                            rounded_mean(a.h, a.count)},
                       static_cast<int>(a.count)});
    }
    return out;
}

void sort_detections(std::vector<Detection>& dets) {
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        if (a.rect.area() != b.rect.area()) return a.rect.area() > b.rect.area();
        if (a.rect.y != b.rect.y) return a.rect.y < b.rect.y;
        if (a.rect.x != b.rect.x) return a.rect.x < b.rect.x;
        return a.rect.w < b.rect.w;
    });
}

std::vector<Detection> detect_multiscale(const CascadeModel& model, const IntegralImage& ii,
                                         const DetectParams& params) {
    const auto candidates = scan(model, ii, params);
    auto dets = group_rects(candidates, params.min_neighbors, params.group_eps);
    sort_detections(dets);
    return dets;
}

std::vector<Detection> detect_multiscale(const CascadeModel& model, const GrayImage& img,
                                         const DetectParams& params) {
    return detect_multiscale(model, IntegralImage(img), params);
}

}  // namespace facegate
