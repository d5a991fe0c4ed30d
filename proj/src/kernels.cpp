#include "mcflow/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <cstdlib>
#include <immintrin.h>
#include <mutex>
#include <vector>

namespace mcflow::kernels {
namespace {

int initial_threads() {
    if (const char* env = std::getenv("MCFLOW_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

int g_threads = initial_threads();

using Index = std::ptrdiff_t;

void transpose(std::span<const double> src, std::span<double> dst, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// Copies head h of a [tokens, width] matrix into a [head_dim, tokens] block.
void transpose_head(std::span<const double> src, std::span<double> dst, const AttentionDims& d, std::size_t h) {
    const std::size_t w = d.width();
    for (std::size_t t = 0; t < d.tokens; ++t)
        for (std::size_t e = 0; e < d.head_dim; ++e) dst[e * d.tokens + t] = src[t * w + h * d.head_dim + e];
}

// Eight doubles with an elementwise fused multiply-add; matches std::fma
// bitwise on every path.
struct Lane {
#if defined(__AVX512F__)
    __m512d v;
    Lane() : v(_mm512_setzero_pd()) {}
    explicit Lane(double x) : v(_mm512_set1_pd(x)) {}
    static Lane load(const double* p) { Lane l; l.v = _mm512_loadu_pd(p); return l; }
    void store(double* p) const { _mm512_storeu_pd(p, v); }
    static Lane fma(const Lane& a, const Lane& b, const Lane& c) { Lane l; l.v = _mm512_fmadd_pd(a.v, b.v, c.v); return l; }
#elif defined(__AVX2__) && defined(__FMA__)
    __m256d lo, hi;
    Lane() : lo(_mm256_setzero_pd()), hi(_mm256_setzero_pd()) {}
    explicit Lane(double x) : lo(_mm256_set1_pd(x)), hi(_mm256_set1_pd(x)) {}
    static Lane load(const double* p) { Lane l; l.lo = _mm256_loadu_pd(p); l.hi = _mm256_loadu_pd(p + 4); return l; }
    void store(double* p) const { _mm256_storeu_pd(p, lo); _mm256_storeu_pd(p + 4, hi); }
    static Lane fma(const Lane& a, const Lane& b, const Lane& c) {
        Lane l;
        l.lo = _mm256_fmadd_pd(a.lo, b.lo, c.lo);
        l.hi = _mm256_fmadd_pd(a.hi, b.hi, c.hi);
        return l;
    }
#else
    double v[8] = {};
    Lane() = default;
    explicit Lane(double x) { std::fill(v, v + 8, x); }
    static Lane load(const double* p) { Lane l; std::copy(p, p + 8, l.v); return l; }
    void store(double* p) const { std::copy(v, v + 8, p); }
    static Lane fma(const Lane& a, const Lane& b, const Lane& c) {
        Lane l;
        for (int k = 0; k < 8; ++k) l.v[k] = std::fma(a.v[k], b.v[k], c.v[k]);
        return l;
    }
#endif
};
constexpr std::size_t kLane = 8;

// exp(x) for x <= 0 by range reduction x = k ln2 + r, |r| <= ln2 / 2, and a
// degree-13 Taylor polynomial; relative error below 1e-15. Inputs below -708
// give 0. The same operation sequence runs per lane and in the scalar tail, so
// results do not depend on the position of an element in the row.
template <class T, class Ops>
T exp_nonpositive(T x) {
    constexpr double kLog2e = 1.4426950408889634;
    constexpr double kLn2Hi = 6.93147180369123816490e-01;
    constexpr double kLn2Lo = 1.90821492927058770002e-10;
    constexpr double kShift = 0x1.8p52;
    constexpr double kCoef[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
                                1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,      1.0 / 720.0,
                                1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,         0.5,
                                1.0,                1.0};
    const T xc = Ops::max(x, Ops::set(-708.0));
    T kd = Ops::fma(xc, Ops::set(kLog2e), Ops::set(kShift));
    const T scale = Ops::pow2_from_shifted(kd);
    kd = Ops::sub(kd, Ops::set(kShift));
    T r = Ops::fma(Ops::neg(kd), Ops::set(kLn2Hi), xc);
    r = Ops::fma(Ops::neg(kd), Ops::set(kLn2Lo), r);
    T p = Ops::set(kCoef[0]);
    for (std::size_t c = 1; c < std::size(kCoef); ++c) p = Ops::fma(p, r, Ops::set(kCoef[c]));
    return Ops::zero_below(Ops::mul(p, scale), x, -708.0);
}

struct ScalarOps {
    static double set(double x) { return x; }
    static double max(double a, double b) { return a < b ? b : a; }
    static double fma(double a, double b, double c) { return std::fma(a, b, c); }
    static double sub(double a, double b) { return a - b; }
    static double mul(double a, double b) { return a * b; }
    static double neg(double a) { return -a; }
    static double pow2_from_shifted(double kd) {
        return std::bit_cast<double>((std::bit_cast<std::uint64_t>(kd) + 1023) << 52);
    }
    static double zero_below(double v, double x, double lo) { return x < lo ? 0.0 : v; }
};

#if defined(__AVX512F__)
struct VecOps {
    using T = __m512d;
    static T set(double x) { return _mm512_set1_pd(x); }
    static T max(T a, T b) { return _mm512_mask_blend_pd(_mm512_cmp_pd_mask(a, b, _CMP_LT_OQ), a, b); }
    static T fma(T a, T b, T c) { return _mm512_fmadd_pd(a, b, c); }
    static T sub(T a, T b) { return _mm512_sub_pd(a, b); }
    static T mul(T a, T b) { return _mm512_mul_pd(a, b); }
    static T neg(T a) { return _mm512_sub_pd(_mm512_setzero_pd(), a); }
    static T pow2_from_shifted(T kd) {
        const __m512i bits = _mm512_add_epi64(_mm512_castpd_si512(kd), _mm512_set1_epi64(1023));
        return _mm512_castsi512_pd(_mm512_slli_epi64(bits, 52));
    }
    static T zero_below(T v, T x, double lo) {
        return _mm512_mask_blend_pd(_mm512_cmp_pd_mask(x, set(lo), _CMP_LT_OQ), v, _mm512_setzero_pd());
    }
    static constexpr std::size_t width = 8;
    static T load(const double* p) { return _mm512_loadu_pd(p); }
    static void store(double* p, T v) { _mm512_storeu_pd(p, v); }
};
#elif defined(__AVX2__) && defined(__FMA__)
struct VecOps {
    using T = __m256d;
    static T set(double x) { return _mm256_set1_pd(x); }
    static T max(T a, T b) { return _mm256_blendv_pd(a, b, _mm256_cmp_pd(a, b, _CMP_LT_OQ)); }
    static T fma(T a, T b, T c) { return _mm256_fmadd_pd(a, b, c); }
    static T sub(T a, T b) { return _mm256_sub_pd(a, b); }
    static T mul(T a, T b) { return _mm256_mul_pd(a, b); }
    static T neg(T a) { return _mm256_sub_pd(_mm256_setzero_pd(), a); }
    static T pow2_from_shifted(T kd) {
        const __m256i bits = _mm256_add_epi64(_mm256_castpd_si256(kd), _mm256_set1_epi64x(1023));
        return _mm256_castsi256_pd(_mm256_slli_epi64(bits, 52));
    }
    static T zero_below(T v, T x, double lo) {
        return _mm256_blendv_pd(v, _mm256_setzero_pd(), _mm256_cmp_pd(x, set(lo), _CMP_LT_OQ));
    }
    static constexpr std::size_t width = 4;
    static T load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, T v) { _mm256_storeu_pd(p, v); }
};
#endif

// Subtracting the row maximum keeps every exponent argument <= 0. The sum
// uses eight interleaved partial sums combined in a fixed order, so it does not
// depend on the vector width.
void softmax_row(double* s, std::size_t n, double scale) {
    double part[8] = {-INFINITY, -INFINITY, -INFINITY, -INFINITY, -INFINITY, -INFINITY, -INFINITY, -INFINITY};
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8)
        for (std::size_t l = 0; l < 8; ++l) {
            s[j + l] *= scale;
            part[l] = std::max(part[l], s[j + l]);
        }
    for (; j < n; ++j) {
        s[j] *= scale;
        part[0] = std::max(part[0], s[j]);
    }
    const double mx = *std::max_element(part, part + 8);

    j = 0;
#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))
    const VecOps::T m = VecOps::set(mx);
    for (; j + VecOps::width <= n; j += VecOps::width)
        VecOps::store(s + j, exp_nonpositive<VecOps::T, VecOps>(VecOps::sub(VecOps::load(s + j), m)));
#endif
    for (; j < n; ++j) s[j] = exp_nonpositive<double, ScalarOps>(s[j] - mx);

    double sum[8] = {};
    for (j = 0; j + 8 <= n; j += 8)
        for (std::size_t l = 0; l < 8; ++l) sum[l] += s[j + l];
    for (; j < n; ++j) sum[j % 8] += s[j];
    const double total = ((sum[0] + sum[1]) + (sum[2] + sum[3])) + ((sum[4] + sum[5]) + (sum[6] + sum[7]));
    const double inv = 1.0 / total;
    for (j = 0; j < n; ++j) s[j] *= inv;
}

constexpr std::size_t kMaxHeadDim = 256;


// out[r][j] = sum_e a[r][e] * bt[e][j] for IB rows, e ascending.
template <std::size_t IB, std::size_t HD>
void row_dots(const double* a, std::size_t as, const double* bt, std::size_t n, double* out, std::size_t os,
              std::size_t head_dim) {
    constexpr std::size_t JV = 2;
    const std::size_t hd = HD ? HD : head_dim;
    std::size_t j0 = 0;
    for (; j0 + JV * kLane <= n; j0 += JV * kLane) {
        Lane acc[IB][JV] = {};
        for (std::size_t e = 0; e < hd; ++e) {
            Lane b[JV];
            for (std::size_t v = 0; v < JV; ++v) b[v] = Lane::load(bt + e * n + j0 + v * kLane);
            for (std::size_t r = 0; r < IB; ++r) {
                const Lane x(a[r * as + e]);
                for (std::size_t v = 0; v < JV; ++v) acc[r][v] = Lane::fma(x, b[v], acc[r][v]);
            }
        }
        for (std::size_t r = 0; r < IB; ++r)
            for (std::size_t v = 0; v < JV; ++v) acc[r][v].store(out + r * os + j0 + v * kLane);
    }
    for (std::size_t j = j0; j < n; ++j)
        for (std::size_t r = 0; r < IB; ++r) {
            double acc = 0.0;
            for (std::size_t e = 0; e < hd; ++e) acc = std::fma(a[r * as + e], bt[e * n + j], acc);
            out[r * os + j] = acc;
        }
}

// out[r][e] = sum_j w[r][j] * b[j][e] for IB rows, j ascending.
template <std::size_t IB, std::size_t HD>
void row_combine(const double* w, std::size_t ws, const double* b, std::size_t bs, std::size_t n, double* out,
                 std::size_t os, std::size_t head_dim) {
    if constexpr (HD != 0 && HD % kLane == 0) {
        constexpr std::size_t EV = HD / kLane;
        Lane acc[IB][EV] = {};
        for (std::size_t j = 0; j < n; ++j) {
            Lane brow[EV];
            for (std::size_t v = 0; v < EV; ++v) brow[v] = Lane::load(b + j * bs + v * kLane);
            for (std::size_t r = 0; r < IB; ++r) {
                const Lane x(w[r * ws + j]);
                for (std::size_t v = 0; v < EV; ++v) acc[r][v] = Lane::fma(x, brow[v], acc[r][v]);
            }
        }
        for (std::size_t r = 0; r < IB; ++r)
            for (std::size_t v = 0; v < EV; ++v) acc[r][v].store(out + r * os + v * kLane);
    } else {
        const std::size_t hd = HD ? HD : head_dim;
        for (std::size_t r = 0; r < IB; ++r)
            for (std::size_t e = 0; e < hd; ++e) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc = std::fma(w[r * ws + j], b[j * bs + e], acc);
                out[r * os + e] = acc;
            }
    }
}

// out[c][e] = sum_i w[i][j0 + c] * b[i][e] for JB columns, i ascending.
template <std::size_t JB, std::size_t HD>
void col_combine(const double* w, std::size_t n, std::size_t j0, const double* b, std::size_t bs, double* out,
                 std::size_t os, std::size_t head_dim) {
    if constexpr (HD != 0 && HD % kLane == 0) {
        constexpr std::size_t EV = HD / kLane;
        Lane acc[JB][EV] = {};
        for (std::size_t i = 0; i < n; ++i) {
            const double* wrow = w + i * n + j0;
            Lane brow[EV];
            for (std::size_t v = 0; v < EV; ++v) brow[v] = Lane::load(b + i * bs + v * kLane);
            for (std::size_t c = 0; c < JB; ++c) {
                const Lane x(wrow[c]);
                for (std::size_t v = 0; v < EV; ++v) acc[c][v] = Lane::fma(x, brow[v], acc[c][v]);
            }
        }
        for (std::size_t c = 0; c < JB; ++c)
            for (std::size_t v = 0; v < EV; ++v) acc[c][v].store(out + c * os + v * kLane);
    } else {
        const std::size_t hd = HD ? HD : head_dim;
        for (std::size_t c = 0; c < JB; ++c)
            for (std::size_t e = 0; e < hd; ++e) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc = std::fma(w[i * n + j0 + c], b[i * bs + e], acc);
                out[c * os + e] = acc;
            }
    }
}

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 8;

template <std::size_t HD>
void forward_head_rows(const AttentionDims& d, const double* q, const double* kt, const double* v, double* out,
                       double* probs, std::size_t h, std::size_t i0, std::size_t rows, double scale) {
    const std::size_t n = d.tokens, w = d.width(), hd = d.head_dim;
    const double* qi = q + i0 * w + h * hd;
    double* s = probs + (h * n + i0) * n;
    if (rows == kRowBlock)
        row_dots<kRowBlock, HD>(qi, w, kt, n, s, n, hd);
    else
        for (std::size_t r = 0; r < rows; ++r) row_dots<1, HD>(qi + r * w, w, kt, n, s + r * n, n, hd);
    for (std::size_t r = 0; r < rows; ++r) softmax_row(s + r * n, n, scale);
    double* o = out + i0 * w + h * hd;
    if (rows == kRowBlock)
        row_combine<kRowBlock, HD>(s, n, v + h * hd, w, n, o, w, hd);
    else
        for (std::size_t r = 0; r < rows; ++r) row_combine<1, HD>(s + r * n, n, v + h * hd, w, n, o + r * w, w, hd);
}

template <std::size_t HD>
void attention_forward_impl(const AttentionDims& d, std::span<const double> q, std::span<const double> k,
                            std::span<const double> v, std::span<double> out, std::span<double> probs) {
    const std::size_t n = d.tokens;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
    std::vector<double> kt(d.heads * d.head_dim * n);
    for (std::size_t h = 0; h < d.heads; ++h)
        transpose_head(k, std::span(kt).subspan(h * d.head_dim * n, d.head_dim * n), d, h);
    const std::size_t blocks = (n + kRowBlock - 1) / kRowBlock;

#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (Index hb = 0; hb < static_cast<Index>(d.heads * blocks); ++hb) {
        const std::size_t h = hb / blocks;
        const std::size_t i0 = (hb % blocks) * kRowBlock;
        forward_head_rows<HD>(d, q.data(), kt.data() + h * d.head_dim * n, v.data(), out.data(), probs.data(), h, i0,
                              std::min(kRowBlock, n - i0), scale);
    }
}

template <std::size_t HD>
void attention_backward_impl(const AttentionDims& d, std::span<const double> q, std::span<const double> k,
                             std::span<const double> v, std::span<const double> probs, std::span<const double> dout,
                             std::span<double> dq, std::span<double> dk, std::span<double> dv) {
    const std::size_t n = d.tokens;
    const std::size_t w = d.width();
    const std::size_t hd = d.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<double> vt(hd * n);
    Scratch ds_buffer(n * n);
    const std::span<double> ds = ds_buffer.span();
    const std::size_t row_blocks = (n + kRowBlock - 1) / kRowBlock;
    const std::size_t col_blocks = (n + kColBlock - 1) / kColBlock;

    for (std::size_t h = 0; h < d.heads; ++h) {
        transpose_head(v, vt, d, h);
        const double* p_head = probs.data() + h * n * n;

        // Rows: softmax Jacobian and dq.
#pragma omp parallel for schedule(static) num_threads(g_threads)
        for (Index bb = 0; bb < static_cast<Index>(row_blocks); ++bb) {
            const std::size_t i0 = bb * kRowBlock;
            const std::size_t rows = std::min(kRowBlock, n - i0);
            const double* g = dout.data() + i0 * w + h * hd;
            double* dsr = ds.data() + i0 * n;
            if (rows == kRowBlock)
                row_dots<kRowBlock, HD>(g, w, vt.data(), n, dsr, n, hd);
            else
                for (std::size_t r = 0; r < rows; ++r) row_dots<1, HD>(g + r * w, w, vt.data(), n, dsr + r * n, n, hd);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* p = p_head + (i0 + r) * n;
                double* row = dsr + r * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot = std::fma(p[j], row[j], dot);
                for (std::size_t j = 0; j < n; ++j) row[j] = p[j] * (row[j] - dot);
            }
            double acc[kRowBlock * kMaxHeadDim];
            if (rows == kRowBlock)
                row_combine<kRowBlock, HD>(dsr, n, k.data() + h * hd, w, n, acc, hd, hd);
            else
                for (std::size_t r = 0; r < rows; ++r)
                    row_combine<1, HD>(dsr + r * n, n, k.data() + h * hd, w, n, acc + r * hd, hd, hd);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t e = 0; e < hd; ++e) dq[(i0 + r) * w + h * hd + e] += scale * acc[r * hd + e];
        }

        // Columns: dk and dv, each column block owned by one thread.
#pragma omp parallel for schedule(static) num_threads(g_threads)
        for (Index bb = 0; bb < static_cast<Index>(col_blocks); ++bb) {
            const std::size_t j0 = bb * kColBlock;
            const std::size_t cols = std::min(kColBlock, n - j0);
            double kacc[kColBlock * kMaxHeadDim];
            double vacc[kColBlock * kMaxHeadDim];
            const double* qh = q.data() + h * hd;
            const double* gh = dout.data() + h * hd;
            if (cols == kColBlock) {
                col_combine<kColBlock, HD>(ds.data(), n, j0, qh, w, kacc, hd, hd);
                col_combine<kColBlock, HD>(p_head, n, j0, gh, w, vacc, hd, hd);
            } else {
                for (std::size_t c = 0; c < cols; ++c) {
                    col_combine<1, HD>(ds.data(), n, j0 + c, qh, w, kacc + c * hd, hd, hd);
                    col_combine<1, HD>(p_head, n, j0 + c, gh, w, vacc + c * hd, hd, hd);
                }
            }
            for (std::size_t c = 0; c < cols; ++c)
                for (std::size_t e = 0; e < hd; ++e) {
                    dk[(j0 + c) * w + h * hd + e] += scale * kacc[c * hd + e];
                    dv[(j0 + c) * w + h * hd + e] += vacc[c * hd + e];
                }
        }
    }
}

// C[i][j] (+)= sum_p A(i, p) B[p][j] with A(i, p) = a[i * ai + p * ap], p
// ascending; blocks of 4 rows by 16 columns are kept in registers.
template <std::size_t RB>
void gemm_rows(const double* a, std::size_t ai, std::size_t ap, const double* b, double* c, std::size_t i0,
               std::size_t k, std::size_t m, bool accumulate) {
    constexpr std::size_t CV = 2;
    std::size_t j0 = 0;
    for (; j0 + CV * kLane <= m; j0 += CV * kLane) {
        Lane acc[RB][CV];
        for (std::size_t r = 0; r < RB; ++r)
            for (std::size_t v = 0; v < CV; ++v)
                acc[r][v] = accumulate ? Lane::load(c + (i0 + r) * m + j0 + v * kLane) : Lane();
        for (std::size_t p = 0; p < k; ++p) {
            Lane brow[CV];
            for (std::size_t v = 0; v < CV; ++v) brow[v] = Lane::load(b + p * m + j0 + v * kLane);
            for (std::size_t r = 0; r < RB; ++r) {
                const Lane x(a[(i0 + r) * ai + p * ap]);
                for (std::size_t v = 0; v < CV; ++v) acc[r][v] = Lane::fma(x, brow[v], acc[r][v]);
            }
        }
        for (std::size_t r = 0; r < RB; ++r)
            for (std::size_t v = 0; v < CV; ++v) acc[r][v].store(c + (i0 + r) * m + j0 + v * kLane);
    }
    for (std::size_t r = 0; r < RB; ++r)
        for (std::size_t j = j0; j < m; ++j) {
            double s = accumulate ? c[(i0 + r) * m + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s = std::fma(a[(i0 + r) * ai + p * ap], b[p * m + j], s);
            c[(i0 + r) * m + j] = s;
        }
}

void gemm_blocked(const double* a, std::size_t ai, std::size_t ap, const double* b, double* c, std::size_t n,
                  std::size_t k, std::size_t m, bool accumulate) {
    constexpr std::size_t RB = 4;
    const std::size_t blocks = (n + RB - 1) / RB;
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (Index bb = 0; bb < static_cast<Index>(blocks); ++bb) {
        const std::size_t i0 = bb * RB;
        if (i0 + RB <= n)
            gemm_rows<RB>(a, ai, ap, b, c, i0, k, m, accumulate);
        else
            for (std::size_t i = i0; i < n; ++i) gemm_rows<1>(a, ai, ap, b, c, i, k, m, accumulate);
    }
}

struct ScratchPool {
    std::mutex mutex;
    std::vector<std::pair<std::size_t, std::unique_ptr<double[]>>> free;
};

ScratchPool& scratch_pool() {
    static ScratchPool pool;
    return pool;
}

constexpr std::size_t kPooledBuffers = 8;

}  // namespace

Scratch::Scratch(std::size_t n) : size_(n) {
    auto& pool = scratch_pool();
    {
        std::lock_guard lock(pool.mutex);
        for (auto it = pool.free.begin(); it != pool.free.end(); ++it)
            if (it->first == n) {
                data_ = std::move(it->second);
                pool.free.erase(it);
                return;
            }
    }
    data_.reset(new double[n]);
}

Scratch::~Scratch() {
    if (!data_) return;
    auto& pool = scratch_pool();
    std::lock_guard lock(pool.mutex);
    if (pool.free.size() == kPooledBuffers) pool.free.erase(pool.free.begin());
    pool.free.emplace_back(size_, std::move(data_));
}

Scratch::Scratch(Scratch&& other) noexcept : data_(std::move(other.data_)), size_(other.size_) { other.size_ = 0; }

int threads() { return g_threads; }
void set_threads(int n) { g_threads = std::max(1, n); }

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    gemm_blocked(a.data(), k, 1, b.data(), c.data(), n, k, m, accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    std::vector<double> bt(k * m);
    transpose(b, bt, m, k);
    gemm_nn(a, bt, c, n, k, m, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    gemm_blocked(a.data(), 1, n, b.data(), c.data(), n, k, m, accumulate);
}

void attention_forward(const AttentionDims& d, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<double> out, std::span<double> probs) {
    switch (d.head_dim) {
        case 8: return attention_forward_impl<8>(d, q, k, v, out, probs);
        case 16: return attention_forward_impl<16>(d, q, k, v, out, probs);
        case 32: return attention_forward_impl<32>(d, q, k, v, out, probs);
        default: return attention_forward_impl<0>(d, q, k, v, out, probs);
    }
}

void attention_backward(const AttentionDims& d, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs, std::span<const double> dout,
                        std::span<double> dq, std::span<double> dk, std::span<double> dv) {
    switch (d.head_dim) {
        case 8: return attention_backward_impl<8>(d, q, k, v, probs, dout, dq, dk, dv);
        case 16: return attention_backward_impl<16>(d, q, k, v, probs, dout, dq, dk, dv);
        case 32: return attention_backward_impl<32>(d, q, k, v, probs, dout, dq, dk, dv);
        default: return attention_backward_impl<0>(d, q, k, v, probs, dout, dq, dk, dv);
    }
}

namespace reference {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = accumulate ? c[i * m + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s = std::fma(a[i * k + p], b[p * m + j], s);
            c[i * m + j] = s;
        }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = accumulate ? c[i * m + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s = std::fma(a[i * k + p], b[j * k + p], s);
            c[i * m + j] = s;
        }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = accumulate ? c[i * m + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s = std::fma(a[p * n + i], b[p * m + j], s);
            c[i * m + j] = s;
        }
}

void attention_forward(const AttentionDims& d, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<double> out, std::span<double> probs) {
    const std::size_t n = d.tokens;
    const std::size_t w = d.width();
    const std::size_t hd = d.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    for (std::size_t h = 0; h < d.heads; ++h)
        for (std::size_t i = 0; i < n; ++i) {
            double* s = probs.data() + (h * n + i) * n;
            for (std::size_t j = 0; j < n; ++j) {
                double dot = 0.0;
                for (std::size_t e = 0; e < hd; ++e) dot = std::fma(q[i * w + h * hd + e], k[j * w + h * hd + e], dot);
                s[j] = dot;
            }
            softmax_row(s, n, scale);
            for (std::size_t e = 0; e < hd; ++e) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc = std::fma(s[j], v[j * w + h * hd + e], acc);
                out[i * w + h * hd + e] = acc;
            }
        }
}

void attention_backward(const AttentionDims& d, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs, std::span<const double> dout,
                        std::span<double> dq, std::span<double> dk, std::span<double> dv) {
    const std::size_t n = d.tokens;
    const std::size_t w = d.width();
    const std::size_t hd = d.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<double> ds(n * n);
    for (std::size_t h = 0; h < d.heads; ++h) {
        const double* p = probs.data() + h * n * n;
        auto col = [&](std::size_t row, std::size_t e) { return row * w + h * hd + e; };
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double dp = 0.0;
                for (std::size_t e = 0; e < hd; ++e) dp = std::fma(dout[col(i, e)], v[col(j, e)], dp);
                ds[i * n + j] = dp;
            }
            double r = 0.0;
            for (std::size_t j = 0; j < n; ++j) r = std::fma(p[i * n + j], ds[i * n + j], r);
            for (std::size_t j = 0; j < n; ++j) ds[i * n + j] = p[i * n + j] * (ds[i * n + j] - r);
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t e = 0; e < hd; ++e) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc = std::fma(ds[i * n + j], k[col(j, e)], acc);
                dq[col(i, e)] += scale * acc;
            }
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t e = 0; e < hd; ++e) {
                double kacc = 0.0;
                double vacc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    kacc = std::fma(ds[i * n + j], q[col(i, e)], kacc);
                    vacc = std::fma(p[i * n + j], dout[col(i, e)], vacc);
                }
                dk[col(j, e)] += scale * kacc;
                dv[col(j, e)] += vacc;
            }
    }
}

}  // namespace reference
}  // namespace mcflow::kernels
