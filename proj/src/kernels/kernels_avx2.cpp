// AVX2 + FMA variants. Built with -mavx2 -mfma -ffp-contract=off; every
// scalar fallback inside uses std::fma so results match the reference.

#include <immintrin.h>

#include <cmath>
#include <vector>

#include "kernels_impl.hpp"

namespace starnet::kernels {
namespace {

constexpr std::size_t kChunk = 256;

struct GemmArgs {
  const double* a;
  std::size_t lda;
  const double* b;
  std::size_t ldb;
  double* c;
  std::size_t ldc;
  double* partial;  // m x n running sums when k spans several chunks
  std::size_t n;
  bool accumulate;
};

template <bool TransA>
inline const double* a_ptr(const GemmArgs& g, std::size_t i, std::size_t p) {
  return TransA ? g.a + p * g.lda + i : g.a + i * g.lda + p;
}

template <bool TransA, int R, int V>
inline void gemm_tile(const GemmArgs& g, std::size_t i, std::size_t j, std::size_t p0,
                      std::size_t p1, bool first, bool last) {
  __m256d acc[R][V];
  for (int r = 0; r < R; ++r) {
    for (int v = 0; v < V; ++v) {
      acc[r][v] = first ? _mm256_setzero_pd()
                        : _mm256_loadu_pd(g.partial + (i + r) * g.n + j + 4 * v);
    }
  }
  for (std::size_t p = p0; p < p1; ++p) {
    const double* brow = g.b + p * g.ldb + j;
    __m256d bv[V];
    for (int v = 0; v < V; ++v) bv[v] = _mm256_loadu_pd(brow + 4 * v);
    for (int r = 0; r < R; ++r) {
      const __m256d av = _mm256_broadcast_sd(a_ptr<TransA>(g, i + r, p));
      for (int v = 0; v < V; ++v) acc[r][v] = _mm256_fmadd_pd(av, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int v = 0; v < V; ++v) {
      if (!last) {
        _mm256_storeu_pd(g.partial + (i + r) * g.n + j + 4 * v, acc[r][v]);
        continue;
      }
      double* dst = g.c + (i + r) * g.ldc + j + 4 * v;
      if (g.accumulate) {
        _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), acc[r][v]));
      } else {
        _mm256_storeu_pd(dst, acc[r][v]);
      }
    }
  }
}

template <bool TransA>
inline void gemm_scalar_cell(const GemmArgs& g, std::size_t i, std::size_t j, std::size_t p0,
                             std::size_t p1, bool first, bool last) {
  double s = first ? 0.0 : g.partial[i * g.n + j];
  for (std::size_t p = p0; p < p1; ++p) s = std::fma(*a_ptr<TransA>(g, i, p), g.b[p * g.ldb + j], s);
  if (!last) {
    g.partial[i * g.n + j] = s;
    return;
  }
  double& dst = g.c[i * g.ldc + j];
  dst = g.accumulate ? dst + s : s;
}

template <bool TransA, int R>
inline void gemm_row_block(const GemmArgs& g, std::size_t i, std::size_t n, std::size_t p0,
                           std::size_t p1, bool first, bool last) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) gemm_tile<TransA, R, 2>(g, i, j, p0, p1, first, last);
  for (; j + 4 <= n; j += 4) gemm_tile<TransA, R, 1>(g, i, j, p0, p1, first, last);
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) gemm_scalar_cell<TransA>(g, i + r, j, p0, p1, first, last);
  }
}

template <bool TransA>
void gemm_impl(std::size_t m, std::size_t n, std::size_t k, GemmArgs g) {
  std::vector<double> partial;
  if (k > kChunk) {
    partial.resize(m * n);
    g.partial = partial.data();
  }
  g.n = n;
  if (k == 0) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double& dst = g.c[i * g.ldc + j];
        dst = g.accumulate ? dst + 0.0 : 0.0;
      }
    }
    return;
  }
  for (std::size_t p0 = 0; p0 < k; p0 += kChunk) {
    const std::size_t p1 = std::min(k, p0 + kChunk);
    const bool first = p0 == 0;
    const bool last = p1 == k;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) gemm_row_block<TransA, 4>(g, i, n, p0, p1, first, last);
    for (; i < m; ++i) gemm_row_block<TransA, 1>(g, i, n, p0, p1, first, last);
  }
}

void gemm_avx2(bool trans_a, std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
               bool accumulate) {
  GemmArgs g{a, lda, b, ldb, c, ldc, nullptr, n, accumulate};
  if (trans_a) {
    gemm_impl<true>(m, n, k, g);
  } else {
    gemm_impl<false>(m, n, k, g);
  }
}

std::size_t fps_update_avx2(const double* xs, const double* ys, std::size_t count, double cx,
                            double cy, double* min_dist2) {
  const __m256d vcx = _mm256_set1_pd(cx);
  const __m256d vcy = _mm256_set1_pd(cy);
  const __m256d four = _mm256_set1_pd(4.0);
  __m256d best = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
  __m256d best_idx = _mm256_setzero_pd();
  __m256d idx = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vcx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vcy);
    const __m256d d = _mm256_fmadd_pd(dx, dx, _mm256_mul_pd(dy, dy));
    const __m256d m = _mm256_min_pd(d, _mm256_loadu_pd(min_dist2 + i));
    _mm256_storeu_pd(min_dist2 + i, m);
    const __m256d gt = _mm256_cmp_pd(m, best, _CMP_GT_OQ);
    best = _mm256_blendv_pd(best, m, gt);
    best_idx = _mm256_blendv_pd(best_idx, idx, gt);
    idx = _mm256_add_pd(idx, four);
  }
  alignas(32) double lane_best[4];
  alignas(32) double lane_idx[4];
  _mm256_store_pd(lane_best, best);
  _mm256_store_pd(lane_idx, best_idx);
  double best_value = lane_best[0];
  std::size_t best_index = static_cast<std::size_t>(lane_idx[0]);
  for (int l = 1; l < 4; ++l) {
    const auto li = static_cast<std::size_t>(lane_idx[l]);
    if (lane_best[l] > best_value || (lane_best[l] == best_value && li < best_index)) {
      best_value = lane_best[l];
      best_index = li;
    }
  }
  for (; i < count; ++i) {
    const double dx = xs[i] - cx;
    const double dy = ys[i] - cy;
    const double d = std::fma(dx, dx, dy * dy);
    const double m = d < min_dist2[i] ? d : min_dist2[i];
    min_dist2[i] = m;
    if (m > best_value) {
      best_value = m;
      best_index = i;
    }
  }
  return best_index;
}

void segment_max_avx2(const double* x, std::size_t rows, std::size_t cols, std::size_t ld,
                      double* out, std::uint32_t* argmax) {
  std::size_t j = 0;
  for (; j + 4 <= cols; j += 4) {
    __m256d best = _mm256_loadu_pd(x + j);
    __m256d best_row = _mm256_setzero_pd();
    for (std::size_t r = 1; r < rows; ++r) {
      const __m256d v = _mm256_loadu_pd(x + r * ld + j);
      const __m256d gt = _mm256_cmp_pd(v, best, _CMP_GT_OQ);
      best = _mm256_blendv_pd(best, v, gt);
      best_row = _mm256_blendv_pd(best_row, _mm256_set1_pd(static_cast<double>(r)), gt);
    }
    _mm256_storeu_pd(out + j, best);
    alignas(32) double rows_out[4];
    _mm256_store_pd(rows_out, best_row);
    for (int l = 0; l < 4; ++l) argmax[j + l] = static_cast<std::uint32_t>(rows_out[l]);
  }
  for (; j < cols; ++j) {
    out[j] = x[j];
    argmax[j] = 0;
    for (std::size_t r = 1; r < rows; ++r) {
      if (x[r * ld + j] > out[j]) {
        out[j] = x[r * ld + j];
        argmax[j] = static_cast<std::uint32_t>(r);
      }
    }
  }
}

}  // namespace

const KernelTable* avx2_table_if_compiled() {
  static const KernelTable table{"avx2", &gemm_avx2, &fps_update_avx2, &segment_max_avx2};
  return &table;
}

}  // namespace starnet::kernels
