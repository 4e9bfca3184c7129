#include <cmath>

#include "kernels_impl.hpp"

namespace starnet::kernels {
namespace {

void gemm_scalar(bool trans_a, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
                 bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
        s = std::fma(av, b[p * ldb + j], s);
      }
      double& dst = c[i * ldc + j];
      dst = accumulate ? dst + s : s;
    }
  }
}

std::size_t fps_update_scalar(const double* xs, const double* ys, std::size_t count, double cx,
                              double cy, double* min_dist2) {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    const double dx = xs[i] - cx;
    const double dy = ys[i] - cy;
    const double d = std::fma(dx, dx, dy * dy);
    const double m = d < min_dist2[i] ? d : min_dist2[i];
    min_dist2[i] = m;
    if (m > best_value) {
      best_value = m;
      best = i;
    }
  }
  return best;
}

void segment_max_scalar(const double* x, std::size_t rows, std::size_t cols, std::size_t ld,
                        double* out, std::uint32_t* argmax) {
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = x[j];
    argmax[j] = 0;
  }
  for (std::size_t r = 1; r < rows; ++r) {
    const double* row = x + r * ld;
    for (std::size_t j = 0; j < cols; ++j) {
      if (row[j] > out[j]) {
        out[j] = row[j];
        argmax[j] = static_cast<std::uint32_t>(r);
      }
    }
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", &gemm_scalar, &fps_update_scalar, &segment_max_scalar};
  return table;
}

}  // namespace starnet::kernels
