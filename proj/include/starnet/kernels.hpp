#pragma once

// Data-parallel inner loops with a scalar reference and SIMD variants.
//
// Every variant must reproduce the scalar reference bit for bit: products are
// accumulated with fused multiply-add in increasing reduction-index order, and
// argmax ties resolve to the lowest index.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace starnet::kernels {

struct KernelTable {
  const char* name;

  // c[m x n] = op(a) * b, op(a) = a (m x k, row stride lda) or a^T (a is k x m).
  // b is k x n with row stride ldb. With accumulate, the finished dot product is
  // added to the existing c entry.
  void (*gemm)(bool trans_a, std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda, const double* b, std::size_t ldb,
               double* c, std::size_t ldc, bool accumulate);

  // min_dist2[i] = min(min_dist2[i], (xs[i]-cx)^2 + (ys[i]-cy)^2) for all i,
  // then returns the index of the largest min_dist2 entry.
  std::size_t (*fps_update)(const double* xs, const double* ys, std::size_t count,
                            double cx, double cy, double* min_dist2);

  // Column-wise max over `rows` rows of x (row stride ld) with the first row
  // achieving it.
  void (*segment_max)(const double* x, std::size_t rows, std::size_t cols, std::size_t ld,
                      double* out, std::uint32_t* argmax);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled in or the CPU lacks the features.
const KernelTable* avx2_kernels();

// The table used by the library. Defaults to the best supported variant; the
// STARNET_KERNELS environment variable ("scalar", "avx2") overrides it.
const KernelTable& active_kernels();

// Forces a variant ("auto", "scalar", "avx2"). Returns false if unavailable.
bool select_kernels(std::string_view name);

}  // namespace starnet::kernels
