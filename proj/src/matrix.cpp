#include "starnet/matrix.hpp"

#include "starnet/error.hpp"
#include "starnet/kernels.hpp"

namespace starnet {
namespace {

thread_local MacCounter* tls_counter = nullptr;

void check(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

}  // namespace

MacCounter::MacCounter() : previous_(tls_counter) { tls_counter = this; }
MacCounter::~MacCounter() { tls_counter = previous_; }

void MacCounter::add(std::uint64_t macs) {
  if (tls_counter) tls_counter->count_ += macs;
}

void gemm(MatView a, MatView b, MutMatView c, bool accumulate) {
  check(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "gemm: shape mismatch");
  if (c.rows == 0 || c.cols == 0) return;
  kernels::active_kernels().gemm(false, a.rows, b.cols, a.cols, a.data, a.ld, b.data, b.ld,
                                 c.data, c.ld, accumulate);
  MacCounter::add(static_cast<std::uint64_t>(a.rows) * b.cols * a.cols);
}

void gemm_tn(MatView a, MatView b, MutMatView c, bool accumulate) {
  check(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols, "gemm_tn: shape mismatch");
  if (c.rows == 0 || c.cols == 0) return;
  kernels::active_kernels().gemm(true, a.cols, b.cols, a.rows, a.data, a.ld, b.data, b.ld,
                                 c.data, c.ld, accumulate);
  MacCounter::add(static_cast<std::uint64_t>(a.cols) * b.cols * a.rows);
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (!accumulate) out.resize(a.rows(), b.cols());
  gemm(a, b, out, accumulate);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (!accumulate) out.resize(a.cols(), b.cols());
  gemm_tn(a, b, out, accumulate);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  matmul(a, transpose(b), out, accumulate);
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  }
  return t;
}

}  // namespace starnet
