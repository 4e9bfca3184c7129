#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace starnet {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  void resize(std::size_t rows, std::size_t cols, double fill = 0.0) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, fill);
  }
  void fill(double v) { data_.assign(data_.size(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Counts multiply-adds issued through the matrix products below while alive.
// Scopes nest; the innermost one on the current thread receives the counts.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  std::uint64_t count() const { return count_; }
  static void add(std::uint64_t macs);

 private:
  std::uint64_t count_ = 0;
  MacCounter* previous_;
};

struct MatView {
  const double* data;
  std::size_t rows;
  std::size_t cols;
  std::size_t ld;

  MatView(const double* d, std::size_t r, std::size_t c, std::size_t stride)
      : data(d), rows(r), cols(c), ld(stride) {}
  MatView(const Matrix& m) : data(m.data()), rows(m.rows()), cols(m.cols()), ld(m.cols()) {}  // NOLINT
};

struct MutMatView {
  double* data;
  std::size_t rows;
  std::size_t cols;
  std::size_t ld;

  MutMatView(double* d, std::size_t r, std::size_t c, std::size_t stride)
      : data(d), rows(r), cols(c), ld(stride) {}
  MutMatView(Matrix& m) : data(m.data()), rows(m.rows()), cols(m.cols()), ld(m.cols()) {}  // NOLINT
};

// Rows [begin, begin + count) of m as a view.
inline MatView row_block(const Matrix& m, std::size_t begin, std::size_t count) {
  return {m.data() + begin * m.cols(), count, m.cols(), m.cols()};
}
inline MutMatView row_block(Matrix& m, std::size_t begin, std::size_t count) {
  return {m.data() + begin * m.cols(), count, m.cols(), m.cols()};
}

// c = a * b or c += a * b. Shapes must already agree.
void gemm(MatView a, MatView b, MutMatView c, bool accumulate);
// c = a^T * b or c += a^T * b.
void gemm_tn(MatView a, MatView b, MutMatView c, bool accumulate);

// out = a * b (or out += a * b). Without accumulate, out is resized.
void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out = a^T * b (or out += a^T * b).
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out = a * b^T (or out += a * b^T).
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

Matrix transpose(const Matrix& m);

}  // namespace starnet
