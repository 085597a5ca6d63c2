#include "nclkit/softmax.hpp"

#include <cmath>
#include <limits>

#include "nclkit/parallel.hpp"

namespace nclkit {

double log_sum_exp(const double* x, const double* shift, Eigen::Index n) {
  double max = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double v = shift ? x[k] + shift[k] : x[k];
    if (v > max) max = v;
  }
  if (!std::isfinite(max)) return max;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double v = shift ? x[k] + shift[k] : x[k];
    sum += std::exp(v - max);
  }
  return max + std::log(sum);
}

Vector row_log_sum_exp(const Matrix& logits, const Vector& col_shift) {
  Vector out(logits.rows());
  const double* shift = col_shift.size() ? col_shift.data() : nullptr;
  parallel_for_rows(static_cast<std::size_t>(logits.rows()), [&](std::size_t b, std::size_t e) {
    for (auto i = static_cast<Eigen::Index>(b); i < static_cast<Eigen::Index>(e); ++i) {
      out(i) = log_sum_exp(logits.row(i).data(), shift, logits.cols());
    }
  });
  return out;
}

Vector row_log_sum_exp(const Matrix& logits) { return row_log_sum_exp(logits, Vector()); }

Matrix row_softmax(const Matrix& logits) {
  const Vector lse = row_log_sum_exp(logits);
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) out(i, j) = std::exp(logits(i, j) - lse(i));
  }
  return out;
}

}  // namespace nclkit
