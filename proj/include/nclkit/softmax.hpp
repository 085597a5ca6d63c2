#ifndef NCLKIT_SOFTMAX_HPP_
#define NCLKIT_SOFTMAX_HPP_

#include "nclkit/embed.hpp"

namespace nclkit {

// log(sum_k exp(x_k + shift_k)) with max subtraction. Returns -inf when every
// term is -inf. `shift` may be empty.
double log_sum_exp(const double* x, const double* shift, Eigen::Index n);

// Row-wise log-sum-exp of logits(i, :) + col_shift.
Vector row_log_sum_exp(const Matrix& logits, const Vector& col_shift);
Vector row_log_sum_exp(const Matrix& logits);

// Row-wise softmax; every row sums to 1 up to rounding.
Matrix row_softmax(const Matrix& logits);

}  // namespace nclkit

#endif  // NCLKIT_SOFTMAX_HPP_
