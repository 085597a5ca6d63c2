#ifndef NCLKIT_SINKHORN_HPP_
#define NCLKIT_SINKHORN_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nclkit/embed.hpp"

namespace nclkit {

// Target marginals of a transport plan: r over rows (queries), c over
// columns (items). Both strictly positive and summing to 1 within 1e-9.
class MarginalPrior {
 public:
  static constexpr double kSumTolerance = 1e-9;

  // Throws kInvalidArgument on empty, non-positive, non-finite or
  // unnormalized input.
  MarginalPrior(Vector r, Vector c);

  // r_i = 1/m, c_j = 1/n.
  static MarginalPrior uniform(Eigen::Index m, Eigen::Index n);
  // Uniform rows; c_j proportional to the number of queries matching item j.
  // Every count must be >= 1.
  static MarginalPrior from_item_counts(Eigen::Index m, std::span<const std::int64_t> counts);

  const Vector& r() const noexcept { return r_; }
  const Vector& c() const noexcept { return c_; }
  Eigen::Index rows() const noexcept { return r_.size(); }
  Eigen::Index cols() const noexcept { return c_.size(); }

 private:
  Vector r_;
  Vector c_;
};

struct SinkhornOptions {
  // Fixed number of alpha/beta updates. Ignored when `tol` is set.
  int n_iters = 4;
  // When set, iterate until the residual is <= tol or max_iters_cap updates.
  std::optional<double> tol;
  bool log_domain = true;
  int max_iters_cap = 10000;
  // Keep the residual after every update in ScalingVectors::residual_history.
  bool record_history = false;

  void validate() const;
};

// Scaling vectors of P = diag(alpha) M diag(beta), kept in log space so that
// small temperatures cannot overflow them.
struct ScalingVectors {
  Vector log_alpha;
  Vector log_beta;
  // L1 deviation of the row sums of P from r after the last update. The
  // column sums match c by construction of the final beta update.
  double residual = 0.0;
  int iterations_run = 0;
  std::vector<double> residual_history;
  // Kernel entries visited (one per exp evaluation).
  std::uint64_t kernel_evaluations = 0;

  Vector alpha() const { return log_alpha.array().exp(); }
  Vector beta() const { return log_beta.array().exp(); }
};

struct TransportPlan {
  Matrix P;
  MarginalPrior prior;
  double residual = 0.0;
};

struct ScalingResult {
  ScalingVectors scaling;
  TransportPlan plan;
};

// Sinkhorn-Knopp scaling of a nonnegative matrix towards `prior`.
// beta starts at 1 / column sums; each iteration sets
//   alpha = r / (M beta),  beta = c / (M^T alpha).
// Throws kDegenerateMatrix on a row or column without a positive entry,
// kNonFinite when the plain-domain iteration overflows.
ScalingResult scale_matrix(const Matrix& M, const MarginalPrior& prior,
                           const SinkhornOptions& opts = {});

// Same iteration on the kernel exp(log_kernel). Entries may be -inf (zero
// kernel entries).
ScalingResult scale_log_kernel(const Matrix& log_kernel, const MarginalPrior& prior,
                               const SinkhornOptions& opts = {});

// Instance biases on the similarity scale:
//   a_i = gamma * log(alpha_i / sum alpha),  b_j = gamma * log(beta_j / sum beta)
// so sum_i exp(a_i / gamma) = sum_j exp(b_j / gamma) = 1.
struct BiasVectors {
  Vector a;
  Vector b;
  double gamma = 0.0;
  double residual = 0.0;
  int iterations_run = 0;
  std::uint64_t kernel_evaluations = 0;
};

// Biases for the kernel exp(S / gamma). gamma must be positive.
BiasVectors compute_biases(const SimilarityMatrix& S, double gamma, const MarginalPrior& prior,
                           const SinkhornOptions& opts = {});
// Uniform prior.
BiasVectors compute_biases(const SimilarityMatrix& S, double gamma,
                           const SinkhornOptions& opts = {});

// Normalized log-scaling vectors to bias vectors (log-softmax times gamma).
BiasVectors biases_from_scaling(const ScalingVectors& scaling, double gamma);

// S*(i, j) = a_i + b_j + S(i, j).
SimilarityMatrix adjust_similarity(const SimilarityMatrix& S, const BiasVectors& biases);
SimilarityMatrix adjust_similarity(const SimilarityMatrix& S, const Vector& a, const Vector& b);

struct NormalizationCheck {
  double t2v_error = 0.0;
  double v2t_error = 0.0;
};

// Largest deviation of any instance's summed retrieval probability from its
// target in each direction. Query -> item: item j should collect m * c_j,
// item -> query: query i should collect n * r_i. Each query's contribution is
// weighted by its own prior mass times its population size, which is 1
// under a uniform prior.
NormalizationCheck verify_normalization(const SimilarityMatrix& S_star, double gamma,
                                        const MarginalPrior& prior);
NormalizationCheck verify_normalization(const SimilarityMatrix& S_star, double gamma);

}  // namespace nclkit

#endif  // NCLKIT_SINKHORN_HPP_
