#ifndef NCLKIT_LOSS_HPP_
#define NCLKIT_LOSS_HPP_

#include <functional>
#include <span>

#include "nclkit/embed.hpp"
#include "nclkit/retrieval.hpp"
#include "nclkit/sinkhorn.hpp"

namespace nclkit {

struct LossValue {
  double total = 0.0;  // (t2v + v2t) / 2
  double t2v = 0.0;
  double v2t = 0.0;
};

// Euclidean gradients with respect to the embedding rows (not projected
// onto the sphere).
struct GradientSet {
  Matrix d_text;
  Matrix d_video;
};

struct LossResult {
  LossValue loss;
  GradientSet grad;
};

struct NclLossResult {
  LossValue loss;
  GradientSet grad;
  BiasVectors biases;
};

// Symmetric cross-entropy over a batch of B paired rows (row i of `text`
// matches row i of `video`), logits <t_i, v_j> / gamma. Rows are used as
// given, so unnormalized inputs are fine. Throws kBatchTooSmall for B < 2
// and kDimensionMismatch for mismatched shapes.
LossResult contrastive_loss(const Matrix& text, const Matrix& video, double gamma);
LossResult contrastive_loss(const EmbeddingSet& text, const EmbeddingSet& video, double gamma);

// Same objective on the adjusted logits (a_i + b_j + <t_i, v_j>) / gamma with
// the biases held fixed.
LossResult adjusted_contrastive_loss(const Matrix& text, const Matrix& video, double gamma,
                                     const BiasVectors& biases);

// Normalized contrastive loss: biases are recomputed for this batch by
// Sinkhorn (uniform prior) and then treated as constants, so no gradient
// flows through the scaling iterations.
NclLossResult ncl_loss(const Matrix& text, const Matrix& video, double gamma,
                       const SinkhornOptions& opts = {});
NclLossResult ncl_loss(const EmbeddingSet& text, const EmbeddingSet& video, double gamma,
                       const SinkhornOptions& opts = {});

// dL/db_j = -(1 / 2B) (1 - sum_i P(i, j)) for a B x B text-to-video
// distribution, where b_j is an additive bias on item j's logits.
Vector bias_gradient(const RetrievalDistribution& P);

using Objective = std::function<double(std::span<const double>)>;

struct FiniteDifferenceReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

// Central differences (f(x + eps e_k) - f(x - eps e_k)) / (2 eps) against
// `analytic`; error per coordinate is |diff| / (|analytic_k| + 1e-8).
FiniteDifferenceReport finite_difference_check(const Objective& objective,
                                               std::span<const double> params,
                                               std::span<const double> analytic, double eps);

}  // namespace nclkit

#endif  // NCLKIT_LOSS_HPP_
