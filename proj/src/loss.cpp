#include "nclkit/loss.hpp"

#include <cmath>
#include <vector>

#include "nclkit/error.hpp"
#include "nclkit/softmax.hpp"

namespace nclkit {

namespace {

void check_batch(const Matrix& text, const Matrix& video, double gamma) {
  if (text.rows() < 2 || video.rows() < 2) {
    throw Error(ErrorKind::kBatchTooSmall, "contrastive loss needs a batch of at least 2 pairs");
  }
  if (text.rows() != video.rows() || text.cols() != video.cols()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "text batch " + std::to_string(text.rows()) + "x" + std::to_string(text.cols()) +
                    " does not pair with video batch " + std::to_string(video.rows()) + "x" +
                    std::to_string(video.cols()));
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorKind::kInvalidArgument, "temperature must be positive and finite");
  }
}

// Loss and dL/dlogits for a square logit matrix with positives on the
// diagonal.
LossValue diagonal_cross_entropy(const Matrix& logits, Matrix& d_logits) {
  const Eigen::Index B = logits.rows();
  const Vector row_lse = row_log_sum_exp(logits);
  const Matrix logits_t = logits.transpose();
  const Vector col_lse = row_log_sum_exp(logits_t);

  LossValue loss;
  for (Eigen::Index i = 0; i < B; ++i) {
    loss.t2v -= logits(i, i) - row_lse(i);
    loss.v2t -= logits(i, i) - col_lse(i);
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  loss.t2v *= inv_b;
  loss.v2t *= inv_b;
  loss.total = 0.5 * (loss.t2v + loss.v2t);

  d_logits.resize(B, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    for (Eigen::Index j = 0; j < B; ++j) {
      const double p_row = std::exp(logits(i, j) - row_lse(i));
      const double p_col = std::exp(logits(i, j) - col_lse(j));
      const double target = i == j ? 2.0 : 0.0;
      d_logits(i, j) = 0.5 * inv_b * (p_row + p_col - target);
    }
  }
  return loss;
}

LossResult loss_on_logits(const Matrix& text, const Matrix& video, double gamma,
                          const Matrix& logits) {
  Matrix d_logits;
  LossResult out;
  out.loss = diagonal_cross_entropy(logits, d_logits);
  if (!std::isfinite(out.loss.total)) {
    throw Error(ErrorKind::kNonFinite, "contrastive loss is not finite");
  }
  const Matrix d_sim = d_logits / gamma;
  out.grad.d_text = d_sim * video;
  out.grad.d_video = d_sim.transpose() * text;
  return out;
}

}  // namespace

LossResult contrastive_loss(const Matrix& text, const Matrix& video, double gamma) {
  check_batch(text, video, gamma);
  const Matrix logits = inner_products(text, video) / gamma;
  return loss_on_logits(text, video, gamma, logits);
}

LossResult contrastive_loss(const EmbeddingSet& text, const EmbeddingSet& video, double gamma) {
  return contrastive_loss(text.vectors(), video.vectors(), gamma);
}

LossResult adjusted_contrastive_loss(const Matrix& text, const Matrix& video, double gamma,
                                     const BiasVectors& biases) {
  check_batch(text, video, gamma);
  const SimilarityMatrix S(inner_products(text, video));
  const Matrix logits = adjust_similarity(S, biases).values / gamma;
  return loss_on_logits(text, video, gamma, logits);
}

NclLossResult ncl_loss(const Matrix& text, const Matrix& video, double gamma,
                       const SinkhornOptions& opts) {
  check_batch(text, video, gamma);
  const SimilarityMatrix S(inner_products(text, video));
  NclLossResult out;
  out.biases = compute_biases(S, gamma, opts);
  const Matrix logits = adjust_similarity(S, out.biases).values / gamma;
  LossResult inner = loss_on_logits(text, video, gamma, logits);
  out.loss = inner.loss;
  out.grad = std::move(inner.grad);
  return out;
}

NclLossResult ncl_loss(const EmbeddingSet& text, const EmbeddingSet& video, double gamma,
                       const SinkhornOptions& opts) {
  return ncl_loss(text.vectors(), video.vectors(), gamma, opts);
}

Vector bias_gradient(const RetrievalDistribution& P) {
  const Eigen::Index B = P.P.rows();
  if (B != P.P.cols() || B < 1) {
    throw Error(ErrorKind::kDimensionMismatch, "bias gradient needs a square distribution");
  }
  const Vector mass = summed_retrieval_mass(P);
  return (-1.0 / (2.0 * static_cast<double>(B))) * (Vector::Ones(B) - mass);
}

FiniteDifferenceReport finite_difference_check(const Objective& objective,
                                               std::span<const double> params,
                                               std::span<const double> analytic, double eps) {
  if (params.size() != analytic.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "gradient length does not match parameter count");
  }
  if (!(eps > 0.0)) throw Error(ErrorKind::kInvalidArgument, "eps must be positive");
  std::vector<double> x(params.begin(), params.end());
  FiniteDifferenceReport report;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + eps;
    const double plus = objective(x);
    x[k] = saved - eps;
    const double minus = objective(x);
    x[k] = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double rel = std::abs(numeric - analytic[k]) / (std::abs(analytic[k]) + 1e-8);
    if (k == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = k;
    }
  }
  return report;
}

}  // namespace nclkit
