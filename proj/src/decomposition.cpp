#include "nclkit/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "nclkit/error.hpp"
#include "nclkit/softmax.hpp"

namespace nclkit {

namespace {

void check_pair(const Matrix& text, const Matrix& video) {
  if (text.rows() < 1 || video.rows() < 1) {
    throw Error(ErrorKind::kInvalidArgument, "decomposition needs non-empty text and video sets");
  }
  if (text.cols() != video.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "text dim " + std::to_string(text.cols()) +
                                                   " differs from video dim " +
                                                   std::to_string(video.cols()));
  }
}

Vector column_mean(const Matrix& m) {
  Vector mu = Vector::Zero(m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) mu += m.row(i).transpose();
  return mu / static_cast<double>(m.rows());
}

// Mean of the off-diagonal entries of m m^T.
double mean_off_diagonal(const Matrix& m) {
  const Matrix G = inner_products(m, m);
  double total = 0.0;
  for (Eigen::Index i = 0; i < G.rows(); ++i)
    for (Eigen::Index j = 0; j < G.cols(); ++j)
      if (i != j) total += G(i, j);
  const double n = static_cast<double>(G.rows());
  return total / (n * (n - 1.0));
}

}  // namespace

ModalDecomposition modal_decompose(const Matrix& text, const Matrix& video) {
  check_pair(text, video);
  ModalDecomposition out;
  out.means.mu_t = column_mean(text);
  out.means.mu_v = column_mean(video);
  out.displacements.t_prime = text.rowwise() - out.means.mu_t.transpose();
  out.displacements.v_prime = video.rowwise() - out.means.mu_v.transpose();
  return out;
}

ModalDecomposition modal_decompose(const EmbeddingSet& text, const EmbeddingSet& video) {
  return modal_decompose(text.vectors(), video.vectors());
}

Matrix SimilarityDecomposition::sum() const {
  return mean_mean + text_offset + video_offset + displacement;
}

SimilarityDecomposition similarity_decomposition(const Matrix& text, const Matrix& video) {
  const ModalDecomposition d = modal_decompose(text, video);
  const Eigen::Index m = text.rows();
  const Eigen::Index n = video.rows();
  const Vector row_term = d.displacements.t_prime * d.means.mu_v;
  const Vector col_term = d.displacements.v_prime * d.means.mu_t;

  SimilarityDecomposition out;
  out.mean_mean = Matrix::Constant(m, n, d.means.mu_t.dot(d.means.mu_v));
  out.text_offset = row_term.replicate(1, n);
  out.video_offset = col_term.transpose().replicate(m, 1);
  out.displacement = inner_products(d.displacements.t_prime, d.displacements.v_prime);
  return out;
}

SimilarityDecomposition similarity_decomposition(const EmbeddingSet& text,
                                                 const EmbeddingSet& video) {
  return similarity_decomposition(text.vectors(), video.vectors());
}

double decomposition_residual(const Matrix& text, const Matrix& video) {
  const SimilarityDecomposition d = similarity_decomposition(text, video);
  return (d.sum() - inner_products(text, video)).cwiseAbs().maxCoeff();
}

WeightedSoftmax weighted_softmax(const Matrix& text, const Matrix& video, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorKind::kInvalidArgument, "temperature must be positive and finite");
  }
  const ModalDecomposition d = modal_decompose(text, video);
  WeightedSoftmax out;
  out.log_beta = (d.displacements.v_prime * d.means.mu_t) / gamma;
  const Matrix logits = inner_products(d.displacements.t_prime, d.displacements.v_prime) / gamma;
  const Vector lse = row_log_sum_exp(logits, out.log_beta);
  out.P.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      out.P(i, j) = std::exp(logits(i, j) + out.log_beta(j) - lse(i));
  return out;
}

double weighted_softmax_check(const Matrix& text, const Matrix& video, double gamma) {
  const WeightedSoftmax w = weighted_softmax(text, video, gamma);
  const Matrix direct = row_softmax(inner_products(text, video) / gamma);
  return (direct - w.P).cwiseAbs().maxCoeff();
}

double weighted_softmax_check(const EmbeddingSet& text, const EmbeddingSet& video, double gamma) {
  return weighted_softmax_check(text.vectors(), video.vectors(), gamma);
}

ModalityStats modality_similarity_stats(const Matrix& text, const Matrix& video) {
  check_pair(text, video);
  if (text.rows() < 2 || video.rows() < 2) {
    throw Error(ErrorKind::kInvalidArgument, "within-modality statistics need two rows per set");
  }
  ModalityStats s;
  s.text_text = mean_off_diagonal(text);
  s.video_video = mean_off_diagonal(video);
  s.text_video = inner_products(text, video).mean();
  return s;
}

ModalityStats modality_similarity_stats(const EmbeddingSet& text, const EmbeddingSet& video) {
  return modality_similarity_stats(text.vectors(), video.vectors());
}

std::vector<std::pair<std::string, double>> decomposition_report(const Matrix& text,
                                                                 const Matrix& video,
                                                                 double gamma) {
  const ModalityStats stats = modality_similarity_stats(text, video);
  const ModalDecomposition d = modal_decompose(text, video);
  const SimilarityDecomposition terms = similarity_decomposition(text, video);
  return {
      {"text_text", stats.text_text},
      {"video_video", stats.video_video},
      {"text_video", stats.text_video},
      {"mu_t_norm", d.means.mu_t.norm()},
      {"mu_v_norm", d.means.mu_v.norm()},
      {"mean_mean", d.means.mu_t.dot(d.means.mu_v)},
      {"text_offset_max_abs", terms.text_offset.cwiseAbs().maxCoeff()},
      {"video_offset_max_abs", terms.video_offset.cwiseAbs().maxCoeff()},
      {"decomposition_residual", (terms.sum() - inner_products(text, video)).cwiseAbs().maxCoeff()},
      {"weighted_softmax_deviation", weighted_softmax_check(text, video, gamma)},
  };
}

CsvWriter decomposition_csv(const std::vector<std::pair<std::string, double>>& report,
                            const std::string& comment) {
  CsvWriter csv({"metric", "value"}, comment);
  for (const auto& [name, value] : report) csv.add_row({name, format_number(value)});
  return csv;
}

CsvWriter pairwise_similarity_csv(const Matrix& S, const std::string& comment) {
  CsvWriter csv({"row", "col", "similarity"}, comment);
  for (Eigen::Index i = 0; i < S.rows(); ++i)
    for (Eigen::Index j = 0; j < S.cols(); ++j)
      csv.add_row({format_number(static_cast<long long>(i)), format_number(static_cast<long long>(j)),
                   format_number(S(i, j))});
  return csv;
}

}  // namespace nclkit
