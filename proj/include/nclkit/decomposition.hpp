#ifndef NCLKIT_DECOMPOSITION_HPP_
#define NCLKIT_DECOMPOSITION_HPP_

#include <string>
#include <utility>
#include <vector>

#include "nclkit/csv.hpp"
#include "nclkit/embed.hpp"

namespace nclkit {

// Per-modality means; not unit norm in general.
struct ModalMeans {
  Vector mu_t;
  Vector mu_v;
};

// Rows minus their modality mean; columns average to zero.
struct Displacements {
  Matrix t_prime;
  Matrix v_prime;
};

struct ModalDecomposition {
  ModalMeans means;
  Displacements displacements;
};

// Text and video sets may differ in size but must share a dimension.
ModalDecomposition modal_decompose(const Matrix& text, const Matrix& video);
ModalDecomposition modal_decompose(const EmbeddingSet& text, const EmbeddingSet& video);

// <t_i, v_j> = <mu_t, mu_v> + <mu_v, t'_i> + <mu_t, v'_j> + <t'_i, v'_j>,
// each term laid out as a full rows x cols matrix.
struct SimilarityDecomposition {
  Matrix mean_mean;      // constant
  Matrix text_offset;    // <mu_v, t'_i>, constant along a row
  Matrix video_offset;   // <mu_t, v'_j>, constant down a column
  Matrix displacement;   // <t'_i, v'_j>

  Matrix sum() const;
};

SimilarityDecomposition similarity_decomposition(const Matrix& text, const Matrix& video);
SimilarityDecomposition similarity_decomposition(const EmbeddingSet& text,
                                                 const EmbeddingSet& video);

// Largest |sum of terms - <t_i, v_j>| over all entries.
double decomposition_residual(const Matrix& text, const Matrix& video);

// Text-to-video distribution written as a weighted softmax over the
// displacements: P(i, j) proportional to beta_j exp(<t'_i, v'_j> / gamma) with
// beta_j = exp(<mu_t, v'_j> / gamma). Evaluated in log space.
struct WeightedSoftmax {
  Vector log_beta;
  Matrix P;
};

WeightedSoftmax weighted_softmax(const Matrix& text, const Matrix& video, double gamma);

// Max entrywise |direct softmax - weighted form|.
double weighted_softmax_check(const Matrix& text, const Matrix& video, double gamma);
double weighted_softmax_check(const EmbeddingSet& text, const EmbeddingSet& video, double gamma);

struct ModalityStats {
  double text_text = 0.0;    // mean off-diagonal text cosine
  double video_video = 0.0;  // mean off-diagonal video cosine
  double text_video = 0.0;   // mean over all text/video pairs
};

// Needs at least two rows per modality.
ModalityStats modality_similarity_stats(const Matrix& text, const Matrix& video);
ModalityStats modality_similarity_stats(const EmbeddingSet& text, const EmbeddingSet& video);

// metric,value rows: modality stats, mean norms, the largest per-row and
// per-column bias terms, and both identity residuals.
std::vector<std::pair<std::string, double>> decomposition_report(const Matrix& text,
                                                                 const Matrix& video,
                                                                 double gamma);
CsvWriter decomposition_csv(const std::vector<std::pair<std::string, double>>& report,
                            const std::string& comment = {});

// Long-format dump of a similarity matrix: row,col,similarity.
CsvWriter pairwise_similarity_csv(const Matrix& S, const std::string& comment = {});

}  // namespace nclkit

#endif  // NCLKIT_DECOMPOSITION_HPP_
