#ifndef NCLKIT_RETRIEVAL_HPP_
#define NCLKIT_RETRIEVAL_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nclkit/csv.hpp"
#include "nclkit/embed.hpp"
#include "nclkit/sinkhorn.hpp"

namespace nclkit {

enum class Direction { kT2V, kV2T };

const char* to_string(Direction d);

inline constexpr double kDefaultEvalGamma = 0.05;

// Row-stochastic retrieval probabilities. For kT2V the rows are the rows of
// the text x video similarity; for kV2T they are its columns.
struct RetrievalDistribution {
  Matrix P;
  Direction direction = Direction::kT2V;
  double gamma = kDefaultEvalGamma;
};

// Softmax of S / gamma over items (T2V) or over queries of S^T (V2T).
// Throws kInvalidArgument unless gamma > 0.
RetrievalDistribution retrieval_distribution(const SimilarityMatrix& S, double gamma,
                                             Direction direction);

// Mean over items j of |target_j - sum_i w_i P(i, j)|. Without arguments the
// weights are 1 and every target is rows/cols (1 for square P).
double normalization_error(const RetrievalDistribution& P);
double normalization_error(const RetrievalDistribution& P, const Vector& targets,
                           const Vector& query_weights = Vector());
// Per-item summed retrieval probability, sum_i P(i, j).
Vector summed_retrieval_mass(const RetrievalDistribution& P);

// Correct items per query. Queries may temporarily have no items; ranking
// rejects them with kMissingGroundTruth.
class GroundTruth {
 public:
  GroundTruth(Eigen::Index n_queries, Eigen::Index n_items);

  static GroundTruth diagonal(Eigen::Index n);
  // Throws kInvalidArgument for out-of-range indices.
  static GroundTruth from_pairs(Eigen::Index n_queries, Eigen::Index n_items,
                                const std::vector<std::pair<Eigen::Index, Eigen::Index>>& pairs);
  // Whitespace separated "query item" lines; '#' starts a comment. With
  // manifests, the tokens are external string ids.
  static GroundTruth read(const std::filesystem::path& path, Eigen::Index n_queries,
                          Eigen::Index n_items, const IdManifest* query_ids = nullptr,
                          const IdManifest* item_ids = nullptr);

  void add(Eigen::Index query, Eigen::Index item);

  Eigen::Index n_queries() const noexcept { return static_cast<Eigen::Index>(items_.size()); }
  Eigen::Index n_items() const noexcept { return n_items_; }
  const std::vector<int>& items_for(Eigen::Index query) const {
    return items_.at(static_cast<std::size_t>(query));
  }
  // Item -> queries view.
  GroundTruth transposed() const;
  // Number of queries whose ground truth contains each item.
  std::vector<std::int64_t> item_counts() const;
  bool every_query_covered() const;

 private:
  Eigen::Index n_items_;
  std::vector<std::vector<int>> items_;
};

// Uniform query marginal; item marginal proportional to item_counts() when
// every item has at least one query, uniform otherwise.
MarginalPrior prior_from_ground_truth(const GroundTruth& gt);

// 1-based rank of the best-scoring correct item for every query (row of S).
// Ties are broken by ascending item index. Throws kMissingGroundTruth for a
// query without correct items and kDimensionMismatch on shape mismatch.
std::vector<int> rank_matrix(const SimilarityMatrix& S, const GroundTruth& gt);

struct MetricsReport {
  Direction direction = Direction::kT2V;
  double gamma = kDefaultEvalGamma;
  std::map<int, double> recall_at;
  double median_rank = 0.0;
  double mean_rank = 0.0;
  // Normalization errors of both retrieval directions of the evaluated
  // text x video matrix, independent of `direction`.
  double t2v_norm_error = 0.0;
  double v2t_norm_error = 0.0;
};

// S is text x video and gt maps texts to videos. `direction` selects which
// side queries: kT2V ranks rows of S, kV2T ranks rows of S^T against the
// transposed ground truth. Median is the lower median.
MetricsReport compute_metrics(const SimilarityMatrix& S, const GroundTruth& gt, double gamma,
                              const std::vector<int>& ks, Direction direction = Direction::kT2V);

// Both directional normalization errors with targets from `prior`.
std::pair<double, double> directional_normalization_errors(const SimilarityMatrix& S,
                                                           double gamma,
                                                           const MarginalPrior& prior);

// header: direction,gamma,R@K...,median_rank,mean_rank,t2v_norm_error,v2t_norm_error
CsvWriter metrics_csv(const MetricsReport& report, std::string comment = {});

struct FalseRateProfile {
  std::vector<double> bin_edges;  // bins + 1 ascending edges
  std::vector<std::size_t> counts;
  std::vector<double> false_negative_rate;
  std::vector<double> false_positive_rate;

  std::size_t bins() const noexcept { return counts.size(); }
  // Index of the bin holding `value`, or nullopt when outside the edges.
  std::optional<std::size_t> bin_of(double value) const;
};

// Items are binned by their summed retrieval probability. Per bin:
//   fnr = items none of whose true queries retrieve them at top-1
//         / items with at least one true query
//   fpr = (query, item) pairs where the item is a wrong top-1
//         / (query, item) pairs where the item is not a true match
// Automatic edges span [0, max(2, largest sum)] in `bins` equal steps.
FalseRateProfile false_rate_profile(const RetrievalDistribution& P, const GroundTruth& gt,
                                    std::size_t bins);
FalseRateProfile false_rate_profile(const RetrievalDistribution& P, const GroundTruth& gt,
                                    std::vector<double> edges);

// columns: bin_lo,bin_hi,count,fnr,fpr
CsvWriter false_rate_csv(const FalseRateProfile& profile, std::string comment = {});

}  // namespace nclkit

#endif  // NCLKIT_RETRIEVAL_HPP_
