#include "nclkit/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nclkit/error.hpp"
#include "nclkit/softmax.hpp"

namespace nclkit {

const char* to_string(Direction d) { return d == Direction::kT2V ? "t2v" : "v2t"; }

RetrievalDistribution retrieval_distribution(const SimilarityMatrix& S, double gamma,
                                             Direction direction) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorKind::kInvalidArgument, "temperature must be positive and finite");
  }
  RetrievalDistribution out;
  out.direction = direction;
  out.gamma = gamma;
  if (direction == Direction::kT2V) {
    out.P = row_softmax(S.values / gamma);
  } else {
    out.P = row_softmax(S.values.transpose() / gamma);
  }
  return out;
}

Vector summed_retrieval_mass(const RetrievalDistribution& P) {
  Vector mass = Vector::Zero(P.P.cols());
  for (Eigen::Index i = 0; i < P.P.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.P.cols(); ++j) mass(j) += P.P(i, j);
  }
  return mass;
}

double normalization_error(const RetrievalDistribution& P, const Vector& targets,
                           const Vector& query_weights) {
  const Eigen::Index m = P.P.rows();
  const Eigen::Index n = P.P.cols();
  if (targets.size() != n) {
    throw Error(ErrorKind::kDimensionMismatch, "normalization targets do not match item count");
  }
  if (query_weights.size() != 0 && query_weights.size() != m) {
    throw Error(ErrorKind::kDimensionMismatch, "query weights do not match query count");
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    double mass = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      mass += (query_weights.size() ? query_weights(i) : 1.0) * P.P(i, j);
    }
    total += std::abs(targets(j) - mass);
  }
  return total / static_cast<double>(n);
}

double normalization_error(const RetrievalDistribution& P) {
  const double target = static_cast<double>(P.P.rows()) / static_cast<double>(P.P.cols());
  return normalization_error(P, Vector::Constant(P.P.cols(), target));
}

GroundTruth::GroundTruth(Eigen::Index n_queries, Eigen::Index n_items)
    : n_items_(n_items), items_(static_cast<std::size_t>(std::max<Eigen::Index>(n_queries, 0))) {
  if (n_queries < 1 || n_items < 1) {
    throw Error(ErrorKind::kInvalidArgument, "ground truth needs at least one query and item");
  }
}

GroundTruth GroundTruth::diagonal(Eigen::Index n) {
  GroundTruth gt(n, n);
  for (Eigen::Index i = 0; i < n; ++i) gt.add(i, i);
  return gt;
}

GroundTruth GroundTruth::from_pairs(
    Eigen::Index n_queries, Eigen::Index n_items,
    const std::vector<std::pair<Eigen::Index, Eigen::Index>>& pairs) {
  GroundTruth gt(n_queries, n_items);
  for (const auto& [q, item] : pairs) gt.add(q, item);
  return gt;
}

void GroundTruth::add(Eigen::Index query, Eigen::Index item) {
  if (query < 0 || query >= n_queries() || item < 0 || item >= n_items_) {
    throw Error(ErrorKind::kInvalidArgument,
                "ground-truth pair (" + std::to_string(query) + ", " + std::to_string(item) +
                    ") out of range");
  }
  auto& row = items_[static_cast<std::size_t>(query)];
  const int value = static_cast<int>(item);
  auto pos = std::lower_bound(row.begin(), row.end(), value);
  if (pos == row.end() || *pos != value) row.insert(pos, value);
}

GroundTruth GroundTruth::read(const std::filesystem::path& path, Eigen::Index n_queries,
                              Eigen::Index n_items, const IdManifest* query_ids,
                              const IdManifest* item_ids) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  GroundTruth gt(n_queries, n_items);
  std::string line;
  std::size_t line_no = 0;
  auto parse_index = [&](const std::string& token, const IdManifest* ids) -> Eigen::Index {
    if (ids) return static_cast<Eigen::Index>(ids->index_of(token));
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size()) {
      throw Error(ErrorKind::kFormat,
                  path.string() + ":" + std::to_string(line_no) + ": bad index '" + token + "'");
    }
    return static_cast<Eigen::Index>(v);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string q, item, extra;
    if (!(fields >> q)) continue;
    if (!(fields >> item) || (fields >> extra)) {
      throw Error(ErrorKind::kFormat,
                  path.string() + ":" + std::to_string(line_no) + ": expected 'query item'");
    }
    const Eigen::Index qi = parse_index(q, query_ids);
    const Eigen::Index ii = parse_index(item, item_ids);
    if (qi < 0 || qi >= n_queries || ii < 0 || ii >= n_items) {
      throw Error(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) +
                                          ": pair (" + std::to_string(qi) + ", " +
                                          std::to_string(ii) + ") out of range for " +
                                          std::to_string(n_queries) + "x" +
                                          std::to_string(n_items));
    }
    gt.add(qi, ii);
  }
  return gt;
}

GroundTruth GroundTruth::transposed() const {
  GroundTruth out(n_items_, n_queries());
  for (std::size_t q = 0; q < items_.size(); ++q) {
    for (int item : items_[q]) out.items_[static_cast<std::size_t>(item)].push_back(static_cast<int>(q));
  }
  return out;
}

std::vector<std::int64_t> GroundTruth::item_counts() const {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n_items_), 0);
  for (const auto& row : items_) {
    for (int item : row) ++counts[static_cast<std::size_t>(item)];
  }
  return counts;
}

bool GroundTruth::every_query_covered() const {
  return std::all_of(items_.begin(), items_.end(), [](const auto& r) { return !r.empty(); });
}

MarginalPrior prior_from_ground_truth(const GroundTruth& gt) {
  const std::vector<std::int64_t> counts = gt.item_counts();
  if (std::all_of(counts.begin(), counts.end(), [](std::int64_t c) { return c > 0; })) {
    return MarginalPrior::from_item_counts(gt.n_queries(), counts);
  }
  return MarginalPrior::uniform(gt.n_queries(), gt.n_items());
}

std::vector<int> rank_matrix(const SimilarityMatrix& S, const GroundTruth& gt) {
  if (gt.n_queries() != S.rows() || gt.n_items() != S.cols()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "ground truth is " + std::to_string(gt.n_queries()) + "x" +
                    std::to_string(gt.n_items()) + " but scores are " +
                    std::to_string(S.rows()) + "x" + std::to_string(S.cols()));
  }
  std::vector<int> ranks(static_cast<std::size_t>(S.rows()));
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    const auto& truth = gt.items_for(i);
    if (truth.empty()) {
      throw Error(ErrorKind::kMissingGroundTruth,
                  "query " + std::to_string(i) + " has no ground-truth item",
                  static_cast<std::size_t>(i));
    }
    int best = static_cast<int>(S.cols()) + 1;
    for (int g : truth) {
      const double score = S.values(i, g);
      int ahead = 0;
      for (Eigen::Index j = 0; j < S.cols(); ++j) {
        const double s = S.values(i, j);
        if (s > score || (s == score && j < g)) ++ahead;
      }
      best = std::min(best, ahead + 1);
    }
    ranks[static_cast<std::size_t>(i)] = best;
  }
  return ranks;
}

std::pair<double, double> directional_normalization_errors(const SimilarityMatrix& S,
                                                           double gamma,
                                                           const MarginalPrior& prior) {
  const auto m = static_cast<double>(S.rows());
  const auto n = static_cast<double>(S.cols());
  const RetrievalDistribution t2v = retrieval_distribution(S, gamma, Direction::kT2V);
  const RetrievalDistribution v2t = retrieval_distribution(S, gamma, Direction::kV2T);
  const double t2v_err = normalization_error(t2v, m * prior.c(), m * prior.r());
  const double v2t_err = normalization_error(v2t, n * prior.r(), n * prior.c());
  return {t2v_err, v2t_err};
}

MetricsReport compute_metrics(const SimilarityMatrix& S, const GroundTruth& gt, double gamma,
                              const std::vector<int>& ks, Direction direction) {
  for (int k : ks) {
    if (k < 1) throw Error(ErrorKind::kInvalidArgument, "recall cut-off must be >= 1");
  }
  const std::vector<int> ranks = direction == Direction::kT2V
                                     ? rank_matrix(S, gt)
                                     : rank_matrix(S.transposed(), gt.transposed());
  MetricsReport report;
  report.direction = direction;
  report.gamma = gamma;
  for (int k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r <= k; });
    report.recall_at[k] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  std::vector<int> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  report.median_rank = sorted[(sorted.size() - 1) / 2];
  double sum = 0.0;
  for (int r : ranks) sum += r;
  report.mean_rank = sum / static_cast<double>(ranks.size());
  const auto [t2v_err, v2t_err] =
      directional_normalization_errors(S, gamma, prior_from_ground_truth(gt));
  report.t2v_norm_error = t2v_err;
  report.v2t_norm_error = v2t_err;
  return report;
}

CsvWriter metrics_csv(const MetricsReport& report, std::string comment) {
  std::vector<std::string> header = {"direction", "gamma"};
  std::vector<std::string> row = {to_string(report.direction), format_number(report.gamma)};
  for (const auto& [k, value] : report.recall_at) {
    header.push_back("R@" + std::to_string(k));
    row.push_back(format_number(value));
  }
  for (const auto& name : {"median_rank", "mean_rank", "t2v_norm_error", "v2t_norm_error"}) {
    header.emplace_back(name);
  }
  row.push_back(format_number(report.median_rank));
  row.push_back(format_number(report.mean_rank));
  row.push_back(format_number(report.t2v_norm_error));
  row.push_back(format_number(report.v2t_norm_error));
  CsvWriter csv(std::move(header), std::move(comment));
  csv.add_row(std::move(row));
  return csv;
}

std::optional<std::size_t> FalseRateProfile::bin_of(double value) const {
  if (bin_edges.size() < 2 || value < bin_edges.front() || value > bin_edges.back()) {
    return std::nullopt;
  }
  auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), value);
  auto idx = static_cast<std::size_t>(it - bin_edges.begin());
  return std::min(idx == 0 ? 0 : idx - 1, bins() - 1);
}

FalseRateProfile false_rate_profile(const RetrievalDistribution& P, const GroundTruth& gt,
                                    std::vector<double> edges) {
  if (edges.size() < 3) throw Error(ErrorKind::kInvalidArgument, "need at least two bins");
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw Error(ErrorKind::kInvalidArgument, "bin edges must be strictly increasing");
  }
  const Eigen::Index m = P.P.rows();
  const Eigen::Index n = P.P.cols();
  if (gt.n_queries() != m || gt.n_items() != n) {
    throw Error(ErrorKind::kDimensionMismatch, "ground truth does not match distribution shape");
  }

  // Top-1 item per query, lowest index on ties.
  std::vector<Eigen::Index> top1(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < n; ++j) {
      if (P.P(i, j) > P.P(i, best)) best = j;
    }
    top1[static_cast<std::size_t>(i)] = best;
  }
  const GroundTruth item_queries = gt.transposed();
  const Vector mass = summed_retrieval_mass(P);

  FalseRateProfile profile;
  const std::size_t bins = edges.size() - 1;
  profile.bin_edges = std::move(edges);
  profile.counts.assign(bins, 0);
  std::vector<double> fn(bins, 0.0), positives(bins, 0.0), fp(bins, 0.0), negatives(bins, 0.0);

  for (Eigen::Index j = 0; j < n; ++j) {
    std::size_t bin = 0;
    if (auto b = profile.bin_of(mass(j))) {
      bin = *b;
    } else {
      bin = mass(j) < profile.bin_edges.front() ? 0 : bins - 1;
    }
    ++profile.counts[bin];

    const auto& true_queries = item_queries.items_for(j);
    if (!true_queries.empty()) {
      positives[bin] += 1.0;
      const bool found = std::any_of(true_queries.begin(), true_queries.end(), [&](int q) {
        return top1[static_cast<std::size_t>(q)] == j;
      });
      if (!found) fn[bin] += 1.0;
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& truth = gt.items_for(i);
      if (std::binary_search(truth.begin(), truth.end(), static_cast<int>(j))) continue;
      negatives[bin] += 1.0;
      if (top1[static_cast<std::size_t>(i)] == j) fp[bin] += 1.0;
    }
  }
  profile.false_negative_rate.resize(bins);
  profile.false_positive_rate.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    profile.false_negative_rate[b] = positives[b] > 0 ? fn[b] / positives[b] : 0.0;
    profile.false_positive_rate[b] = negatives[b] > 0 ? fp[b] / negatives[b] : 0.0;
  }
  return profile;
}

FalseRateProfile false_rate_profile(const RetrievalDistribution& P, const GroundTruth& gt,
                                    std::size_t bins) {
  if (bins < 2) throw Error(ErrorKind::kInvalidArgument, "need at least two bins");
  const Vector mass = summed_retrieval_mass(P);
  const double hi = std::max(2.0, mass.size() ? mass.maxCoeff() : 2.0);
  std::vector<double> edges(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    edges[b] = hi * static_cast<double>(b) / static_cast<double>(bins);
  }
  return false_rate_profile(P, gt, std::move(edges));
}

CsvWriter false_rate_csv(const FalseRateProfile& profile, std::string comment) {
  CsvWriter csv({"bin_lo", "bin_hi", "count", "fnr", "fpr"}, std::move(comment));
  for (std::size_t b = 0; b < profile.bins(); ++b) {
    csv.add_row({format_number(profile.bin_edges[b]), format_number(profile.bin_edges[b + 1]),
                 format_number(static_cast<long long>(profile.counts[b])),
                 format_number(profile.false_negative_rate[b]),
                 format_number(profile.false_positive_rate[b])});
  }
  return csv;
}

}  // namespace nclkit
