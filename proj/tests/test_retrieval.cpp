#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nclkit/retrieval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace nclkit;
using nclkit::testing::check_error_kind;
using nclkit::testing::random_similarity;

namespace {

std::vector<std::vector<int>> diagonal_lists(int n) {
  std::vector<std::vector<int>> out;
  for (int i = 0; i < n; ++i) out.push_back({i});
  return out;
}

}  // namespace

TEST_CASE("retrieval_distribution softmax") {
  Matrix flat(1, 2);
  flat << 0, 0;
  const RetrievalDistribution p = retrieval_distribution(SimilarityMatrix(flat), 1.0, Direction::kT2V);
  CHECK(p.P(0, 0) == doctest::Approx(0.5));
  CHECK(p.P(0, 1) == doctest::Approx(0.5));

  Matrix sharp(1, 2);
  sharp << 10, 0;
  const RetrievalDistribution q =
      retrieval_distribution(SimilarityMatrix(sharp), 0.1, Direction::kT2V);
  CHECK(q.P(0, 0) >= 1.0 - 1e-40);
  CHECK(q.P(0, 1) < 1e-40);
  CHECK(q.P(0, 1) > 0.0);
  CHECK(q.P.row(0).sum() == 1.0);

  std::mt19937_64 rng(6);
  const SimilarityMatrix S = random_similarity(rng, 6, 6);
  for (Direction d : {Direction::kT2V, Direction::kV2T}) {
    const RetrievalDistribution sharp_p = retrieval_distribution(S, 0.05, d);
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(std::abs(sharp_p.P.row(i).sum() - 1.0) < 1e-9);
    const RetrievalDistribution soft = retrieval_distribution(S, 1.0, d);
    const Matrix expected =
        oracle::direct_softmax(d == Direction::kT2V ? S.values : Matrix(S.values.transpose()));
    CHECK((soft.P - expected).cwiseAbs().maxCoeff() < 1e-14);
  }
  check_error_kind([&] { retrieval_distribution(S, 0.0, Direction::kT2V); },
                   ErrorKind::kInvalidArgument);
}

TEST_CASE("normalization_error") {
  RetrievalDistribution uniform;
  uniform.P = Matrix::Constant(3, 3, 1.0 / 3.0);
  CHECK(normalization_error(uniform) == doctest::Approx(0.0));

  RetrievalDistribution skewed;
  skewed.P.resize(3, 3);
  skewed.P << 1, 0, 0, 1, 0, 0, 0, 0, 1;
  CHECK(normalization_error(skewed) == doctest::Approx(2.0 / 3.0));

  std::mt19937_64 rng(10);
  const SimilarityMatrix S = random_similarity(rng, 9, 9);
  SinkhornOptions opts;
  opts.tol = 1e-12;
  const SimilarityMatrix S_star = adjust_similarity(S, compute_biases(S, 0.05, opts));
  CHECK(normalization_error(retrieval_distribution(S_star, 0.05, Direction::kT2V)) < 1e-6);
  CHECK(normalization_error(retrieval_distribution(S_star, 0.05, Direction::kV2T)) < 1e-6);
  CHECK(normalization_error(retrieval_distribution(S, 0.05, Direction::kT2V)) > 1e-3);
}

TEST_CASE("normalization_error ignores query order") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const SimilarityMatrix S = random_similarity(rng, 8, 5);
    const RetrievalDistribution p = retrieval_distribution(S, 0.1, Direction::kT2V);
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    RetrievalDistribution permuted = p;
    for (int i = 0; i < 8; ++i) permuted.P.row(i) = p.P.row(perm[static_cast<std::size_t>(i)]);
    CHECK(std::abs(normalization_error(p) - normalization_error(permuted)) < 1e-12);
  }
}

TEST_CASE("rank_matrix") {
  Matrix eye = Matrix::Identity(4, 4);
  const std::vector<int> perfect = rank_matrix(SimilarityMatrix(eye), GroundTruth::diagonal(4));
  CHECK(std::all_of(perfect.begin(), perfect.end(), [](int r) { return r == 1; }));

  Matrix row(1, 3);
  row << 0.1, 0.9, 0.5;
  CHECK(rank_matrix(SimilarityMatrix(row), GroundTruth::from_pairs(1, 3, {{0, 0}}))[0] == 3);

  // Ties resolve by item index.
  Matrix tied(1, 3);
  tied << 0.5, 0.5, 0.5;
  CHECK(rank_matrix(SimilarityMatrix(tied), GroundTruth::from_pairs(1, 3, {{0, 0}}))[0] == 1);
  CHECK(rank_matrix(SimilarityMatrix(tied), GroundTruth::from_pairs(1, 3, {{0, 2}}))[0] == 3);
  // Multiple correct items: best rank counts.
  CHECK(rank_matrix(SimilarityMatrix(row), GroundTruth::from_pairs(1, 3, {{0, 0}, {0, 2}}))[0] ==
        2);

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix s = nclkit::testing::gaussian_matrix(rng, 20, 20);
    // Coarse rounding forces ties.
    s = (s * 4.0).array().round().matrix();
    const std::vector<int> got = rank_matrix(SimilarityMatrix(s), GroundTruth::diagonal(20));
    CHECK(got == oracle::sort_ranks(s, diagonal_lists(20)));
  }

  GroundTruth partial(2, 2);
  partial.add(0, 0);
  check_error_kind([&] { rank_matrix(SimilarityMatrix(Matrix::Zero(2, 2)), partial); },
                   ErrorKind::kMissingGroundTruth);
  check_error_kind([&] { rank_matrix(SimilarityMatrix(Matrix::Zero(3, 2)), partial); },
                   ErrorKind::kDimensionMismatch);
  check_error_kind([&] { partial.add(0, 5); }, ErrorKind::kInvalidArgument);
}

TEST_CASE("compute_metrics") {
  const std::vector<int> ks = {1, 2, 5};
  const MetricsReport perfect =
      compute_metrics(SimilarityMatrix(Matrix::Identity(5, 5)), GroundTruth::diagonal(5), 0.05, ks);
  CHECK(perfect.recall_at.at(1) == 1.0);
  CHECK(perfect.median_rank == 1.0);
  CHECK(perfect.mean_rank == 1.0);

  // Ground truth always scored lowest.
  Matrix reversed(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) reversed(i, j) = i == j ? -1.0 : static_cast<double>(j);
  const MetricsReport worst =
      compute_metrics(SimilarityMatrix(reversed), GroundTruth::diagonal(4), 0.05, {1, 4});
  CHECK(worst.recall_at.at(1) == 0.0);
  CHECK(worst.recall_at.at(4) == 1.0);
  CHECK(worst.mean_rank == 4.0);
  CHECK(worst.median_rank == 4.0);

  std::mt19937_64 rng(23);
  const SimilarityMatrix S = random_similarity(rng, 50, 50);
  const std::vector<int> cuts = {1, 5, 10, 50};
  for (Direction d : {Direction::kT2V, Direction::kV2T}) {
    const MetricsReport report = compute_metrics(S, GroundTruth::diagonal(50), 0.05, cuts, d);
    const Matrix scores = d == Direction::kT2V ? S.values : Matrix(S.values.transpose());
    std::vector<int> ranks = oracle::sort_ranks(scores, diagonal_lists(50));
    for (int k : cuts) {
      const double expected =
          static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r <= k; })) /
          50.0;
      CHECK(report.recall_at.at(k) == expected);
    }
    std::sort(ranks.begin(), ranks.end());
    CHECK(report.median_rank == ranks[24]);
    double mean = 0;
    for (int r : ranks) mean += r;
    CHECK(report.mean_rank == doctest::Approx(mean / 50.0));
    CHECK(report.recall_at.at(50) == 1.0);
    // Monotone in K.
    double prev = 0.0;
    for (const auto& [k, v] : report.recall_at) {
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("per-query shifts keep text-to-video ranks") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const SimilarityMatrix S = random_similarity(rng, 15, 15);
    const Vector a = nclkit::testing::gaussian_matrix(rng, 15, 1);
    const SimilarityMatrix shifted = adjust_similarity(S, a, Vector::Zero(15));
    CHECK(rank_matrix(S, GroundTruth::diagonal(15)) == rank_matrix(shifted, GroundTruth::diagonal(15)));
  }
}

TEST_CASE("false_rate_profile") {
  RetrievalDistribution uniform;
  uniform.P = Matrix::Constant(3, 3, 1.0 / 3.0);
  const FalseRateProfile flat = false_rate_profile(uniform, GroundTruth::diagonal(3), 3);
  const std::size_t one_bin = *flat.bin_of(1.0);
  CHECK(flat.counts[one_bin] == 3);

  RetrievalDistribution hub;
  hub.P = Matrix::Zero(4, 4);
  hub.P.col(0).setOnes();
  const FalseRateProfile hubbed = false_rate_profile(hub, GroundTruth::diagonal(4), 4);
  const std::size_t hub_bin = *hubbed.bin_of(4.0);
  const std::size_t empty_bin = *hubbed.bin_of(0.0);
  CHECK(hub_bin != empty_bin);
  CHECK(hubbed.counts[hub_bin] == 1);
  CHECK(hubbed.false_positive_rate[hub_bin] == 1.0);
  CHECK(hubbed.false_negative_rate[hub_bin] == 0.0);
  CHECK(hubbed.counts[empty_bin] == 3);
  CHECK(hubbed.false_negative_rate[empty_bin] == 1.0);

  std::size_t total = 0;
  for (auto c : hubbed.counts) total += c;
  CHECK(total == 4);
  for (std::size_t b = 0; b < hubbed.bins(); ++b) {
    CHECK(hubbed.false_negative_rate[b] >= 0.0);
    CHECK(hubbed.false_negative_rate[b] <= 1.0);
    CHECK(hubbed.false_positive_rate[b] >= 0.0);
    CHECK(hubbed.false_positive_rate[b] <= 1.0);
  }

  check_error_kind([&] { false_rate_profile(uniform, GroundTruth::diagonal(3), 1); },
                   ErrorKind::kInvalidArgument);
}

TEST_CASE("GroundTruth file parsing and transpose") {
  const auto path = std::filesystem::temp_directory_path() / "nclkit_gt_test.txt";
  {
    std::ofstream out(path);
    out << "# caption video\n0 1\n1 1  # second caption\n\n2 0\n";
  }
  const GroundTruth gt = GroundTruth::read(path, 3, 2);
  CHECK(gt.items_for(0) == std::vector<int>{1});
  CHECK(gt.item_counts() == std::vector<std::int64_t>{1, 2});
  const GroundTruth back = gt.transposed();
  CHECK(back.items_for(1) == std::vector<int>{0, 1});
  const MarginalPrior prior = prior_from_ground_truth(gt);
  CHECK(prior.c()(1) == doctest::Approx(2.0 / 3.0));

  {
    std::ofstream out(path);
    out << "0 7\n";
  }
  check_error_kind([&] { GroundTruth::read(path, 3, 2); }, ErrorKind::kFormat);

  const IdManifest captions({"c0", "c1", "c2"});
  const IdManifest videos({"vidA", "vidB"});
  {
    std::ofstream out(path);
    out << "c2 vidB\n";
  }
  const GroundTruth named = GroundTruth::read(path, 3, 2, &captions, &videos);
  CHECK(named.items_for(2) == std::vector<int>{1});
  std::filesystem::remove(path);
}

TEST_CASE("metrics and false-rate CSV layout") {
  const MetricsReport report =
      compute_metrics(SimilarityMatrix(Matrix::Identity(3, 3)), GroundTruth::diagonal(3), 0.05,
                      {1, 5});
  std::ostringstream out;
  metrics_csv(report, "nclkit test").write(out);
  std::istringstream lines(out.str());
  std::string comment, header, values, extra;
  std::getline(lines, comment);
  std::getline(lines, header);
  std::getline(lines, values);
  CHECK(comment == "# nclkit test");
  CHECK(header == "direction,gamma,R@1,R@5,median_rank,mean_rank,t2v_norm_error,v2t_norm_error");
  CHECK(values.rfind("t2v,0.05,1,1,1,1,", 0) == 0);
  CHECK(!std::getline(lines, extra));

  RetrievalDistribution uniform;
  uniform.P = Matrix::Constant(2, 2, 0.5);
  std::ostringstream fr;
  false_rate_csv(false_rate_profile(uniform, GroundTruth::diagonal(2), 2)).write(fr);
  CHECK(fr.str().rfind("bin_lo,bin_hi,count,fnr,fpr\n0,1,0,0,0\n1,2,2,", 0) == 0);
}
