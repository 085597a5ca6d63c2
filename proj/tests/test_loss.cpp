#include <cmath>
#include <vector>

#include "doctest.h"
#include "nclkit/loss.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace nclkit;
using nclkit::testing::check_error_kind;
using nclkit::testing::gaussian_matrix;
using nclkit::testing::random_unit;

namespace {

std::vector<double> flatten(const Matrix& a, const Matrix& b) {
  std::vector<double> out(a.data(), a.data() + a.size());
  out.insert(out.end(), b.data(), b.data() + b.size());
  return out;
}

std::pair<Matrix, Matrix> unflatten(std::span<const double> x, Eigen::Index rows,
                                    Eigen::Index cols) {
  Matrix a(rows, cols), b(rows, cols);
  std::copy(x.begin(), x.begin() + a.size(), a.data());
  std::copy(x.begin() + a.size(), x.begin() + a.size() + b.size(), b.data());
  return {a, b};
}

// Loss straight from the definition: exp, divide, log.
LossValue reference_loss(const Matrix& T, const Matrix& V, double gamma, const Vector& a,
                         const Vector& b) {
  const Eigen::Index B = T.rows();
  Matrix logits(B, B);
  for (Eigen::Index i = 0; i < B; ++i)
    for (Eigen::Index j = 0; j < B; ++j) logits(i, j) = (a(i) + b(j) + T.row(i).dot(V.row(j))) / gamma;
  const Matrix rows = oracle::direct_softmax(logits);
  const Matrix cols = oracle::direct_softmax(logits.transpose());
  LossValue out;
  for (Eigen::Index i = 0; i < B; ++i) {
    out.t2v -= std::log(rows(i, i)) / static_cast<double>(B);
    out.v2t -= std::log(cols(i, i)) / static_cast<double>(B);
  }
  out.total = 0.5 * (out.t2v + out.v2t);
  return out;
}

}  // namespace

TEST_CASE("contrastive loss closed form for an orthonormal pair") {
  const Matrix I = Matrix::Identity(2, 2);
  const LossResult res = contrastive_loss(I, I, 1.0);
  const double expected = std::log(1.0 + std::exp(-1.0));
  CHECK(res.loss.t2v == doctest::Approx(expected).epsilon(1e-14));
  CHECK(res.loss.v2t == doctest::Approx(expected).epsilon(1e-14));
  CHECK(res.loss.total == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("contrastive loss saturates to zero for well separated pairs") {
  const Matrix I = Matrix::Identity(4, 4);
  const LossResult res = contrastive_loss(I, I, 0.01);
  CHECK(res.loss.total < 1e-40);
  CHECK(res.loss.total >= 0.0);
}

TEST_CASE("loss value matches the direct definition") {
  std::mt19937_64 rng(50);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix T = random_unit(rng, 6, 10).vectors();
    const Matrix V = random_unit(rng, 6, 10).vectors();
    const LossResult res = contrastive_loss(T, V, 0.1);
    const LossValue ref = reference_loss(T, V, 0.1, Vector::Zero(6), Vector::Zero(6));
    CHECK(res.loss.t2v == doctest::Approx(ref.t2v).epsilon(1e-12));
    CHECK(res.loss.v2t == doctest::Approx(ref.v2t).epsilon(1e-12));
    CHECK(std::abs(res.loss.total - 0.5 * (res.loss.t2v + res.loss.v2t)) < 1e-12);
  }
}

TEST_CASE("contrastive gradients match central differences") {
  std::mt19937_64 rng(61);
  for (double gamma : {1.0, 0.1, 0.05}) {
    for (int trial = 0; trial < 3; ++trial) {
      const Matrix T = random_unit(rng, 8, 16).vectors();
      const Matrix V = random_unit(rng, 8, 16).vectors();
      const LossResult res = contrastive_loss(T, V, gamma);
      CHECK(res.grad.d_text.allFinite());
      CHECK(res.grad.d_video.allFinite());
      const auto x = flatten(T, V);
      const auto g = flatten(res.grad.d_text, res.grad.d_video);
      const auto report = finite_difference_check(
          [&](std::span<const double> p) {
            auto [t, v] = unflatten(p, 8, 16);
            return contrastive_loss(t, v, gamma).loss.total;
          },
          x, g, 1e-5);
      MESSAGE("gamma=" << gamma << " max rel err " << report.max_rel_error);
      CHECK(report.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("ncl loss with identical embeddings is log B") {
  Matrix same(5, 3);
  for (Eigen::Index i = 0; i < 5; ++i) same.row(i) << 0.6, 0.8, 0.0;
  const NclLossResult res = ncl_loss(same, same, 0.05);
  CHECK(res.loss.t2v == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(res.loss.v2t == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(res.biases.a(i) == doctest::Approx(0.05 * std::log(0.2)).epsilon(1e-12));
  }
}

TEST_CASE("ncl loss with converged biases") {
  std::mt19937_64 rng(71);
  const Matrix T = random_unit(rng, 8, 16).vectors();
  const Matrix V = random_unit(rng, 8, 16).vectors();
  SinkhornOptions opts;
  opts.tol = 1e-13;
  const NclLossResult res = ncl_loss(T, V, 0.1, opts);
  const SimilarityMatrix S_star =
      adjust_similarity(SimilarityMatrix(inner_products(T, V)), res.biases);
  const RetrievalDistribution t2v = retrieval_distribution(S_star, 0.1, Direction::kT2V);
  const RetrievalDistribution v2t = retrieval_distribution(S_star, 0.1, Direction::kV2T);
  CHECK(normalization_error(t2v) < 1e-9);
  CHECK(normalization_error(v2t) < 1e-9);
  double t2v_loss = 0.0, v2t_loss = 0.0;
  for (int i = 0; i < 8; ++i) {
    t2v_loss -= std::log(t2v.P(i, i)) / 8.0;
    v2t_loss -= std::log(v2t.P(i, i)) / 8.0;
  }
  CHECK(res.loss.t2v == doctest::Approx(t2v_loss).epsilon(1e-12));
  CHECK(res.loss.v2t == doctest::Approx(v2t_loss).epsilon(1e-12));
  const LossValue ref = reference_loss(T, V, 0.1, res.biases.a, res.biases.b);
  CHECK(res.loss.total == doctest::Approx(ref.total).epsilon(1e-12));
}

TEST_CASE("frozen-bias ncl gradients match central differences") {
  std::mt19937_64 rng(83);
  for (double gamma : {1.0, 0.1, 0.05}) {
    const Matrix T = random_unit(rng, 8, 16).vectors();
    const Matrix V = random_unit(rng, 8, 16).vectors();
    const NclLossResult res = ncl_loss(T, V, gamma);
    const auto report = finite_difference_check(
        [&](std::span<const double> p) {
          auto [t, v] = unflatten(p, 8, 16);
          return adjusted_contrastive_loss(t, v, gamma, res.biases).loss.total;
        },
        flatten(T, V), flatten(res.grad.d_text, res.grad.d_video), 1e-5);
    MESSAGE("gamma=" << gamma << " max rel err " << report.max_rel_error);
    CHECK(report.max_rel_error < 1e-5);
  }
}

TEST_CASE("bias gradient") {
  RetrievalDistribution uniform;
  uniform.P = Matrix::Constant(3, 3, 1.0 / 3.0);
  CHECK(bias_gradient(uniform).cwiseAbs().maxCoeff() < 1e-16);

  RetrievalDistribution hub;
  hub.P.resize(2, 2);
  hub.P << 1, 0, 1, 0;
  const Vector g = bias_gradient(hub);
  CHECK(g(0) == doctest::Approx(0.25));
  CHECK(g(1) == doctest::Approx(-0.25));
}

TEST_CASE("bias gradient matches finite differences of the text-to-video loss") {
  std::mt19937_64 rng(97);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix logits = gaussian_matrix(rng, 8, 8, 2.0);
    RetrievalDistribution P;
    P.P = oracle::direct_softmax(logits);
    const Vector analytic = bias_gradient(P);
    // Half of the text-to-video loss as a function of additive item biases
    // on the logits.
    auto half_t2v = [&](std::span<const double> b) {
      double loss = 0.0;
      for (Eigen::Index i = 0; i < 8; ++i) {
        double z = 0.0;
        for (Eigen::Index k = 0; k < 8; ++k) z += std::exp(logits(i, k) + b[static_cast<std::size_t>(k)]);
        loss -= (logits(i, i) + b[static_cast<std::size_t>(i)] - std::log(z)) / 8.0;
      }
      return 0.5 * loss;
    };
    const std::vector<double> zero(8, 0.0);
    const auto report = finite_difference_check(
        half_t2v, zero, std::span<const double>(analytic.data(), 8), 1e-5);
    CHECK(report.max_rel_error < 1e-5);
  }
}

TEST_CASE("the video-to-text half does not depend on item biases") {
  std::mt19937_64 rng(101);
  const Matrix T = random_unit(rng, 6, 8).vectors();
  const Matrix V = random_unit(rng, 6, 8).vectors();
  BiasVectors shifted;
  shifted.a = Vector::Zero(6);
  shifted.b = gaussian_matrix(rng, 6, 1);
  shifted.gamma = 1.0;
  BiasVectors none = shifted;
  none.b.setZero();
  CHECK(adjusted_contrastive_loss(T, V, 1.0, shifted).loss.v2t ==
        doctest::Approx(adjusted_contrastive_loss(T, V, 1.0, none).loss.v2t).epsilon(1e-12));
}

TEST_CASE("finite_difference_check on simple functions") {
  const std::vector<double> x = {3.0};
  const std::vector<double> g = {6.0};
  const auto quad = finite_difference_check(
      [](std::span<const double> p) { return p[0] * p[0]; }, x, g, 1e-5);
  CHECK(quad.max_rel_error < 1e-9);
  const std::vector<double> g_lin = {5.0};
  const auto lin = finite_difference_check(
      [](std::span<const double> p) { return 5.0 * p[0]; }, x, g_lin, 1e-5);
  CHECK(lin.max_rel_error < 1e-9);
  const std::vector<double> wrong = {7.0};
  const auto bad = finite_difference_check(
      [](std::span<const double> p) { return p[0] * p[0]; }, x, wrong, 1e-5);
  CHECK(bad.max_rel_error > 0.1);
}

TEST_CASE("loss error paths") {
  const Matrix one = Matrix::Identity(1, 2);
  check_error_kind([&] { contrastive_loss(one, one, 1.0); }, ErrorKind::kBatchTooSmall);
  const Matrix two = Matrix::Identity(2, 2);
  check_error_kind([&] { contrastive_loss(two, Matrix::Identity(3, 3), 1.0); },
                   ErrorKind::kDimensionMismatch);
  check_error_kind([&] { contrastive_loss(two, two, 0.0); }, ErrorKind::kInvalidArgument);
}

TEST_CASE("one ncl step lowers the adjusted text-to-video error on its batch") {
  const double gamma = 0.05;
  auto adjusted_error = [&](const Matrix& t, const Matrix& v) {
    const SimilarityMatrix S(inner_products(t, v));
    const BiasVectors b = compute_biases(S, gamma, SinkhornOptions{});
    return normalization_error(retrieval_distribution(adjust_similarity(S, b), gamma, Direction::kT2V));
  };
  int failures = 0;
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(1000 + static_cast<unsigned>(seed));
    const Matrix T = random_unit(rng, 16, 16).vectors();
    const Matrix V = random_unit(rng, 16, 16).vectors();
    const double before = adjusted_error(T, V);
    const NclLossResult res = ncl_loss(T, V, gamma);
    Matrix T1 = T - 0.01 * res.grad.d_text;
    Matrix V1 = V - 0.01 * res.grad.d_video;
    l2_normalize_rows(T1);
    l2_normalize_rows(V1);
    const double after = adjusted_error(T1, V1);
    MESSAGE("seed " << seed << ": " << before << " -> " << after);
    if (after > before) ++failures;
  }
  CHECK(failures <= 1);
}
