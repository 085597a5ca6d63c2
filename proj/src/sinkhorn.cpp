#include "nclkit/sinkhorn.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "nclkit/error.hpp"
#include "nclkit/softmax.hpp"

namespace nclkit {

namespace {

void check_simplex(const Vector& v, const char* name) {
  if (v.size() < 1) throw Error(ErrorKind::kInvalidArgument, std::string(name) + " is empty");
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v(i) > 0.0) || !std::isfinite(v(i))) {
      throw Error(ErrorKind::kInvalidArgument,
                  std::string(name) + "[" + std::to_string(i) + "] must be positive and finite",
                  static_cast<std::size_t>(i));
    }
  }
  if (std::abs(v.sum() - 1.0) > MarginalPrior::kSumTolerance) {
    throw Error(ErrorKind::kInvalidArgument, std::string(name) + " does not sum to 1");
  }
}

void check_prior_shape(Eigen::Index m, Eigen::Index n, const MarginalPrior& prior) {
  if (prior.rows() != m || prior.cols() != n) {
    throw Error(ErrorKind::kDimensionMismatch,
                "prior is " + std::to_string(prior.rows()) + "x" + std::to_string(prior.cols()) +
                    " but matrix is " + std::to_string(m) + "x" + std::to_string(n));
  }
}

// A row or column whose kernel entries are all zero (log -inf) admits no
// scaling.
void check_support(const Matrix& log_kernel) {
  const Eigen::Index m = log_kernel.rows();
  const Eigen::Index n = log_kernel.cols();
  std::vector<char> col_ok(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < m; ++i) {
    bool row_ok = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = log_kernel(i, j);
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw Error(ErrorKind::kNonFinite,
                    "kernel entry (" + std::to_string(i) + ", " + std::to_string(j) +
                        ") is not finite");
      }
      if (v > -std::numeric_limits<double>::infinity()) {
        row_ok = true;
        col_ok[static_cast<std::size_t>(j)] = 1;
      }
    }
    if (!row_ok) {
      throw Error(ErrorKind::kDegenerateMatrix, "row " + std::to_string(i) + " has no positive entry",
                  static_cast<std::size_t>(i));
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!col_ok[static_cast<std::size_t>(j)]) {
      throw Error(ErrorKind::kDegenerateMatrix,
                  "column " + std::to_string(j) + " has no positive entry",
                  static_cast<std::size_t>(j));
    }
  }
}

int iteration_limit(const SinkhornOptions& opts) {
  return opts.tol ? opts.max_iters_cap : opts.n_iters;
}

void check_finite(const Vector& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v(i))) {
      throw Error(ErrorKind::kNonFinite,
                  std::string(what) + "[" + std::to_string(i) + "] overflowed",
                  static_cast<std::size_t>(i));
    }
  }
}

ScalingVectors iterate_log(const Matrix& L, const MarginalPrior& prior,
                           const SinkhornOptions& opts) {
  const Eigen::Index m = L.rows();
  const Eigen::Index n = L.cols();
  const auto mn = static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(n);
  const Matrix Lt = L.transpose();
  const Vector log_r = prior.r().array().log();
  const Vector log_c = prior.c().array().log();
  const int limit = iteration_limit(opts);

  ScalingVectors sv;
  sv.log_beta = -row_log_sum_exp(Lt);
  sv.log_alpha = Vector::Zero(m);
  sv.kernel_evaluations = mn;

  for (int t = 0;; ++t) {
    const Vector row_lse = row_log_sum_exp(L, sv.log_beta);
    sv.kernel_evaluations += mn;
    if (t > 0) {
      double residual = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        residual += std::abs(std::exp(sv.log_alpha(i) + row_lse(i)) - prior.r()(i));
      }
      sv.residual = residual;
      if (opts.record_history) sv.residual_history.push_back(residual);
      if (opts.tol && residual <= *opts.tol) {
        sv.iterations_run = t;
        break;
      }
    }
    if (t == limit) {
      sv.iterations_run = t;
      break;
    }
    sv.log_alpha = log_r - row_lse;
    const Vector col_lse = row_log_sum_exp(Lt, sv.log_alpha);
    sv.kernel_evaluations += mn;
    sv.log_beta = log_c - col_lse;
    check_finite(sv.log_alpha, "log_alpha");
    check_finite(sv.log_beta, "log_beta");
  }
  return sv;
}

ScalingVectors iterate_plain(const Matrix& K, const MarginalPrior& prior,
                             const SinkhornOptions& opts) {
  const Eigen::Index m = K.rows();
  const auto mn = static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(K.cols());
  const int limit = iteration_limit(opts);

  Vector alpha = Vector::Ones(m);
  Vector beta = K.colwise().sum().transpose().cwiseInverse();
  check_finite(beta, "beta");
  ScalingVectors sv;
  sv.kernel_evaluations = mn;

  for (int t = 0;; ++t) {
    const Vector row_mass = K * beta;
    sv.kernel_evaluations += mn;
    if (t > 0) {
      const double residual = (alpha.cwiseProduct(row_mass) - prior.r()).cwiseAbs().sum();
      if (!std::isfinite(residual)) throw Error(ErrorKind::kNonFinite, "residual overflowed");
      sv.residual = residual;
      if (opts.record_history) sv.residual_history.push_back(residual);
      if (opts.tol && residual <= *opts.tol) {
        sv.iterations_run = t;
        break;
      }
    }
    if (t == limit) {
      sv.iterations_run = t;
      break;
    }
    alpha = prior.r().cwiseQuotient(row_mass);
    check_finite(alpha, "alpha");
    const Vector col_mass = K.transpose() * alpha;
    sv.kernel_evaluations += mn;
    beta = prior.c().cwiseQuotient(col_mass);
    check_finite(beta, "beta");
  }
  sv.log_alpha = alpha.array().log();
  sv.log_beta = beta.array().log();
  check_finite(sv.log_alpha, "log_alpha");
  check_finite(sv.log_beta, "log_beta");
  return sv;
}

TransportPlan make_plan(const Matrix& L, const ScalingVectors& sv, const MarginalPrior& prior) {
  Matrix P(L.rows(), L.cols());
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    for (Eigen::Index j = 0; j < L.cols(); ++j) {
      P(i, j) = std::exp(sv.log_alpha(i) + L(i, j) + sv.log_beta(j));
    }
  }
  return TransportPlan{std::move(P), prior, sv.residual};
}

Matrix log_of(const Matrix& M) {
  Matrix L(M.rows(), M.cols());
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) L(i, j) = std::log(M(i, j));
  }
  return L;
}

void check_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorKind::kInvalidArgument, "temperature must be positive and finite");
  }
}

Matrix scaled_logits(const SimilarityMatrix& S, double gamma) { return S.values / gamma; }

}  // namespace

MarginalPrior::MarginalPrior(Vector r, Vector c) : r_(std::move(r)), c_(std::move(c)) {
  check_simplex(r_, "r");
  check_simplex(c_, "c");
}

MarginalPrior MarginalPrior::uniform(Eigen::Index m, Eigen::Index n) {
  if (m < 1 || n < 1) throw Error(ErrorKind::kInvalidArgument, "uniform prior needs m, n >= 1");
  return MarginalPrior(Vector::Constant(m, 1.0 / static_cast<double>(m)),
                       Vector::Constant(n, 1.0 / static_cast<double>(n)));
}

MarginalPrior MarginalPrior::from_item_counts(Eigen::Index m, std::span<const std::int64_t> counts) {
  if (m < 1 || counts.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "count prior needs m >= 1 and at least one item");
  }
  std::int64_t total = 0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] < 1) {
      throw Error(ErrorKind::kInvalidArgument,
                  "item " + std::to_string(j) + " has match count " + std::to_string(counts[j]),
                  j);
    }
    total += counts[j];
  }
  Vector c(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t j = 0; j < counts.size(); ++j) {
    c(static_cast<Eigen::Index>(j)) = static_cast<double>(counts[j]) / static_cast<double>(total);
  }
  return MarginalPrior(Vector::Constant(m, 1.0 / static_cast<double>(m)), std::move(c));
}

void SinkhornOptions::validate() const {
  if (n_iters < 1) throw Error(ErrorKind::kInvalidArgument, "n_iters must be >= 1");
  if (max_iters_cap < 1) throw Error(ErrorKind::kInvalidArgument, "max_iters_cap must be >= 1");
  if (tol && !(*tol >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "tol must be >= 0");
}

ScalingResult scale_log_kernel(const Matrix& log_kernel, const MarginalPrior& prior,
                               const SinkhornOptions& opts) {
  opts.validate();
  check_prior_shape(log_kernel.rows(), log_kernel.cols(), prior);
  check_support(log_kernel);
  ScalingVectors sv;
  if (opts.log_domain) {
    sv = iterate_log(log_kernel, prior, opts);
  } else {
    Matrix K = log_kernel.array().exp();
    if (!K.allFinite()) throw Error(ErrorKind::kNonFinite, "exp(kernel) overflowed");
    sv = iterate_plain(K, prior, opts);
  }
  TransportPlan plan = make_plan(log_kernel, sv, prior);
  return ScalingResult{std::move(sv), std::move(plan)};
}

ScalingResult scale_matrix(const Matrix& M, const MarginalPrior& prior,
                           const SinkhornOptions& opts) {
  opts.validate();
  check_prior_shape(M.rows(), M.cols(), prior);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (!(M(i, j) >= 0.0) || !std::isfinite(M(i, j))) {
        throw Error(ErrorKind::kInvalidArgument,
                    "entry (" + std::to_string(i) + ", " + std::to_string(j) +
                        ") is negative or not finite");
      }
    }
  }
  const Matrix L = log_of(M);
  check_support(L);
  ScalingVectors sv = opts.log_domain ? iterate_log(L, prior, opts) : iterate_plain(M, prior, opts);
  TransportPlan plan = make_plan(L, sv, prior);
  return ScalingResult{std::move(sv), std::move(plan)};
}

BiasVectors biases_from_scaling(const ScalingVectors& scaling, double gamma) {
  check_gamma(gamma);
  const double la_norm = log_sum_exp(scaling.log_alpha.data(), nullptr, scaling.log_alpha.size());
  const double lb_norm = log_sum_exp(scaling.log_beta.data(), nullptr, scaling.log_beta.size());
  BiasVectors out;
  out.a = gamma * (scaling.log_alpha.array() - la_norm).matrix();
  out.b = gamma * (scaling.log_beta.array() - lb_norm).matrix();
  out.gamma = gamma;
  out.residual = scaling.residual;
  out.iterations_run = scaling.iterations_run;
  out.kernel_evaluations = scaling.kernel_evaluations;
  return out;
}

BiasVectors compute_biases(const SimilarityMatrix& S, double gamma, const MarginalPrior& prior,
                           const SinkhornOptions& opts) {
  check_gamma(gamma);
  ScalingResult res = scale_log_kernel(scaled_logits(S, gamma), prior, opts);
  return biases_from_scaling(res.scaling, gamma);
}

BiasVectors compute_biases(const SimilarityMatrix& S, double gamma, const SinkhornOptions& opts) {
  return compute_biases(S, gamma, MarginalPrior::uniform(S.rows(), S.cols()), opts);
}

SimilarityMatrix adjust_similarity(const SimilarityMatrix& S, const Vector& a, const Vector& b) {
  if (a.size() != S.rows() || b.size() != S.cols()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "bias lengths (" + std::to_string(a.size()) + ", " + std::to_string(b.size()) +
                    ") do not match similarity shape " + std::to_string(S.rows()) + "x" +
                    std::to_string(S.cols()));
  }
  SimilarityMatrix out = S;
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    for (Eigen::Index j = 0; j < S.cols(); ++j) out.values(i, j) = a(i) + b(j) + S.values(i, j);
  }
  return out;
}

SimilarityMatrix adjust_similarity(const SimilarityMatrix& S, const BiasVectors& biases) {
  return adjust_similarity(S, biases.a, biases.b);
}

NormalizationCheck verify_normalization(const SimilarityMatrix& S_star, double gamma,
                                        const MarginalPrior& prior) {
  check_gamma(gamma);
  check_prior_shape(S_star.rows(), S_star.cols(), prior);
  const Eigen::Index m = S_star.rows();
  const Eigen::Index n = S_star.cols();
  const Matrix t2v = row_softmax(S_star.values / gamma);
  const Matrix v2t = row_softmax(S_star.values.transpose() / gamma);

  NormalizationCheck out;
  for (Eigen::Index j = 0; j < n; ++j) {
    double mass = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) mass += static_cast<double>(m) * prior.r()(i) * t2v(i, j);
    out.t2v_error = std::max(out.t2v_error, std::abs(mass - static_cast<double>(m) * prior.c()(j)));
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    double mass = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) mass += static_cast<double>(n) * prior.c()(j) * v2t(j, i);
    out.v2t_error = std::max(out.v2t_error, std::abs(mass - static_cast<double>(n) * prior.r()(i)));
  }
  return out;
}

NormalizationCheck verify_normalization(const SimilarityMatrix& S_star, double gamma) {
  return verify_normalization(S_star, gamma, MarginalPrior::uniform(S_star.rows(), S_star.cols()));
}

}  // namespace nclkit
