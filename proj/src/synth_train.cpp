#include "nclkit/synth_train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nclkit/error.hpp"

namespace nclkit {

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sigma) {
  std::normal_distribution<double> dist(0.0, sigma);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

SplitData generate_split(std::mt19937_64& rng, const SyntheticDatasetSpec& spec, int n_videos,
                         const Matrix& centres, const Matrix& a_text, const Matrix& a_video) {
  const int mult = spec.caption_multiplicity;
  SplitData out{Matrix(static_cast<Eigen::Index>(n_videos) * mult, spec.text_dim),
                Matrix(n_videos, spec.video_dim),
                GroundTruth(static_cast<Eigen::Index>(n_videos) * mult, n_videos),
                {}};
  std::uniform_int_distribution<int> pick(0, spec.cluster_count - 1);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Vector z(spec.latent_dim);
  for (int v = 0; v < n_videos; ++v) {
    const int k = pick(rng);
    for (int d = 0; d < spec.latent_dim; ++d) z(d) = centres(k, d) + unit(rng);
    Vector x = a_video * z;
    for (int d = 0; d < spec.video_dim; ++d) x(d) += spec.noise_sigma * noise(rng);
    out.video.row(v) = x.transpose();
    for (int c = 0; c < mult; ++c) {
      const Eigen::Index row = static_cast<Eigen::Index>(v) * mult + c;
      Vector t = a_text * z;
      for (int d = 0; d < spec.text_dim; ++d) t(d) += spec.noise_sigma * noise(rng);
      out.text.row(row) = t.transpose();
      out.gt.add(row, v);
      out.caption_video.push_back(v);
    }
  }
  return out;
}

// Backprop of dL/de through e = u / |u| and u = W x, summed over rows.
Matrix encoder_gradient(const Matrix& x, const Matrix& u, const Matrix& e, const Matrix& d_e) {
  Matrix d_u(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    const double norm = u.row(i).norm();
    const double radial = d_e.row(i).dot(e.row(i));
    d_u.row(i) = (d_e.row(i) - radial * e.row(i)) / norm;
  }
  return d_u.transpose() * x;
}

struct Evaluation {
  int epoch;
  const TrainConfig& config;
  RunRecord& record;

  void add(const std::string& split, const std::string& mode, const std::string& metric,
           double value) const {
    record.rows.push_back({epoch, split, mode, metric, value});
  }

  void metrics(const std::string& split, const std::string& mode, const SimilarityMatrix& S,
               const GroundTruth& gt) const {
    for (Direction dir : {Direction::kT2V, Direction::kV2T}) {
      const MetricsReport r = compute_metrics(S, gt, config.gamma, config.eval_ks, dir);
      const std::string prefix = dir == Direction::kT2V ? "t2v_" : "v2t_";
      for (const auto& [k, recall] : r.recall_at) add(split, mode, prefix + "R@" + std::to_string(k), recall);
      add(split, mode, prefix + "median_rank", r.median_rank);
      add(split, mode, prefix + "mean_rank", r.mean_rank);
      if (dir == Direction::kV2T) {
        add(split, mode, "t2v_norm_error", r.t2v_norm_error);
        add(split, mode, "v2t_norm_error", r.v2t_norm_error);
      }
    }
  }
};

void evaluate(int epoch, const TrainConfig& config, const TrainedModel& model, RunRecord& record) {
  const Evaluation ev{epoch, config, record};
  {
    const SimilarityMatrix S(inner_products(model.encoders.encode_text(model.data.train.text),
                                            model.encoders.encode_video(model.data.train.video)));
    ev.metrics("train", "none", S, model.data.train.gt);
  }
  const Matrix T = model.encoders.encode_text(model.data.test.text);
  const Matrix V = model.encoders.encode_video(model.data.test.video);
  const SimilarityMatrix S(inner_products(T, V));
  const GroundTruth& gt = model.data.test.gt;
  ev.metrics("test", "none", S, gt);
  if (!model.text_queue.empty() && !model.video_queue.empty()) {
    TestTimeBiases t2v = test_time_biases(model.text_queue.snapshot(), V, config.gamma,
                                          config.test_sinkhorn);
    TestTimeBiases v2t = test_time_biases(model.video_queue.snapshot(), T, config.gamma,
                                          config.test_sinkhorn);
    ev.metrics("test", "queue", apply_test_biases(S, t2v, v2t), gt);
    record.final_t2v_biases = std::move(t2v);
    record.final_v2t_biases = std::move(v2t);
  }
  const auto [o_t2v, o_v2t] = oracle_test_biases(S, config.gamma, config.test_sinkhorn);
  ev.metrics("test", "oracle", apply_test_biases(S, o_t2v, o_v2t), gt);
}

std::string join_ks(const std::vector<int>& ks) {
  std::string out;
  for (std::size_t i = 0; i < ks.size(); ++i) out += (i ? "," : "") + std::to_string(ks[i]);
  return out;
}

SweepRow sweep_row(const SimilarityMatrix& S, const GroundTruth& gt, const TestTimeBiases& t2v,
                   const TestTimeBiases& v2t, double gamma) {
  const SimilarityMatrix adjusted = apply_test_biases(S, t2v, v2t);
  const MetricsReport a = compute_metrics(adjusted, gt, gamma, {1}, Direction::kT2V);
  const MetricsReport b = compute_metrics(adjusted, gt, gamma, {1}, Direction::kV2T);
  SweepRow row;
  row.queue_size_used = t2v.queue_size_used;
  row.t2v_r1 = a.recall_at.at(1);
  row.v2t_r1 = b.recall_at.at(1);
  row.t2v_norm_error = a.t2v_norm_error;
  row.v2t_norm_error = a.v2t_norm_error;
  return row;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, RngStream stream) {
  std::uint64_t z = seed + static_cast<std::uint64_t>(stream) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void SyntheticDatasetSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidArgument, msg); };
  if (n_train < 1 || n_test < 1) fail("n_train and n_test must be >= 1");
  if (latent_dim < 1) fail("latent_dim must be >= 1");
  if (text_dim < latent_dim || video_dim < latent_dim) fail("feature dims must be >= latent_dim");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be >= 0");
  if (cluster_count < 1) fail("cluster_count must be >= 1");
  if (!(cluster_spread >= 0.0) || !std::isfinite(cluster_spread)) fail("cluster_spread must be >= 0");
  if (caption_multiplicity < 1) fail("caption_multiplicity must be >= 1");
  if (shared_maps && text_dim != video_dim) fail("shared_maps needs text_dim == video_dim");
}

SyntheticDataset generate_dataset(const SyntheticDatasetSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, RngStream::kDataset));
  const Matrix centres = gaussian(rng, spec.cluster_count, spec.latent_dim, spec.cluster_spread);
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  const Matrix a_text = gaussian(rng, spec.text_dim, spec.latent_dim, map_scale);
  const Matrix a_video =
      spec.shared_maps ? a_text : gaussian(rng, spec.video_dim, spec.latent_dim, map_scale);
  SyntheticDataset out{generate_split(rng, spec, spec.n_train, centres, a_text, a_video),
                       generate_split(rng, spec, spec.n_test, centres, a_text, a_video)};
  return out;
}

const char* to_string(LossKind kind) { return kind == LossKind::kCl ? "cl" : "ncl"; }

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidArgument, msg); };
  if (!(gamma > 0.0) || !std::isfinite(gamma)) fail("gamma must be positive");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (queue_capacity < 1) fail("queue_capacity must be >= 1");
  if (eval_ks.empty()) fail("eval_ks must not be empty");
  for (int k : eval_ks)
    if (k < 1) fail("eval_ks entries must be >= 1");
  sinkhorn.validate();
  test_sinkhorn.validate();
}

std::string config_echo(const SyntheticDatasetSpec& spec, const TrainConfig& config) {
  std::ostringstream out;
  out << "seed=" << spec.seed << "\n"
      << "n_train=" << spec.n_train << "\n"
      << "n_test=" << spec.n_test << "\n"
      << "latent_dim=" << spec.latent_dim << "\n"
      << "text_dim=" << spec.text_dim << "\n"
      << "video_dim=" << spec.video_dim << "\n"
      << "noise_sigma=" << format_number(spec.noise_sigma) << "\n"
      << "cluster_count=" << spec.cluster_count << "\n"
      << "cluster_spread=" << format_number(spec.cluster_spread) << "\n"
      << "caption_multiplicity=" << spec.caption_multiplicity << "\n"
      << "shared_maps=" << (spec.shared_maps ? "true" : "false") << "\n"
      << "loss=" << to_string(config.loss_kind) << "\n"
      << "gamma=" << format_number(config.gamma) << "\n"
      << "batch_size=" << config.batch_size << "\n"
      << "epochs=" << config.epochs << "\n"
      << "learning_rate=" << format_number(config.learning_rate) << "\n"
      << "embed_dim=" << config.embed_dim << "\n"
      << "queue_capacity=" << config.queue_capacity << "\n"
      << "sinkhorn_iters=" << config.sinkhorn.n_iters << "\n"
      << "test_sinkhorn_iters=" << config.test_sinkhorn.n_iters << "\n"
      << "eval_ks=" << join_ks(config.eval_ks) << "\n";
  return out.str();
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

bool RunRecord::has(int epoch, const std::string& split, const std::string& mode,
                    const std::string& metric) const {
  return std::any_of(rows.begin(), rows.end(), [&](const MetricRow& r) {
    return r.epoch == epoch && r.split == split && r.mode == mode && r.metric == metric;
  });
}

double RunRecord::value(int epoch, const std::string& split, const std::string& mode,
                        const std::string& metric) const {
  for (const MetricRow& r : rows) {
    if (r.epoch == epoch && r.split == split && r.mode == mode && r.metric == metric) return r.value;
  }
  throw Error(ErrorKind::kInvalidArgument, "no record for epoch " + std::to_string(epoch) + " " +
                                               split + "/" + mode + "/" + metric);
}

CsvWriter run_record_csv(const RunRecord& record, const std::string& comment) {
  CsvWriter csv({"epoch", "split", "mode", "metric", "value"}, comment);
  for (const MetricRow& r : record.rows) {
    csv.add_row({format_number(static_cast<long long>(r.epoch)), r.split, r.mode, r.metric,
                 format_number(r.value)});
  }
  return csv;
}

Matrix LinearEncoders::encode_text(const Matrix& x) const {
  Matrix e = x * w_text.transpose();
  l2_normalize_rows(e);
  return e;
}

Matrix LinearEncoders::encode_video(const Matrix& x) const {
  Matrix e = x * w_video.transpose();
  l2_normalize_rows(e);
  return e;
}

BatchStep batch_gradient(const LinearEncoders& encoders, const Matrix& x_text,
                         const Matrix& x_video, const TrainConfig& config) {
  const Matrix ut = x_text * encoders.w_text.transpose();
  const Matrix uv = x_video * encoders.w_video.transpose();
  BatchStep out;
  out.text_embed = ut;
  out.video_embed = uv;
  l2_normalize_rows(out.text_embed);
  l2_normalize_rows(out.video_embed);
  GradientSet grad;
  if (config.loss_kind == LossKind::kNcl) {
    NclLossResult r = ncl_loss(out.text_embed, out.video_embed, config.gamma, config.sinkhorn);
    out.loss = r.loss;
    grad = std::move(r.grad);
  } else {
    LossResult r = contrastive_loss(out.text_embed, out.video_embed, config.gamma);
    out.loss = r.loss;
    grad = std::move(r.grad);
  }
  out.d_w_text = encoder_gradient(x_text, ut, out.text_embed, grad.d_text);
  out.d_w_video = encoder_gradient(x_video, uv, out.video_embed, grad.d_video);
  return out;
}

TrainResult train_model(const SyntheticDatasetSpec& spec, const TrainConfig& config) {
  spec.validate();
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  TrainResult out{RunRecord{},
                  TrainedModel{LinearEncoders{}, QueryQueue(Modality::kText, config.queue_capacity),
                               QueryQueue(Modality::kVideo, config.queue_capacity),
                               generate_dataset(spec)}};
  TrainedModel& model = out.model;
  {
    std::mt19937_64 rng(derive_seed(spec.seed, RngStream::kInit));
    model.encoders.w_text = gaussian(rng, config.embed_dim, spec.text_dim,
                                     1.0 / std::sqrt(static_cast<double>(spec.text_dim)));
    model.encoders.w_video = gaussian(rng, config.embed_dim, spec.video_dim,
                                      1.0 / std::sqrt(static_cast<double>(spec.video_dim)));
  }

  RunRecord& record = out.record;
  record.epochs = config.epochs;
  record.config = config_echo(spec, config);
  record.config_hash = fnv1a(record.config);
  evaluate(0, config, model, record);

  std::mt19937_64 shuffle_rng(derive_seed(spec.seed, RngStream::kShuffle));
  const SplitData& train = model.data.train;
  const int mult = spec.caption_multiplicity;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train.video.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::uniform_int_distribution<int> caption_pick(0, mult - 1);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t begin = 0; begin + 2 <= order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const auto B = static_cast<Eigen::Index>(end - begin);
      if (B < 2) break;
      Matrix xt(B, spec.text_dim), xv(B, spec.video_dim);
      for (Eigen::Index b = 0; b < B; ++b) {
        const Eigen::Index v = order[begin + static_cast<std::size_t>(b)];
        xv.row(b) = train.video.row(v);
        xt.row(b) = train.text.row(v * mult + caption_pick(shuffle_rng));
      }
      BatchStep step;
      try {
        step = batch_gradient(model.encoders, xt, xv, config);
      } catch (const Error& e) {
        throw Error(e.kind(), "epoch " + std::to_string(epoch) + " step " + std::to_string(steps) +
                                  ": " + e.what());
      }
      if (!std::isfinite(step.loss.total) || !step.d_w_text.allFinite() ||
          !step.d_w_video.allFinite()) {
        throw Error(ErrorKind::kNonFinite, "epoch " + std::to_string(epoch) + " step " +
                                               std::to_string(steps) + ": non-finite loss or gradient");
      }
      model.encoders.w_text -= config.learning_rate * step.d_w_text;
      model.encoders.w_video -= config.learning_rate * step.d_w_video;
      if (!model.encoders.w_text.allFinite() || !model.encoders.w_video.allFinite()) {
        throw Error(ErrorKind::kNonFinite, "epoch " + std::to_string(epoch) + " step " +
                                               std::to_string(steps) + ": weights overflowed");
      }
      if (config.loss_kind == LossKind::kNcl) {
        model.text_queue.push(Modality::kText, step.text_embed);
        model.video_queue.push(Modality::kVideo, step.video_embed);
      }
      const LossValue loss = step.loss;
      loss_sum += loss.total;
      ++steps;
    }
    record.rows.push_back({epoch, "train", "optim", "loss", steps ? loss_sum / steps : 0.0});
    try {
      evaluate(epoch, config, model, record);
    } catch (const Error& e) {
      throw Error(e.kind(), "epoch " + std::to_string(epoch) + " evaluation: " + e.what());
    }
  }
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

RunRecord train(const SyntheticDatasetSpec& spec, const TrainConfig& config) {
  return train_model(spec, config).record;
}

std::vector<SweepRow> queue_size_sweep(const TrainedModel& model, const TrainConfig& config,
                                       std::vector<std::size_t> sizes) {
  if (sizes.empty()) throw Error(ErrorKind::kInvalidArgument, "queue size sweep needs sizes");
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  if (sizes.front() < 1) throw Error(ErrorKind::kInvalidArgument, "queue sizes must be >= 1");

  const Matrix T = model.encoders.encode_text(model.data.test.text);
  const Matrix V = model.encoders.encode_video(model.data.test.video);
  const SimilarityMatrix S(inner_products(T, V));
  const GroundTruth& gt = model.data.test.gt;

  std::vector<SweepRow> rows;
  for (std::size_t k : sizes) {
    const QueryQueue tq = model.text_queue.truncated(k);
    const QueryQueue vq = model.video_queue.truncated(k);
    const TestTimeBiases t2v = test_time_biases(tq, EmbeddingSet(Modality::kVideo, V), config.gamma,
                                                config.test_sinkhorn);
    const TestTimeBiases v2t = test_time_biases(vq, EmbeddingSet(Modality::kText, T), config.gamma,
                                                config.test_sinkhorn);
    SweepRow row = sweep_row(S, gt, t2v, v2t, config.gamma);
    row.queue_size = k;
    rows.push_back(row);
  }
  const auto [o_t2v, o_v2t] = oracle_test_biases(S, config.gamma, config.test_sinkhorn);
  rows.push_back(sweep_row(S, gt, o_t2v, o_v2t, config.gamma));
  return rows;
}

std::vector<SweepRow> queue_size_sweep(const SyntheticDatasetSpec& spec, const TrainConfig& config,
                                       std::vector<std::size_t> sizes) {
  if (config.loss_kind != LossKind::kNcl) {
    throw Error(ErrorKind::kInvalidArgument, "queue size sweep needs an NCL run (CL keeps no queue)");
  }
  const TrainResult trained = train_model(spec, config);
  return queue_size_sweep(trained.model, config, std::move(sizes));
}

CsvWriter sweep_csv(const std::vector<SweepRow>& rows, const std::string& comment) {
  CsvWriter csv({"queue_size", "queue_size_used", "t2v_R@1", "v2t_R@1", "t2v_norm_error",
                 "v2t_norm_error"},
                comment);
  for (const SweepRow& r : rows) {
    csv.add_row({r.queue_size ? format_number(static_cast<long long>(*r.queue_size)) : "oracle",
                 format_number(static_cast<long long>(r.queue_size_used)), format_number(r.t2v_r1),
                 format_number(r.v2t_r1), format_number(r.t2v_norm_error),
                 format_number(r.v2t_norm_error)});
  }
  return csv;
}

}  // namespace nclkit
