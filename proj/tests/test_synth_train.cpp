#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "nclkit/synth_train.hpp"
#include "test_util.hpp"

using namespace nclkit;
using nclkit::testing::check_error_kind;
using nclkit::testing::gaussian_matrix;

namespace {

SyntheticDatasetSpec small_spec(std::uint64_t seed = 7) {
  SyntheticDatasetSpec spec;
  spec.seed = seed;
  spec.n_train = 120;
  spec.n_test = 60;
  spec.latent_dim = 6;
  spec.text_dim = 10;
  spec.video_dim = 12;
  spec.cluster_count = 3;
  return spec;
}

TrainConfig small_config(LossKind kind = LossKind::kNcl) {
  TrainConfig config;
  config.loss_kind = kind;
  config.batch_size = 32;
  config.epochs = 2;
  config.embed_dim = 8;
  config.queue_capacity = 64;
  return config;
}

}  // namespace

TEST_CASE("seed streams are distinct and stable") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed : {0ull, 1ull, 42ull}) {
    for (RngStream s : {RngStream::kDataset, RngStream::kInit, RngStream::kShuffle}) {
      CHECK(derive_seed(seed, s) == derive_seed(seed, s));
      seen.insert(derive_seed(seed, s));
    }
  }
  CHECK(seen.size() == 9);
}

TEST_CASE("dataset generation is deterministic") {
  const SyntheticDataset a = generate_dataset(small_spec());
  const SyntheticDataset b = generate_dataset(small_spec());
  CHECK(a.train.text == b.train.text);
  CHECK(a.train.video == b.train.video);
  CHECK(a.test.text == b.test.text);
  CHECK(a.test.video == b.test.video);
  const SyntheticDataset c = generate_dataset(small_spec(8));
  CHECK(a.train.text != c.train.text);
  CHECK(a.train.text.rows() == 120);
  CHECK(a.train.text.cols() == 10);
  CHECK(a.test.video.rows() == 60);
  CHECK(a.test.video.cols() == 12);
}

TEST_CASE("caption multiplicity") {
  SyntheticDatasetSpec spec = small_spec();
  spec.n_train = 10;
  spec.caption_multiplicity = 3;
  const SyntheticDataset d = generate_dataset(spec);
  CHECK(d.train.text.rows() == 30);
  CHECK(d.train.video.rows() == 10);
  for (Eigen::Index c = 0; c < 30; ++c) {
    REQUIRE(d.train.gt.items_for(c).size() == 1);
    CHECK(d.train.gt.items_for(c)[0] == c / 3);
  }
  const GroundTruth back = d.train.gt.transposed();
  for (Eigen::Index v = 0; v < 10; ++v) CHECK(back.items_for(v).size() == 3);
}

TEST_CASE("noiseless shared maps are perfectly alignable") {
  SyntheticDatasetSpec spec = small_spec();
  spec.noise_sigma = 0.0;
  spec.shared_maps = true;
  spec.video_dim = spec.text_dim;
  const SyntheticDataset d = generate_dataset(spec);
  CHECK(d.train.text == d.train.video);

  TrainConfig config = small_config(LossKind::kCl);
  config.epochs = 30;
  config.learning_rate = 0.5;
  const RunRecord r = train(spec, config);
  MESSAGE("t2v R@1 " << r.value(30, "test", "none", "t2v_R@1"));
  CHECK(r.value(30, "test", "none", "t2v_R@1") >= 0.95);
  CHECK(r.value(30, "test", "none", "v2t_R@1") >= 0.95);
}

TEST_CASE("batch gradient matches finite differences") {
  std::mt19937_64 rng(11);
  LinearEncoders enc{gaussian_matrix(rng, 4, 5), gaussian_matrix(rng, 4, 6)};
  const Matrix xt = gaussian_matrix(rng, 6, 5);
  const Matrix xv = gaussian_matrix(rng, 6, 6);
  for (LossKind kind : {LossKind::kCl, LossKind::kNcl}) {
    TrainConfig config = small_config(kind);
    config.gamma = 0.1;
    const BatchStep step = batch_gradient(enc, xt, xv, config);
    CHECK(step.text_embed.rowwise().norm().maxCoeff() == doctest::Approx(1.0));

    // NCL: biases frozen at their value for the unperturbed batch.
    BiasVectors frozen;
    if (kind == LossKind::kNcl) {
      frozen = compute_biases(SimilarityMatrix(inner_products(step.text_embed, step.video_embed)),
                              config.gamma, config.sinkhorn);
    }
    auto objective = [&](std::span<const double> p) {
      LinearEncoders e = enc;
      std::copy(p.begin(), p.begin() + e.w_text.size(), e.w_text.data());
      std::copy(p.begin() + e.w_text.size(), p.end(), e.w_video.data());
      const Matrix t = e.encode_text(xt);
      const Matrix v = e.encode_video(xv);
      return kind == LossKind::kNcl ? adjusted_contrastive_loss(t, v, config.gamma, frozen).loss.total
                                    : contrastive_loss(t, v, config.gamma).loss.total;
    };
    std::vector<double> params(enc.w_text.data(), enc.w_text.data() + enc.w_text.size());
    params.insert(params.end(), enc.w_video.data(), enc.w_video.data() + enc.w_video.size());
    std::vector<double> analytic(step.d_w_text.data(), step.d_w_text.data() + step.d_w_text.size());
    analytic.insert(analytic.end(), step.d_w_video.data(),
                    step.d_w_video.data() + step.d_w_video.size());
    const auto report = finite_difference_check(objective, params, analytic, 1e-6);
    MESSAGE(std::string(to_string(kind)) << " max rel err " << report.max_rel_error);
    CHECK(report.max_rel_error < 1e-5);
  }
}

TEST_CASE("zero epochs records only the initial evaluation") {
  TrainConfig config = small_config();
  config.epochs = 0;
  const RunRecord r = train(small_spec(), config);
  CHECK(r.epochs == 0);
  for (const MetricRow& row : r.rows) CHECK(row.epoch == 0);
  CHECK(r.has(0, "test", "none", "t2v_R@1"));
  CHECK(r.has(0, "test", "oracle", "v2t_norm_error"));
  CHECK_FALSE(r.has(0, "test", "queue", "t2v_R@1"));
  CHECK_FALSE(r.has(1, "train", "optim", "loss"));
}

TEST_CASE("training records every epoch and mode") {
  const TrainResult ncl = train_model(small_spec(), small_config());
  for (int e = 0; e <= 2; ++e) {
    CHECK(ncl.record.has(e, "train", "none", "t2v_R@5"));
    CHECK(ncl.record.has(e, "test", "oracle", "t2v_R@10"));
    CHECK(ncl.record.has(e, "test", "none", "v2t_median_rank"));
  }
  CHECK(ncl.record.has(1, "test", "queue", "t2v_norm_error"));
  CHECK(std::isfinite(ncl.record.value(2, "train", "optim", "loss")));
  CHECK(ncl.model.text_queue.size() == 64);
  CHECK(ncl.model.text_queue.total_pushed() == 2 * 120);
  REQUIRE(ncl.record.final_t2v_biases.has_value());
  CHECK(ncl.record.final_t2v_biases->item_biases.size() == 60);
  CHECK(ncl.record.final_v2t_biases->item_biases.size() == 60);

  const Matrix emb = ncl.model.encoders.encode_text(ncl.model.data.test.text);
  CHECK((emb.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-6);

  const TrainResult cl = train_model(small_spec(), small_config(LossKind::kCl));
  CHECK(cl.model.text_queue.empty());
  CHECK_FALSE(cl.record.has(1, "test", "queue", "t2v_R@1"));
  CHECK_FALSE(cl.record.final_t2v_biases.has_value());
}

TEST_CASE("training is deterministic") {
  const RunRecord a = train(small_spec(3), small_config());
  const RunRecord b = train(small_spec(3), small_config());
  std::ostringstream sa, sb;
  run_record_csv(a).write(sa);
  run_record_csv(b).write(sb);
  CHECK(sa.str() == sb.str());
  CHECK(a.config_hash == b.config_hash);
  CHECK(sa.str().rfind("epoch,split,mode,metric,value\n0,train,none,t2v_R@1,", 0) == 0);
}

TEST_CASE("config echo and hash") {
  const std::string echo = config_echo(small_spec(), small_config());
  CHECK(echo.find("loss=ncl\n") != std::string::npos);
  CHECK(echo.find("eval_ks=1,5,10\n") != std::string::npos);
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  TrainConfig other = small_config();
  other.gamma = 0.1;
  CHECK(fnv1a(config_echo(small_spec(), other)) != fnv1a(echo));
}

TEST_CASE("queue size sweep") {
  const TrainResult trained = train_model(small_spec(), small_config());
  const auto rows = queue_size_sweep(trained.model, small_config(), {64, 8, 64, 1});
  REQUIRE(rows.size() == 4);
  CHECK(*rows[0].queue_size == 1);
  CHECK(*rows[1].queue_size == 8);
  CHECK(*rows[2].queue_size == 64);
  CHECK_FALSE(rows[3].queue_size.has_value());
  CHECK(rows[0].queue_size_used == 1);

  // The full queue reproduces the in-training queue evaluation, the oracle row
  // the oracle one.
  const RunRecord& r = trained.record;
  CHECK(rows[2].t2v_r1 == r.value(2, "test", "queue", "t2v_R@1"));
  CHECK(rows[2].v2t_norm_error == r.value(2, "test", "queue", "v2t_norm_error"));
  CHECK(rows[3].t2v_r1 == r.value(2, "test", "oracle", "t2v_R@1"));
  CHECK(rows[3].v2t_r1 == r.value(2, "test", "oracle", "v2t_R@1"));

  std::ostringstream out;
  sweep_csv(rows).write(out);
  CHECK(out.str().rfind("queue_size,queue_size_used,t2v_R@1,v2t_R@1,t2v_norm_error,v2t_norm_error\n1,1,", 0) == 0);
  CHECK(out.str().find("\noracle,60,") != std::string::npos);

  check_error_kind([&] { queue_size_sweep(trained.model, small_config(), {}); },
                   ErrorKind::kInvalidArgument);
  check_error_kind([&] { queue_size_sweep(small_spec(), small_config(LossKind::kCl), {4}); },
                   ErrorKind::kInvalidArgument);
}

TEST_CASE("spec and config validation") {
  SyntheticDatasetSpec spec = small_spec();
  spec.text_dim = 3;
  check_error_kind([&] { generate_dataset(spec); }, ErrorKind::kInvalidArgument);
  spec = small_spec();
  spec.shared_maps = true;
  check_error_kind([&] { generate_dataset(spec); }, ErrorKind::kInvalidArgument);

  TrainConfig config = small_config();
  config.batch_size = 1;
  check_error_kind([&] { train(small_spec(), config); }, ErrorKind::kInvalidArgument);
  config = small_config();
  config.gamma = 0.0;
  check_error_kind([&] { train(small_spec(), config); }, ErrorKind::kInvalidArgument);
}

TEST_CASE("divergent training aborts with context") {
  TrainConfig config = small_config(LossKind::kCl);
  config.learning_rate = 1e308;
  config.epochs = 3;
  bool thrown = false;
  try {
    train(small_spec(), config);
  } catch (const Error& e) {
    thrown = true;
    CHECK(e.kind() == ErrorKind::kNonFinite);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
  CHECK(thrown);
}
