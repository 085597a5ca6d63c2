#ifndef NCLKIT_SYNTH_TRAIN_HPP_
#define NCLKIT_SYNTH_TRAIN_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nclkit/csv.hpp"
#include "nclkit/embed.hpp"
#include "nclkit/loss.hpp"
#include "nclkit/queue.hpp"
#include "nclkit/retrieval.hpp"
#include "nclkit/sinkhorn.hpp"

namespace nclkit {

// Independent RNG streams derived from one seed (SplitMix64 mixing of
// seed + stream * golden ratio).
enum class RngStream : std::uint64_t { kDataset = 1, kInit = 2, kShuffle = 3 };
std::uint64_t derive_seed(std::uint64_t seed, RngStream stream);

struct SyntheticDatasetSpec {
  std::uint64_t seed = 0;
  int n_train = 2000;  // videos; captions = videos * caption_multiplicity
  int n_test = 500;
  int latent_dim = 16;
  int text_dim = 32;
  int video_dim = 32;
  double noise_sigma = 0.5;
  int cluster_count = 8;
  // Std-dev of the cluster centres relative to the unit spread within one.
  double cluster_spread = 1.5;
  int caption_multiplicity = 1;
  // Use one linear map for both modalities (needs text_dim == video_dim).
  bool shared_maps = false;

  void validate() const;
};

struct SplitData {
  Matrix text;   // captions x text_dim
  Matrix video;  // videos x video_dim
  GroundTruth gt;  // caption -> its video
  std::vector<Eigen::Index> caption_video;
};

struct SyntheticDataset {
  SplitData train;
  SplitData test;
};

// text = A_t z + sigma e, video = A_v z + sigma e' with z drawn around one of
// cluster_count centres. Captions of one video share its z but not the
// noise. Bitwise deterministic for a given SyntheticDatasetSpec.
SyntheticDataset generate_dataset(const SyntheticDatasetSpec& spec);

enum class LossKind { kCl, kNcl };
const char* to_string(LossKind kind);

struct TrainConfig {
  LossKind loss_kind = LossKind::kNcl;
  double gamma = 0.05;
  int batch_size = 128;
  int epochs = 10;
  double learning_rate = 0.05;
  int embed_dim = 16;
  std::size_t queue_capacity = 512;
  // Batch biases during NCL training.
  SinkhornOptions sinkhorn;
  // Queue and oracle normalization at evaluation time.
  SinkhornOptions test_sinkhorn;
  std::vector<int> eval_ks = {1, 5, 10};

  void validate() const;
};

// key=value lines of every field, in a fixed order.
std::string config_echo(const SyntheticDatasetSpec& spec, const TrainConfig& config);
// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

struct MetricRow {
  int epoch = 0;
  std::string split;   // train | test
  std::string mode;    // none | queue | oracle | optim
  std::string metric;
  double value = 0.0;
};

struct RunRecord {
  std::vector<MetricRow> rows;
  int epochs = 0;
  std::uint64_t config_hash = 0;
  std::string config;
  // Test-time biases used for the last queue evaluation (NCL only).
  std::optional<TestTimeBiases> final_t2v_biases;
  std::optional<TestTimeBiases> final_v2t_biases;
  double wall_clock_seconds = 0.0;  // not part of the CSV body

  // First row matching all fields; throws kInvalidArgument when absent.
  double value(int epoch, const std::string& split, const std::string& mode,
               const std::string& metric) const;
  bool has(int epoch, const std::string& split, const std::string& mode,
           const std::string& metric) const;
};

// columns: epoch,split,mode,metric,value
CsvWriter run_record_csv(const RunRecord& record, const std::string& comment = {});

// Linear encoders followed by L2 normalization.
struct LinearEncoders {
  Matrix w_text;   // embed_dim x text_dim
  Matrix w_video;  // embed_dim x video_dim

  Matrix encode_text(const Matrix& x) const;
  Matrix encode_video(const Matrix& x) const;
};

// Loss and weight gradients for one batch of raw features (row b of x_text
// pairs with row b of x_video). NCL biases are computed on the batch and held
// fixed.
struct BatchStep {
  LossValue loss;
  Matrix d_w_text;
  Matrix d_w_video;
  Matrix text_embed;
  Matrix video_embed;
};
BatchStep batch_gradient(const LinearEncoders& encoders, const Matrix& x_text,
                         const Matrix& x_video, const TrainConfig& config);

struct TrainedModel {
  LinearEncoders encoders;
  QueryQueue text_queue{Modality::kText};
  QueryQueue video_queue{Modality::kVideo};
  SyntheticDataset data;
};

struct TrainResult {
  RunRecord record;
  TrainedModel model;
};

// Minibatch gradient descent; evaluation after initialisation (epoch 0) and
// after every epoch. Throws kNonFinite with epoch/step context if the loss
// stops being finite.
TrainResult train_model(const SyntheticDatasetSpec& spec, const TrainConfig& config);
RunRecord train(const SyntheticDatasetSpec& spec, const TrainConfig& config);

struct SweepRow {
  std::optional<std::size_t> queue_size;  // nullopt: oracle row
  Eigen::Index queue_size_used = 0;
  double t2v_r1 = 0.0;
  double v2t_r1 = 0.0;
  double t2v_norm_error = 0.0;
  double v2t_norm_error = 0.0;
};

// Re-evaluates test-time normalization of one trained model with the most
// recent K queue entries for every K in `sizes` (sorted, deduplicated), then
// appends the oracle row.
std::vector<SweepRow> queue_size_sweep(const TrainedModel& model, const TrainConfig& config,
                                       std::vector<std::size_t> sizes);
// Trains an NCL model first.
std::vector<SweepRow> queue_size_sweep(const SyntheticDatasetSpec& spec, const TrainConfig& config,
                                       std::vector<std::size_t> sizes);

// columns: queue_size,queue_size_used,t2v_R@1,v2t_R@1,t2v_norm_error,v2t_norm_error
CsvWriter sweep_csv(const std::vector<SweepRow>& rows, const std::string& comment = {});

}  // namespace nclkit

#endif  // NCLKIT_SYNTH_TRAIN_HPP_
