#include "nclkit/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "nclkit/csv.hpp"
#include "nclkit/decomposition.hpp"
#include "nclkit/parallel.hpp"
#include "nclkit/queue.hpp"
#include "nclkit/retrieval.hpp"
#include "nclkit/sinkhorn.hpp"
#include "nclkit/synth_train.hpp"

namespace nclkit::cli {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void usage(const std::string& msg) { throw Error(ErrorKind::kInvalidArgument, msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  return parts;
}

struct Key {
  std::string name;
  std::string fallback;  // empty: no default
  std::string help;
};

// Resolved key=value settings of one command.
class Settings {
 public:
  Settings(std::string command, std::map<std::string, std::string> values)
      : command_(std::move(command)), values_(std::move(values)) {}

  bool has(const std::string& key) const { return !values_.at(key).empty(); }

  const std::string& text(const std::string& key) const {
    const std::string& v = values_.at(key);
    if (v.empty()) usage("missing required key '" + key + "'");
    return v;
  }

  double number(const std::string& key) const {
    const std::string& v = text(key);
    double x = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) bad(key, v);
    return x;
  }

  long long integer(const std::string& key) const { return parse_int(key, text(key)); }

  int small_int(const std::string& key) const {
    const long long x = integer(key);
    if (x < -1000000000LL || x > 1000000000LL) bad(key, text(key));
    return static_cast<int>(x);
  }

  std::uint64_t unsigned_integer(const std::string& key) const {
    const std::string& v = text(key);
    std::uint64_t x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) bad(key, v);
    return x;
  }

  bool flag(const std::string& key) const {
    const std::string& v = text(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad(key, v);
  }

  std::vector<long long> integers(const std::string& key) const {
    std::vector<long long> out;
    for (const std::string& part : split(text(key), ',')) out.push_back(parse_int(key, part));
    if (out.empty()) bad(key, text(key));
    return out;
  }

  // Optional convergence tolerance; iters otherwise.
  SinkhornOptions sinkhorn(const std::string& iters_key, const std::string& tol_key) const {
    SinkhornOptions opts;
    opts.n_iters = small_int(iters_key);
    if (has(tol_key)) opts.tol = number(tol_key);
    opts.validate();
    return opts;
  }

  // Version string plus every resolved key.
  std::string comment() const {
    std::string c = std::string("nclkit ") + kVersion + " " + command_;
    for (const auto& [k, v] : values_) c += " " + k + "=" + v;
    return c;
  }

 private:
  [[noreturn]] static void bad(const std::string& key, const std::string& v) {
    usage("invalid value for '" + key + "': '" + v + "'");
  }
  static long long parse_int(const std::string& key, const std::string& v) {
    long long x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad(key, v);
    return x;
  }

  std::string command_;
  std::map<std::string, std::string> values_;
};

struct Command {
  std::string name;
  std::string description;
  std::vector<Key> keys;
  std::function<void(const Settings&, std::ostream&, std::ostream&)> body;
};

fs::path output_dir(const Settings& s) {
  const fs::path dir = s.text("out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorKind::kIo, "cannot create output directory " + dir.string());
  }
  return dir;
}

double gamma_of(const Settings& s) {
  const double g = s.number("gamma");
  if (!(g > 0.0) || !std::isfinite(g)) usage("gamma must be positive, got " + s.text("gamma"));
  return g;
}

std::vector<int> ks_of(const Settings& s) {
  std::vector<int> ks;
  for (long long k : s.integers("ks")) {
    if (k < 1 || k > 1000000) usage("ks entries must be >= 1");
    ks.push_back(static_cast<int>(k));
  }
  return ks;
}

std::vector<std::int64_t> read_counts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::int64_t> counts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::int64_t c = 0;
    const auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), c);
    if (ec != std::errc() || p != line.data() + line.size()) {
      throw Error(ErrorKind::kFormat, path.string() + ":" + std::to_string(lineno) +
                                          ": not an integer count");
    }
    counts.push_back(c);
  }
  return counts;
}

// text_ids / video_ids manifests and the ground truth file. Without a gt
// file the pairing is the diagonal.
GroundTruth load_ground_truth(const Settings& s, Eigen::Index n_text, Eigen::Index n_video) {
  if (!s.has("gt")) {
    if (n_text != n_video) usage("missing required key 'gt' (inputs are not square)");
    return GroundTruth::diagonal(n_text);
  }
  std::optional<IdManifest> text_ids, video_ids;
  if (s.has("text_ids")) text_ids = IdManifest::read(s.text("text_ids"));
  if (s.has("video_ids")) video_ids = IdManifest::read(s.text("video_ids"));
  return GroundTruth::read(s.text("gt"), n_text, n_video, text_ids ? &*text_ids : nullptr,
                           video_ids ? &*video_ids : nullptr);
}

EmbeddingSet load_modality(const Settings& s, const std::string& key, Modality expected) {
  EmbeddingSet set = load_embeddings(s.text(key));
  if (set.modality() != expected) {
    throw Error(ErrorKind::kModalityMismatch,
                s.text(key) + " holds " + to_string(set.modality()) + " embeddings, expected " +
                    to_string(expected));
  }
  return set;
}

void cmd_normalize(const Settings& s, std::ostream& out, std::ostream&) {
  const double gamma = gamma_of(s);
  const SinkhornOptions opts = s.sinkhorn("iters", "tol");
  const EmbeddingSet T = load_modality(s, "text", Modality::kText);
  const EmbeddingSet V = load_modality(s, "video", Modality::kVideo);
  const SimilarityMatrix S = cosine_similarity_matrix(T, V);

  const std::string& prior_kind = s.text("prior");
  std::optional<MarginalPrior> prior;
  if (prior_kind == "uniform") {
    prior = MarginalPrior::uniform(S.rows(), S.cols());
  } else if (prior_kind == "counts") {
    const std::vector<std::int64_t> counts = read_counts(s.text("counts"));
    if (static_cast<Eigen::Index>(counts.size()) != S.cols()) {
      throw Error(ErrorKind::kDimensionMismatch,
                  "counts file has " + std::to_string(counts.size()) + " entries for " +
                      std::to_string(S.cols()) + " videos");
    }
    for (std::size_t j = 0; j < counts.size(); ++j) {
      if (counts[j] < 1) {
        throw Error(ErrorKind::kFormat, "count of video " + std::to_string(j) + " must be >= 1",
                    j);
      }
    }
    prior = MarginalPrior::from_item_counts(S.rows(), counts);
  } else {
    usage("prior must be uniform or counts, got '" + prior_kind + "'");
  }

  const BiasVectors biases = compute_biases(S, gamma, *prior, opts);
  const SimilarityMatrix adjusted = adjust_similarity(S, biases);
  const auto [pre_t2v, pre_v2t] = directional_normalization_errors(S, gamma, *prior);
  const auto [post_t2v, post_v2t] = directional_normalization_errors(adjusted, gamma, *prior);

  const fs::path dir = output_dir(s);
  CsvWriter bias_csv({"axis", "index", "bias"}, s.comment());
  for (Eigen::Index i = 0; i < biases.a.size(); ++i) {
    bias_csv.add_row({"text", format_number(static_cast<long long>(i)), format_number(biases.a(i))});
  }
  for (Eigen::Index j = 0; j < biases.b.size(); ++j) {
    bias_csv.add_row({"video", format_number(static_cast<long long>(j)), format_number(biases.b(j))});
  }
  bias_csv.write(dir / "biases.csv");

  CsvWriter report({"metric", "value"}, s.comment());
  report.add_row({"gamma", format_number(gamma)});
  report.add_row({"iterations_run", format_number(static_cast<long long>(biases.iterations_run))});
  report.add_row({"residual", format_number(biases.residual)});
  report.add_row({"pre_t2v_error", format_number(pre_t2v)});
  report.add_row({"pre_v2t_error", format_number(pre_v2t)});
  report.add_row({"post_t2v_error", format_number(post_t2v)});
  report.add_row({"post_v2t_error", format_number(post_v2t)});
  report.write(dir / "report.csv");

  out << "normalization error t2v " << pre_t2v << " -> " << post_t2v << ", v2t " << pre_v2t
      << " -> " << post_v2t << "\n";
}

void cmd_eval(const Settings& s, std::ostream& out, std::ostream& err) {
  const double gamma = gamma_of(s);
  const std::vector<int> ks = ks_of(s);
  const SinkhornOptions opts = s.sinkhorn("iters", "tol");
  const EmbeddingSet T = load_modality(s, "text", Modality::kText);
  const EmbeddingSet V = load_modality(s, "video", Modality::kVideo);
  const GroundTruth gt = load_ground_truth(s, T.size(), V.size());
  SimilarityMatrix S = cosine_similarity_matrix(T, V);

  const std::string& mode = s.text("biases");
  if (mode == "oracle") {
    const auto [t2v, v2t] = oracle_test_biases(S, gamma, opts);
    S = apply_test_biases(S, t2v, v2t);
  } else if (mode == "queue") {
    if (!s.has("text_queue") && !s.has("video_queue")) {
      usage("biases=queue needs text_queue and/or video_queue");
    }
    TestTimeBiases t2v, v2t;
    t2v.item_biases = Vector::Zero(S.cols());
    v2t.item_biases = Vector::Zero(S.rows());
    auto from_queue = [&](const std::string& key, Modality modality, const EmbeddingSet& items) {
      const QueryQueue q = QueryQueue::load(fs::path(s.text(key)));
      if (q.modality() != modality) {
        throw Error(ErrorKind::kModalityMismatch,
                    key + " holds " + to_string(q.modality()) + " queries");
      }
      TestTimeBiases b = test_time_biases(q, items, gamma, opts);
      if (!b.warning.empty()) err << "warning: " << key << ": " << b.warning << "\n";
      return b;
    };
    if (s.has("text_queue")) t2v = from_queue("text_queue", Modality::kText, V);
    if (s.has("video_queue")) v2t = from_queue("video_queue", Modality::kVideo, T);
    S = apply_test_biases(S, t2v, v2t);
  } else if (mode != "none") {
    const auto [a, b] = read_bias_csv(mode, S.rows(), S.cols());
    S = adjust_similarity(S, a, b);
  }

  const fs::path dir = output_dir(s);
  for (Direction d : {Direction::kT2V, Direction::kV2T}) {
    const MetricsReport report = compute_metrics(S, gt, gamma, ks, d);
    metrics_csv(report, s.comment()).write(dir / (std::string("metrics_") + to_string(d) + ".csv"));
    out << to_string(d) << " R@" << ks.front() << " " << report.recall_at.at(ks.front())
        << " median rank " << report.median_rank << "\n";
  }
}

const std::vector<Key>& train_keys() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    std::istringstream echo(config_echo(SyntheticDatasetSpec{}, TrainConfig{}));
    std::string line;
    while (std::getline(echo, line)) {
      const auto eq = line.find('=');
      k.push_back({line.substr(0, eq), line.substr(eq + 1), ""});
    }
    k.push_back({"out", ".", "output directory"});
    return k;
  }();
  return keys;
}

std::pair<SyntheticDatasetSpec, TrainConfig> train_setup(const Settings& s) {
  SyntheticDatasetSpec spec;
  spec.seed = s.unsigned_integer("seed");
  spec.n_train = s.small_int("n_train");
  spec.n_test = s.small_int("n_test");
  spec.latent_dim = s.small_int("latent_dim");
  spec.text_dim = s.small_int("text_dim");
  spec.video_dim = s.small_int("video_dim");
  spec.noise_sigma = s.number("noise_sigma");
  spec.cluster_count = s.small_int("cluster_count");
  spec.cluster_spread = s.number("cluster_spread");
  spec.caption_multiplicity = s.small_int("caption_multiplicity");
  spec.shared_maps = s.flag("shared_maps");
  spec.validate();

  TrainConfig config;
  const std::string& loss = s.text("loss");
  if (loss == "cl") {
    config.loss_kind = LossKind::kCl;
  } else if (loss == "ncl") {
    config.loss_kind = LossKind::kNcl;
  } else {
    usage("loss must be cl or ncl, got '" + loss + "'");
  }
  config.gamma = s.number("gamma");
  config.batch_size = s.small_int("batch_size");
  config.epochs = s.small_int("epochs");
  config.learning_rate = s.number("learning_rate");
  config.embed_dim = s.small_int("embed_dim");
  const long long cap = s.integer("queue_capacity");
  if (cap < 1 || cap > (1LL << 31)) usage("queue_capacity must be in [1, 2^31]");
  config.queue_capacity = static_cast<std::size_t>(cap);
  config.sinkhorn.n_iters = s.small_int("sinkhorn_iters");
  config.test_sinkhorn.n_iters = s.small_int("test_sinkhorn_iters");
  config.sinkhorn.validate();
  config.test_sinkhorn.validate();
  config.eval_ks.clear();
  for (long long k : s.integers("eval_ks")) {
    if (k < 1 || k > 1000000) usage("eval_ks entries must be >= 1");
    config.eval_ks.push_back(static_cast<int>(k));
  }
  config.validate();
  return {spec, config};
}

void cmd_train(const Settings& s, std::ostream& out, std::ostream&) {
  const auto [spec, config] = train_setup(s);
  const fs::path dir = output_dir(s);
  const TrainResult result = train_model(spec, config);
  const RunRecord& record = result.record;
  run_record_csv(record, s.comment()).write(dir / "run.csv");

  // Test split embeddings and queues, ready for `nclkit eval`.
  const TrainedModel& model = result.model;
  write_emb1(dir / "test_text.emb", Modality::kText,
             model.encoders.encode_text(model.data.test.text));
  write_emb1(dir / "test_video.emb", Modality::kVideo,
             model.encoders.encode_video(model.data.test.video));
  {
    std::ofstream gt(dir / "test_gt.txt");
    if (!gt) throw Error(ErrorKind::kIo, "cannot write " + (dir / "test_gt.txt").string());
    for (std::size_t c = 0; c < model.data.test.caption_video.size(); ++c) {
      gt << c << ' ' << model.data.test.caption_video[c] << '\n';
    }
  }
  if (!model.text_queue.empty()) {
    model.text_queue.save(dir / "text_queue.q");
    model.video_queue.save(dir / "video_queue.q");
  }

  const int E = record.epochs;
  out << "loss " << to_string(config.loss_kind) << " epochs " << E << " config hash " << std::hex
      << record.config_hash << std::dec << "\n";
  for (const char* mode : {"none", "queue", "oracle"}) {
    if (!record.has(E, "test", mode, "t2v_R@1")) continue;
    out << "test " << mode << ": t2v R@1 " << record.value(E, "test", mode, "t2v_R@1")
        << " v2t R@1 " << record.value(E, "test", mode, "v2t_R@1") << " norm error "
        << record.value(E, "test", mode, "t2v_norm_error") << " / "
        << record.value(E, "test", mode, "v2t_norm_error") << "\n";
  }
}

void cmd_sweep(const Settings& s, std::ostream& out, std::ostream&) {
  const auto [spec, config] = train_setup(s);
  std::vector<std::size_t> sizes;
  for (long long k : s.integers("sizes")) {
    if (k < 1) usage("sizes entries must be >= 1");
    sizes.push_back(static_cast<std::size_t>(k));
  }
  const fs::path dir = output_dir(s);
  const std::vector<SweepRow> rows = queue_size_sweep(spec, config, sizes);
  sweep_csv(rows, s.comment()).write(dir / "sweep.csv");
  for (const SweepRow& r : rows) {
    out << (r.queue_size ? std::to_string(*r.queue_size) : std::string("oracle")) << ": t2v R@1 "
        << r.t2v_r1 << " v2t R@1 " << r.v2t_r1 << "\n";
  }
}

void cmd_analyze(const Settings& s, std::ostream& out, std::ostream&) {
  const double gamma = gamma_of(s);
  const long long bins = s.integer("bins");
  if (bins < 1 || bins > 100000) usage("bins must be in [1, 100000]");
  const EmbeddingSet T = load_modality(s, "text", Modality::kText);
  const EmbeddingSet V = load_modality(s, "video", Modality::kVideo);
  const fs::path dir = output_dir(s);

  const auto report = decomposition_report(T.vectors(), V.vectors(), gamma);
  decomposition_csv(report, s.comment()).write(dir / "decomposition.csv");
  if (s.flag("pairs")) {
    pairwise_similarity_csv(cosine_similarity_matrix(T, V).values, s.comment())
        .write(dir / "similarity.csv");
  }

  if (s.has("gt") || T.size() == V.size()) {
    const GroundTruth gt = load_ground_truth(s, T.size(), V.size());
    const SimilarityMatrix S = cosine_similarity_matrix(T, V);
    const auto b = static_cast<std::size_t>(bins);
    false_rate_csv(false_rate_profile(retrieval_distribution(S, gamma, Direction::kT2V), gt, b),
                   s.comment())
        .write(dir / "false_rate_t2v.csv");
    false_rate_csv(false_rate_profile(retrieval_distribution(S, gamma, Direction::kV2T),
                                      gt.transposed(), b),
                   s.comment())
        .write(dir / "false_rate_v2t.csv");
  }
  for (const auto& [name, value] : report) out << name << " " << value << "\n";
}

const std::vector<Key> kInputKeys = {
    {"text", "", "text embeddings (EMB1)"},
    {"video", "", "video embeddings (EMB1)"},
    {"gamma", "0.05", "softmax temperature"},
    {"out", ".", "output directory"},
};

std::vector<Key> with_inputs(std::vector<Key> extra) {
  std::vector<Key> keys = kInputKeys;
  keys.insert(keys.end(), extra.begin(), extra.end());
  return keys;
}

std::vector<Command> commands() {
  std::vector<Key> sweep_keys = train_keys();
  sweep_keys.push_back({"sizes", "1,8,64,512", "queue sizes to evaluate"});
  return {
      {"normalize", "Sinkhorn biases for a text x video similarity matrix",
       with_inputs({{"iters", "4", "fixed scaling iterations"},
                    {"tol", "", "iterate to this residual instead"},
                    {"prior", "uniform", "uniform | counts"},
                    {"counts", "", "per-video query counts, one per line"}}),
       cmd_normalize},
      {"eval", "retrieval metrics with optional test-time normalization",
       with_inputs({{"gt", "", "ground truth pairs (default: diagonal)"},
                    {"text_ids", "", "text id manifest"},
                    {"video_ids", "", "video id manifest"},
                    {"biases", "none", "none | oracle | queue | bias CSV path"},
                    {"text_queue", "", "queue file of text queries"},
                    {"video_queue", "", "queue file of video queries"},
                    {"ks", "1,5,10", "recall cut-offs"},
                    {"iters", "4", "scaling iterations"},
                    {"tol", "", "iterate to this residual instead"}}),
       cmd_eval},
      {"train", "train linear encoders on synthetic data", train_keys(), cmd_train},
      {"sweep", "queue size sweep of a trained NCL model", sweep_keys, cmd_sweep},
      {"analyze", "modality gap decomposition and false-rate profiles",
       with_inputs({{"gt", "", "ground truth pairs (default: diagonal)"},
                    {"text_ids", "", "text id manifest"},
                    {"video_ids", "", "video id manifest"},
                    {"bins", "10", "false-rate bins"},
                    {"pairs", "false", "also write every pairwise similarity"}}),
       cmd_analyze},
  };
}

void apply_threads_env() {
  const char* env = std::getenv("NCLKIT_THREADS");
  if (env == nullptr || *env == '\0') return;
  const std::string v = env;
  unsigned n = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (ec != std::errc() || p != v.data() + v.size()) usage("NCLKIT_THREADS must be a count, got '" + v + "'");
  set_num_threads(n);
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kBatchTooSmall:
      return kExitUsage;
    case ErrorKind::kDimensionMismatch:
    case ErrorKind::kZeroVector:
    case ErrorKind::kEmptyQueue:
    case ErrorKind::kModalityMismatch:
    case ErrorKind::kMissingGroundTruth:
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
      return kExitData;
    case ErrorKind::kDegenerateMatrix:
    case ErrorKind::kNonFinite:
      return kExitNumerical;
  }
  return kExitData;
}

std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> values;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    const std::string key = trim(line.substr(0, eq));
    if (eq == std::string::npos || trim(line.substr(eq + 1)).empty()) {
      usage("config key '" + key + "' has no value");
    }
    if (key.empty()) usage("config line '" + line + "' has no key");
    values[key] = trim(line.substr(eq + 1));
  }
  return values;
}

std::map<std::string, std::string> parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config " + path.string());
  return parse_config(in);
}

std::pair<Vector, Vector> read_bias_csv(const fs::path& path, Eigen::Index rows,
                                        Eigen::Index cols) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open bias file " + path.string());
  Vector a = Vector::Constant(rows, std::nan(""));
  Vector b = Vector::Constant(cols, std::nan(""));
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "axis,index,bias") {
        throw Error(ErrorKind::kFormat, path.string() + ": expected header axis,index,bias");
      }
      header = true;
      continue;
    }
    const auto where = [&] { return path.string() + ":" + std::to_string(lineno) + ": "; };
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != 3) throw Error(ErrorKind::kFormat, where() + "expected 3 fields");
    long long idx = -1;
    double value = 0.0;
    const auto r1 = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), idx);
    const auto r2 = std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), value);
    if (r1.ec != std::errc() || r2.ec != std::errc() ||
        r1.ptr != cells[1].data() + cells[1].size() ||
        r2.ptr != cells[2].data() + cells[2].size()) {
      throw Error(ErrorKind::kFormat, where() + "unparsable index or bias");
    }
    Vector* target = nullptr;
    if (cells[0] == "text") target = &a;
    if (cells[0] == "video") target = &b;
    if (target == nullptr) throw Error(ErrorKind::kFormat, where() + "axis must be text or video");
    if (idx < 0 || idx >= target->size()) {
      throw Error(ErrorKind::kDimensionMismatch,
                  where() + cells[0] + " index " + cells[1] + " out of range",
                  static_cast<std::size_t>(std::max(idx, 0LL)));
    }
    if (!std::isnan((*target)(idx))) {
      throw Error(ErrorKind::kFormat, where() + "duplicate " + cells[0] + " index " + cells[1],
                  static_cast<std::size_t>(idx));
    }
    if (!std::isfinite(value)) throw Error(ErrorKind::kNonFinite, where() + "non-finite bias");
    (*target)(idx) = value;
  }
  for (auto [vec, axis] : {std::pair{&a, "text"}, std::pair{&b, "video"}}) {
    for (Eigen::Index i = 0; i < vec->size(); ++i) {
      if (std::isnan((*vec)(i))) {
        throw Error(ErrorKind::kDimensionMismatch,
                    path.string() + ": no bias for " + axis + " " + std::to_string(i),
                    static_cast<std::size_t>(i));
      }
    }
  }
  return {a, b};
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"nclkit: normalized contrastive retrieval toolkit", "nclkit"};
  app.set_version_flag("--version", std::string("nclkit ") + kVersion);
  app.require_subcommand(1);

  const std::vector<Command> cmds = commands();
  std::map<std::string, std::string> flags;
  std::map<std::string, std::string> config_paths;
  for (const Command& cmd : cmds) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.description);
    sub->add_option_function<std::string>(
        "--config", [&config_paths, name = cmd.name](const std::string& v) { config_paths[name] = v; },
        "key=value config file; flags win");
    for (const Key& key : cmd.keys) {
      std::string help = key.help;
      if (!key.fallback.empty()) help += (help.empty() ? "" : " ") + std::string("[") + key.fallback + "]";
      sub->add_option_function<std::string>(
          "--" + key.name, [&flags, name = key.name](const std::string& v) { flags[name] = v; },
          help)
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const Command* chosen = nullptr;
  for (const Command& cmd : cmds) {
    if (app.got_subcommand(cmd.name)) chosen = &cmd;
  }

  try {
    apply_threads_env();
    std::map<std::string, std::string> values;
    for (const Key& key : chosen->keys) values[key.name] = key.fallback;
    auto merge = [&](const std::map<std::string, std::string>& src, const std::string& origin) {
      for (const auto& [k, v] : src) {
        if (!values.count(k)) usage("unknown key '" + k + "' in " + origin);
        if (v.empty()) usage("key '" + k + "' has no value");
        values[k] = v;
      }
    };
    if (config_paths.count(chosen->name)) {
      const std::string& path = config_paths.at(chosen->name);
      merge(parse_config(fs::path(path)), path);
    }
    merge(flags, "flags");
    chosen->body(Settings(chosen->name, std::move(values)), out, err);
  } catch (const Error& e) {
    err << "nclkit " << chosen->name << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "nclkit " << chosen->name << ": " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace nclkit::cli
