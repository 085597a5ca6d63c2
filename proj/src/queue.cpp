#include "nclkit/queue.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "nclkit/error.hpp"

namespace nclkit {

QueryQueue::QueryQueue(Modality modality, std::size_t capacity)
    : modality_(modality), capacity_(capacity) {
  if (capacity_ < 1) throw Error(ErrorKind::kInvalidArgument, "queue capacity must be >= 1");
}

void QueryQueue::append_row(const double* row) {
  const auto d = static_cast<std::size_t>(dim_);
  if (size_ < capacity_) {
    data_.insert(data_.end(), row, row + d);
    ++size_;
  } else {
    std::copy(row, row + d, data_.begin() + static_cast<std::ptrdiff_t>(head_ * d));
    head_ = (head_ + 1) % capacity_;
  }
  ++total_pushed_;
}

void QueryQueue::push(Modality modality, const Matrix& rows) {
  if (modality != modality_) {
    throw Error(ErrorKind::kModalityMismatch, std::string("cannot push ") + to_string(modality) +
                                                  " rows into a " + to_string(modality_) +
                                                  " queue");
  }
  if (rows.rows() == 0) return;
  if (dim_ != 0 && rows.cols() != dim_) {
    throw Error(ErrorKind::kDimensionMismatch, "batch dim " + std::to_string(rows.cols()) +
                                                   " does not match queue dim " +
                                                   std::to_string(dim_));
  }
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (!(std::abs(norm - 1.0) <= EmbeddingSet::kUnitNormTolerance)) {
      throw Error(ErrorKind::kInvalidArgument, "queued row " + std::to_string(i) + " is not unit norm",
                  static_cast<std::size_t>(i));
    }
  }
  if (dim_ == 0) dim_ = rows.cols();
  for (Eigen::Index i = 0; i < rows.rows(); ++i) append_row(rows.row(i).data());
}

void QueryQueue::push(const EmbeddingSet& batch) { push(batch.modality(), batch.vectors()); }

Matrix QueryQueue::snapshot() const {
  Matrix out(static_cast<Eigen::Index>(size_), dim_);
  const auto d = static_cast<std::size_t>(dim_);
  for (std::size_t k = 0; k < size_; ++k) {
    const std::size_t slot = (head_ + k) % size_;
    std::copy(data_.begin() + static_cast<std::ptrdiff_t>(slot * d),
              data_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * d),
              out.row(static_cast<Eigen::Index>(k)).data());
  }
  return out;
}

QueryQueue QueryQueue::truncated(std::size_t k) const {
  QueryQueue out(modality_, capacity_);
  const std::size_t keep = std::min(k, size_);
  if (keep == 0) return out;
  const Matrix all = snapshot();
  out.push(modality_, all.bottomRows(static_cast<Eigen::Index>(keep)));
  return out;
}

void QueryQueue::save(std::ostream& out) const {
  write_emb1(out, modality_, snapshot());
  const auto cap = static_cast<std::uint32_t>(capacity_);
  const char bytes[4] = {static_cast<char>(cap & 0xffu), static_cast<char>((cap >> 8) & 0xffu),
                         static_cast<char>((cap >> 16) & 0xffu),
                         static_cast<char>((cap >> 24) & 0xffu)};
  out.write(bytes, 4);
  if (!out) throw Error(ErrorKind::kIo, "failed writing queue");
}

void QueryQueue::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  save(out);
}

QueryQueue QueryQueue::load(std::istream& in) {
  RawEmbeddings raw = read_emb1(in);
  unsigned char footer[4];
  if (!in.read(reinterpret_cast<char*>(footer), 4)) {
    throw Error(ErrorKind::kFormat, "queue file is missing its capacity footer");
  }
  const std::uint32_t cap = static_cast<std::uint32_t>(footer[0]) |
                            (static_cast<std::uint32_t>(footer[1]) << 8) |
                            (static_cast<std::uint32_t>(footer[2]) << 16) |
                            (static_cast<std::uint32_t>(footer[3]) << 24);
  if (cap < 1 || cap < raw.values.rows()) {
    throw Error(ErrorKind::kFormat, "queue capacity " + std::to_string(cap) +
                                        " is smaller than its " +
                                        std::to_string(raw.values.rows()) + " stored rows");
  }
  QueryQueue q(raw.modality, cap);
  // Renormalize in double so a queue file holds the same rows as
  // load_embeddings() would give for the same float32 payload.
  if (raw.values.rows() > 0) l2_normalize_rows(raw.values);
  q.push(raw.modality, raw.values);
  return q;
}

QueryQueue QueryQueue::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return load(in);
}

QueryQueue push_batch(QueryQueue queue, const EmbeddingSet& batch) {
  queue.push(batch);
  return queue;
}

TestTimeBiases item_biases_from_similarity(const SimilarityMatrix& S, double gamma,
                                           const SinkhornOptions& opts) {
  const BiasVectors b = compute_biases(S, gamma, opts);
  TestTimeBiases out;
  out.item_biases = b.b;
  out.gamma = gamma;
  out.queue_size_used = S.rows();
  out.residual = b.residual;
  out.iterations_run = b.iterations_run;
  out.kernel_evaluations = b.kernel_evaluations;
  return out;
}

TestTimeBiases test_time_biases(const Matrix& queries, const Matrix& items, double gamma,
                                const SinkhornOptions& opts) {
  if (queries.rows() == 0) throw Error(ErrorKind::kEmptyQueue, "query queue is empty");
  if (items.rows() == 0) throw Error(ErrorKind::kInvalidArgument, "no test items");
  if (queries.cols() != items.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "queue dim " + std::to_string(queries.cols()) +
                                                   " does not match item dim " +
                                                   std::to_string(items.cols()));
  }
  return item_biases_from_similarity(SimilarityMatrix(inner_products(queries, items)), gamma, opts);
}

TestTimeBiases test_time_biases(const QueryQueue& queue, const EmbeddingSet& items, double gamma,
                                const SinkhornOptions& opts) {
  if (queue.empty()) throw Error(ErrorKind::kEmptyQueue, "query queue is empty");
  TestTimeBiases out = test_time_biases(queue.snapshot(), items.vectors(), gamma, opts);
  if (queue.size() < queue.capacity()) {
    out.warning = "queue holds " + std::to_string(queue.size()) + " of " +
                  std::to_string(queue.capacity()) + " entries";
  }
  return out;
}

std::pair<TestTimeBiases, TestTimeBiases> oracle_test_biases(const SimilarityMatrix& S,
                                                             double gamma,
                                                             const SinkhornOptions& opts) {
  return {item_biases_from_similarity(S, gamma, opts),
          item_biases_from_similarity(S.transposed(), gamma, opts)};
}

SimilarityMatrix apply_test_biases(const SimilarityMatrix& S, const TestTimeBiases& t2v,
                                   const TestTimeBiases& v2t) {
  return adjust_similarity(S, v2t.item_biases, t2v.item_biases);
}

}  // namespace nclkit
