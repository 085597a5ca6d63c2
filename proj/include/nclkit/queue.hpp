#ifndef NCLKIT_QUEUE_HPP_
#define NCLKIT_QUEUE_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "nclkit/embed.hpp"
#include "nclkit/sinkhorn.hpp"

namespace nclkit {

// FIFO buffer of the most recent unit-norm query embeddings of one modality.
// Rows are snapshots taken at push time; they go stale as the encoder moves.
// Duplicates (the same sample seen in several epochs) are kept.
class QueryQueue {
 public:
  static constexpr std::size_t kDefaultCapacity = 16384;

  explicit QueryQueue(Modality modality, std::size_t capacity = kDefaultCapacity);

  Modality modality() const noexcept { return modality_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }
  // 0 until the first non-empty push.
  Eigen::Index dim() const noexcept { return dim_; }
  std::uint64_t total_pushed() const noexcept { return total_pushed_; }

  void push(const EmbeddingSet& batch);
  // Rows must be unit-norm; an empty matrix is a no-op.
  void push(Modality modality, const Matrix& rows);

  // Stored rows, oldest first.
  Matrix snapshot() const;
  // Copy holding only the `k` most recent rows (all of them if k >= size).
  QueryQueue truncated(std::size_t k) const;

  // EMB1 block of the snapshot followed by a u32 LE capacity.
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static QueryQueue load(std::istream& in);
  static QueryQueue load(const std::filesystem::path& path);

 private:
  void append_row(const double* row);

  Modality modality_;
  std::size_t capacity_;
  Eigen::Index dim_ = 0;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // slot of the oldest row once full
  std::uint64_t total_pushed_ = 0;
  std::vector<double> data_;
};

// Value-semantics push.
QueryQueue push_batch(QueryQueue queue, const EmbeddingSet& batch);

struct TestTimeBiases {
  Vector item_biases;
  double gamma = 0.0;
  Eigen::Index queue_size_used = 0;
  std::string warning;  // set when the queue is below capacity
  double residual = 0.0;
  int iterations_run = 0;
  std::uint64_t kernel_evaluations = 0;
};

// Rectangular Sinkhorn (uniform prior) on the K x N similarities between
// queued queries and test items; keeps the item-side biases.
// Throws kEmptyQueue and kDimensionMismatch.
TestTimeBiases test_time_biases(const QueryQueue& queue, const EmbeddingSet& items, double gamma,
                                const SinkhornOptions& opts = {});
TestTimeBiases test_time_biases(const Matrix& queries, const Matrix& items, double gamma,
                                const SinkhornOptions& opts = {});

// Item-side biases taken straight from a query x item similarity matrix.
TestTimeBiases item_biases_from_similarity(const SimilarityMatrix& S, double gamma,
                                           const SinkhornOptions& opts = {});

// Oracle mode: biases from the test matrix itself, one scaling per
// direction. first = text->video (length cols), second = video->text
// (length rows).
std::pair<TestTimeBiases, TestTimeBiases> oracle_test_biases(const SimilarityMatrix& S,
                                                             double gamma,
                                                             const SinkhornOptions& opts = {});

// S*(i, j) = v2t(i) + t2v(j) + S(i, j).
SimilarityMatrix apply_test_biases(const SimilarityMatrix& S, const TestTimeBiases& t2v,
                                   const TestTimeBiases& v2t);

}  // namespace nclkit

#endif  // NCLKIT_QUEUE_HPP_
