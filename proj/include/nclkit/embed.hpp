#ifndef NCLKIT_EMBED_HPP_
#define NCLKIT_EMBED_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace nclkit {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Modality : std::uint8_t { kText = 0, kVideo = 1 };

const char* to_string(Modality m);

// Row-wise collection of unit-norm embeddings for one modality.
// Rows are addressed by dense 0-based position; `ids` carries the stable
// instance identifier of each row (identity by default).
class EmbeddingSet {
 public:
  static constexpr double kUnitNormTolerance = 1e-6;

  // Throws kInvalidArgument unless rows >= 1, cols >= 1, ids are unique and
  // every row is unit-norm within kUnitNormTolerance.
  EmbeddingSet(Modality modality, Matrix vectors, std::vector<std::int64_t> ids = {});

  Modality modality() const noexcept { return modality_; }
  Eigen::Index size() const noexcept { return vectors_.rows(); }
  Eigen::Index dim() const noexcept { return vectors_.cols(); }
  const Matrix& vectors() const noexcept { return vectors_; }
  const std::vector<std::int64_t>& ids() const noexcept { return ids_; }

  // Rows [begin, begin + count) as a new set, ids preserved.
  EmbeddingSet slice(Eigen::Index begin, Eigen::Index count) const;

 private:
  Modality modality_;
  Matrix vectors_;
  std::vector<std::int64_t> ids_;
};

// Dense m x n score matrix; rows are queries, columns are items.
struct SimilarityMatrix {
  Matrix values;
  std::vector<std::int64_t> row_ids;
  std::vector<std::int64_t> col_ids;

  SimilarityMatrix() = default;
  // Identity ids.
  explicit SimilarityMatrix(Matrix v);
  SimilarityMatrix(Matrix v, std::vector<std::int64_t> rows, std::vector<std::int64_t> cols);

  Eigen::Index rows() const noexcept { return values.rows(); }
  Eigen::Index cols() const noexcept { return values.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return values(i, j); }

  SimilarityMatrix transposed() const;
};

// Scales every row to unit Euclidean norm. Throws kZeroVector (with the row
// index) when a row norm is below 1e-12.
EmbeddingSet l2_normalize(const Matrix& raw, Modality modality = Modality::kText);

// Row-wise in-place version used by the trainer; same error contract.
void l2_normalize_rows(Matrix& rows);

// values(i, j) = <queries_i, items_j>, each entry summed in dimension order.
// Throws kDimensionMismatch when dims differ.
SimilarityMatrix cosine_similarity_matrix(const EmbeddingSet& queries, const EmbeddingSet& items);
Matrix inner_products(const Matrix& queries, const Matrix& items);

// EMB1 binary format: 16-byte header (magic "EMB1", u32 LE rows, u32 LE
// dim, u8 modality, 3 zero bytes) then rows*dim LE float32, row-major.
struct RawEmbeddings {
  Modality modality = Modality::kText;
  Matrix values;
};

void write_emb1(std::ostream& out, Modality modality, const Matrix& values);
void write_emb1(const std::filesystem::path& path, Modality modality, const Matrix& values);
// Throws kFormat on bad magic, bad modality byte, or truncated payload.
RawEmbeddings read_emb1(std::istream& in);
RawEmbeddings read_emb1(const std::filesystem::path& path);

// read_emb1 followed by l2_normalize.
EmbeddingSet load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);

// Sidecar manifest mapping external string ids to dense row indices:
// one id per line, line k names row k.
class IdManifest {
 public:
  IdManifest() = default;
  explicit IdManifest(std::vector<std::string> names);

  static IdManifest read(const std::filesystem::path& path);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  // Throws kInvalidArgument for unknown names.
  std::size_t index_of(const std::string& name) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

}  // namespace nclkit

#endif  // NCLKIT_EMBED_HPP_
