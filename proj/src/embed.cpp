#include "nclkit/embed.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "nclkit/error.hpp"
#include "nclkit/parallel.hpp"

namespace nclkit {

const char* to_string(Modality m) { return m == Modality::kText ? "text" : "video"; }

namespace {

std::vector<std::int64_t> identity_ids(Eigen::Index n) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), std::int64_t{0});
  return ids;
}

constexpr double kZeroNorm = 1e-12;
constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xffu), static_cast<char>((v >> 8) & 0xffu),
                         static_cast<char>((v >> 16) & 0xffu),
                         static_cast<char>((v >> 24) & 0xffu)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

EmbeddingSet::EmbeddingSet(Modality modality, Matrix vectors, std::vector<std::int64_t> ids)
    : modality_(modality), vectors_(std::move(vectors)), ids_(std::move(ids)) {
  if (vectors_.rows() < 1 || vectors_.cols() < 1) {
    throw Error(ErrorKind::kInvalidArgument, "embedding set needs at least one row and one column");
  }
  if (ids_.empty()) {
    ids_ = identity_ids(vectors_.rows());
  } else if (static_cast<Eigen::Index>(ids_.size()) != vectors_.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "id count does not match row count");
  }
  std::unordered_set<std::int64_t> seen(ids_.begin(), ids_.end());
  if (seen.size() != ids_.size()) {
    throw Error(ErrorKind::kInvalidArgument, "embedding ids are not unique");
  }
  for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
    const double norm = vectors_.row(i).norm();
    if (!(std::abs(norm - 1.0) <= kUnitNormTolerance)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "row " + std::to_string(i) + " is not unit norm (" + std::to_string(norm) + ")",
                  static_cast<std::size_t>(i));
    }
  }
}

EmbeddingSet EmbeddingSet::slice(Eigen::Index begin, Eigen::Index count) const {
  if (begin < 0 || count < 1 || begin + count > size()) {
    throw Error(ErrorKind::kInvalidArgument, "slice out of range");
  }
  std::vector<std::int64_t> ids(ids_.begin() + begin, ids_.begin() + begin + count);
  return EmbeddingSet(modality_, vectors_.middleRows(begin, count), std::move(ids));
}

SimilarityMatrix::SimilarityMatrix(Matrix v)
    : values(std::move(v)), row_ids(identity_ids(values.rows())), col_ids(identity_ids(values.cols())) {}

SimilarityMatrix::SimilarityMatrix(Matrix v, std::vector<std::int64_t> rows,
                                   std::vector<std::int64_t> cols)
    : values(std::move(v)), row_ids(std::move(rows)), col_ids(std::move(cols)) {
  if (static_cast<Eigen::Index>(row_ids.size()) != values.rows() ||
      static_cast<Eigen::Index>(col_ids.size()) != values.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "similarity ids do not match matrix shape");
  }
}

SimilarityMatrix SimilarityMatrix::transposed() const {
  return SimilarityMatrix(values.transpose(), col_ids, row_ids);
}

void l2_normalize_rows(Matrix& rows) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (!std::isfinite(norm)) {
      throw Error(ErrorKind::kNonFinite, "row " + std::to_string(i) + " has a non-finite norm",
                  static_cast<std::size_t>(i));
    }
    if (!(norm >= kZeroNorm)) {
      throw Error(ErrorKind::kZeroVector, "row " + std::to_string(i) + " has zero norm",
                  static_cast<std::size_t>(i));
    }
    rows.row(i) /= norm;
  }
}

EmbeddingSet l2_normalize(const Matrix& raw, Modality modality) {
  Matrix out = raw;
  l2_normalize_rows(out);
  return EmbeddingSet(modality, std::move(out));
}

Matrix inner_products(const Matrix& queries, const Matrix& items) {
  if (queries.cols() != items.cols()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "query dim " + std::to_string(queries.cols()) + " != item dim " +
                    std::to_string(items.cols()));
  }
  const Eigen::Index m = queries.rows();
  const Eigen::Index n = items.rows();
  const Eigen::Index d = queries.cols();
  Matrix out(m, n);
  // Plain loops keep the summation order fixed (dimension order) regardless
  // of Eigen's kernel selection or the thread count.
  parallel_for_rows(static_cast<std::size_t>(m), [&](std::size_t begin, std::size_t end) {
    for (auto i = static_cast<Eigen::Index>(begin); i < static_cast<Eigen::Index>(end); ++i) {
      const double* q = queries.row(i).data();
      for (Eigen::Index j = 0; j < n; ++j) {
        const double* v = items.row(j).data();
        double acc = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) acc += q[k] * v[k];
        out(i, j) = acc;
      }
    }
  });
  return out;
}

SimilarityMatrix cosine_similarity_matrix(const EmbeddingSet& queries, const EmbeddingSet& items) {
  return SimilarityMatrix(inner_products(queries.vectors(), items.vectors()), queries.ids(),
                          items.ids());
}

void write_emb1(std::ostream& out, Modality modality, const Matrix& values) {
  if (values.rows() > 0xffffffffLL || values.cols() > 0xffffffffLL) {
    throw Error(ErrorKind::kInvalidArgument, "matrix too large for EMB1");
  }
  out.write(kMagic.data(), 4);
  put_u32(out, static_cast<std::uint32_t>(values.rows()));
  put_u32(out, static_cast<std::uint32_t>(values.cols()));
  const char header_tail[4] = {static_cast<char>(modality), 0, 0, 0};
  out.write(header_tail, 4);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(values(i, j))));
    }
  }
  if (!out) throw Error(ErrorKind::kIo, "failed writing EMB1 stream");
}

void write_emb1(const std::filesystem::path& path, Modality modality, const Matrix& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  write_emb1(out, modality, values);
}

RawEmbeddings read_emb1(std::istream& in) {
  unsigned char header[16];
  if (!in.read(reinterpret_cast<char*>(header), 16)) {
    throw Error(ErrorKind::kFormat, "truncated EMB1 header");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), reinterpret_cast<const char*>(header))) {
    throw Error(ErrorKind::kFormat, "bad EMB1 magic");
  }
  const std::uint32_t rows = get_u32(header + 4);
  const std::uint32_t dim = get_u32(header + 8);
  if (header[12] > 1) throw Error(ErrorKind::kFormat, "bad EMB1 modality byte");
  RawEmbeddings raw;
  raw.modality = static_cast<Modality>(header[12]);
  raw.values.resize(rows, dim);
  std::vector<unsigned char> row_bytes(static_cast<std::size_t>(dim) * 4);
  for (std::uint32_t i = 0; i < rows; ++i) {
    if (!in.read(reinterpret_cast<char*>(row_bytes.data()),
                 static_cast<std::streamsize>(row_bytes.size()))) {
      throw Error(ErrorKind::kFormat,
                  "truncated EMB1 payload at row " + std::to_string(i) + " of " +
                      std::to_string(rows),
                  i);
    }
    for (std::uint32_t j = 0; j < dim; ++j) {
      raw.values(i, j) = std::bit_cast<float>(get_u32(row_bytes.data() + 4 * j));
    }
  }
  return raw;
}

RawEmbeddings read_emb1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return read_emb1(in);
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  RawEmbeddings raw = read_emb1(path);
  if (raw.values.rows() == 0 || raw.values.cols() == 0) {
    throw Error(ErrorKind::kFormat, path.string() + " holds no embeddings");
  }
  return l2_normalize(raw.values, raw.modality);
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  write_emb1(path, set.modality(), set.vectors());
}

IdManifest::IdManifest(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!lookup_.emplace(names_[i], i).second) {
      throw Error(ErrorKind::kInvalidArgument, "duplicate id '" + names_[i] + "' in manifest", i);
    }
  }
}

IdManifest IdManifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    names.push_back(line);
  }
  return IdManifest(std::move(names));
}

std::size_t IdManifest::index_of(const std::string& name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) throw Error(ErrorKind::kInvalidArgument, "unknown id '" + name + "'");
  return it->second;
}

}  // namespace nclkit
