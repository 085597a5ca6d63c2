#include "nclkit/csv.hpp"

#include <charconv>
#include <fstream>
#include <ostream>

#include "nclkit/error.hpp"

namespace nclkit {

std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_number(long long value) { return std::to_string(value); }

CsvWriter::CsvWriter(std::vector<std::string> header, std::string comment)
    : header_(std::move(header)), comment_(std::move(comment)) {}

void CsvWriter::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size()) {
    throw Error(ErrorKind::kInvalidArgument, "CSV row width does not match header");
  }
  rows_.push_back(std::move(cells));
}

namespace {
void write_line(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}
}  // namespace

void CsvWriter::write(std::ostream& out) const {
  if (!comment_.empty()) out << "# " << comment_ << '\n';
  write_line(out, header_);
  for (const auto& row : rows_) write_line(out, row);
}

void CsvWriter::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  write(out);
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

}  // namespace nclkit
