#ifndef NCLKIT_CSV_HPP_
#define NCLKIT_CSV_HPP_

#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace nclkit {

// Shortest round-trip decimal form; identical bits always print identically.
std::string format_number(double value);
std::string format_number(long long value);

// Minimal CSV emitter. An optional leading "# ..." comment line carries run
// metadata; everything after it is the deterministic body.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header, std::string comment = {});

  void add_row(std::vector<std::string> cells);
  std::size_t row_count() const noexcept { return rows_.size(); }

  void write(std::ostream& out) const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::string comment_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace nclkit

#endif  // NCLKIT_CSV_HPP_
