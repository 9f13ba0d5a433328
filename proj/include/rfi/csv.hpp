#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rfi/io.hpp"

namespace rfi {

/// CSV with `# key: value` provenance comments before the header row.
/// Numeric cells use %.17g so re-running the same config reproduces the
/// file byte for byte. write() is atomic (temp + rename).
class CsvWriter {
 public:
  void comment(const std::string& key, const std::string& value) {
    body_ += "# " + key + ": " + value + "\n";
  }

  void header(const std::vector<std::string>& columns) {
    body_ += join(columns);
  }

  void row(const std::vector<std::string>& cells) { body_ += join(cells); }

  void footer_comment(const std::string& key, const std::string& value) {
    body_ += "# " + key + ": " + value + "\n";
  }

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

  static std::string num(long v) { return std::to_string(v); }

  void write(const std::filesystem::path& path) const {
    write_file_atomic(path, body_);
  }

  const std::string& contents() const { return body_; }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    line += '\n';
    return line;
  }

  std::string body_;
};

}  // namespace rfi
