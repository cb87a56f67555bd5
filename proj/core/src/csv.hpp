#pragma once

// Minimal comma-separated reader/writer shared by the file formats in this
// library. Fields never contain commas or quotes, so no quoting is handled.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

namespace depotcast::csv {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

inline std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> to_int(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// A whole file loaded with its header mapped to column positions.
class Table {
 public:
  template <typename Error>
  static Table load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
    Table t;
    t.path_ = path.string();
    std::string line;
    if (!std::getline(in, line)) throw Error(fmt::format("'{}' has no header row", t.path_));
    for (auto f : split(trim_cr(line))) t.header_.emplace_back(f);
    while (std::getline(in, line)) {
      if (trim_cr(line).empty()) continue;
      t.lines_.push_back(std::move(line));
    }
    return t;
  }

  template <typename Error>
  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i) {
      if (header_[i] == name) return i;
    }
    throw Error(fmt::format("'{}': missing column '{}'", path_, name));
  }

  [[nodiscard]] bool has_column(std::string_view name) const {
    for (const auto& h : header_) {
      if (h == name) return true;
    }
    return false;
  }

  [[nodiscard]] std::size_t rows() const { return lines_.size(); }

  /// Fields of data row i (0-based); the views are valid while the table lives.
  template <typename Error>
  std::vector<std::string_view> row(std::size_t i) const {
    auto fields = split(trim_cr(lines_[i]));
    if (fields.size() != header_.size()) {
      throw Error(fmt::format("'{}' row {}: expected {} fields, found {}", path_, i + 1,
                              header_.size(), fields.size()));
    }
    return fields;
  }

  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<std::string> header_;
  std::vector<std::string> lines_;
};

template <typename Error>
std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  return out;
}

template <typename Error>
void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(fmt::format("I/O failure while writing '{}'", path.string()));
}

}  // namespace depotcast::csv
