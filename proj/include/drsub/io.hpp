#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "drsub/core.hpp"

namespace drsub::io {

/// Shortest decimal that parses back to the identical double.
inline std::string exact(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Fixed 17 significant digits, used by the CSV outputs.
inline std::string sig17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(std::string_view token, const std::string& context) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError(context + ": cannot parse number '" + std::string(token) + "'");
  }
  return value;
}

inline long long parse_int(std::string_view token, const std::string& context) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ValidationError(context + ": cannot parse integer '" + std::string(token) + "'");
  }
  return value;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << contents;
  if (!out) throw IoError("write to '" + path + "' failed");
}

/// Appends "key v0 v1 ..." to `os`.
template <class Derived>
void write_row(std::ostream& os, std::string_view key, const Eigen::DenseBase<Derived>& row) {
  os << key;
  for (Index i = 0; i < row.size(); ++i) os << ' ' << exact(row(i));
  os << '\n';
}

/// Line-oriented "key values..." document, as written by write_row.
class KeyLines {
 public:
  explicit KeyLines(const std::string& text, std::string source) : source_(std::move(source)) {
    std::istringstream is(text);
    std::string line;
    int number = 0;
    while (std::getline(is, line)) {
      ++number;
      auto toks = split_ws(line);
      if (toks.empty() || toks[0][0] == '#') continue;
      lines_.push_back({number, std::move(toks)});
    }
  }

  std::size_t size() const { return lines_.size(); }
  bool at_end() const { return pos_ >= lines_.size(); }

  /// Consumes the next line, which must start with `key`; returns its values.
  std::vector<double> take(std::string_view key, std::size_t expected_count) {
    if (at_end()) throw ValidationError(source_ + ": missing '" + std::string(key) + "' line");
    const auto& [number, toks] = lines_[pos_++];
    const std::string where = source_ + ":" + std::to_string(number);
    if (toks[0] != key) {
      throw ValidationError(where + ": expected '" + std::string(key) + "', found '" + toks[0] + "'");
    }
    if (toks.size() - 1 != expected_count) {
      throw ValidationError(where + ": expected " + std::to_string(expected_count) + " values");
    }
    std::vector<double> values;
    values.reserve(expected_count);
    for (std::size_t i = 1; i < toks.size(); ++i) values.push_back(parse_double(toks[i], where));
    return values;
  }

  long long take_count(std::string_view key) {
    auto v = take(key, 1);
    if (v[0] < 0 || v[0] != static_cast<double>(static_cast<long long>(v[0]))) {
      throw ValidationError(source_ + ": '" + std::string(key) + "' must be a non-negative integer");
    }
    return static_cast<long long>(v[0]);
  }

  void expect_tag(std::string_view tag) {
    if (at_end() || lines_[pos_].tokens.size() != 1 || lines_[pos_].tokens[0] != tag) {
      throw ValidationError(source_ + ": expected '" + std::string(tag) + "' header");
    }
    ++pos_;
  }

  void expect_end() const {
    if (!at_end()) {
      throw ValidationError(source_ + ":" + std::to_string(lines_[pos_].number) +
                            ": unexpected trailing content");
    }
  }

 private:
  struct Line {
    int number;
    std::vector<std::string> tokens;
  };
  std::string source_;
  std::vector<Line> lines_;
  std::size_t pos_ = 0;
};

}  // namespace drsub::io
