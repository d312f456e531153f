#pragma once

// Line-oriented parsing helpers shared by the text file readers.

#include "curbsense/error.hpp"

#include <charconv>
#include <cstdint>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace curbsense::text {

inline std::vector<std::string_view> split(std::string_view line, char sep = ' ')
{
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == sep || (sep == ' ' && line[i] == '\t')))
      ++i;
    if (i >= line.size())
      break;
    std::size_t j = i;
    while (j < line.size() && line[j] != sep && !(sep == ' ' && line[j] == '\t'))
      ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string_view strip(std::string_view s)
{
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  return s;
}

/// Reads lines and tracks the 1-based line number for error messages.
class LineReader
{
public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(std::string& line)
  {
    if (!std::getline(in_, line))
      return false;
    ++line_no_;
    return true;
  }

  std::size_t line_no() const { return line_no_; }
  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const std::string& what) const { throw parse_error(source_, line_no_, what); }

  template <typename T>
  T number(std::string_view tok, const char* what) const
  {
    T v{};
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      fail(std::string("bad ") + what + " '" + std::string(tok) + "'");
    return v;
  }

private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

} // namespace curbsense::text
