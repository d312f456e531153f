#pragma once

#include <stdexcept>
#include <string>

namespace curbsense {

// Maps onto the CLI exit codes: usage = 1, data = 2, internal = 3.
enum class ErrorKind { usage = 1, data = 2, internal = 3 };

class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline Error data_error(const std::string& what)
{
  return Error(ErrorKind::data, what);
}

inline Error usage_error(const std::string& what)
{
  return Error(ErrorKind::usage, what);
}

/// Parse failure carrying the 1-based line number of the offending input.
inline Error parse_error(const std::string& source, std::size_t line, const std::string& what)
{
  return Error(ErrorKind::data, source + ":" + std::to_string(line) + ": " + what);
}

} // namespace curbsense
