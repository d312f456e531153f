#pragma once

// Little-endian binary serialization helpers for the index and baseline files.

#include "curbsense/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace curbsense::binary {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer
{
public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void put(T v)
  {
    static_assert(std::is_arithmetic_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.write(buf, sizeof(T));
  }

  void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

private:
  std::ostream& out_;
};

class Reader
{
public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <typename T>
  T get()
  {
    static_assert(std::is_arithmetic_v<T>);
    char buf[sizeof(T)];
    if (!in_.read(buf, sizeof(T)))
      throw data_error(source_ + ": truncated file");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

  void raw(char* data, std::size_t n)
  {
    if (!in_.read(data, static_cast<std::streamsize>(n)))
      throw data_error(source_ + ": truncated file");
  }

  /// Guards element counts read from the file before allocating.
  std::uint64_t count(std::uint64_t limit = (1ULL << 32))
  {
    const auto n = get<std::uint64_t>();
    if (n > limit)
      throw data_error(source_ + ": corrupt element count");
    return n;
  }

  void expect_end()
  {
    if (in_.peek() != std::char_traits<char>::eof())
      throw data_error(source_ + ": trailing bytes after payload");
  }

  const std::string& source() const { return source_; }

private:
  std::istream& in_;
  std::string source_;
};

/// Checks a 5-byte magic followed by a u32 version.
inline void expect_header(Reader& r, const char (&magic)[6], std::uint32_t version)
{
  char got[5];
  r.raw(got, 5);
  if (std::memcmp(got, magic, 5) != 0)
    throw data_error(r.source() + ": bad magic, expected " + std::string(magic, 5));
  const auto v = r.get<std::uint32_t>();
  if (v != version)
    throw data_error(r.source() + ": unsupported " + std::string(magic, 5) + " version " + std::to_string(v) +
                     " (expected " + std::to_string(version) + ")");
}

inline void put_header(Writer& w, const char (&magic)[6], std::uint32_t version)
{
  w.raw(magic, 5);
  w.put<std::uint32_t>(version);
}

} // namespace curbsense::binary
