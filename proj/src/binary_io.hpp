#pragma once

// Little-endian stream helpers shared by the dataset, model and code formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "sih/common.hpp"

namespace sih::detail {

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_arithmetic_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T, typename Range>
void put_all(std::ostream& out, const Range& values) {
  for (auto v : values) put<T>(out, static_cast<T>(v));
}

inline void put_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void put_string(std::ostream& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

// Reads typed values, reporting which section was cut short.
class Reader {
 public:
  Reader(std::istream& in, std::string kind) : in_(in), kind_(std::move(kind)) {}

  void section(std::string name) { section_ = std::move(name); }

  template <typename T>
  T get() {
    static_assert(std::is_arithmetic_v<T>);
    std::array<char, sizeof(T)> bytes;
    in_.read(bytes.data(), sizeof(T));
    if (in_.gcount() != static_cast<std::streamsize>(sizeof(T)))
      throw FormatError("corrupt " + kind_ + ": truncated in section '" + section_ + "'");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
  }

  void expect_magic(std::string_view magic) {
    std::string got(magic.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(magic.size()));
    if (in_.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic)
      throw FormatError(kind_ + ": bad magic, expected '" + std::string(magic) + "'");
  }

  std::string get_string(std::size_t max_len = 1 << 20) {
    const auto len = get<std::uint32_t>();
    if (len > max_len) throw FormatError("corrupt " + kind_ + ": string too long in section '" + section_ + "'");
    std::string s(len, '\0');
    in_.read(s.data(), len);
    if (in_.gcount() != static_cast<std::streamsize>(len))
      throw FormatError("corrupt " + kind_ + ": truncated in section '" + section_ + "'");
    return s;
  }

  // Rejects counts that cannot fit in what is left of a seekable stream.
  void check_remaining(std::uint64_t count, std::size_t elem_size) {
    const auto here = in_.tellg();
    if (here < 0) return;
    in_.seekg(0, std::ios::end);
    const auto end = in_.tellg();
    in_.seekg(here);
    if (end < 0) return;
    const auto left = static_cast<std::uint64_t>(end - here);
    if (elem_size != 0 && count > left / elem_size)
      throw FormatError("corrupt " + kind_ + ": truncated in section '" + section_ + "'");
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  std::string kind_;
  std::string section_ = "header";
};

}  // namespace sih::detail
