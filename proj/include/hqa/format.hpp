#pragma once

// Shortest round-trip number formatting for CSV and JSONL output.

#include <charconv>
#include <string>

namespace hqa::detail {

template <typename Float>
void append_number(std::string& out, Float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

inline void append_float(std::string& out, float v) { append_number(out, v); }
inline void append_double(std::string& out, double v) { append_number(out, v); }

}  // namespace hqa::detail
