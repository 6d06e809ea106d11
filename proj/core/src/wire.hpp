#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "rqrf/error.hpp"

// Little-endian binary helpers for the checkpoint format.
namespace rqrf::wire {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

inline void put_f32(std::string& out, float v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

inline void put_string(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

inline std::uint32_t get_u32(std::string_view& in) {
  if (in.size() < 4) throw ArtifactError("checkpoint: truncated");
  std::uint32_t v;
  std::memcpy(&v, in.data(), 4);
  in.remove_prefix(4);
  return v;
}

inline float get_f32(std::string_view& in) {
  if (in.size() < 4) throw ArtifactError("checkpoint: truncated");
  float v;
  std::memcpy(&v, in.data(), 4);
  in.remove_prefix(4);
  return v;
}

inline std::string get_string(std::string_view& in) {
  const std::uint32_t n = get_u32(in);
  if (in.size() < n) throw ArtifactError("checkpoint: truncated string");
  std::string s(in.substr(0, n));
  in.remove_prefix(n);
  return s;
}

}  // namespace rqrf::wire
