#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "driftbench/errors.hpp"

namespace driftbench {

// Little-endian byte building/parsing shared by the container and checkpoint
// formats.
namespace blob {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  put_bytes(out, buf, sizeof(T));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_le(out, bits);
}

inline void put_string(std::string& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

inline void put_f64_vec(std::string& out, const std::vector<double>& v) {
  put_le<std::uint64_t>(out, v.size());
  for (double x : v) put_f64(out, x);
}

class Reader {
 public:
  Reader(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[at_ + i])) << (8 * i);
    at_ += sizeof(T);
    return static_cast<T>(v);
  }

  double get_f64() {
    const std::uint64_t bits = get_le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(at_, n);
    at_ += n;
    return s;
  }

  std::string get_string() { return get_bytes(get_le<std::uint32_t>()); }

  std::vector<double> get_f64_vec() {
    const auto n = get_le<std::uint64_t>();
    std::vector<double> v(n);
    for (auto& x : v) x = get_f64();
    return v;
  }

  bool at_end() const { return at_ == buf_.size(); }
  const std::string& what() const { return what_; }

 private:
  void need(std::size_t n) {
    if (at_ + n > buf_.size()) throw CorruptError(what_ + ": truncated file");
  }
  const std::string& buf_;
  std::string what_;
  std::size_t at_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace blob
}  // namespace driftbench
