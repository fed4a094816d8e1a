// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian flat binary encoding shared by datasets and checkpoints.

#pragma once

#include "ral/errors.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

namespace ral::io {

static_assert(std::endian::native == std::endian::little,
              "flat binary formats assume a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.append(p, sizeof(T));
  }
  void put_u8(std::uint8_t v) { put(v); }
  void put_u64(std::uint64_t v) { put(v); }
  void put_i64(std::int64_t v) { put(v); }
  void put_f64(double v) { put(v); }
  void put_magic(std::string_view magic) { bytes_.append(magic); }

  // u64 rows, u64 cols, then row-major doubles.
  void put_matrix(const Eigen::MatrixXd& m) {
    put_u64(static_cast<std::uint64_t>(m.rows()));
    put_u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(m(i, j));
    }
  }

  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string label) : bytes_(std::move(bytes)), label_(std::move(label)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint8_t get_u8() { return get<std::uint8_t>(); }
  std::uint64_t get_u64() { return get<std::uint64_t>(); }
  std::int64_t get_i64() { return get<std::int64_t>(); }
  double get_f64() { return get<double>(); }

  void expect_magic(std::string_view magic) {
    need(magic.size());
    if (std::string_view(bytes_).substr(pos_, magic.size()) != magic) {
      throw DataError("corrupt " + label_ + ": bad magic");
    }
    pos_ += magic.size();
  }

  Eigen::MatrixXd get_matrix() {
    const auto rows = get_u64();
    const auto cols = get_u64();
    if (rows * cols * sizeof(double) > bytes_.size() - pos_) {
      throw DataError("corrupt " + label_ + ": truncated matrix");
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get_f64();
    }
    return m;
  }

  // Count field that must be satisfiable by the remaining bytes at `min_each`
  // bytes per element.
  std::uint64_t get_count(std::size_t min_each) {
    const auto n = get_u64();
    if (min_each > 0 && n > (bytes_.size() - pos_) / min_each) {
      throw DataError("corrupt " + label_ + ": count exceeds payload");
    }
    return n;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  void expect_end() const {
    if (!at_end()) throw DataError("corrupt " + label_ + ": trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("corrupt " + label_ + ": truncated");
  }

  std::string bytes_;
  std::string label_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace ral::io
