#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rfi/linalg.hpp"
#include "rfi/scores.hpp"

namespace rfi {

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size()) throw io_error(std::string("truncated file: ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos++])) << (8 * i);
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(std::uint8_t(buf[pos++])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  void magic(const char* expect) {
    need(4, "magic");
    if (buf.compare(pos, 4, expect) != 0)
      throw io_error(std::string("bad magic, expected ") + expect);
    pos += 4;
  }
};

inline void encode_matrix(std::string& out, const Matrix& m) {
  out.append("RFI1");
  put_u32(out, std::uint32_t(m.rows()));
  put_u32(out, std::uint32_t(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

inline Matrix decode_matrix(ByteReader& in) {
  in.magic("RFI1");
  const std::uint32_t rows = in.u32("rows");
  const std::uint32_t cols = in.u32("cols");
  Matrix m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = in.f64("payload");
  return m;
}

}  // namespace detail

/// Write the full contents atomically: temp file in the same directory,
/// then rename over the target.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& contents) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + tmp.string());
    out.write(contents.data(), std::streamsize(contents.size()));
    if (!out) throw io_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

/// Binary matrix file: "RFI1", u32 rows, u32 cols (little-endian), then
/// rows*cols float64 little-endian, row-major. Round-trips are bit-exact.
inline void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  std::string out;
  out.reserve(12 + std::size_t(m.size()) * 8);
  detail::encode_matrix(out, m);
  write_file_atomic(path, out);
}

inline Matrix read_matrix_file(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  detail::ByteReader in{buf};
  Matrix m = detail::decode_matrix(in);
  if (in.pos != buf.size()) throw io_error("trailing bytes in " + path.string());
  return m;
}

/// Projector file: "RFIP", u8 mode, u32 K, u32 selected count + indices,
/// then U_tilde, beta_tilde, scores and any per-class bases as embedded
/// matrix blocks. All payloads bit-exact.
inline void write_projector_file(const std::filesystem::path& path,
                                 const RobustProjector& proj) {
  std::string out;
  out.append("RFIP");
  out.push_back(proj.mode == ProjectorMode::GlobalUnion ? 0 : 1);
  detail::put_u32(out, std::uint32_t(proj.K));
  detail::put_u32(out, std::uint32_t(proj.selected_indices.size()));
  for (int idx : proj.selected_indices) detail::put_u32(out, std::uint32_t(idx));
  detail::encode_matrix(out, proj.U_tilde);
  detail::encode_matrix(out, proj.beta_tilde);
  detail::encode_matrix(out, proj.scores);
  detail::put_u32(out, std::uint32_t(proj.class_bases.size()));
  for (const Matrix& b : proj.class_bases) detail::encode_matrix(out, b);
  write_file_atomic(path, out);
}

inline RobustProjector read_projector_file(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  detail::ByteReader in{buf};
  in.magic("RFIP");
  in.need(1, "mode");
  RobustProjector proj;
  proj.mode = buf[in.pos++] == 0 ? ProjectorMode::GlobalUnion : ProjectorMode::ClasswiseBc;
  proj.K = int(in.u32("K"));
  const std::uint32_t nsel = in.u32("selected count");
  proj.selected_indices.resize(nsel);
  for (std::uint32_t i = 0; i < nsel; ++i)
    proj.selected_indices[i] = int(in.u32("selected index"));
  proj.U_tilde = detail::decode_matrix(in);
  proj.beta_tilde = detail::decode_matrix(in);
  proj.scores = detail::decode_matrix(in);
  const std::uint32_t nbases = in.u32("class basis count");
  proj.class_bases.resize(nbases);
  for (std::uint32_t i = 0; i < nbases; ++i) proj.class_bases[i] = detail::decode_matrix(in);
  if (in.pos != buf.size()) throw io_error("trailing bytes in " + path.string());
  return proj;
}

}  // namespace rfi
