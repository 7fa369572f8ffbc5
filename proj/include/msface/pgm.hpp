#pragma once

// Binary PGM (P5) reader/writer. 16-bit samples are big-endian per the
// netpbm convention; depth frames use maxval 65535, gray and IR use 255.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "msface/image.hpp"
#include "msface/io.hpp"

namespace msface::pgm {

namespace detail {

struct Header {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

inline Header parse_header(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    fail_data("not a binary PGM (P5)");
  std::size_t pos = 2;
  int fields[3] = {0, 0, 0};
  for (int& f : fields) {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() ||
        !std::isdigit(static_cast<unsigned char>(bytes[pos])))
      fail_data("malformed PGM header");
    long long v = 0;
    while (pos < bytes.size() &&
           std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 24) fail_data("PGM header value too large");
      ++pos;
    }
    f = static_cast<int>(v);
  }
  // exactly one whitespace byte separates the header from the raster
  if (pos >= bytes.size() ||
      !std::isspace(static_cast<unsigned char>(bytes[pos])))
    fail_data("malformed PGM header");
  ++pos;
  Header h{fields[0], fields[1], fields[2], pos};
  if (h.width <= 0 || h.height <= 0) fail_data("PGM dimensions must be > 0");
  if (h.maxval <= 0 || h.maxval > 65535) fail_data("PGM maxval out of range");
  return h;
}

inline std::string header_text(int w, int h, int maxval) {
  return "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
         std::to_string(maxval) + "\n";
}

}  // namespace detail

template <class Band>
Raster<std::uint8_t, Band> decode8(std::string_view bytes) {
  const auto h = detail::parse_header(bytes);
  if (h.maxval > 255) fail_data("expected an 8-bit PGM, got maxval " +
                                std::to_string(h.maxval));
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data_offset + n) fail_data("truncated PGM raster");
  Raster<std::uint8_t, Band> img(h.width, h.height);
  for (std::size_t i = 0; i < n; ++i)
    img.pixels[i] = static_cast<std::uint8_t>(bytes[h.data_offset + i]);
  return img;
}

inline DepthFrame decode_depth(std::string_view bytes) {
  const auto h = detail::parse_header(bytes);
  if (h.maxval < 256) fail_data("expected a 16-bit depth PGM");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data_offset + 2 * n) fail_data("truncated PGM raster");
  DepthFrame img(h.width, h.height);
  const auto* p =
      reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (std::size_t i = 0; i < n; ++i)
    img.pixels[i] = static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
  return img;
}

template <class Band>
std::string encode8(const Raster<std::uint8_t, Band>& img) {
  std::string out = detail::header_text(img.width, img.height, 255);
  out.append(reinterpret_cast<const char*>(img.pixels.data()),
             img.pixels.size());
  return out;
}

inline std::string encode_depth(const DepthFrame& img) {
  std::string out = detail::header_text(img.width, img.height, 65535);
  out.reserve(out.size() + 2 * img.pixels.size());
  for (const auto d : img.pixels) {
    out.push_back(static_cast<char>(d >> 8));
    out.push_back(static_cast<char>(d & 0xff));
  }
  return out;
}

inline GrayFrame read_gray(const std::filesystem::path& p) {
  return decode8<GrayBand>(io::read_file(p));
}
inline IrFrame read_ir(const std::filesystem::path& p) {
  return decode8<IrBand>(io::read_file(p));
}
inline DepthFrame read_depth(const std::filesystem::path& p) {
  return decode_depth(io::read_file(p));
}

template <class Band>
void write8(const std::filesystem::path& p,
            const Raster<std::uint8_t, Band>& img) {
  io::write_file_atomic(p, encode8(img));
}
inline void write_depth(const std::filesystem::path& p, const DepthFrame& d) {
  io::write_file_atomic(p, encode_depth(d));
}

}  // namespace msface::pgm
