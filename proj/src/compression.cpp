#include "nic/compression.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <thread>

namespace nic {

PatchGrid plan_grid(int width, int height, int patch_size, int stride) {
  if (patch_size <= 0 || stride <= 0)
    throw std::invalid_argument("plan_grid: patch size and stride must be positive");
  if (width < patch_size || height < patch_size)
    throw std::invalid_argument("plan_grid: image smaller than one patch");
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.stride = stride;
  grid.rows = (height - patch_size) / stride + 1;
  grid.cols = (width - patch_size) / stride + 1;
  grid.coords.reserve(static_cast<size_t>(grid.rows) * grid.cols);
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c)
      grid.coords.push_back({r, c, c * stride, r * stride});
  return grid;
}

double patch_white_fraction(const double* patch, int patch_size) {
  const int64_t n = static_cast<int64_t>(patch_size) * patch_size;
  int64_t white = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double* px = patch + i * 3;
    const double lum = 0.2126 * px[0] + 0.7152 * px[1] + 0.0722 * px[2];
    if (lum > 0.86) ++white;
  }
  return static_cast<double>(white) / static_cast<double>(n);
}

CompressedImage compress(RowSource& source, const EmbedFn& embed, int code_size,
                         const PatchGrid& grid,
                         std::optional<double> tissue_filter_threshold, int threads) {
  const int p = grid.patch_size, s = grid.stride, w = source.width();
  if (threads < 1) threads = 1;

  CompressedImage ci;
  ci.rows = grid.rows;
  ci.cols = grid.cols;
  ci.code_size = code_size;
  ci.patch_size = p;
  ci.stride = s;
  ci.embeddings.assign(static_cast<size_t>(grid.rows) * grid.cols * code_size, 0.0);
  ci.validity.assign(static_cast<size_t>(grid.rows) * grid.cols, 0);

  // rolling strip of the last `p` pixel rows
  std::deque<std::vector<uint8_t>> window;
  int next_row = 0;  // absolute index of the next row to read
  auto advance_to = [&](int first_needed, int last_needed) {
    while (next_row <= last_needed) {
      std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
      source.read_row(row.data());
      ++next_row;
      window.push_back(std::move(row));
      while (static_cast<int>(window.size()) > p &&
             next_row - static_cast<int>(window.size()) < first_needed)
        window.pop_front();
    }
    while (next_row - static_cast<int>(window.size()) < first_needed) window.pop_front();
  };

  std::vector<double> patch_buf;
  for (int r = 0; r < grid.rows; ++r) {
    const int y0 = r * s;
    advance_to(y0, y0 + p - 1);
    const int base = next_row - static_cast<int>(window.size());

    // extract and normalize the whole patch row, then embed in parallel;
    // every patch is embedded by an independent single-sample forward so the
    // result is identical for any worker count
    patch_buf.assign(static_cast<size_t>(grid.cols) * p * p * 3, 0.0);
    for (int c = 0; c < grid.cols; ++c) {
      double* dst = patch_buf.data() + static_cast<size_t>(c) * p * p * 3;
      const int x0 = c * s;
      for (int y = 0; y < p; ++y) {
        const uint8_t* src = window[static_cast<size_t>(y0 + y - base)].data() + x0 * 3;
        for (int i = 0; i < p * 3; ++i) dst[y * p * 3 + i] = src[i] / 255.0;
      }
    }

    auto work = [&](int c_begin, int c_end) {
      for (int c = c_begin; c < c_end; ++c) {
        const double* patch = patch_buf.data() + static_cast<size_t>(c) * p * p * 3;
        if (tissue_filter_threshold &&
            patch_white_fraction(patch, p) > *tissue_filter_threshold)
          continue;  // cell stays zero and invalid
        embed(patch, ci.cell(r, c));
        ci.validity[static_cast<size_t>(r) * grid.cols + c] = 1;
      }
    };
    if (threads == 1 || grid.cols == 1) {
      work(0, grid.cols);
    } else {
      std::vector<std::thread> pool;
      const int per = (grid.cols + threads - 1) / threads;
      for (int t = 0; t < threads; ++t) {
        const int b = t * per, e = std::min(grid.cols, b + per);
        if (b < e) pool.emplace_back(work, b, e);
      }
      for (auto& th : pool) th.join();
    }
  }
  return ci;
}

namespace {

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& off) {
  if (off + sizeof(T) > buf.size())
    throw NicwError(NicwError::Code::truncated, "NICW: truncated file");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

constexpr size_t kHeaderSize = 4 + 2 + 4 + 4 + 4 + 2 + 2 + 2 + 32;

}  // namespace

int64_t nicw_file_size(int rows, int cols, int code_size) {
  const int64_t cells = static_cast<int64_t>(rows) * cols;
  return static_cast<int64_t>(kHeaderSize) + cells * code_size * 4 + (cells + 7) / 8 + 4;
}

void write_nicw(const CompressedImage& ci, const std::string& path) {
  std::string buf;
  buf.append("NICW", 4);
  put<uint16_t>(buf, kNicwVersion);
  put<uint32_t>(buf, static_cast<uint32_t>(ci.rows));
  put<uint32_t>(buf, static_cast<uint32_t>(ci.cols));
  put<uint32_t>(buf, static_cast<uint32_t>(ci.code_size));
  put<uint16_t>(buf, static_cast<uint16_t>(ci.patch_size));
  put<uint16_t>(buf, static_cast<uint16_t>(ci.stride));
  put<uint16_t>(buf, 0x0001);  // mask present
  buf.append(reinterpret_cast<const char*>(ci.encoder_digest.data()), 32);

  std::string payload;
  for (double v : ci.embeddings) put<float>(payload, static_cast<float>(v));
  const size_t cells = ci.validity.size();
  for (size_t i = 0; i < cells; i += 8) {
    uint8_t byte = 0;
    for (size_t b = 0; b < 8 && i + b < cells; ++b)
      if (ci.validity[i + b]) byte |= static_cast<uint8_t>(1u << b);
    payload.push_back(static_cast<char>(byte));
  }
  buf += payload;
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(payload.data()),
            static_cast<uInt>(payload.size())));
  put<uint32_t>(buf, crc);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw NicwError(NicwError::Code::io, "cannot open for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw NicwError(NicwError::Code::io, "write failed: " + path);
}

CompressedImage read_nicw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NicwError(NicwError::Code::io, "cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < kHeaderSize || buf.compare(0, 4, "NICW") != 0)
    throw NicwError(NicwError::Code::bad_magic, "NICW: bad magic");
  size_t off = 4;
  const uint16_t version = take<uint16_t>(buf, off);
  if (version != kNicwVersion)
    throw NicwError(NicwError::Code::bad_version, "NICW: unsupported version");

  CompressedImage ci;
  ci.rows = static_cast<int>(take<uint32_t>(buf, off));
  ci.cols = static_cast<int>(take<uint32_t>(buf, off));
  ci.code_size = static_cast<int>(take<uint32_t>(buf, off));
  ci.patch_size = take<uint16_t>(buf, off);
  ci.stride = take<uint16_t>(buf, off);
  const uint16_t flags = take<uint16_t>(buf, off);
  std::memcpy(ci.encoder_digest.data(), buf.data() + off, 32);
  off += 32;

  if (buf.size() != static_cast<size_t>(nicw_file_size(ci.rows, ci.cols, ci.code_size)))
    throw NicwError(NicwError::Code::truncated, "NICW: size does not match header");

  const size_t cells = static_cast<size_t>(ci.rows) * ci.cols;
  const size_t payload_size = cells * ci.code_size * 4 + (cells + 7) / 8;
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data() + off),
            static_cast<uInt>(payload_size)));
  size_t crc_off = off + payload_size;
  if (take<uint32_t>(buf, crc_off) != crc)
    throw NicwError(NicwError::Code::bad_crc, "NICW: payload CRC mismatch");

  ci.embeddings.resize(cells * ci.code_size);
  for (auto& v : ci.embeddings) v = static_cast<double>(take<float>(buf, off));
  ci.validity.assign(cells, 1);
  if (flags & 1) {
    for (size_t i = 0; i < cells; i += 8) {
      const uint8_t byte = static_cast<uint8_t>(buf[off++]);
      for (size_t b = 0; b < 8 && i + b < cells; ++b)
        ci.validity[i + b] = (byte >> b) & 1;
    }
  }
  return ci;
}

}  // namespace nic
