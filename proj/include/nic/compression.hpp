#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nic/image.hpp"
#include "nic/tensor.hpp"

namespace nic {

struct PatchCoord {
  int row, col;      // grid position
  int x_off, y_off;  // pixel offsets (col*stride, row*stride)
};

struct PatchGrid {
  int rows = 0, cols = 0;
  int patch_size = 64, stride = 64;
  std::vector<PatchCoord> coords;  // row-major reading order
};

// uniform grid of fully-contained patches: rows = floor((H-P)/S)+1
PatchGrid plan_grid(int width, int height, int patch_size = 64, int stride = 64);

// 2-D grid of embedding vectors plus validity mask
struct CompressedImage {
  int rows = 0, cols = 0, code_size = 0;
  int patch_size = 64, stride = 64;
  std::vector<double> embeddings;  // rows*cols*code_size, row-major
  std::vector<uint8_t> validity;   // rows*cols, 1 = valid
  std::array<uint8_t, 32> encoder_digest{};
  std::string source_id;  // manifest metadata, not stored in the file

  double* cell(int r, int c) {
    return embeddings.data() + (static_cast<int64_t>(r) * cols + c) * code_size;
  }
  const double* cell(int r, int c) const {
    return embeddings.data() + (static_cast<int64_t>(r) * cols + c) * code_size;
  }
};

// embeds one normalized patch (patch_size*patch_size*3 doubles in [0,1]) into
// code_size outputs; must be safe to call from multiple threads
using EmbedFn = std::function<void(const double* patch, double* embedding)>;

// Streams the image by rows (peak pixel memory is one patch-height strip),
// embeds each grid patch, and assembles the embedding grid. Patches whose
// fraction of near-white pixels (Rec.709 luminance > 0.86) exceeds
// tissue_filter_threshold are zeroed and marked invalid.
CompressedImage compress(RowSource& source, const EmbedFn& embed, int code_size,
                         const PatchGrid& grid,
                         std::optional<double> tissue_filter_threshold = std::nullopt,
                         int threads = 1);

double patch_white_fraction(const double* patch, int patch_size);

// NICW file errors carry a distinct code per failure mode
struct NicwError : std::runtime_error {
  enum class Code { io, bad_magic, bad_version, bad_crc, truncated };
  NicwError(Code c, const std::string& msg) : std::runtime_error(msg), code(c) {}
  Code code;
};

constexpr uint16_t kNicwVersion = 1;

// NICW, little-endian: magic "NICW", version u16, R u32, Q u32, C u32,
// P u16, S u16, flags u16 (bit0: mask present), encoder digest 32B,
// payload = R*Q*C binary32 row-major then R*Q mask bits padded to byte,
// CRC-32 (of the payload bytes) u32. Embeddings are computed in binary64
// and rounded once to binary32 at write time.
void write_nicw(const CompressedImage& ci, const std::string& path);
CompressedImage read_nicw(const std::string& path);

int64_t nicw_file_size(int rows, int cols, int code_size);

}  // namespace nic
