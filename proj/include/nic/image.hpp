#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace nic {

// 8-bit RGB raster, row-major
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // width*height*3

  uint8_t* row(int y) { return pixels.data() + static_cast<size_t>(y) * width * 3; }
  const uint8_t* row(int y) const {
    return pixels.data() + static_cast<size_t>(y) * width * 3;
  }
};

Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

// Sequential row access so large images never need to be fully resident
class RowSource {
 public:
  virtual ~RowSource() = default;
  virtual int width() const = 0;
  virtual int height() const = 0;
  virtual void read_row(uint8_t* rgb) = 0;  // next row, width*3 bytes
};

class PpmRowSource : public RowSource {
 public:
  explicit PpmRowSource(const std::string& path);
  int width() const override { return width_; }
  int height() const override { return height_; }
  void read_row(uint8_t* rgb) override;

 private:
  std::ifstream file_;
  int width_ = 0, height_ = 0, rows_read_ = 0;
};

class MemoryRowSource : public RowSource {
 public:
  explicit MemoryRowSource(const Image& img) : img_(img) {}
  int width() const override { return img_.width; }
  int height() const override { return img_.height; }
  void read_row(uint8_t* rgb) override;

 private:
  const Image& img_;
  int next_ = 0;
};

}  // namespace nic
