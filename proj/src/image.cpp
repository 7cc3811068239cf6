#include "nic/image.hpp"

#include <cstring>
#include <stdexcept>

namespace nic {

namespace {

// PPM header token, skipping whitespace and '#' comments
int read_header_int(std::istream& f) {
  int c = f.get();
  for (;;) {
    while (c == ' ' || c == '\t' || c == '\r' || c == '\n') c = f.get();
    if (c == '#') {
      while (c != '\n' && c != EOF) c = f.get();
    } else {
      break;
    }
  }
  int v = 0;
  bool any = false;
  while (c >= '0' && c <= '9') {
    v = v * 10 + (c - '0');
    any = true;
    c = f.get();
  }
  if (!any) throw std::runtime_error("PPM: malformed header");
  return v;
}

void parse_ppm_header(std::istream& f, int& w, int& h) {
  char magic[2];
  f.read(magic, 2);
  if (!f || magic[0] != 'P' || magic[1] != '6') throw std::runtime_error("PPM: not a P6 file");
  w = read_header_int(f);
  h = read_header_int(f);
  const int maxval = read_header_int(f);
  if (w <= 0 || h <= 0) throw std::runtime_error("PPM: bad dimensions");
  if (maxval != 255) throw std::runtime_error("PPM: only 8-bit maxval 255 supported");
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  Image img;
  parse_ppm_header(f, img.width, img.height);
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<size_t>(f.gcount()) != img.pixels.size())
    throw std::runtime_error("PPM: truncated pixel data in " + path);
  return img;
}

void write_ppm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw std::runtime_error("PPM: write failed: " + path);
}

PpmRowSource::PpmRowSource(const std::string& path) : file_(path, std::ios::binary) {
  if (!file_) throw std::runtime_error("cannot open: " + path);
  parse_ppm_header(file_, width_, height_);
}

void PpmRowSource::read_row(uint8_t* rgb) {
  if (rows_read_ >= height_) throw std::runtime_error("PPM: read past end of image");
  file_.read(reinterpret_cast<char*>(rgb), static_cast<std::streamsize>(width_) * 3);
  if (static_cast<size_t>(file_.gcount()) != static_cast<size_t>(width_) * 3)
    throw std::runtime_error("PPM: truncated pixel data");
  ++rows_read_;
}

void MemoryRowSource::read_row(uint8_t* rgb) {
  if (next_ >= img_.height) throw std::runtime_error("read past end of image");
  std::memcpy(rgb, img_.row(next_), static_cast<size_t>(img_.width) * 3);
  ++next_;
}

}  // namespace nic
