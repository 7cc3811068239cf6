#include "nic/checkpoint.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace nic {

namespace {

template <typename T>
void put(std::string& buf, T v) {
  // little-endian scalar append; host is little-endian on all supported targets
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& off) {
  if (off + sizeof(T) > buf.size()) throw std::runtime_error("NICP: truncated file");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::string serialize_nicp(const ParamStore& params) {
  std::string buf;
  buf.append("NICP", 4);
  put<uint16_t>(buf, kNicpVersion);
  put<uint32_t>(buf, static_cast<uint32_t>(params.entries().size()));
  for (const auto& [name, t] : params.entries()) {
    if (name.size() > 0xffff) throw std::invalid_argument("NICP: name too long");
    put<uint16_t>(buf, static_cast<uint16_t>(name.size()));
    buf.append(name);
    put<uint8_t>(buf, static_cast<uint8_t>(t->shape.size()));
    for (int d : t->shape) put<uint32_t>(buf, static_cast<uint32_t>(d));
    for (double v : t->data) put<double>(buf, v);
  }
  return buf;
}

}  // namespace

void write_nicp(const ParamStore& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  const std::string buf = serialize_nicp(params);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

ParamStore read_nicp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  size_t off = 0;
  if (buf.size() < 10 || buf.compare(0, 4, "NICP") != 0)
    throw std::runtime_error("NICP: bad magic");
  off = 4;
  const uint16_t version = take<uint16_t>(buf, off);
  if (version != kNicpVersion) throw std::runtime_error("NICP: unsupported version");
  const uint32_t count = take<uint32_t>(buf, off);

  ParamStore store;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = take<uint16_t>(buf, off);
    if (off + name_len > buf.size()) throw std::runtime_error("NICP: truncated file");
    std::string name(buf, off, name_len);
    off += name_len;
    const uint8_t rank = take<uint8_t>(buf, off);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(take<uint32_t>(buf, off));
    auto t = make_tensor(shape);
    for (auto& v : t->data) v = take<double>(buf, off);
    // trainability is a property of how the model builder declares the
    // parameter; restore as trainable unless it is a running statistic
    t->requires_grad = name.find(".running_") == std::string::npos;
    store.add(name, t);
  }
  if (off != buf.size()) throw std::runtime_error("NICP: trailing bytes");
  return store;
}

std::array<uint8_t, 32> sha256_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char chunk[1 << 16];
  while (f) {
    f.read(chunk, sizeof(chunk));
    EVP_DigestUpdate(ctx, chunk, static_cast<size_t>(f.gcount()));
  }
  std::array<uint8_t, 32> out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, out.data(), &len);
  EVP_MD_CTX_free(ctx);
  return out;
}

std::array<uint8_t, 32> sha256_params(const ParamStore& params) {
  const std::string buf = serialize_nicp(params);
  std::array<uint8_t, 32> out{};
  unsigned int len = 0;
  EVP_Digest(buf.data(), buf.size(), out.data(), &len, EVP_sha256(), nullptr);
  return out;
}

std::string hex_digest(const std::array<uint8_t, 32>& d) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (uint8_t b : d) {
    s.push_back(hex[b >> 4]);
    s.push_back(hex[b & 0xf]);
  }
  return s;
}

}  // namespace nic
