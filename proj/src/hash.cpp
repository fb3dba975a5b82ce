#include "resdepth/hash.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <stdexcept>
#include <vector>

namespace resdepth {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
      throw std::runtime_error("sha256: init failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("sha256: update failed");
  }
  template <class T>
  void pod(const T& v) { update(&v, sizeof(T)); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw std::runtime_error("sha256: final failed");
    std::string out;
    char buf[3];
    for (unsigned i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof buf, "%02x", md[i]);
      out += buf;
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx_;
};

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_hex(const std::string& text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.hex();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("sha256_file: cannot open " + path);
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string content_hash(const HeightField& f) {
  Sha256 h;
  h.pod(f.grid.width);
  h.pod(f.grid.height);
  h.pod(f.grid.origin_x);
  h.pod(f.grid.origin_y);
  h.pod(f.grid.cell_size);
  h.update(f.values.vec().data(), f.values.size() * sizeof(double));
  h.update(f.nodata.vec().data(), f.nodata.size());
  return h.hex();
}

std::string content_hash(const GrayImage& img) {
  Sha256 h;
  const int w = img.width(), ht = img.height();
  h.pod(w);
  h.pod(ht);
  h.update(img.values.vec().data(), img.values.size() * sizeof(double));
  h.update(img.valid.vec().data(), img.valid.size());
  return h.hex();
}

}  // namespace resdepth
