#include "resdepth/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace resdepth {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <class T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
  template <class T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Unet<float>& net, Variant variant,
                                            const NormalizationStats& stats) {
  const UnetConfig& c = net.config();
  Writer w;
  w.bytes("RDCK", 4);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(c.levels);
  w.pod<std::uint32_t>(c.in_channels);
  w.pod<std::uint8_t>(c.residual ? 1 : 0);
  w.pod<std::uint32_t>(c.patch_size);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.channel_widths.size()));
  for (int x : c.channel_widths) w.pod<std::uint32_t>(x);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(variant));
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(stats.mode));
  w.pod<double>(stats.mean_height);
  w.pod<double>(stats.std_height);
  w.pod<double>(stats.baseline);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(net.params().size()));
  for (const auto& p : net.params()) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.dims.size()));
    for (int d : p.dims) w.pod<std::uint32_t>(d);
    w.bytes(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(float));
  }
  return std::move(w.out);
}

Model decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "RDCK", 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  UnetConfig c;
  c.levels = static_cast<int>(r.pod<std::uint32_t>());
  c.in_channels = static_cast<int>(r.pod<std::uint32_t>());
  c.residual = r.pod<std::uint8_t>() != 0;
  c.patch_size = static_cast<int>(r.pod<std::uint32_t>());
  const auto nw = r.pod<std::uint32_t>();
  if (nw > 64) throw std::runtime_error("checkpoint: implausible width count");
  c.channel_widths.resize(nw);
  for (auto& x : c.channel_widths) x = static_cast<int>(r.pod<std::uint32_t>());
  const auto v = r.pod<std::uint8_t>();
  if (v > static_cast<std::uint8_t>(Variant::UnetStereo)) throw std::runtime_error("checkpoint: bad variant");
  NormalizationStats stats;
  const auto mode = r.pod<std::uint8_t>();
  if (mode > 1) throw std::runtime_error("checkpoint: bad normalization mode");
  stats.mode = static_cast<NormalizationMode>(mode);
  stats.mean_height = r.pod<double>();
  stats.std_height = r.pod<double>();
  stats.baseline = r.pod<double>();
  Model m{Unet<float>(c), static_cast<Variant>(v), stats};
  const auto count = r.pod<std::uint32_t>();
  if (count != m.net.params().size()) throw std::runtime_error("checkpoint: tensor count does not match config");
  for (auto& p : m.net.params()) {
    const auto len = r.pod<std::uint32_t>();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    if (name != p.name) throw std::runtime_error("checkpoint: expected tensor " + p.name + ", found " + name);
    const auto rank = r.pod<std::uint32_t>();
    std::vector<int> dims(rank);
    for (auto& d : dims) d = static_cast<int>(r.pod<std::uint32_t>());
    if (dims != p.dims) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    r.bytes(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(float));
  }
  if (r.pos != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
  return m;
}

void save_checkpoint(const std::string& path, const Unet<float>& net, Variant variant,
                     const NormalizationStats& stats) {
  const auto bytes = encode_checkpoint(net, variant, stats);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace resdepth
