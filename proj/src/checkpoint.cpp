#include "lctem/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

#include "lctem/text.hpp"

namespace lctem {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr unsigned char kMagic[4] = {'L', 'C', 'T', 'M'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename Scalar>
  void record(const std::string& name, const Tensor<Scalar>& t) {
    str(name);
    const Shape& s = t.shape();
    u8(4);
    for (int d : {s.n, s.c, s.h, s.w}) u32(static_cast<std::uint32_t>(d));
    const Eigen::Array<float, Eigen::Dynamic, 1> f = t.values().template cast<float>();
    bytes(f.data(), static_cast<std::size_t>(f.size()) * 4);
  }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(std::span<const unsigned char> b, std::size_t end) : b_(b), end_(end) {}
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > end_)
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            std::string("checkpoint truncated while reading ") + what + " at byte " +
                                std::to_string(pos_));
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, b_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, std::size_t n, const char* what) {
    need(n * 4, what);
    std::memcpy(dst, b_.data() + pos_, n * 4);
    pos_ += n * 4;
  }
  bool done() const { return pos_ == end_; }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const unsigned char> b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

template <typename Scalar>
std::vector<unsigned char> serialize_checkpoint(const UNet<Scalar>& model) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  const auto& store = model.store();
  w.str(model.config().to_record() + "step=" + std::to_string(store.step()) + "\n");
  for (const auto& [name, p] : store.params()) w.record(name, p.value);
  for (const auto& [name, b] : store.buffers()) w.record(name, b);
  for (const auto& [name, m] : store.moments()) {
    w.record("adam.m." + name, m.m);
    w.record("adam.v." + name, m.v);
  }
  const std::uint32_t crc = crc_of(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

template <typename Scalar>
UNet<Scalar> parse_checkpoint(std::span<const unsigned char> bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    if (bytes.size() < 4) throw CheckpointError(Kind::Truncated, "checkpoint shorter than its magic");
    throw CheckpointError(Kind::BadMagic, "not a checkpoint (bad magic)");
  }
  if (bytes.size() < 16) throw CheckpointError(Kind::Truncated, "checkpoint truncated in header");
  const std::size_t body = bytes.size() - 4;
  Reader r(bytes, body);
  r.u32("magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::Version, "checkpoint version " + std::to_string(version) +
                                             " is not supported (expected " +
                                             std::to_string(kCheckpointVersion) + ")");
  const std::string record = r.str("config record");

  std::string model_lines;
  long step = 0;
  {
    std::istringstream is(record);
    std::string line;
    while (std::getline(is, line)) {
      if (line.rfind("step=", 0) == 0) {
        try {
          step = static_cast<long>(parse_int(line.substr(5), "step"));
        } catch (const InputError& e) {
          throw CheckpointError(Kind::Config, e.what());
        }
      } else {
        model_lines += line + "\n";
      }
    }
  }
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_record(model_lines);
  } catch (const InputError& e) {
    throw CheckpointError(Kind::Config, std::string("checkpoint config: ") + e.what());
  }

  UNet<Scalar> model(cfg, 0);
  auto& store = model.store();
  std::map<std::string, bool> seen;
  std::vector<float> scratch;
  while (!r.done()) {
    const std::string name = r.str("record name");
    const std::uint8_t rank = r.u8("rank");
    if (rank != 4) throw CheckpointError(Kind::Shape, "record '" + name + "' has rank " + std::to_string(rank));
    Shape s;
    s.n = static_cast<int>(r.u32("dims"));
    s.c = static_cast<int>(r.u32("dims"));
    s.h = static_cast<int>(r.u32("dims"));
    s.w = static_cast<int>(r.u32("dims"));
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw CheckpointError(Kind::Shape, "record '" + name + "' has an invalid shape");
    scratch.resize(static_cast<std::size_t>(s.size()));
    r.floats(scratch.data(), scratch.size(), name.c_str());

    Tensor<Scalar>* dst = nullptr;
    std::string base = name;
    if (name.rfind("adam.m.", 0) == 0 || name.rfind("adam.v.", 0) == 0) {
      base = name.substr(7);
      auto it = store.params().find(base);
      if (it == store.params().end())
        throw CheckpointError(Kind::Shape, "optimizer record for unknown parameter '" + base + "'");
      auto& mom = store.moments()[base];
      Tensor<Scalar>& t = name[5] == 'm' ? mom.m : mom.v;
      t = Tensor<Scalar>(it->second.value.shape());
      dst = &t;
    } else if (auto it = store.params().find(name); it != store.params().end()) {
      dst = &it->second.value;
    } else if (auto jt = store.buffers().find(name); jt != store.buffers().end()) {
      dst = &jt->second;
    } else {
      throw CheckpointError(Kind::Shape, "checkpoint record '" + name + "' does not belong to the model");
    }
    if (dst->shape() != s)
      throw CheckpointError(Kind::Shape, "record '" + name + "' has shape " + s.str() + ", model expects " +
                                             dst->shape().str());
    if (seen[name]) throw CheckpointError(Kind::Shape, "duplicate record '" + name + "'");
    seen[name] = true;
    for (std::size_t i = 0; i < scratch.size(); ++i) dst->data()[i] = static_cast<Scalar>(scratch[i]);
  }
  for (const auto& [name, p] : store.params())
    if (!seen.count(name)) throw CheckpointError(Kind::Shape, "checkpoint lacks parameter '" + name + "'");
  for (const auto& [name, b] : store.buffers())
    if (!seen.count(name)) throw CheckpointError(Kind::Shape, "checkpoint lacks buffer '" + name + "'");
  for (const auto& [name, m] : store.moments())
    if (!seen.count("adam.m." + name) || !seen.count("adam.v." + name))
      throw CheckpointError(Kind::Shape, "incomplete optimizer state for '" + name + "'");

  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc_of(bytes.first(body)))
    throw CheckpointError(Kind::Checksum, "checkpoint checksum mismatch");
  store.set_step(step);
  return model;
}

template <typename Scalar>
void save_checkpoint(const UNet<Scalar>& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename Scalar>
UNet<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint<Scalar>(bytes);
}

template std::vector<unsigned char> serialize_checkpoint(const UNet<float>&);
template std::vector<unsigned char> serialize_checkpoint(const UNet<double>&);
template UNet<float> parse_checkpoint(std::span<const unsigned char>);
template UNet<double> parse_checkpoint(std::span<const unsigned char>);
template void save_checkpoint(const UNet<float>&, const std::filesystem::path&);
template void save_checkpoint(const UNet<double>&, const std::filesystem::path&);
template UNet<float> load_checkpoint(const std::filesystem::path&);
template UNet<double> load_checkpoint(const std::filesystem::path&);

}  // namespace lctem
