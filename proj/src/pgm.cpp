#include "lctem/pgm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "lctem/error.hpp"
#include "lctem/text.hpp"

namespace lctem {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000) throw ParseError(std::string("PGM: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("PGM: expected ") + what, start);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_p5_16(const CountArray& counts, const std::filesystem::path& path) {
  std::ostringstream header;
  header << "P5\n" << counts.cols() << ' ' << counts.rows() << "\n65535\n";
  std::string out = header.str();
  out.reserve(out.size() + static_cast<std::size_t>(counts.size()) * 2);
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    const std::uint16_t v = counts.data()[i];
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  write_text(path, out);
}

}  // namespace

CountArray parse_pgm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw ParseError("PGM: missing P5 magic", 0);
  HeaderReader hdr(bytes.subspan(0));
  hdr.advance();
  hdr.advance();
  const long width = hdr.read_uint("width");
  const long height = hdr.read_uint("height");
  const std::size_t maxval_at = hdr.pos();
  const long maxval = hdr.read_uint("maxval");
  if (width < 1 || height < 1) throw ParseError("PGM: zero dimension", maxval_at);
  if (maxval != 255 && maxval != 65535)
    throw ParseError("PGM: unsupported maxval " + std::to_string(maxval), maxval_at);
  if (hdr.pos() >= bytes.size() || !std::isspace(bytes[hdr.pos()]))
    throw ParseError("PGM: expected single whitespace after maxval", hdr.pos());
  const std::size_t data_at = hdr.pos() + 1;
  const std::size_t bps = maxval == 255 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * bps;
  if (bytes.size() - data_at < need)
    throw ParseError("PGM: truncated payload, expected " + std::to_string(need) + " bytes",
                     bytes.size());
  CountArray counts(height, width);
  const unsigned char* p = bytes.data() + data_at;
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    counts.data()[i] = bps == 1 ? p[i]
                                : static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
  }
  return counts;
}

Micrograph load_pgm(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  CountArray counts = parse_pgm(bytes);
  const auto meta_path = sidecar_path(path);
  MicrographMeta meta;
  if (std::filesystem::exists(meta_path)) meta = load_sidecar(meta_path);
  return Micrograph(std::move(counts), meta);
}

void save_pgm(const Micrograph& img, const std::filesystem::path& path) {
  write_p5_16(img.counts(), path);
}

void save_pgm(const NormalizedImage& img, const std::filesystem::path& path) {
  CountArray counts = (img.values() * 65535.0).round().cast<std::uint16_t>();
  write_p5_16(counts, path);
}

std::filesystem::path sidecar_path(const std::filesystem::path& image_path) {
  auto p = image_path;
  p.replace_extension(".meta");
  return p;
}

MicrographMeta load_sidecar(const std::filesystem::path& path) {
  MicrographMeta meta;
  for (const auto& kv : read_key_values(path)) {
    const std::string what = path.string() + ":" + std::to_string(kv.line) + " " + kv.key;
    const double v = parse_double(kv.value, what);
    if (kv.key == "pixel_size_nm") meta.pixel_size_nm = v;
    else if (kv.key == "exposure_s") meta.exposure_s = v;
    else if (kv.key == "dose_rate_e_per_nm2_s") meta.dose_rate = v;
    else if (kv.key == "magnification") meta.magnification = v;
    else if (kv.key == "conversion_gain") meta.conversion_gain = v;
    else throw MetadataError(path.string() + ": unknown sidecar key '" + kv.key + "'");
  }
  meta.validate();
  return meta;
}

void save_sidecar(const MicrographMeta& meta, const std::filesystem::path& path) {
  std::string out;
  out += "pixel_size_nm = " + format_real(meta.pixel_size_nm) + "\n";
  out += "exposure_s = " + format_real(meta.exposure_s) + "\n";
  if (meta.dose_rate) out += "dose_rate_e_per_nm2_s = " + format_real(*meta.dose_rate) + "\n";
  if (meta.magnification) out += "magnification = " + format_real(*meta.magnification) + "\n";
  if (meta.conversion_gain) out += "conversion_gain = " + format_real(*meta.conversion_gain) + "\n";
  write_text(path, out);
}

}  // namespace lctem
