#include "lctem/manifest.hpp"

#include <fstream>

#include "lctem/error.hpp"
#include "lctem/pgm.hpp"
#include "lctem/text.hpp"

namespace lctem {

namespace {
constexpr const char* kHeader = "id,noisy_path,truth_path,noisy_dose,truth_dose";
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto body = trim(line);
    if (row == 1) {
      if (body != kHeader)
        throw InputError("manifest row 1: expected header '" + std::string(kHeader) + "'");
      continue;
    }
    if (body.empty()) continue;
    const auto fields = split(body, ',');
    const std::string where = "manifest row " + std::to_string(row);
    if (fields.size() != 5) throw InputError(where + ": expected 5 fields");
    if (fields[0].empty()) throw InputError(where + ": empty id");
    ManifestEntry e;
    e.id = fields[0];
    e.noisy_path = base / fields[1];
    e.truth_path = base / fields[2];
    e.noisy_dose = parse_double(fields[3], where + " noisy_dose");
    e.truth_dose = parse_double(fields[4], where + " truth_dose");
    if (e.noisy_dose < 0 || e.truth_dose < 0) throw InputError(where + ": negative dose");
    entries.push_back(std::move(e));
  }
  if (row == 0) throw InputError("manifest row 1: missing header");
  return entries;
}

void save_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  const auto base = path.parent_path();
  std::string out = std::string(kHeader) + "\n";
  for (const auto& e : entries) {
    out += e.id + "," + std::filesystem::relative(e.noisy_path, base).generic_string() + "," +
           std::filesystem::relative(e.truth_path, base).generic_string() + "," +
           format_real(e.noisy_dose) + "," + format_real(e.truth_dose) + "\n";
  }
  write_text(path, out);
}

std::vector<PairedSample> load_pairs(const std::vector<ManifestEntry>& entries, int size) {
  std::vector<PairedSample> pairs;
  pairs.reserve(entries.size());
  for (const auto& e : entries) {
    auto prep = [size](const Micrograph& m) {
      ImageArray v = m.counts().cast<double>();
      if (size > 0) v = area_resize(v, size, size);
      return NormalizedImage(rescale_intensity(v));
    };
    pairs.emplace_back(prep(load_pgm(e.noisy_path)), prep(load_pgm(e.truth_path)), e.noisy_dose,
                       e.truth_dose, e.id);
  }
  return pairs;
}

void save_pairs(const std::vector<PairedSample>& pairs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const auto& p : pairs) {
    ManifestEntry e{p.id, dir / (p.id + "_S.pgm"), dir / (p.id + "_T.pgm"), p.noisy_dose,
                    p.truth_dose};
    save_pgm(p.noisy, e.noisy_path);
    save_pgm(p.truth, e.truth_path);
    entries.push_back(std::move(e));
  }
  save_manifest(entries, dir / "manifest.csv");
}

}  // namespace lctem
