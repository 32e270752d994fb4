#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "lctem/manifest.hpp"
#include "lctem/micrograph.hpp"
#include "lctem/pgm.hpp"
#include "oracles.hpp"

using namespace lctem;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lctem_micrograph_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::vector<unsigned char> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

ImageArray grid(std::initializer_list<std::initializer_list<double>> rows) {
  ImageArray a(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
  int i = 0;
  for (auto& r : rows) {
    int j = 0;
    for (double v : r) a(i, j++) = v;
    ++i;
  }
  return a;
}

}  // namespace

TEST(Pgm, Minimal16Bit) {
  const std::string f = std::string("P5\n2 1\n65535\n") + std::string("\x00\x00\xff\xff", 4);
  auto c = parse_pgm(bytes_of(f));
  ASSERT_EQ(c.cols(), 2);
  EXPECT_EQ(c(0, 0), 0);
  EXPECT_EQ(c(0, 1), 65535);
}

TEST(Pgm, EightBitPassthroughAndComments) {
  const std::string f = std::string("P5 # comment\n2 # w\n1\n255\n") + std::string("\x00\xff", 2);
  auto c = parse_pgm(bytes_of(f));
  EXPECT_EQ(c(0, 0), 0);
  EXPECT_EQ(c(0, 1), 255);
}

TEST(Pgm, UnsupportedMaxvalNamesOffset) {
  const std::string f = "P5\n2 1\n1024\n" + std::string(4, '\0');
  try {
    parse_pgm(bytes_of(f));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("maxval"), std::string::npos);
    EXPECT_GT(e.offset(), 0u);
  }
}

TEST(Pgm, MalformedAndTruncated) {
  EXPECT_THROW(parse_pgm(bytes_of("P2\n1 1\n255\n0")), ParseError);
  EXPECT_THROW(parse_pgm(bytes_of("P5\n2 x\n255\n")), ParseError);
  EXPECT_THROW(parse_pgm(bytes_of(std::string("P5\n4 1\n65535\n") + std::string(5, '\0'))), ParseError);
  EXPECT_THROW(parse_pgm(bytes_of("P5\n0 1\n255\n")), ParseError);
}

TEST(Pgm, RoundTripIsBitIdentical) {
  std::mt19937_64 rng(1);
  CountArray c(8, 8);
  for (int i = 0; i < 64; ++i) c.data()[i] = static_cast<std::uint16_t>(rng() & 0xffff);
  const auto p = scratch("rt.pgm");
  save_pgm(Micrograph(c), p);
  auto back = load_pgm(p);
  EXPECT_TRUE((back.counts() == c).all());
}

TEST(Pgm, NormalizedQuantization) {
  ImageArray v(1, 3);
  v << 0.0, 0.5, 1.0;
  const auto p = scratch("q.pgm");
  save_pgm(NormalizedImage(v), p);
  auto back = load_pgm(p);
  EXPECT_EQ(back.counts()(0, 0), 0);
  EXPECT_EQ(back.counts()(0, 1), 32768);
  EXPECT_EQ(back.counts()(0, 2), 65535);
}

TEST(Pgm, SidecarMetadata) {
  const auto p = scratch("meta.pgm");
  MicrographMeta m;
  m.pixel_size_nm = 0.5;
  m.exposure_s = 0.01;
  m.dose_rate = 100.0;
  save_pgm(Micrograph(CountArray::Constant(2, 2, 7), m), p);
  save_sidecar(m, sidecar_path(p));
  auto back = load_pgm(p);
  EXPECT_EQ(back.meta().pixel_size_nm, 0.5);
  ASSERT_TRUE(back.meta().dose_rate.has_value());
  EXPECT_EQ(*back.meta().dose_rate, 100.0);
  write_bytes(sidecar_path(p), "pixel_size_nm = 1\nfocus = 3\n");
  EXPECT_THROW(load_pgm(p), MetadataError);
  fs::remove(sidecar_path(p));
}

TEST(Types, InvariantsAreEnforced) {
  EXPECT_THROW(NormalizedImage(grid({{0.5, 1.5}})), InputError);
  EXPECT_THROW(NormalizedImage(grid({{-0.1}})), InputError);
  EXPECT_THROW(Micrograph(CountArray(0, 3)), ShapeError);
  MicrographMeta m;
  m.exposure_s = 0;
  EXPECT_THROW(Micrograph(CountArray::Zero(1, 1), m), MetadataError);
  EXPECT_THROW(PairedSample(NormalizedImage(2, 2), NormalizedImage(2, 3), 1, 1, "x"), ShapeError);
  EXPECT_THROW(PairedSample(NormalizedImage(2, 2), NormalizedImage(2, 2), -1, 1, "x"), InputError);
}

TEST(AreaResize, BlockMeanAndIdentity) {
  auto img = NormalizedImage(grid({{0, 1}, {1, 0}}));
  EXPECT_EQ(area_resize(img, 1, 1)(0, 0), 0.5);
  std::mt19937_64 rng(2);
  auto r = NormalizedImage(oracle::random_image(7, 5, rng));
  EXPECT_EQ(area_resize(r, 5, 7), r);
}

TEST(AreaResize, FractionalOverlap) {
  auto out = area_resize(NormalizedImage(grid({{0, 0.6, 0.9}})), 2, 1);
  EXPECT_NEAR(out(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(out(0, 1), 0.8, 1e-15);
}

TEST(AreaResize, IntegerFactorPreservesMean) {
  std::mt19937_64 rng(3);
  ImageArray a = oracle::random_image(16, 24, rng);
  ImageArray b = area_resize(a, 6, 4);
  EXPECT_NEAR(a.mean(), b.mean(), 1e-15);
}

TEST(AreaResize, MatchesOverlapOracle) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> dim(1, 16);
  for (int t = 0; t < 60; ++t) {
    ImageArray a = oracle::random_image(dim(rng), dim(rng), rng);
    const int ow = dim(rng), oh = dim(rng);
    ImageArray got = area_resize(a, ow, oh);
    ImageArray want = oracle::area_resize(a, ow, oh);
    EXPECT_LT((got - want).abs().maxCoeff(), 1e-12);
    EXPECT_GE(got.minCoeff(), 0.0);
    EXPECT_LE(got.maxCoeff(), 1.0);
  }
}

TEST(Rescale, AffineEndpointsAndConstant) {
  CountArray c(1, 3);
  c << 100, 300, 500;
  auto r = rescale_intensity(Micrograph(c));
  EXPECT_EQ(r(0, 0), 0.0);
  EXPECT_EQ(r(0, 1), 0.5);
  EXPECT_EQ(r(0, 2), 1.0);
  auto z = rescale_intensity(Micrograph(CountArray::Constant(3, 3, 9)));
  EXPECT_TRUE((z.values() == 0.0).all());
  CountArray e(1, 2);
  e << 0, 65535;
  auto f = rescale_intensity(Micrograph(e));
  EXPECT_EQ(f(0, 0), 0.0);
  EXPECT_EQ(f(0, 1), 1.0);
}

TEST(Rescale, AttainsBothEnds) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    ImageArray a = 3.0 * oracle::random_image(6, 9, rng) - 1.0;
    ImageArray r = rescale_intensity(a);
    EXPECT_EQ(r.minCoeff(), 0.0);
    EXPECT_EQ(r.maxCoeff(), 1.0);
  }
}

TEST(Flip, MirrorsAndInvolutes) {
  auto img = NormalizedImage(grid({{1, 0}, {0, 0}}));
  EXPECT_EQ(flip(img, FlipAxis::Horizontal), NormalizedImage(grid({{0, 1}, {0, 0}})));
  EXPECT_EQ(flip(img, FlipAxis::Vertical), NormalizedImage(grid({{0, 0}, {1, 0}})));
  std::mt19937_64 rng(6);
  auto r = NormalizedImage(oracle::random_image(5, 8, rng));
  for (auto axis : {FlipAxis::Horizontal, FlipAxis::Vertical}) EXPECT_EQ(flip(flip(r, axis), axis), r);
  auto sym = NormalizedImage(grid({{0.3, 0.3}, {0.7, 0.7}}));
  EXPECT_EQ(flip(sym, FlipAxis::Horizontal), sym);
}

TEST(Mosaic, PlacesTilesInOrderAndSplitsBack) {
  auto m = mosaic4(NormalizedImage(1, 1, 0.1), NormalizedImage(1, 1, 0.2), NormalizedImage(1, 1, 0.3),
                   NormalizedImage(1, 1, 0.4));
  EXPECT_EQ(m, NormalizedImage(grid({{0.1, 0.2}, {0.3, 0.4}})));
  std::mt19937_64 rng(7);
  std::vector<NormalizedImage> tiles;
  for (int i = 0; i < 4; ++i) tiles.emplace_back(oracle::random_image(256, 256, rng));
  auto big = mosaic4(tiles[0], tiles[1], tiles[2], tiles[3]);
  EXPECT_EQ(big.width(), 512);
  EXPECT_EQ(big.height(), 512);
  for (int q = 0; q < 4; ++q) EXPECT_EQ(quadrant(big, q), tiles[static_cast<std::size_t>(q)]);
  EXPECT_THROW(mosaic4(tiles[0], tiles[1], tiles[2], NormalizedImage(2, 2)), ShapeError);
}

TEST(Dose, FromRateAndExposure) {
  MicrographMeta m;
  m.dose_rate = 100;
  m.exposure_s = 0.01;
  EXPECT_NEAR(total_dose(Micrograph(CountArray::Zero(1, 1), m)), 1.0, 1e-15);
  m.dose_rate = 0;
  EXPECT_EQ(total_dose(Micrograph(CountArray::Zero(1, 1), m)), 0.0);
  m.dose_rate = 10000;
  m.exposure_s = 0.04;
  EXPECT_NEAR(total_dose(Micrograph(CountArray::Zero(1, 1), m)), 400.0, 1e-12);
}

TEST(Dose, ConversionGainFallbackAndMissingMetadata) {
  MicrographMeta m;
  m.pixel_size_nm = 2.0;
  m.conversion_gain = 5.0;
  EXPECT_NEAR(total_dose(Micrograph(CountArray::Constant(2, 2, 40), m)), 40.0 / 5.0 / 4.0, 1e-15);
  EXPECT_THROW(total_dose(Micrograph(CountArray::Zero(1, 1))), MetadataError);
}

TEST(DoseHistogram, DecadeBins) {
  LogBins bins{0.1, 1000, 4};
  std::vector<double> d{1, 10, 100};
  auto h = dose_histogram(d, bins);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{0, 1, 1, 1}));
  auto e = dose_histogram(std::vector<double>{}, bins);
  EXPECT_EQ(e.total(), 0u);
  EXPECT_THROW(dose_histogram(std::vector<double>{1, 0}, bins), InputError);
}

TEST(DoseHistogram, ConservesCount) {
  std::mt19937_64 rng(8);
  std::vector<double> d;
  for (int i = 0; i < 1204; ++i) d.push_back(std::exp(std::uniform_real_distribution<double>(-4, 10)(rng)));
  auto h = dose_histogram(d, LogBins{0.1, 1e4, 10});
  EXPECT_EQ(h.total(), 1204u);
}

TEST(Manifest, RoundTripAndErrors) {
  const fs::path dir = scratch("m").parent_path() / "manifest";
  fs::create_directories(dir);
  std::vector<PairedSample> pairs;
  pairs.emplace_back(NormalizedImage(4, 4, 0.25), NormalizedImage(4, 4, 0.75), 2.0, 200.0, "p0");
  save_pairs(pairs, dir);
  auto entries = load_manifest(dir / "manifest.csv");
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].id, "p0");
  EXPECT_EQ(entries[0].truth_dose, 200.0);
  EXPECT_TRUE(fs::exists(entries[0].noisy_path));
  auto loaded = load_pairs(entries, 2);
  EXPECT_EQ(loaded[0].noisy.width(), 2);

  write_bytes(dir / "bad.csv", "id,noisy_path,truth_path,noisy_dose,truth_dose\np0,a.pgm,b.pgm,x,1\n");
  try {
    load_manifest(dir / "bad.csv");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
  write_bytes(dir / "hdr.csv", "id,noisy,truth\n");
  EXPECT_THROW(load_manifest(dir / "hdr.csv"), InputError);
}
