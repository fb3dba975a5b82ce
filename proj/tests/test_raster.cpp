#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "resdepth/hash.hpp"
#include "resdepth/raster.hpp"
#include "resdepth/raster_io.hpp"

using namespace resdepth;

TEST_CASE("raster storage is row-major with y northward") {
  Raster<int> r(3, 2);
  r(2, 1) = 7;
  CHECK(r[5] == 7);
  CHECK(r.index(1, 1) == 4);
  CHECK(r.contains(2, 1));
  CHECK_FALSE(r.contains(3, 0));
  CHECK_THROWS(Raster<int>(-1, 2));
}

TEST_CASE("grid world/cell conversions invert each other") {
  const auto g = testutil::grid(10, 8, 0.25, 100.0, -20.0);
  auto [cx, cy] = g.world_to_cell(100.125, -19.875);
  CHECK(cx == doctest::Approx(0.0));
  CHECK(cy == doctest::Approx(0.0));
  auto [wx, wy] = g.cell_to_world(3.3, 6.7);
  auto [bx, by] = g.world_to_cell(wx, wy);
  CHECK(bx == doctest::Approx(3.3));
  CHECK(by == doctest::Approx(6.7));
}

TEST_CASE("height field validation") {
  HeightField h(testutil::grid(4, 3));
  CHECK_NOTHROW(h.validate());
  h.values(1, 1) = std::nan("");
  CHECK_THROWS(h.validate());
  h.nodata(1, 1) = 1;
  CHECK_NOTHROW(h.validate());
}

TEST_CASE("bilinear sampling matches the hand formula") {
  GrayImage img(3, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) img(x, y) = 0.1 * x + 0.01 * y * y + 0.03 * x * y;
  const double u = 0.3, v = 1.6;
  const double f00 = img(0, 1), f10 = img(1, 1), f01 = img(0, 2), f11 = img(1, 2);
  const double expect = (1 - u) * (1 - (v - 1)) * f00 + u * (1 - (v - 1)) * f10 + (1 - u) * (v - 1) * f01 +
                        u * (v - 1) * f11;
  CHECK(*bilinear_sample(img, u, v) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(*bilinear_sample(img, 2.0, 2.0) == img(2, 2));
  CHECK_FALSE(bilinear_sample(img, 2.5, 1.0).has_value());
  CHECK_FALSE(bilinear_sample(img, -0.1, 1.0).has_value());
  img.valid(1, 2) = 0;
  CHECK_FALSE(bilinear_sample(img, u, v).has_value());
  CHECK(bilinear_sample(img, 0.0, 0.0).has_value());
}

TEST_CASE("normalization round trips") {
  auto h = testutil::random_field(7, 5, 3, 400.0, 460.0);
  h.nodata(2, 2) = 1;
  const auto s = compute_stats(h);
  double mean = 0.0, n = 0.0;
  for (std::size_t i = 0; i < h.values.size(); ++i)
    if (!h.nodata[i]) mean += h.values[i], n += 1;
  mean /= n;
  CHECK(s.mean_height == doctest::Approx(mean).epsilon(1e-12));
  const auto back = denormalize_heights(normalize_heights(h, s), s);
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    CHECK(back.nodata[i] == h.nodata[i]);
    if (!h.nodata[i]) CHECK(std::abs(back.values[i] - h.values[i]) < 1e-9);
  }
  NormalizationStats inv;
  inv.mode = NormalizationMode::InverseDepth;
  inv.baseline = 2.0;
  CHECK(normalize_value(4.0, inv) == 0.5);
  CHECK(denormalize_value(0.5, inv) == 4.0);
  HeightField z(testutil::grid(2, 1));
  z.values(0, 0) = 0.0;
  z.values(1, 0) = 1.0;
  const auto nz = normalize_heights(z, inv);
  CHECK(nz.nodata(0, 0) == 1);
  CHECK(nz.nodata(1, 0) == 0);
}

TEST_CASE("dihedral group closure and rotate_flip agree") {
  Raster<int> r(5, 5);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<int>(i);
  for (int a = 0; a < kDihedralCount; ++a) {
    const auto da = dihedral_from_index(a);
    CHECK(dihedral_compose(da, dihedral_inverse(da)) == Dihedral::Identity);
    CHECK(rotate_flip(rotate_flip(r, da), dihedral_inverse(da)) == r);
    for (int b = 0; b < kDihedralCount; ++b) {
      const auto db = dihedral_from_index(b);
      CHECK(rotate_flip(rotate_flip(r, da), db) == rotate_flip(r, dihedral_compose(da, db)));
    }
  }
  Raster<int> s(2, 2);
  s(0, 0) = 1;
  s(1, 0) = 2;
  s(0, 1) = 3;
  s(1, 1) = 4;
  const auto t = rotate_flip(s, Dihedral::Transpose);
  CHECK(t(1, 0) == 3);
  CHECK(t(0, 1) == 2);
  const auto fh = rotate_flip(s, Dihedral::FlipH);
  CHECK(fh(0, 0) == 2);
}

TEST_CASE("crop bounds") {
  Raster<int> r(4, 4, 1);
  r(2, 3) = 9;
  const auto c = crop(r, 1, 2, 3, 2);
  CHECK(c.width() == 3);
  CHECK(c(1, 1) == 9);
  CHECK_THROWS_AS(crop(r, 2, 2, 3, 1), std::out_of_range);
}

TEST_CASE("pfm round trip in both byte orders") {
  FloatRaster f;
  f.values = Raster<float>(5, 3);
  f.masked = Mask(5, 3);
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = static_cast<float>(i) * 0.5f - 3.0f;
  f.masked(4, 2) = 1;
  for (bool be : {false, true}) {
    const auto bytes = encode_pfm(f, be);
    const std::string head(bytes.begin(), bytes.begin() + 3);
    CHECK(head == "Pf\n");
    const auto g = decode_pfm(bytes);
    CHECK(g.masked == f.masked);
    for (std::size_t i = 0; i < f.values.size(); ++i)
      if (!f.masked[i]) CHECK(g.values[i] == f.values[i]);
  }
  CHECK_THROWS(decode_pfm(std::vector<std::uint8_t>{'P', 'f', '\n', '2'}));
}

TEST_CASE("height field pfm keeps grid and nodata") {
  const auto dir = testutil::temp_dir("pfm");
  HeightField h(testutil::grid(6, 4, 0.5, 10.0, 20.0));
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) h(x, y) = x - 2.0 * y + 0.25;
  h.nodata(3, 1) = 1;
  const auto p = (dir / "h.pfm").string();
  write_pfm(p, h);
  const auto r = read_height_pfm(p);
  CHECK(r.grid == h.grid);
  CHECK(r.nodata == h.nodata);
  for (std::size_t i = 0; i < h.values.size(); ++i)
    if (!h.nodata[i]) CHECK(r.values[i] == h.values[i]);
}

TEST_CASE("pgm round trip and mask reading") {
  const auto dir = testutil::temp_dir("pgm");
  Mask m(7, 3);
  m(1, 0) = 1;
  m(6, 2) = 1;
  const auto p = (dir / "m.pgm").string();
  write_pgm(p, mask_to_gray8(m));
  CHECK(read_mask(p) == m);
  const auto g = read_pgm(p);
  CHECK(g(6, 2) != 0);
  HeightField h(testutil::grid(7, 3));
  for (std::size_t i = 0; i < m.size(); ++i) h.values[i] = m[i];
  write_pfm((dir / "m.pfm").string(), h);
  CHECK(read_mask((dir / "m.pfm").string()) == m);
}

TEST_CASE("png export writes a file") {
  const auto dir = testutil::temp_dir("png");
  const auto h = testutil::random_field(16, 9, 4);
  write_height_png((dir / "h.png").string(), h);
  std::ifstream f(dir / "h.png", std::ios::binary);
  char sig[4] = {};
  f.read(sig, 4);
  CHECK(sig[1] == 'P');
  CHECK(sig[2] == 'N');
}

TEST_CASE("sha256 test vectors and content hashes") {
  CHECK(sha256_hex(std::string("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  auto h = testutil::random_field(5, 5, 1);
  const auto a = content_hash(h);
  CHECK(a == content_hash(h));
  h.values(0, 0) += 1e-9;
  CHECK(a != content_hash(h));
}
