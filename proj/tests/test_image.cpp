#include <doctest.h>

#include "psyprobe/error.hpp"
#include "psyprobe/image.hpp"
#include "support.hpp"

using namespace psyprobe;

TEST_CASE("image construction validates dims and range") {
  CHECK_THROWS_AS(Image(0, 4, 3), DimensionError);
  CHECK_THROWS_AS(Image(4, 4, 2), DimensionError);
  CHECK_THROWS_AS(Image(2, 2, 1, 1.5), ParameterError);
  CHECK_THROWS_AS(Image(1, 2, 1, std::vector<double>{0.5, -0.1}), ParameterError);
  CHECK_THROWS_AS(Image(1, 2, 1, std::vector<double>{0.5}), DimensionError);
  Image img(2, 3, 3, 0.25);
  CHECK(img.size() == 18);
  CHECK_THROWS_AS(img.set(0, 0, 0, 2.0), ParameterError);
  img.set(1, 2, 2, 0.75);
  CHECK(img.at(1, 2, 2) == 0.75);
  CHECK(img.data()[17] == 0.75);
}

TEST_CASE("crop matches a naive double loop") {
  testing::Gen gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = gen.range(1, 20), w = gen.range(1, 20), c = gen.coin() ? 3 : 1;
    const Image img = gen.image(h, w, c);
    const int rw = gen.range(1, w), rh = gen.range(1, h);
    const Rect r{gen.range(0, w - rw), gen.range(0, h - rh), rw, rh};
    const Image out = crop(img, r);
    REQUIRE(out.width() == rw);
    REQUIRE(out.height() == rh);
    for (int y = 0; y < rh; ++y)
      for (int x = 0; x < rw; ++x)
        for (int ch = 0; ch < c; ++ch) CHECK(out.at(y, x, ch) == img.at(r.y + y, r.x + x, ch));
  }
}

TEST_CASE("crop outside the image is a bounds error") {
  const Image img(10, 10, 1);
  CHECK_THROWS_AS(crop(img, {5, 5, 6, 2}), BoundsError);
  CHECK_THROWS_AS(crop(img, {-1, 0, 2, 2}), BoundsError);
  CHECK_THROWS_AS(crop(img, {0, 0, 0, 2}), BoundsError);
}

TEST_CASE("resize of a 2x2 checkerboard to 3x3 has a 0.5 center") {
  const Image board(2, 2, 1, std::vector<double>{0.0, 1.0, 1.0, 0.0});
  const Image out = resize(board, 3, 3);
  CHECK(out.at(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.at(0, 0) == 0.0);
  CHECK(out.at(0, 2) == 1.0);
  CHECK(out.at(2, 0) == 1.0);
  CHECK(out.at(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("resize to the same size is the identity and keeps the range") {
  testing::Gen gen(3);
  const Image img = gen.image(7, 9, 3);
  CHECK(resize(img, 9, 7) == img);
  const Image up = resize(img, 31, 17);
  for (double v : up.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(resize(img, 0, 3), DimensionError);
}

TEST_CASE("insert_patch clamps sums") {
  const Image canvas(2, 2, 1, 0.5);
  const Image patch(1, 1, 1, 0.7);
  const Image out = insert_patch(canvas, patch, {1, 1, 1, 1});
  CHECK(out.at(1, 1) == 1.0);
  CHECK(out.at(0, 0) == 0.5);
}

TEST_CASE("insert_patch broadcasts gray patches and rejects bad shapes") {
  const Image canvas(4, 4, 3, 0.0);
  const Image patch(2, 2, 1, 0.25);
  const Image out = insert_patch(canvas, patch, {2, 0, 2, 2});
  for (int c = 0; c < 3; ++c) CHECK(out.at(1, 3, c) == 0.25);
  CHECK(out.at(2, 3, 0) == 0.0);
  CHECK_THROWS_AS(insert_patch(canvas, patch, {3, 0, 2, 2}), DimensionError);
  CHECK_THROWS_AS(insert_patch(canvas, patch, {0, 0, 3, 2}), DimensionError);
  CHECK_THROWS_AS(insert_patch(Image(4, 4, 1), Image(2, 2, 3), {0, 0, 2, 2}), DimensionError);
}

TEST_CASE("property: insert then crop on black is bit-exact") {
  testing::Gen gen(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = gen.range(1, 40), h = gen.range(1, 40), c = gen.coin() ? 3 : 1;
    const int pw = gen.range(1, w), ph = gen.range(1, h);
    const Image patch = gen.image(ph, pw, c);
    const Rect pos{gen.range(0, w - pw), gen.range(0, h - ph), pw, ph};
    const Image placed = insert_patch(make_black_canvas(w, h, c), patch, pos);
    CHECK(crop(placed, pos) == patch);
    CHECK(placed == testing::naive_on_black(patch, pos.x, pos.y, w, h, c));
  }
}

TEST_CASE("grid tiling") {
  CHECK(grid_cells(600, 600, 150).size() == 16);
  const auto cells = grid_cells(6, 4, 3, 2);
  REQUIRE(cells.size() == 4);
  CHECK(cells[1] == Rect{3, 0, 3, 2});
  CHECK(cells[2] == Rect{0, 2, 3, 2});
  CHECK_THROWS_AS(grid_cells(600, 600, 160), TilingError);
  CHECK_THROWS_AS(Grid::covering(10, 10, 3, 3), TilingError);
  const Grid g = Grid::covering(224, 224, 4, 4);
  CHECK(g.cell_w == 56);
  CHECK(g.cell(5) == Rect{56, 56, 56, 56});
}

TEST_CASE("normalize_patch") {
  const Image p(1, 3, 1, std::vector<double>{0.2, 0.4, 0.6});
  const Image n = normalize_patch(p);
  CHECK(n.at(0, 0) == 0.0);
  CHECK(n.at(0, 1) == doctest::Approx(0.5));
  CHECK(n.at(0, 2) == 1.0);
  const Image flat = normalize_patch(Image(2, 2, 1, 0.3));
  for (double v : flat.data()) CHECK(v == 0.0);
}

TEST_CASE("decoys are normalized and attenuated") {
  const Image p(1, 2, 1, std::vector<double>{0.1, 0.9});
  const Decoy d = make_decoy(p, 4.0, "x");
  CHECK(d.pixels.at(0, 0) == 0.0);
  CHECK(d.pixels.at(0, 1) == 0.25);
  CHECK(d.std == doctest::Approx(0.125));
  CHECK(d.source_patch_id == "x");
  CHECK_THROWS_AS(make_decoy(p, 0.5), ParameterError);
  CHECK_THROWS_AS(make_decoy(Image(2, 2, 3), 2.0), DimensionError);
}

TEST_CASE("weakest channel picks the lowest mean and the lowest index on ties") {
  Image img(2, 2, 3, 0.5);
  CHECK(weakest_channel(img, {0, 0, 2, 2}) == 0);
  img.set(0, 0, 2, 0.0);
  CHECK(weakest_channel(img, {0, 0, 2, 2}) == 2);
  CHECK(weakest_channel(img, {1, 1, 1, 1}) == 0);
  CHECK(weakest_channel(Image(2, 2, 1, 0.3), {0, 0, 1, 1}) == 0);
}

TEST_CASE("property: apply_decoy touches one cell and one channel by at most 1/tau") {
  testing::Gen gen(77);
  for (int trial = 0; trial < 200; ++trial) {
    const double tau = std::vector<double>{1, 2, 4, 8}[trial % 4];
    const int cols = gen.range(1, 4), rows = gen.range(1, 4);
    const int cw = gen.range(1, 8), ch = gen.range(1, 8);
    const Image target = gen.image(rows * ch, cols * cw, gen.coin() ? 3 : 1);
    const Grid grid{cw, ch, cols, rows};
    const Rect cell = grid.cell(gen.range(0, grid.cell_count() - 1));
    const Decoy decoy = make_decoy(gen.image(ch, cw, 1), tau);
    const int channel = weakest_channel(target, cell);
    const Image out = apply_decoy(target, decoy, cell);
    double worst = 0.0;
    for (int y = 0; y < target.height(); ++y) {
      for (int x = 0; x < target.width(); ++x) {
        for (int c = 0; c < target.channels(); ++c) {
          const double diff = out.at(y, x, c) - target.at(y, x, c);
          const bool inside = x >= cell.x && x < cell.x + cell.w && y >= cell.y && y < cell.y + cell.h;
          if (!inside || c != channel) {
            CHECK(diff == 0.0);
          } else {
            CHECK(diff >= 0.0);
            CHECK(out.at(y, x, c) == std::min(1.0, target.at(y, x, c) + decoy.pixels.at(y - cell.y, x - cell.x)));
          }
          worst = std::max(worst, std::abs(diff));
        }
      }
    }
    CHECK(worst <= 1.0 / tau);
  }
}

TEST_CASE("gaussian noise is seeded, clamped and near the requested spread") {
  const Image a = gaussian_noise_image(64, 64, 100.0, 5);
  CHECK(a == gaussian_noise_image(64, 64, 100.0, 5));
  CHECK_FALSE(a == gaussian_noise_image(64, 64, 100.0, 6));
  double sum2 = 0.0;
  for (double v : a.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    sum2 += v * v;
  }
  // |N(0, s)| has the same second moment as N(0, s).
  const double s = 100.0 / 255.0;
  CHECK(std::sqrt(sum2 / a.size()) == doctest::Approx(s).epsilon(0.05));
  CHECK_THROWS_AS(gaussian_noise_image(4, 4, 0.0, 1), ParameterError);

  const Decoy d = make_noise_decoy(a, 2.0, "noise");
  CHECK(d.pixels.at(3, 3) == a.at(3, 3) / 2.0);
  CHECK(d.std == doctest::Approx(population_std(a.data()) / 2.0));
}

TEST_CASE("channel conversion and statistics") {
  const Image gray(1, 2, 1, std::vector<double>{0.25, 0.5});
  const Image rgb = to_channels(gray, 3);
  CHECK(rgb.at(0, 1, 2) == 0.5);
  CHECK(to_channels(rgb, 1) == gray);
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(mean(v) == 2.5);
  CHECK(population_std(v) == doctest::Approx(std::sqrt(1.25)));
  CHECK(linf_distance(gray, Image(1, 2, 1, 0.0)) == 0.5);
  CHECK_THROWS_AS(linf_distance(gray, rgb), DimensionError);
}
