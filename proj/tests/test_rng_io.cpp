#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "psyprobe/encoding.hpp"
#include "psyprobe/error.hpp"
#include "psyprobe/image_io.hpp"
#include "psyprobe/rng.hpp"
#include "support.hpp"

using namespace psyprobe;

TEST_CASE("engine matches the standard mt19937_64 sequence") {
  Rng rng(5489);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  CHECK(v == 9981545732273789042ULL);
}

TEST_CASE("uniform draws stay in range and are deterministic") {
  Rng a(1), b(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng r(9);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[r.uniform_int(7)];
  for (int h : hits) CHECK(h > 800);
  CHECK(r.uniform_int(1) == 0);
}

TEST_CASE("normal variates have unit variance") {
  Rng r(42);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> items(50);
  std::iota(items.begin(), items.end(), 0);
  auto a = items, b = items;
  Rng(3).shuffle(a);
  Rng(3).shuffle(b);
  CHECK(a == b);
  CHECK(a != items);
  std::sort(a.begin(), a.end());
  CHECK(a == items);
}

TEST_CASE("png round-trip is exact on the 8-bit lattice") {
  testing::Gen gen(5);
  testing::TempDir dir("png");
  for (int c : {1, 3}) {
    const Image img = gen.image8(13, 17, c);
    const auto bytes = encode_png(img);
    CHECK(decode_png(bytes) == img);
    write_png(dir.path() / "x.png", img);
    CHECK(read_png(dir.path() / "x.png") == img);
    CHECK(read_png(dir.path() / "x.png", 3).channels() == 3);
  }
  CHECK_THROWS_AS(decode_png(std::vector<std::uint8_t>{1, 2, 3}), InputError);
  CHECK_THROWS_AS(read_png(dir.path() / "missing.png"), InputError);
}

TEST_CASE("pimg round-trip is exact for float32 values") {
  testing::Gen gen(6);
  std::vector<double> data(5 * 4 * 3);
  for (double& v : data) v = static_cast<float>(gen.unit());
  const Image img(5, 4, 3, data);
  const auto bytes = encode_pimg(img);
  CHECK(bytes.size() == 16 + data.size() * 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PIMG");
  CHECK(bytes[4] == 5);
  CHECK(decode_pimg(bytes) == img);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_pimg(bad), InputError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_pimg(bad), InputError);
}

TEST_CASE("atomic writes replace files whole") {
  testing::TempDir dir("atomic");
  const auto path = dir.path() / "out.txt";
  write_file_atomic(path, std::string_view("first"));
  write_file_atomic(path, std::string_view("second"));
  const auto bytes = read_file_bytes(path);
  CHECK(std::string(bytes.begin(), bytes.end()) == "second");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++entries;
  CHECK(entries == 1);
}

TEST_CASE("base64 test vectors") {
  auto enc = [](std::string_view s) {
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  auto dec = [](std::string_view s) {
    const auto b = base64_decode(s);
    return std::string(b.begin(), b.end());
  };
  const std::pair<const char*, const char*> vectors[] = {
      {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"},
      {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"}};
  for (const auto& [plain, coded] : vectors) {
    CHECK(enc(plain) == coded);
    CHECK(dec(coded) == plain);
  }
  CHECK_THROWS_AS(base64_decode("Zm9"), ProtocolError);
  CHECK_THROWS_AS(base64_decode("Zm9v!A=="), ProtocolError);
}

TEST_CASE("sha256 test vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
