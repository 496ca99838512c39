#include "psyprobe/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <iterator>

#include "psyprobe/error.hpp"

namespace psyprobe {
namespace {

constexpr std::uint8_t kPimgMagic[4] = {'P', 'I', 'M', 'G'};
constexpr std::size_t kPimgHeader = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes, std::optional<int> channels) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw InputError(fmt::format("cannot decode PNG: {}", png.message));
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int ch = color ? 3 : 1;
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw InputError(fmt::format("cannot decode PNG: {}", message));
  }
  std::vector<double> data(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) data[i] = raw[i] / 255.0;
  Image img(static_cast<int>(png.height), static_cast<int>(png.width), ch, std::move(data));
  return channels ? to_channels(img, *channels) : img;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> raw(img.size());
  const auto src = img.data();
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = quantize(src[i]);

  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, raw.data(), 0, nullptr)) {
    throw InputError(fmt::format("cannot encode PNG: {}", png.message));
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, raw.data(), 0, nullptr)) {
    throw InputError(fmt::format("cannot encode PNG: {}", png.message));
  }
  out.resize(size);
  return out;
}

Image read_png(const std::filesystem::path& path, std::optional<int> channels) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png(bytes, channels);
  } catch (const InputError& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_png(const std::filesystem::path& path, const Image& img) {
  write_file_atomic(path, encode_png(img));
}

std::vector<std::uint8_t> encode_pimg(const Image& img) {
  std::vector<std::uint8_t> out(std::begin(kPimgMagic), std::end(kPimgMagic));
  out.reserve(kPimgHeader + 4 * img.size());
  put_u32(out, static_cast<std::uint32_t>(img.height()));
  put_u32(out, static_cast<std::uint32_t>(img.width()));
  put_u32(out, static_cast<std::uint32_t>(img.channels()));
  for (double v : img.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Image decode_pimg(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPimgHeader || std::memcmp(bytes.data(), kPimgMagic, 4) != 0) {
    throw InputError("not a PIMG buffer");
  }
  const auto h = get_u32(bytes, 4);
  const auto w = get_u32(bytes, 8);
  const auto c = get_u32(bytes, 12);
  const std::size_t count = static_cast<std::size_t>(h) * w * c;
  if (bytes.size() != kPimgHeader + 4 * count) {
    throw InputError(fmt::format("PIMG payload is {} bytes, expected {}", bytes.size() - kPimgHeader,
                                 4 * count));
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes, kPimgHeader + 4 * i));
  }
  return Image(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c), std::move(data));
}

Image read_pimg(const std::filesystem::path& path) { return decode_pimg(read_file_bytes(path)); }

void write_pimg(const std::filesystem::path& path, const Image& img) {
  write_file_atomic(path, encode_pimg(img));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(fmt::format("cannot write {}", tmp.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError(fmt::format("write failed for {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace psyprobe
