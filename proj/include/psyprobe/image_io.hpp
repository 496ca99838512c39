#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "psyprobe/image.hpp"

namespace psyprobe {

/// 8-bit PNG, gray or RGB. Alpha is dropped, 16-bit samples are reduced to 8.
/// When channels is set the decoded image is converted with to_channels().
Image decode_png(std::span<const std::uint8_t> bytes, std::optional<int> channels = std::nullopt);
std::vector<std::uint8_t> encode_png(const Image& img);

Image read_png(const std::filesystem::path& path, std::optional<int> channels = std::nullopt);
void write_png(const std::filesystem::path& path, const Image& img);

/// Raw float buffer: "PIMG", u32 height, u32 width, u32 channels (all
/// little-endian), then height*width*channels little-endian float32 values.
std::vector<std::uint8_t> encode_pimg(const Image& img);
Image decode_pimg(std::span<const std::uint8_t> bytes);

Image read_pimg(const std::filesystem::path& path);
void write_pimg(const std::filesystem::path& path, const Image& img);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace psyprobe
