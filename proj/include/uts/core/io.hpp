#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uts/core/image.hpp"

namespace uts::io {

Image8 read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Image8& img);

/// Masks go to disk as 1-bit PNG.
Mask8 read_png_mask(const std::filesystem::path& path);
void write_png_mask(const std::filesystem::path& path, const Mask8& mask);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

void ensure_directory(const std::filesystem::path& dir);

}  // namespace uts::io
