#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tba::io {

// Flat little-endian float64 blobs; the on-disk format for every tensor.
void write_blob(const std::filesystem::path& path, std::span<const double> data);
std::vector<double> read_blob(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
// 16-hex-digit FNV-1a of the file contents.
std::string file_hash(const std::filesystem::path& path);

struct HashMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Throws HashMismatch naming the file when contents do not match.
void verify_hash(const std::filesystem::path& path, const std::string& expected_hex);

}  // namespace tba::io
