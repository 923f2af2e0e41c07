#include "tba/io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "blob format is little-endian; big-endian hosts need byte swaps");

namespace tba::io {

void write_blob(const std::filesystem::path& path, std::span<const double> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_blob: cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write_blob: short write to " + path.string());
}

std::vector<double> read_blob(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("read_blob: cannot open " + path.string());
    std::streamsize bytes = in.tellg();
    if (bytes % sizeof(double) != 0)
        throw std::runtime_error("read_blob: " + path.string() + " is not a float64 blob");
    std::vector<double> data(static_cast<std::size_t>(bytes) / sizeof(double));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), bytes);
    if (!in) throw std::runtime_error("read_blob: short read from " + path.string());
    return data;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_text: cannot open " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write_text: short write to " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("read_text: cannot open " + path.string());
    std::string text(static_cast<std::size_t>(in.tellg()), '\0');
    in.seekg(0);
    in.read(text.data(), static_cast<std::streamsize>(text.size()));
    return text;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string file_hash(const std::filesystem::path& path) {
    std::string contents = read_text(path);
    std::uint64_t h = fnv1a64(
        {reinterpret_cast<const unsigned char*>(contents.data()), contents.size()});
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void verify_hash(const std::filesystem::path& path, const std::string& expected_hex) {
    std::string got = file_hash(path);
    if (got != expected_hex)
        throw HashMismatch("hash mismatch for " + path.string() + ": expected " + expected_hex +
                           ", got " + got);
}

}  // namespace tba::io
