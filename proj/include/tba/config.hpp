#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace tba {

// Flat INI-style document: [section] headers, key = value lines, '#'
// comments. Dumps deterministically (sorted sections and keys).
class ConfigFile {
  public:
    static ConfigFile parse(const std::string& text);
    static ConfigFile load(const std::filesystem::path& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    void set_double(const std::string& section, const std::string& key, double value);
    void set_int(const std::string& section, const std::string& key, long long value);

    std::string dump() const;

  private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace tba
