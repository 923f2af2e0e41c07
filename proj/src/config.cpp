#include "tba/config.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "tba/io.hpp"

namespace tba {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            cfg.sections_[section];
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
    return parse(io::read_text(path));
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get_str(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = get_str(section, key, "");
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument("config [" + section + "] " + key + ": not a number: " + v);
    return out;
}

int ConfigFile::get_int(const std::string& section, const std::string& key, int fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = get_str(section, key, "");
    std::size_t pos = 0;
    long out = std::stol(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument("config [" + section + "] " + key + ": not an integer: " + v);
    return static_cast<int>(out);
}

std::uint64_t ConfigFile::get_u64(const std::string& section, const std::string& key,
                                  std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = get_str(section, key, "");
    std::size_t pos = 0;
    unsigned long long out = std::stoull(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument("config [" + section + "] " + key + ": not an integer: " + v);
    return out;
}

void ConfigFile::set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
}

void ConfigFile::set_double(const std::string& section, const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    set(section, key, buf);
}

void ConfigFile::set_int(const std::string& section, const std::string& key, long long value) {
    set(section, key, std::to_string(value));
}

std::string ConfigFile::dump() const {
    std::ostringstream os;
    for (const auto& [section, entries] : sections_) {
        os << '[' << section << "]\n";
        for (const auto& [key, value] : entries) os << key << " = " << value << '\n';
        os << '\n';
    }
    return os.str();
}

}  // namespace tba
