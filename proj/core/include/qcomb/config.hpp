#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

// INI-style config reader: `[section]` headers, `key = value` entries,
// `#` comments. Keys carry their units as suffixes (radius_um,
// dead_time_us). Entry order inside a section is preserved because loss
// chains are ordered.

namespace qcomb::config {

struct Section {
    std::string name;
    std::size_t line = 0;
    std::vector<std::pair<std::string, std::string>> entries;

    bool has(const std::string& key) const;
    const std::string* find(const std::string& key) const;
};

class ConfigFile {
public:
    static ConfigFile load(const std::filesystem::path& path);

    const Section* find(const std::string& name) const;
    const Section& require(const std::string& name) const;
    std::vector<const Section*> with_prefix(const std::string& prefix) const;
    const std::string& path() const { return path_; }

    // Typed accessors; throw FormatError naming file and key on absence or
    // malformed values.
    double get_double(const Section& s, const std::string& key) const;
    double get_double_or(const Section& s, const std::string& key, double fallback) const;
    std::uint64_t get_u64(const Section& s, const std::string& key) const;
    std::uint64_t get_u64_or(const Section& s, const std::string& key,
                             std::uint64_t fallback) const;
    std::string get_string(const Section& s, const std::string& key) const;
    std::vector<double> get_double_list(const Section& s, const std::string& key) const;

private:
    std::string path_;
    std::vector<Section> sections_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace qcomb::config
