#include "qcomb/config.hpp"

#include <cctype>
#include <fstream>

#include "qcomb/io.hpp"

namespace qcomb::config {

namespace {

std::string trim(std::string_view sv) {
    std::size_t b = 0;
    std::size_t e = sv.size();
    while (b < e && std::isspace(static_cast<unsigned char>(sv[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(sv[e - 1]))) --e;
    return std::string(sv.substr(b, e - b));
}

}  // namespace

bool Section::has(const std::string& key) const { return find(key) != nullptr; }

const std::string* Section::find(const std::string& key) const {
    for (const auto& [k, v] : entries) {
        if (k == key) return &v;
    }
    return nullptr;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path.string(), 0, "cannot open config file");

    ConfigFile cfg;
    cfg.path_ = path.string();

    std::string line;
    std::size_t lineno = 0;
    Section* current = nullptr;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string body = trim(line);
        if (body.empty()) continue;

        if (body.front() == '[') {
            if (body.back() != ']')
                throw FormatError(cfg.path_, lineno, "unterminated section header");
            std::string name = trim(std::string_view(body).substr(1, body.size() - 2));
            if (name.empty()) throw FormatError(cfg.path_, lineno, "empty section name");
            if (cfg.index_.count(name))
                throw FormatError(cfg.path_, lineno, "duplicate section [" + name + "]");
            cfg.index_[name] = cfg.sections_.size();
            cfg.sections_.push_back(Section{name, lineno, {}});
            current = &cfg.sections_.back();
            continue;
        }

        auto eq = body.find('=');
        if (eq == std::string::npos)
            throw FormatError(cfg.path_, lineno, "expected `key = value`: " + body);
        if (!current)
            throw FormatError(cfg.path_, lineno, "entry before any [section]");
        std::string key = trim(std::string_view(body).substr(0, eq));
        std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw FormatError(cfg.path_, lineno, "empty key");
        if (value.empty()) throw FormatError(cfg.path_, lineno, "empty value for " + key);
        if (current->find(key))
            throw FormatError(cfg.path_, lineno,
                              "duplicate key " + key + " in [" + current->name + "]");
        current->entries.emplace_back(std::move(key), std::move(value));
    }
    return cfg;
}

const Section* ConfigFile::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &sections_[it->second];
}

const Section& ConfigFile::require(const std::string& name) const {
    const Section* s = find(name);
    if (!s) throw FormatError(path_, 0, "missing required section [" + name + "]");
    return *s;
}

std::vector<const Section*> ConfigFile::with_prefix(const std::string& prefix) const {
    std::vector<const Section*> out;
    for (const auto& s : sections_) {
        if (s.name.rfind(prefix, 0) == 0) out.push_back(&s);
    }
    return out;
}

double ConfigFile::get_double(const Section& s, const std::string& key) const {
    const std::string* v = s.find(key);
    if (!v)
        throw FormatError(path_, s.line, "missing key " + key + " in [" + s.name + "]");
    return io::parse_double(*v, path_, s.line, s.name + "." + key);
}

double ConfigFile::get_double_or(const Section& s, const std::string& key,
                                 double fallback) const {
    return s.has(key) ? get_double(s, key) : fallback;
}

std::uint64_t ConfigFile::get_u64(const Section& s, const std::string& key) const {
    const std::string* v = s.find(key);
    if (!v)
        throw FormatError(path_, s.line, "missing key " + key + " in [" + s.name + "]");
    return io::parse_u64(*v, path_, s.line, s.name + "." + key);
}

std::uint64_t ConfigFile::get_u64_or(const Section& s, const std::string& key,
                                     std::uint64_t fallback) const {
    return s.has(key) ? get_u64(s, key) : fallback;
}

std::string ConfigFile::get_string(const Section& s, const std::string& key) const {
    const std::string* v = s.find(key);
    if (!v)
        throw FormatError(path_, s.line, "missing key " + key + " in [" + s.name + "]");
    return *v;
}

std::vector<double> ConfigFile::get_double_list(const Section& s,
                                                const std::string& key) const {
    std::string raw = get_string(s, key);
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= raw.size()) {
        auto comma = raw.find(',', start);
        std::string tok = trim(std::string_view(raw).substr(
            start, comma == std::string::npos ? std::string::npos : comma - start));
        if (tok.empty())
            throw FormatError(path_, s.line, key + ": empty element in list");
        out.push_back(io::parse_double(tok, path_, s.line, s.name + "." + key));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace qcomb::config
