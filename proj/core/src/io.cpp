#include "qcomb/io.hpp"

#include <cctype>
#include <charconv>
#include <fstream>

namespace qcomb::io {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

CsvTable read_csv(const std::filesystem::path& path,
                  const std::vector<std::string>& expect_header) {
    std::ifstream in(path);
    if (!in)
        throw FormatError(path.string(), 0, "cannot open file");

    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    bool header_done = expect_header.empty();
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto fields = split_csv_line(t);
        if (!header_done) {
            if (fields != expect_header) {
                std::string want;
                for (std::size_t i = 0; i < expect_header.size(); ++i)
                    want += (i ? "," : "") + expect_header[i];
                throw FormatError(path.string(), lineno, "expected header '" + want + "'");
            }
            table.header = fields;
            header_done = true;
            continue;
        }
        table.rows.push_back(std::move(fields));
        table.row_lines.push_back(lineno);
    }
    if (!header_done)
        throw FormatError(path.string(), lineno, "missing header row");
    return table;
}

double parse_double(const std::string& token, const std::string& file,
                    std::size_t line, const std::string& field) {
    double v = 0.0;
    const char* b = token.data();
    const char* e = b + token.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw FormatError(file, line, "field '" + field + "': not a number: '" + token + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& token, const std::string& file,
                        std::size_t line, const std::string& field) {
    std::uint64_t v = 0;
    const char* b = token.data();
    const char* e = b + token.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw FormatError(file, line, "field '" + field + "': not a non-negative integer: '" + token + "'");
    return v;
}

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

}  // namespace qcomb::io
