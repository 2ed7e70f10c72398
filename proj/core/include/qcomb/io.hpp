#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

// Shared file-format plumbing: the error type every reader throws,
// a small CSV tokenizer, and deterministic number formatting.

namespace qcomb {

class FormatError : public std::runtime_error {
public:
    FormatError(std::string file, std::size_t line, std::string what_failed)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what_failed),
          file_(std::move(file)), line_(line) {}

    const std::string& file() const { return file_; }
    std::size_t line() const { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

namespace io {

// Splits one CSV line on commas, trimming surrounding whitespace.
// Quoting is not supported; none of the formats here need it.
std::vector<std::string> split_csv_line(const std::string& line);

// Whole-file CSV reader. Skips blank lines and lines starting with '#'.
// When expect_header is non-empty the first data line must match it
// exactly (case-sensitive, after trimming) and is consumed.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> row_lines;  // 1-based source lines, for diagnostics
};
CsvTable read_csv(const std::filesystem::path& path,
                  const std::vector<std::string>& expect_header);

double parse_double(const std::string& token, const std::string& file,
                    std::size_t line, const std::string& field);
std::uint64_t parse_u64(const std::string& token, const std::string& file,
                        std::size_t line, const std::string& field);

// Shortest round-trip decimal text for a double. Reports and CSVs are
// byte-compared across runs, so all float formatting funnels through here.
std::string format_double(double v);

}  // namespace io
}  // namespace qcomb
