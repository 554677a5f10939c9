#pragma once

// Minimal comma-separated reader/writer shared by the loaders and report
// writers. Not part of the public API.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace convq::csv {

std::vector<std::string> split(std::string_view line, char sep = ',');

std::string join(const std::vector<std::string>& fields, char sep = ',');

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

/// Shortest representation that parses back to the identical double.
std::string format(double v);

/// Line-oriented reader. Skips blank lines and lines starting with '#'.
class Reader {
public:
    explicit Reader(const std::filesystem::path& path);

    /// Next non-empty row; std::nullopt at end of file.
    std::optional<std::vector<std::string>> next();
    std::size_t line() const noexcept { return line_; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::size_t line_ = 0;
};

/// Writes to `<path>.tmp` and renames on commit(), so a failed stage never
/// leaves a truncated file behind.
class Writer {
public:
    explicit Writer(std::filesystem::path path);
    ~Writer();
    Writer(const Writer&) = delete;
    Writer& operator=(const Writer&) = delete;

    void comment(std::string_view text);
    void row(const std::vector<std::string>& fields);
    void commit();

private:
    std::filesystem::path path_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

}  // namespace convq::csv
