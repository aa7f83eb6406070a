#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stabgen::csv {

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Header-indexed table of raw string cells. Fields are comma separated and
/// never quoted; this is all the engine writes or reads.
class Table {
public:
    static Table parse(std::string_view text, const std::string& name = "table");

    [[nodiscard]] const std::vector<std::string>& header() const noexcept { return header_; }
    [[nodiscard]] std::size_t rows() const noexcept { return rows_.size(); }
    [[nodiscard]] bool has_column(const std::string& column) const { return columns_.count(column) != 0; }
    [[nodiscard]] std::size_t column(const std::string& column) const;

    [[nodiscard]] const std::string& cell(std::size_t row, std::size_t col) const { return rows_.at(row).at(col); }
    [[nodiscard]] const std::string& cell(std::size_t row, const std::string& col) const { return cell(row, column(col)); }
    [[nodiscard]] double number(std::size_t row, const std::string& col) const;
    [[nodiscard]] long long integer(std::size_t row, const std::string& col) const;
    [[nodiscard]] const std::vector<std::string>& row(std::size_t r) const { return rows_.at(r); }

private:
    std::string name_;
    std::vector<std::string> header_;
    std::map<std::string, std::size_t> columns_;
    std::vector<std::vector<std::string>> rows_;
};

[[nodiscard]] std::vector<std::string> split(std::string_view line, char sep = ',');
[[nodiscard]] std::string trim(std::string_view s);

/// Shortest representation that parses back to the identical double.
[[nodiscard]] std::string format_double(double value);
[[nodiscard]] double parse_double(std::string_view text);

[[nodiscard]] std::string join(const std::vector<std::string>& fields, char sep = ',');

}  // namespace stabgen::csv
