#include "stabgen/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <limits>

namespace stabgen::csv {

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

Table Table::parse(std::string_view text, const std::string& name) {
    Table t;
    t.name_ = name;
    // Strip a UTF-8 byte-order mark if present.
    if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
        static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
        text.remove_prefix(3);
    }
    bool have_header = false;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(start, end - start);
        start = end + 1;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (trim(line).empty()) {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        auto fields = split(line);
        for (auto& f : fields) {
            f = trim(f);
        }
        if (!have_header) {
            t.header_ = fields;
            for (std::size_t i = 0; i < fields.size(); ++i) {
                t.columns_[fields[i]] = i;
            }
            have_header = true;
        } else {
            if (fields.size() != t.header_.size()) {
                throw CsvError(name + ": row " + std::to_string(t.rows_.size() + 1) + " has " +
                               std::to_string(fields.size()) + " fields, header has " +
                               std::to_string(t.header_.size()));
            }
            t.rows_.push_back(std::move(fields));
        }
        if (end == text.size()) {
            break;
        }
    }
    if (!have_header) {
        throw CsvError(name + ": missing header row");
    }
    return t;
}

std::size_t Table::column(const std::string& col) const {
    const auto it = columns_.find(col);
    if (it == columns_.end()) {
        throw CsvError(name_ + ": missing column '" + col + "'");
    }
    return it->second;
}

double Table::number(std::size_t row, const std::string& col) const {
    const auto& text = cell(row, col);
    try {
        return parse_double(text);
    } catch (const CsvError&) {
        throw CsvError(name_ + ": column '" + col + "' row " + std::to_string(row + 1) + ": not a number: '" +
                       text + "'");
    }
}

long long Table::integer(std::size_t row, const std::string& col) const {
    const auto& text = cell(row, col);
    long long value = 0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw CsvError(name_ + ": column '" + col + "' row " + std::to_string(row + 1) + ": not an integer: '" +
                       text + "'");
    }
    return value;
}

std::string format_double(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    if (value == 0.0) {
        value = 0.0;  // drop the sign of negative zero
    }
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text) {
    if (text == "nan") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (text == "inf") {
        return std::numeric_limits<double>::infinity();
    }
    if (text == "-inf") {
        return -std::numeric_limits<double>::infinity();
    }
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || first == last) {
        throw CsvError("not a number: '" + std::string(text) + "'");
    }
    return value;
}

std::string join(const std::vector<std::string>& fields, char sep) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i != 0) {
            out.push_back(sep);
        }
        out += fields[i];
    }
    return out;
}

}  // namespace stabgen::csv
