#include "selectiv/csv.hpp"

#include "selectiv/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>

namespace selectiv {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line, int line_no) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw Error(ErrorCode::parse_error, "unterminated quote on line " + std::to_string(line_no));
    cells.push_back(trim(cur));
    return cells;
}

bool is_missing(const std::string& cell) {
    std::string lower(cell);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return lower.empty() || lower == "na" || lower == "nan" || lower == "." || lower == "null";
}

double parse_cell(const CsvTable& t, std::size_t row, int col) {
    const std::string& cell = t.rows[row][static_cast<std::size_t>(col)];
    const std::string where = "row " + std::to_string(row + 1) + " (line " + std::to_string(t.lines[row]) +
                              "), column \"" + t.header[static_cast<std::size_t>(col)] + "\"";
    if (is_missing(cell)) throw Error(ErrorCode::missing_value, where);
    double v = 0.0;
    const char* first = cell.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::parse_error, "non-numeric value \"" + cell + "\" at " + where);
    }
    return v;
}

std::vector<int> resolve(const CsvTable& t, const std::vector<std::string>& names, const std::string& prefix,
                         std::vector<std::string>& resolved) {
    std::vector<int> cols;
    if (!names.empty()) {
        for (const auto& name : names) {
            const int c = t.column(name);
            if (c < 0) throw Error(ErrorCode::missing_column, "column \"" + name + "\" not found");
            cols.push_back(c);
            resolved.push_back(name);
        }
        return cols;
    }
    if (prefix.empty()) return cols;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (t.header[c].rfind(prefix, 0) == 0) {
            cols.push_back(static_cast<int>(c));
            resolved.push_back(t.header[c]);
        }
    }
    return cols;
}

} // namespace

int CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line, line_no);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw Error(ErrorCode::parse_error, "line " + std::to_string(line_no) + " has " +
                                                    std::to_string(cells.size()) + " fields, header has " +
                                                    std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(cells));
        t.lines.push_back(line_no);
    }
    if (t.header.empty()) throw Error(ErrorCode::parse_error, "empty file");
    return t;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::parse_error, "cannot open " + path);
    return read_csv(in);
}

IVDataset to_dataset(const CsvTable& t, const ColumnSpec& spec) {
    const int cy = t.column(spec.y);
    const int cd = t.column(spec.d);
    if (cy < 0) throw Error(ErrorCode::missing_column, "column \"" + spec.y + "\" not found");
    if (cd < 0) throw Error(ErrorCode::missing_column, "column \"" + spec.d + "\" not found");
    IVDataset raw;
    const std::vector<int> cz = resolve(t, spec.z, spec.z_prefix, raw.z_names);
    const std::vector<int> cx = resolve(t, spec.x, spec.x_prefix, raw.x_names);
    if (cz.empty()) throw Error(ErrorCode::missing_column, "no instrument columns");

    const auto n = static_cast<Eigen::Index>(t.rows.size());
    raw.y.resize(n);
    raw.d.resize(n);
    raw.z.resize(n, static_cast<Eigen::Index>(cz.size()));
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(cx.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = static_cast<std::size_t>(i);
        raw.y(i) = parse_cell(t, r, cy);
        raw.d(i) = parse_cell(t, r, cd);
        for (std::size_t j = 0; j < cz.size(); ++j) raw.z(i, static_cast<Eigen::Index>(j)) = parse_cell(t, r, cz[j]);
        for (std::size_t j = 0; j < cx.size(); ++j) x(i, static_cast<Eigen::Index>(j)) = parse_cell(t, r, cx[j]);
    }
    if (!cx.empty()) raw.x = std::move(x);
    return raw;
}

IVDataset ingest(const std::string& path, const ColumnSpec& spec) {
    return prepare(to_dataset(read_csv_file(path), spec));
}

} // namespace selectiv
