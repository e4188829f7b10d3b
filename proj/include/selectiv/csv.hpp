#pragma once

#include "selectiv/model.hpp"

#include <istream>
#include <string>
#include <vector>

namespace selectiv {

/// Header plus string cells. Line numbers are 1-based file lines, so the
/// header is line 1 and data row r sits on line r + 1.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> lines;

    int column(const std::string& name) const; // -1 when absent
};

/// Comma-separated, optional double quotes, blank lines skipped. Throws
/// parse_error on ragged rows or unterminated quotes.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Which columns play which role. Empty instrument (covariate) lists fall back
/// to every column whose name starts with the prefix.
struct ColumnSpec {
    std::string y = "y";
    std::string d = "d";
    std::vector<std::string> z;
    std::vector<std::string> x;
    std::string z_prefix = "z";
    std::string x_prefix;
};

/// Raw (unprepared) dataset from the table. Only the selected columns are
/// validated: missing_column, missing_value for empty/NA/NaN/".", and
/// parse_error naming the row and column for anything non-numeric.
IVDataset to_dataset(const CsvTable& table, const ColumnSpec& spec);

/// read_csv_file, to_dataset, then prepare().
IVDataset ingest(const std::string& path, const ColumnSpec& spec);

} // namespace selectiv
