#include "fab/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace fab {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trimmed(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

} // namespace

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

int CsvTable::require_column(const std::string& name) const {
    const int i = column(name);
    if (i < 0) throw CsvError("missing required column '" + name + "'", 1);
    return i;
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trimmed(line).empty()) continue;
        auto cells = split_line(line);
        for (auto& c : cells) c = trimmed(c);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size())
            throw CsvError("expected " + std::to_string(table.header.size()) + " cells, got " +
                               std::to_string(cells.size()),
                           line_no);
        table.rows.push_back(std::move(cells));
    }
    if (table.header.empty()) throw CsvError("empty file: header row required", 1);
    return table;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open '" + path + "'", 0);
    return read_csv(in);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << row[i];
        }
        out << '\n';
    }
}

void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw CsvError("cannot open '" + path + "' for writing", 0);
    write_csv(out, header, rows);
}

std::string format_full(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_scalar(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.15g", v);
    return buf;
}

double parse_number(const std::string& cell, int line) {
    if (cell.empty()) throw CsvError("empty numeric cell", line);
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size()) throw CsvError("bad number '" + cell + "'", line);
    return v;
}

long parse_integer(const std::string& cell, int line) {
    if (cell.empty()) throw CsvError("empty integer cell", line);
    char* end = nullptr;
    const long v = std::strtol(cell.c_str(), &end, 10);
    if (end != cell.c_str() + cell.size()) throw CsvError("bad integer '" + cell + "'", line);
    return v;
}

Eigen::MatrixXd table_as_matrix(const CsvTable& table, std::vector<std::string>* names) {
    const int rows = static_cast<int>(table.rows.size());
    const int cols = static_cast<int>(table.header.size());
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = parse_number(table.rows[i][j], i + 2);
    }
    if (names) *names = table.header;
    return m;
}

} // namespace fab
