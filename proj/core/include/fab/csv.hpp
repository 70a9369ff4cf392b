#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace fab {

// Parse failure with the 1-based line number of the offending row.
class CsvError : public std::runtime_error {
  public:
    CsvError(const std::string& message, int line)
        : std::runtime_error(line > 0 ? message + " (line " + std::to_string(line) + ")"
                                      : message),
          line_(line) {}
    int line() const { return line_; }

  private:
    int line_;
};

// Comma-separated, '.' decimal separator, UTF-8, header row required.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;         // -1 when absent
    int require_column(const std::string& name) const; // throws CsvError
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);

// 17 significant digits: parses back to the identical double.
std::string format_full(double v);
// 15 significant digits for human-facing scalars.
std::string format_scalar(double v);

double parse_number(const std::string& cell, int line);
long parse_integer(const std::string& cell, int line);

// Whole table as a numeric matrix (all columns), header names returned.
Eigen::MatrixXd table_as_matrix(const CsvTable& table, std::vector<std::string>* names = nullptr);

} // namespace fab
