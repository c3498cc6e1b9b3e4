#pragma once

#include <charconv>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "matchopt/cost_model.hpp"
#include "matchopt/matrix.hpp"

// RFC 4180 output: '.' decimal point, UTF-8, CRLF-free line endings
// accepted on input. Floats carry 17 significant digits so files
// round-trip bit-exactly.
namespace matchopt::csv {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::string quote_if_needed(std::string_view cell) {
  if (cell.find_first_of(",\"\n\r") == std::string_view::npos)
    return std::string(cell);
  std::string out = "\"";
  for (char ch : cell) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

inline void write_row(std::ostream& os, std::span<const std::string> cells) {
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) os << ',';
    os << quote_if_needed(cells[k]);
  }
  os << '\n';
}

// Parses quoted and unquoted cells; tolerates trailing CR.
inline std::vector<std::vector<std::string>> read(std::istream& is) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
      const char ch = line[k];
      if (quoted) {
        if (ch == '"') {
          if (k + 1 < line.size() && line[k + 1] == '"') {
            cell += '"';
            ++k;
          } else {
            quoted = false;
          }
        } else {
          cell += ch;
        }
      } else if (ch == '"') {
        quoted = true;
      } else if (ch == ',') {
        cells.push_back(std::move(cell));
        cell.clear();
      } else {
        cell += ch;
      }
    }
    cells.push_back(std::move(cell));
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline bool parse_double(std::string_view text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc{} && res.ptr == end;
}

// Numeric grid with a mandatory header row of column labels.
inline void write_matrix(std::ostream& os, const Matrix& m,
                         std::string_view col_prefix = "c") {
  std::vector<std::string> cells(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j)
    cells[j] = std::string(col_prefix) + std::to_string(j);
  write_row(os, cells);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) cells[j] = format_double(m(i, j));
    write_row(os, cells);
  }
}

// Reads a numeric grid; a leading row that fails to parse as numbers is
// treated as a header and skipped, so both raw grids and write_matrix
// output load.
inline Matrix read_matrix(std::istream& is) {
  const auto rows = read(is);
  if (rows.empty()) throw InvalidInput("read_matrix: empty input");
  std::size_t first = 0;
  double probe;
  if (!parse_double(rows[0][0], probe)) first = 1;
  if (first >= rows.size()) throw InvalidInput("read_matrix: no data rows");
  const std::size_t n_rows = rows.size() - first;
  const std::size_t n_cols = rows[first].size();
  Matrix m(n_rows, n_cols);
  for (std::size_t i = 0; i < n_rows; ++i) {
    const auto& row = rows[first + i];
    if (row.size() != n_cols) throw InvalidInput("read_matrix: ragged rows");
    for (std::size_t j = 0; j < n_cols; ++j) {
      if (!parse_double(row[j], m(i, j)))
        throw InvalidInput("read_matrix: non-numeric cell '" + row[j] + "'");
    }
  }
  return m;
}

inline void write_training_sample(std::ostream& os, const TrainingSample& sample) {
  write_row(os, std::vector<std::string>{"x", "w", "y"});
  for (std::size_t k = 0; k < sample.size(); ++k) {
    write_row(os, std::vector<std::string>{format_double(sample.x[k]),
                                           format_double(sample.w[k]),
                                           std::to_string(int(sample.y[k]))});
  }
}

inline TrainingSample read_training_sample(std::istream& is) {
  const auto rows = read(is);
  if (rows.size() < 2 || rows[0] != std::vector<std::string>{"x", "w", "y"})
    throw InvalidInput("read_training_sample: expected header x,w,y");
  TrainingSample sample;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 3) throw InvalidInput("read_training_sample: ragged row");
    double x, w, y;
    if (!parse_double(rows[r][0], x) || !parse_double(rows[r][1], w) ||
        !parse_double(rows[r][2], y) || (y != 0.0 && y != 1.0))
      throw InvalidInput("read_training_sample: bad cell");
    sample.x.push_back(x);
    sample.w.push_back(w);
    sample.y.push_back(static_cast<std::uint8_t>(y));
  }
  return sample;
}

}  // namespace matchopt::csv
