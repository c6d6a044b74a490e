#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdfa/model.hpp"
#include "mdfa/types.hpp"

namespace mdfa::io {

/// Shortest exact decimal rendering used for all numeric text output.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct CsvMatrix {
  Matrix values;
  std::vector<std::string> header;  // empty when the file has no header row
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  return end && *end == '\0' && end != begin;
}

}  // namespace detail

/// Read a rectangular numeric CSV. A first row with any non-numeric cell is
/// treated as a header. Ragged rows or non-numeric data cells raise
/// ParseError with a 1-based location.
inline CsvMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  CsvMatrix out;
  std::string line;
  std::size_t lineno = 0;
  Index width = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (lineno == 1) {
      bool numeric = true;
      double v;
      for (const auto& c : cells)
        if (!detail::parse_double(c, v)) numeric = false;
      if (!numeric) {
        out.header = cells;
        width = static_cast<Index>(cells.size());
        continue;
      }
    }
    if (width < 0) width = static_cast<Index>(cells.size());
    if (static_cast<Index>(cells.size()) != width)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(width) + " columns, got " +
                       std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!detail::parse_double(cells[j], row[j]))
        throw ParseError(path + ":" + std::to_string(lineno) + ":" +
                         std::to_string(j + 1) + ": not a number: '" + cells[j] + "'");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");
  out.values.resize(static_cast<Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Index j = 0; j < width; ++j)
      out.values(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  return out;
}

inline void write_matrix_csv(const std::string& path, const Matrix& m,
                             const std::vector<std::string>& header = {}) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw ParseError("cannot write '" + path + "'");
  if (!header.empty()) {
    if (static_cast<Index>(header.size()) != m.cols())
      throw DimensionError("write_matrix_csv: header width mismatch");
    for (std::size_t j = 0; j < header.size(); ++j)
      outf << (j ? "," : "") << header[j];
    outf << '\n';
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) outf << (j ? "," : "") << fmt_g17(m(i, j));
    outf << '\n';
  }
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ParseError(what + ": expected an array of rows");
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw ParseError(what + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw ParseError(what + ": non-numeric entry");
      m(static_cast<Index>(i), static_cast<Index>(c)) = j[i][c].get<double>();
    }
  }
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + ": expected an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(what + ": non-numeric entry");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

/// Parameters from a JSON document {"lambda": [[...]], "psi": [...]}.
inline model::FactorParams read_params_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.contains("lambda") || !j.contains("psi"))
    throw ParseError(path + ": need 'lambda' and 'psi'");
  model::FactorParams fp;
  fp.lambda = matrix_from_json(j["lambda"], path + ": lambda");
  fp.psi = vector_from_json(j["psi"], path + ": psi");
  if (fp.psi.size() != fp.lambda.rows())
    throw ParseError(path + ": psi length must match lambda rows");
  return fp;
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw ParseError("cannot write '" + path + "'");
  outf << content;
}

}  // namespace mdfa::io
