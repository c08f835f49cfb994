#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "beltrami/dense.hpp"
#include "beltrami/errors.hpp"
#include "beltrami/graph.hpp"

namespace beltrami::io {

// Shortest text that round-trips: 17 significant digits.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Header `rows cols`, then one whitespace-separated row per line.
inline Matrix read_matrix(std::istream& in) {
  long long rows = -1, cols = -1;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) throw InputError("matrix file: bad header, expected 'rows cols'");
  Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  for (double& v : m.data())
    if (!(in >> v)) throw InputError("matrix file: expected " + std::to_string(rows * cols) + " values");
  std::string extra;
  if (in >> extra) throw InputError("matrix file: trailing data after " + std::to_string(rows * cols) + " values");
  return m;
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
    out << '\n';
  }
}

// Comma-separated, no header; used for trajectory snapshots.
inline void write_csv(std::ostream& out, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

// One integer per line, -1 for unlabeled.
inline std::vector<int> read_labels(std::istream& in) {
  std::vector<int> labels;
  long long v = 0;
  while (in >> v) {
    if (v < -1) throw InputError("labels file: labels must be >= -1");
    labels.push_back(static_cast<int>(v));
  }
  if (!in.eof()) throw InputError("labels file: non-integer entry");
  return labels;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

inline Matrix load_matrix(const std::string& path) {
  auto in = open_input(path);
  return read_matrix(in);
}

inline void save_matrix(const std::string& path, const Matrix& m) {
  auto out = open_output(path);
  write_matrix(out, m);
}

inline std::vector<int> load_labels(const std::string& path) {
  auto in = open_input(path);
  return read_labels(in);
}

inline LoadedGraph load_graph(const std::string& path) {
  auto in = open_input(path);
  return read_edge_list(in);
}

// Flat `key = value` lines; `#` starts a comment.
inline std::map<std::string, std::string> read_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace beltrami::io
