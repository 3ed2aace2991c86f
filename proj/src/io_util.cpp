#include "msp/io_util.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace msp::io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw domain_error("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw domain_error("empty CSV file " + path.string());
  return rows;
}

void write_row(std::ofstream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << fields[i];
  }
  out << '\n';
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

dpmm::Dataset read_dataset_csv(const std::filesystem::path& path) {
  const auto rows = read_rows(path);
  const std::size_t cols = rows[0].size();
  if (rows.size() < 2) throw domain_error("dataset CSV has no data rows");
  Eigen::MatrixXd y(rows.size() - 1, cols);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != cols)
      throw domain_error("dataset CSV: ragged row " + std::to_string(r));
    for (std::size_t c = 0; c < cols; ++c)
      y(static_cast<long>(r) - 1, static_cast<long>(c)) = std::stod(rows[r][c]);
  }
  return dpmm::Dataset{std::move(y)};
}

void write_dataset_csv(const std::filesystem::path& path,
                       const dpmm::Dataset& data,
                       const std::vector<std::string>& column_names) {
  std::ofstream out(path);
  if (!out) throw domain_error("cannot write " + path.string());
  write_row(out, column_names);
  for (long r = 0; r < data.n(); ++r) {
    std::vector<std::string> fields;
    for (int c = 0; c < data.p(); ++c) fields.push_back(format_double(data.y(r, c)));
    write_row(out, fields);
  }
}

ctab::CountTable read_count_table_csv(const std::filesystem::path& path,
                                      const ctab::TableShape& shape) {
  const auto rows = read_rows(path);
  const int p = shape.vars();
  ctab::CountTable table;
  table.counts.assign(shape.cells(), 0);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != p + 1)
      throw domain_error("count CSV: row needs " + std::to_string(p + 1) +
                         " fields");
    std::vector<int> levels(p);
    for (int j = 0; j < p; ++j) levels[j] = std::stoi(rows[r][j]) - 1;
    table.counts[shape.index(levels)] += std::stol(rows[r][p]);
  }
  return table;
}

void write_count_table_csv(const std::filesystem::path& path,
                           const ctab::CountTable& counts,
                           const ctab::TableShape& shape) {
  std::ofstream out(path);
  if (!out) throw domain_error("cannot write " + path.string());
  std::vector<std::string> header;
  for (int j = 0; j < shape.vars(); ++j) header.push_back("v" + std::to_string(j + 1));
  header.push_back("count");
  write_row(out, header);
  for (long c = 0; c < shape.cells(); ++c) {
    const std::vector<int> lv = shape.levels(c);
    std::vector<std::string> fields;
    for (int l : lv) fields.push_back(std::to_string(l + 1));
    fields.push_back(std::to_string(counts.counts[c]));
    write_row(out, fields);
  }
}

void write_table_param_csv(const std::filesystem::path& path,
                           const ctab::TableParam& f,
                           const ctab::TableShape& shape) {
  std::ofstream out(path);
  if (!out) throw domain_error("cannot write " + path.string());
  std::vector<std::string> header;
  for (int j = 0; j < shape.vars(); ++j) header.push_back("v" + std::to_string(j + 1));
  header.push_back("probability");
  write_row(out, header);
  for (long c = 0; c < shape.cells(); ++c) {
    const std::vector<int> lv = shape.levels(c);
    std::vector<std::string> fields;
    for (int l : lv) fields.push_back(std::to_string(l + 1));
    fields.push_back(format_double(f.f[c]));
    write_row(out, fields);
  }
}

ctab::TableParam read_table_param_csv(const std::filesystem::path& path,
                                      const ctab::TableShape& shape) {
  const auto rows = read_rows(path);
  const int p = shape.vars();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(shape.cells());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::vector<int> levels(p);
    for (int j = 0; j < p; ++j) levels[j] = std::stoi(rows[r][j]) - 1;
    f[shape.index(levels)] = std::stod(rows[r][p]);
  }
  return ctab::TableParam{std::move(f)};
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& column_names) {
  if (static_cast<long>(column_names.size()) != m.cols())
    throw domain_error("write_matrix_csv: header length mismatch");
  std::ofstream out(path);
  if (!out) throw domain_error("cannot write " + path.string());
  write_row(out, column_names);
  for (long r = 0; r < m.rows(); ++r) {
    std::vector<std::string> fields;
    for (long c = 0; c < m.cols(); ++c) fields.push_back(format_double(m(r, c)));
    write_row(out, fields);
  }
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path,
                                std::vector<std::string>* column_names) {
  const auto rows = read_rows(path);
  if (column_names) *column_names = rows[0];
  const std::size_t cols = rows[0].size();
  Eigen::MatrixXd m(rows.size() - 1, cols);
  for (std::size_t r = 1; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<long>(r) - 1, static_cast<long>(c)) = std::stod(rows[r][c]);
  return m;
}

}  // namespace msp::io
