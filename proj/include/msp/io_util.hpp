#ifndef MSP_IO_UTIL_HPP
#define MSP_IO_UTIL_HPP

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "msp/ctab.hpp"
#include "msp/dpmm.hpp"

namespace msp::io {

// Numeric CSV with a header row, one observation per row.
dpmm::Dataset read_dataset_csv(const std::filesystem::path& path);
void write_dataset_csv(const std::filesystem::path& path,
                       const dpmm::Dataset& data,
                       const std::vector<std::string>& column_names);

// Count-table CSV: p category-index columns (1-based) plus a count column,
// any cell order; missing cells read as 0.
ctab::CountTable read_count_table_csv(const std::filesystem::path& path,
                                      const ctab::TableShape& shape);
void write_count_table_csv(const std::filesystem::path& path,
                           const ctab::CountTable& counts,
                           const ctab::TableShape& shape);

// Same layout with a probability column.
void write_table_param_csv(const std::filesystem::path& path,
                           const ctab::TableParam& f,
                           const ctab::TableShape& shape);
ctab::TableParam read_table_param_csv(const std::filesystem::path& path,
                                      const ctab::TableShape& shape);

// Generic matrix CSV with named columns (theta samples, grids, ...).
void write_matrix_csv(const std::filesystem::path& path,
                      const Eigen::MatrixXd& m,
                      const std::vector<std::string>& column_names);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path,
                                std::vector<std::string>* column_names = nullptr);

}  // namespace msp::io

#endif
