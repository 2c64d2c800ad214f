#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpsvd/count_matrix.hpp"
#include "dpsvd/model.hpp"
#include "dpsvd/sim.hpp"

namespace dpsvd {

enum class CountFormat { dense_csv, sparse_coordinate };

// "dense-csv" / "csv" or "sparse-coordinate" / "mtx".
CountFormat parse_count_format(const std::string& name);

/// Dense CSV: a header row of column names, then one integer row per
/// observation. Sparse coordinate: optional `%` comment lines, a size line
/// "n d nnz", then nnz 1-based "row col value" triplets.
/// Parse errors name the source and line.
CountMatrix read_counts(std::istream& in, CountFormat format,
                        const std::string& source = "<input>");
CountMatrix read_counts(const std::string& path, CountFormat format);
void write_counts(std::ostream& out, const CountMatrix& x, CountFormat format);
void write_counts(const std::string& path, const CountMatrix& x,
                  CountFormat format);

enum class Lineage { raw, ib_debiased, classical_debiased };
std::string to_string(Lineage lineage);
Lineage parse_lineage(const std::string& name);

struct ModelFile {
  static constexpr int current_version = 1;
  int version = current_version;
  LowRankFit fit;        // A may be empty (0 x k)
  bool has_scores = true;
  std::optional<double> sigma2;
  Lineage lineage = Lineage::raw;
  std::uint64_t seed = 0;
  // Free-form fit options, e.g. {"k": "2", "mu_policy": "log_column_means"}.
  std::map<std::string, std::string> options;
};

/// JSON with named numeric arrays (matrices row-major with explicit shape).
/// Doubles are written with round-trip precision; a version other than
/// current_version is rejected on read.
void write_model(std::ostream& out, const ModelFile& model);
void write_model(const std::string& path, const ModelFile& model);
ModelFile read_model(std::istream& in, const std::string& source = "<input>");
ModelFile read_model(const std::string& path);

// %.17g
std::string format_double(double v);

/// Tidy results: scenario,spec_hash,seed,replicate,stage,metric,value.
void write_results(std::ostream& out, const ResultTable& rows);

/// Header line then one row per matrix row.
void write_matrix_csv(std::ostream& out, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& values);

}  // namespace dpsvd
