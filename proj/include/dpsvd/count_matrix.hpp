#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <variant>
#include <vector>

namespace dpsvd {

struct CountEntry {
  Eigen::Index row;
  Eigen::Index col;
  std::uint64_t value;
};

/// n x d matrix of nonnegative integer counts, stored dense or as a
/// compressed-column sparse matrix. Every accessor returns the same values
/// for both storage kinds.
class CountMatrix {
 public:
  using Dense = Eigen::MatrixXd;
  using Sparse = Eigen::SparseMatrix<double, Eigen::ColMajor>;

  CountMatrix() = default;

  // Throws data errors on negative, non-integral or non-finite cells.
  static CountMatrix from_dense(Dense values);
  // Duplicate coordinates are summed.
  static CountMatrix from_entries(Eigen::Index n, Eigen::Index d,
                                  const std::vector<CountEntry>& entries);
  static CountMatrix zeros(Eigen::Index n, Eigen::Index d);

  Eigen::Index rows() const;
  Eigen::Index cols() const;
  bool is_sparse() const { return std::holds_alternative<Sparse>(storage_); }
  Eigen::Index nonzeros() const;

  double operator()(Eigen::Index i, Eigen::Index j) const;
  Dense to_dense() const;
  Sparse to_sparse() const;
  CountMatrix as_sparse() const;
  CountMatrix as_dense() const;

  // Nonzero cells in column-major order.
  std::vector<CountEntry> entries() const;

  Eigen::VectorXd row_sums() const;
  Eigen::VectorXd col_sums() const;
  // Sum of log(x_ij!) over all cells.
  double log_factorial_sum() const;

  CountMatrix select_rows(const std::vector<Eigen::Index>& rows) const;
  CountMatrix select_cols(const std::vector<Eigen::Index>& cols) const;

  friend bool operator==(const CountMatrix& a, const CountMatrix& b);

 private:
  std::variant<Dense, Sparse> storage_{Dense()};
};

}  // namespace dpsvd
