#include "dpsvd/count_matrix.hpp"

#include <cmath>
#include <sstream>

#include "dpsvd/error.hpp"

namespace dpsvd {

namespace {

void check_cell(double v, Eigen::Index i, Eigen::Index j) {
  if (!std::isfinite(v) || v < 0.0 || std::floor(v) != v) {
    std::ostringstream os;
    os << "count cell (" << i << ", " << j << ") = " << v
       << " is not a nonnegative integer";
    data_error(os.str());
  }
}

void check_shape(Eigen::Index n, Eigen::Index d) {
  if (n < 1 || d < 1) data_error("count matrix must have n >= 1 and d >= 1");
}

}  // namespace

CountMatrix CountMatrix::from_dense(Dense values) {
  check_shape(values.rows(), values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j)
    for (Eigen::Index i = 0; i < values.rows(); ++i)
      check_cell(values(i, j), i, j);
  CountMatrix m;
  m.storage_ = std::move(values);
  return m;
}

CountMatrix CountMatrix::from_entries(Eigen::Index n, Eigen::Index d,
                                      const std::vector<CountEntry>& entries) {
  check_shape(n, d);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= n || e.col < 0 || e.col >= d) {
      std::ostringstream os;
      os << "entry (" << e.row << ", " << e.col << ") outside " << n << "x"
         << d;
      data_error(os.str());
    }
    if (e.value != 0)
      triplets.emplace_back(e.row, e.col, static_cast<double>(e.value));
  }
  Sparse s(n, d);
  s.setFromTriplets(triplets.begin(), triplets.end());
  s.makeCompressed();
  CountMatrix m;
  m.storage_ = std::move(s);
  return m;
}

CountMatrix CountMatrix::zeros(Eigen::Index n, Eigen::Index d) {
  return from_dense(Dense::Zero(n, d));
}

Eigen::Index CountMatrix::rows() const {
  return std::visit([](const auto& s) { return s.rows(); }, storage_);
}

Eigen::Index CountMatrix::cols() const {
  return std::visit([](const auto& s) { return s.cols(); }, storage_);
}

Eigen::Index CountMatrix::nonzeros() const {
  if (const auto* s = std::get_if<Sparse>(&storage_)) {
    Eigen::Index nnz = 0;
    for (Eigen::Index j = 0; j < s->outerSize(); ++j)
      for (Sparse::InnerIterator it(*s, j); it; ++it)
        if (it.value() != 0.0) ++nnz;
    return nnz;
  }
  return (std::get<Dense>(storage_).array() != 0.0).count();
}

double CountMatrix::operator()(Eigen::Index i, Eigen::Index j) const {
  if (const auto* s = std::get_if<Sparse>(&storage_)) return s->coeff(i, j);
  return std::get<Dense>(storage_)(i, j);
}

CountMatrix::Dense CountMatrix::to_dense() const {
  if (const auto* s = std::get_if<Sparse>(&storage_)) return Dense(*s);
  return std::get<Dense>(storage_);
}

CountMatrix::Sparse CountMatrix::to_sparse() const {
  if (const auto* s = std::get_if<Sparse>(&storage_)) return *s;
  Sparse s = std::get<Dense>(storage_).sparseView();
  s.makeCompressed();
  return s;
}

CountMatrix CountMatrix::as_sparse() const {
  CountMatrix m;
  m.storage_ = to_sparse();
  return m;
}

CountMatrix CountMatrix::as_dense() const {
  CountMatrix m;
  m.storage_ = to_dense();
  return m;
}

std::vector<CountEntry> CountMatrix::entries() const {
  std::vector<CountEntry> out;
  if (const auto* s = std::get_if<Sparse>(&storage_)) {
    for (Eigen::Index j = 0; j < s->outerSize(); ++j)
      for (Sparse::InnerIterator it(*s, j); it; ++it)
        if (it.value() != 0.0)
          out.push_back({it.row(), it.col(),
                         static_cast<std::uint64_t>(it.value())});
    return out;
  }
  const auto& dense = std::get<Dense>(storage_);
  for (Eigen::Index j = 0; j < dense.cols(); ++j)
    for (Eigen::Index i = 0; i < dense.rows(); ++i)
      if (dense(i, j) != 0.0)
        out.push_back({i, j, static_cast<std::uint64_t>(dense(i, j))});
  return out;
}

Eigen::VectorXd CountMatrix::row_sums() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(rows());
  for (const auto& e : entries()) out[e.row] += static_cast<double>(e.value);
  return out;
}

Eigen::VectorXd CountMatrix::col_sums() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(cols());
  for (const auto& e : entries()) out[e.col] += static_cast<double>(e.value);
  return out;
}

double CountMatrix::log_factorial_sum() const {
  double total = 0.0;
  for (const auto& e : entries())
    total += std::lgamma(static_cast<double>(e.value) + 1.0);
  return total;
}

CountMatrix CountMatrix::select_rows(
    const std::vector<Eigen::Index>& rows) const {
  const Dense full = to_dense();
  Dense out(static_cast<Eigen::Index>(rows.size()), full.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = full.row(rows[r]);
  CountMatrix m = from_dense(std::move(out));
  return is_sparse() ? m.as_sparse() : m;
}

CountMatrix CountMatrix::select_cols(
    const std::vector<Eigen::Index>& cols) const {
  const Dense full = to_dense();
  Dense out(full.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    out.col(static_cast<Eigen::Index>(c)) = full.col(cols[c]);
  CountMatrix m = from_dense(std::move(out));
  return is_sparse() ? m.as_sparse() : m;
}

bool operator==(const CountMatrix& a, const CountMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         a.to_dense() == b.to_dense();
}

}  // namespace dpsvd
