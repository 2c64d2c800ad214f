#include "dpsvd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "dpsvd/bootstrap.hpp"
#include "dpsvd/error.hpp"
#include "dpsvd/metrics.hpp"

namespace dpsvd {

namespace {

// First `m` entries of a seeded Fisher-Yates shuffle.
template <class T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t m,
                                          Rng& rng) {
  for (std::size_t i = 0; i < m && i < pool.size(); ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(std::min(m, pool.size()));
  return pool;
}

// Indices of the `m` largest values; ties go to the lower index.
std::vector<Eigen::Index> top_indices(const Eigen::VectorXd& v,
                                      Eigen::Index m) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return v[a] > v[b]; });
  idx.resize(static_cast<std::size_t>(std::min(m, v.size())));
  return idx;
}

std::vector<Eigen::Index> positives_of(const Eigen::MatrixXd& x,
                                       Eigen::Index i) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (x(i, j) > 0.0) out.push_back(j);
  return out;
}

std::vector<Eigen::Index> true_zeros(const Eigen::MatrixXd& x, Eigen::Index i) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (x(i, j) == 0.0) out.push_back(j);
  return out;
}

}  // namespace

Cohort select_cohort(const CountMatrix& x, const CohortOptions& opts) {
  if (opts.top_columns < 1 || opts.pick_columns < 1 || opts.top_rows < 2 ||
      opts.test_rows < 1 || opts.test_rows >= opts.top_rows)
    usage_error("cohort: need columns >= 1, rows >= 2 and 1 <= test < rows");
  if (opts.pick_columns > opts.top_columns)
    usage_error("cohort: cannot pick more columns than the popular set");
  if (opts.top_columns > x.cols() || opts.top_rows > x.rows())
    data_error("cohort: matrix has " + std::to_string(x.rows()) + " rows and " +
               std::to_string(x.cols()) + " columns, fewer than requested");
  const Eigen::MatrixXd dense = x.to_dense();
  const Eigen::VectorXd support =
      (dense.array() > 0.0).cast<double>().colwise().sum().transpose();
  Rng rng(RngStream(opts.seed).child(0));

  Cohort c;
  c.columns = sample_without_replacement(
      top_indices(support, opts.top_columns),
      static_cast<std::size_t>(opts.pick_columns), rng);
  std::sort(c.columns.begin(), c.columns.end());

  Eigen::VectorXd activity = Eigen::VectorXd::Zero(x.rows());
  for (auto j : c.columns) activity += dense.col(j);
  auto rows = top_indices(activity, opts.top_rows);
  if (activity[rows.back()] <= 0.0)
    data_error("cohort: fewer active rows than requested");
  std::sort(rows.begin(), rows.end());
  Rng split(RngStream(opts.seed).child(1));
  auto test = sample_without_replacement(
      rows, static_cast<std::size_t>(opts.test_rows), split);
  std::sort(test.begin(), test.end());
  for (auto r : rows)
    if (!std::binary_search(test.begin(), test.end(), r))
      c.train_rows.push_back(r);
  c.test_rows = test;

  std::vector<Eigen::Index> order = c.train_rows;
  order.insert(order.end(), c.test_rows.begin(), c.test_rows.end());
  c.counts = x.select_cols(c.columns).select_rows(order);
  return c;
}

EvalSplit make_split(const CountMatrix& x, Eigen::Index test_rows,
                     Eigen::Index forced_per_row, const RngStream& stream) {
  if (test_rows < 1 || test_rows >= x.rows())
    usage_error("split: need 1 <= test rows < n");
  const Eigen::MatrixXd dense = x.to_dense();
  std::vector<Eigen::Index> eligible;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    if (static_cast<Eigen::Index>(positives_of(dense, i).size()) >=
            forced_per_row &&
        !true_zeros(dense, i).empty())
      eligible.push_back(i);
  if (static_cast<Eigen::Index>(eligible.size()) < test_rows)
    data_error("split: only " + std::to_string(eligible.size()) +
               " rows have enough positive and zero cells for " +
               std::to_string(test_rows) + " test rows");
  Rng rng(stream.child(0));
  auto test = sample_without_replacement(
      eligible, static_cast<std::size_t>(test_rows), rng);
  std::sort(test.begin(), test.end());
  std::vector<Eigen::Index> train;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    if (!std::binary_search(test.begin(), test.end(), i)) train.push_back(i);
  return make_split(x, std::move(train), std::move(test), forced_per_row,
                    stream);
}

EvalSplit make_split(const CountMatrix& x, std::vector<Eigen::Index> train,
                     std::vector<Eigen::Index> test,
                     Eigen::Index forced_per_row, const RngStream& stream) {
  if (forced_per_row < 1) usage_error("split: forced columns per row must be >= 1");
  const Eigen::MatrixXd dense = x.to_dense();
  EvalSplit s;
  s.train = std::move(train);
  s.test = std::move(test);
  for (std::size_t t = 0; t < s.test.size(); ++t) {
    const Eigen::Index i = s.test[t];
    if (i < 0 || i >= x.rows()) data_error("split: test row out of range");
    const auto pos = positives_of(dense, i);
    if (static_cast<Eigen::Index>(pos.size()) < forced_per_row ||
        true_zeros(dense, i).empty())
      data_error("split: test row " + std::to_string(i + 1) +
                 " lacks enough positive or zero cells");
    Rng rng(stream.child(1).child(t));
    auto cols = sample_without_replacement(
        pos, static_cast<std::size_t>(forced_per_row), rng);
    std::sort(cols.begin(), cols.end());
    std::vector<std::uint64_t> orig;
    for (auto j : cols) orig.push_back(static_cast<std::uint64_t>(dense(i, j)));
    s.forced.push_back(std::move(cols));
    s.original.push_back(std::move(orig));
  }
  validate(s, x);
  return s;
}

void validate(const EvalSplit& s, const CountMatrix& x) {
  if (s.train.empty() || s.test.empty())
    data_error("split: train and test must be nonempty");
  std::vector<char> role(static_cast<std::size_t>(x.rows()), 0);
  for (auto i : s.train) {
    if (i < 0 || i >= x.rows()) data_error("split: train row out of range");
    if (role[static_cast<std::size_t>(i)]++) data_error("split: repeated row");
  }
  for (auto i : s.test) {
    if (i < 0 || i >= x.rows()) data_error("split: test row out of range");
    if (role[static_cast<std::size_t>(i)]++)
      data_error("split: train and test rows overlap");
  }
  if (s.forced.size() != s.test.size() || s.original.size() != s.test.size())
    data_error("split: one forced set per test row");
  for (std::size_t t = 0; t < s.test.size(); ++t)
    for (std::size_t c = 0; c < s.forced[t].size(); ++c) {
      const auto j = s.forced[t][c];
      if (j < 0 || j >= x.cols()) data_error("split: forced column out of range");
      if (!(x(s.test[t], j) > 0.0) ||
          static_cast<double>(s.original[t][c]) != x(s.test[t], j))
        data_error("split: forced column without a positive original count");
    }
}

CountMatrix forced_test_counts(const CountMatrix& x, const EvalSplit& split) {
  Eigen::MatrixXd t = x.select_rows(split.test).to_dense();
  for (std::size_t r = 0; r < split.test.size(); ++r)
    for (auto j : split.forced[r]) t(static_cast<Eigen::Index>(r), j) = 0.0;
  return CountMatrix::from_dense(std::move(t));
}

std::vector<Eigen::Index> rank_columns(const Eigen::VectorXd& lambda_row) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(lambda_row.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return lambda_row[a] > lambda_row[b];
  });
  for (auto& i : idx) ++i;
  return idx;
}

Eigen::MatrixXd predict_means(const CountMatrix& x_new,
                              const Eigen::VectorXd& mu,
                              const Eigen::MatrixXd& V, ScoreMethod method,
                              const SolverOptions& solver) {
  const ScoreEstimates s = estimate_scores(x_new, mu, V, method, solver);
  Eigen::MatrixXd theta = s.scores * V.transpose();
  theta.rowwise() += mu.transpose();
  return mean_matrix(theta);
}

std::string to_string(EvalMethod m) {
  switch (m) {
    case EvalMethod::constant: return "constant";
    case EvalMethod::intercept: return "intercept";
    case EvalMethod::pca: return "pca";
    case EvalMethod::psvd: return "psvd";
    case EvalMethod::debiased: return "debiased";
  }
  return "constant";
}

EvalMethod parse_eval_method(const std::string& name) {
  for (auto m : {EvalMethod::constant, EvalMethod::intercept, EvalMethod::pca,
                 EvalMethod::psvd, EvalMethod::debiased})
    if (to_string(m) == name) return m;
  usage_error("unknown eval method '" + name + "'");
}

std::vector<EvalRow> evaluate(const CountMatrix& x, const EvalSplit& split,
                              const EvalOptions& opts) {
  validate(split, x);
  for (auto k : opts.ks)
    if (k < 1 || k >= x.cols()) usage_error("eval: each k must be in [1, d)");
  const CountMatrix train = x.select_rows(split.train);
  const CountMatrix test = forced_test_counts(x, split);
  const Eigen::MatrixXd test_orig = x.select_rows(split.test).to_dense();
  const RngStream stream(opts.seed);

  std::vector<EvalRow> rows;
  auto score = [&](const std::string& method, Eigen::Index k,
                   const Eigen::MatrixXd& lambda) {
    double total = 0.0;
    for (std::size_t t = 0; t < split.test.size(); ++t) {
      const auto r = static_cast<Eigen::Index>(t);
      const double auc = forced_zero_auc(lambda.row(r).transpose(),
                                         split.forced[t],
                                         true_zeros(test_orig, r));
      rows.push_back({method, k, split.test[t], auc});
      total += auc;
    }
    rows.push_back(
        {method, k, -1, total / static_cast<double>(split.test.size())});
  };

  const Eigen::VectorXd mu = log_column_means(train);
  const auto nt = static_cast<Eigen::Index>(split.test.size());
  auto wanted = [&](EvalMethod m) {
    return std::find(opts.methods.begin(), opts.methods.end(), m) !=
           opts.methods.end();
  };
  if (wanted(EvalMethod::constant))
    score("constant", 0, Eigen::MatrixXd::Ones(nt, x.cols()));
  if (wanted(EvalMethod::intercept)) {
    Eigen::MatrixXd lambda(nt, x.cols());
    lambda.rowwise() = mu.array().exp().matrix().transpose();
    score("intercept", 0, lambda);
  }

  Eigen::MatrixXd pca_basis;
  if (wanted(EvalMethod::pca)) {
    const Eigen::MatrixXd t = train.to_dense();
    const Eigen::RowVectorXd mean = t.colwise().mean();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(t.rowwise() - mean, Eigen::ComputeThinV);
    pca_basis = svd.matrixV();
    for (auto k : opts.ks) {
      const Eigen::MatrixXd Vk =
          pca_basis.leftCols(std::min<Eigen::Index>(k, pca_basis.cols()));
      Eigen::MatrixXd centered = test.to_dense().rowwise() - mean;
      Eigen::MatrixXd recon = centered * Vk * Vk.transpose();
      recon.rowwise() += mean;
      score("pca", k, recon);
    }
  }

  for (auto k : opts.ks) {
    if (!wanted(EvalMethod::psvd) && !wanted(EvalMethod::debiased)) break;
    FitOptions fo = opts.fit;
    fo.k = k;
    fo.score_method = ScoreMethod::mle;
    const auto uk = static_cast<std::uint64_t>(k);
    const FitResult fr = fit(train, fo, stream.child(1).child(uk));
    if (wanted(EvalMethod::psvd))
      score("psvd", k,
            predict_means(test, fr.fit.mu, fr.fit.V, opts.score_method,
                          fo.solver));
    if (wanted(EvalMethod::debiased)) {
      BootstrapConfig cfg;
      cfg.B = opts.B;
      cfg.C = opts.C;
      cfg.seed = stream.child(2).child(uk).key();
      const DebiasResult d = iterative_bootstrap_debias(train, fr.fit, cfg, fo);
      score("debiased", k,
            predict_means(test, fr.fit.mu, d.V_tilde, opts.score_method,
                          fo.solver));
    }
  }
  return rows;
}

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << "method,k,row,auc\n";
  for (const auto& r : rows) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", r.auc);
    out << r.method << "," << r.k << ",";
    if (r.row < 0)
      out << "mean";
    else
      out << (r.row + 1);
    out << "," << buf << "\n";
  }
}

}  // namespace dpsvd
