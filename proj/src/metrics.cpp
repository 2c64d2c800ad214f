#include "dpsvd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dpsvd/error.hpp"

namespace dpsvd {

double loading_alignment(const Eigen::MatrixXd& V_hat,
                         const Eigen::MatrixXd& V_star) {
  if (V_hat.rows() != V_star.rows() || V_hat.cols() != V_star.cols())
    data_error("alignment: loading shapes differ");
  const double a = V_hat.squaredNorm();
  const double b = V_star.squaredNorm();
  if (!(a > 0.0) || !(b > 0.0)) data_error("alignment: zero-norm loadings");
  const double trace = (V_hat.array() * V_star.array()).sum();
  return std::clamp(trace / std::sqrt(a * b), -1.0, 1.0);
}

double alignment_degrees(double alignment) {
  return std::acos(std::clamp(alignment, -1.0, 1.0)) * 180.0 /
         std::numbers::pi;
}

double rmse(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols()) {
    std::ostringstream os;
    os << "rmse: shapes " << est.rows() << "x" << est.cols() << " and "
       << truth.rows() << "x" << truth.cols() << " differ";
    data_error(os.str());
  }
  if (est.size() == 0) data_error("rmse: empty matrices");
  return std::sqrt((est - truth).squaredNorm() /
                   static_cast<double>(est.size()));
}

double rmse_reduction_pct(double before, double after) {
  if (!(before > 0.0)) data_error("rmse reduction: baseline must be positive");
  return (before - after) / before * 100.0;
}

double forced_zero_auc(const Eigen::VectorXd& scores,
                       const std::vector<Eigen::Index>& positives,
                       const std::vector<Eigen::Index>& negatives) {
  if (positives.empty() || negatives.empty())
    data_error("auc: positive and negative sets must be nonempty");
  std::vector<char> seen(static_cast<std::size_t>(scores.size()), 0);
  auto check = [&](Eigen::Index i, char tag) {
    if (i < 0 || i >= scores.size()) data_error("auc: index out of range");
    auto& s = seen[static_cast<std::size_t>(i)];
    if (s != 0) data_error("auc: index repeated or in both sets");
    s = tag;
  };
  for (auto i : positives) check(i, 1);
  for (auto i : negatives) check(i, 2);

  struct Item {
    double value;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(positives.size() + negatives.size());
  for (auto i : positives) items.push_back({scores[i], true});
  for (auto i : negatives) items.push_back({scores[i], false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.value < b.value; });

  // Average ranks over tied blocks; sum of positive ranks.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j + 1 < items.size() && items[j + 1].value == items[i].value) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t)
      if (items[t].positive) rank_sum += avg;
    i = j + 1;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

TTest one_sample_t(const Eigen::VectorXd& values) {
  TTest t;
  t.count = values.size();
  if (t.count < 2) data_error("t-test: need at least two values");
  t.mean = values.mean();
  const double var = (values.array() - t.mean).square().sum() /
                     static_cast<double>(t.count - 1);
  t.t_statistic =
      var > 0.0 ? t.mean / std::sqrt(var / static_cast<double>(t.count))
                : 0.0;
  return t;
}

double median(std::vector<double> values) {
  if (values.empty()) data_error("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

}  // namespace dpsvd
