#include "probreg/independence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "probreg/composite.hpp"
#include "probreg/error.hpp"
#include "probreg/random.hpp"

namespace probreg {

ComparisonResult predictive_independence_test(const Dataset& train, const Dataset& test,
                                              const ProbEstimator& informed, const ProbEstimator& uninformed,
                                              const Loss& loss, TestKind kind, std::uint64_t seed) {
  auto inf = informed.clone();
  auto uni = uninformed.clone();
  inf->fit(train, derive_seed(seed, {1}));
  uni->fit(train, derive_seed(seed, {2}));
  const Loss bound = loss.with_label_range(train.y.minCoeff(), train.y.maxCoeff());
  const auto pi = inf->predict(test.X);
  const auto pu = uni->predict(test.X);
  std::vector<double> diff(test.rows());
  for (std::size_t i = 0; i < diff.size(); ++i) {
    const double y = test.y(static_cast<Eigen::Index>(i));
    diff[i] = bound(pu[i], y) - bound(pi[i], y);
  }
  return paired_test(diff, kind, Alternative::greater);
}

ComparisonResult predictive_independence_test(const Dataset& train, const Dataset& test, TestKind kind,
                                              std::uint64_t seed) {
  ParametricEstimator informed(Shape::normal, std::make_unique<Ols>(),
                               std::make_unique<ResidualLearner>(std::make_unique<Constant>(Constant::mean())));
  ParametricEstimator uninformed(Shape::normal, std::make_unique<Constant>(Constant::mean()),
                                 std::make_unique<Constant>(Constant::stddev()));
  return predictive_independence_test(train, test, informed, uninformed, LogLoss{}, kind, seed);
}

namespace {

// (count of +1 among the k nearest + 1) / (k + 2), distance ties broken by training index
std::vector<double> knn_prob(const Eigen::MatrixXd& Xtr, std::span<const int> labels, const Eigen::MatrixXd& Xte,
                             std::size_t k) {
  const auto n = static_cast<std::size_t>(Xtr.rows());
  k = std::min(k, n);
  std::vector<double> out(static_cast<std::size_t>(Xte.rows()));
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (Eigen::Index q = 0; q < Xte.rows(); ++q) {
    for (std::size_t i = 0; i < n; ++i)
      dist[i] = {(Xtr.row(static_cast<Eigen::Index>(i)) - Xte.row(q)).squaredNorm(), i};
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < k; ++i) pos += labels[dist[i].second] == 1;
    out[static_cast<std::size_t>(q)] = (static_cast<double>(pos) + 1.0) / (static_cast<double>(k) + 2.0);
  }
  return out;
}

double class_log_loss(double p_pos, int label) { return -std::log(label == 1 ? p_pos : 1.0 - p_pos); }

}  // namespace

ClassProbFn knn_class_frequency(std::vector<std::size_t> ks, std::size_t folds) {
  if (ks.empty()) throw DomainError("kNN classifier needs at least one k");
  return [ks = std::move(ks), folds](const Eigen::MatrixXd& Xtr, std::span<const int> labels,
                                     const Eigen::MatrixXd& Xte, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(Xtr.rows());
    std::size_t best_k = ks.front();
    if (ks.size() > 1 && n >= 2 * folds) {
      const auto split = kfold_indices(n, folds, seed);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k : ks) {
        double total = 0.0;
        for (const auto& te : split) {
          const auto tr = complement(te, n);
          std::vector<int> lab;
          for (auto i : tr) lab.push_back(labels[i]);
          const auto p = knn_prob(rows_of(Xtr, tr), lab, rows_of(Xtr, te), k);
          for (std::size_t i = 0; i < te.size(); ++i) total += class_log_loss(p[i], labels[te[i]]);
        }
        if (total < best) {
          best = total;
          best_k = k;
        }
      }
    }
    return knn_prob(Xtr, labels, Xte, best_k);
  };
}

ClassProbFn class_frequency_only() {
  return [](const Eigen::MatrixXd&, std::span<const int> labels, const Eigen::MatrixXd& Xte, std::uint64_t) {
    const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    return std::vector<double>(static_cast<std::size_t>(Xte.rows()), pos / static_cast<double>(labels.size()));
  };
}

ComparisonResult two_sample_test(const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2, std::uint64_t seed,
                                 const TwoSampleOptions& opt) {
  if (s1.rows() == 0 || s2.rows() == 0) throw StratificationError("both samples must be nonempty");
  if (s1.cols() != s2.cols()) throw ShapeError("samples differ in dimension");
  if (!(opt.split > 0.0 && opt.split < 1.0)) throw DomainError("split fraction must lie in (0,1)");

  // stratified split: each class contributes round(split * size) training rows
  Rng rng(derive_seed(seed, {0x7473}));
  std::vector<std::size_t> train_rows, test_rows;
  std::vector<int> train_lab, test_lab;
  const Eigen::MatrixXd* parts[2] = {&s1, &s2};
  const int lab[2] = {1, -1};
  const Eigen::Index offset[2] = {0, s1.rows()};
  for (int c = 0; c < 2; ++c) {
    const auto n = static_cast<std::size_t>(parts[c]->rows());
    auto idx = iota_indices(n);
    shuffle(std::span(idx), rng);
    const auto n_tr = static_cast<std::size_t>(std::llround(opt.split * static_cast<double>(n)));
    if (n_tr == 0 || n_tr == n) throw StratificationError("a class is absent from the training or test split");
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_tr));
    std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_tr), idx.end());
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<std::size_t>(offset[c]) + idx[i];
      (i < n_tr ? train_rows : test_rows).push_back(row);
      (i < n_tr ? train_lab : test_lab).push_back(lab[c]);
    }
  }
  Eigen::MatrixXd all(s1.rows() + s2.rows(), s1.cols());
  all << s1, s2;

  const ClassProbFn clf = opt.classifier ? opt.classifier : knn_class_frequency();
  const auto p = clf(rows_of(all, train_rows), train_lab, rows_of(all, test_rows), derive_seed(seed, {0x6b6e6e}));
  if (p.size() != test_rows.size()) throw ShapeError("classifier returned the wrong number of probabilities");

  const double p1 = static_cast<double>(std::count(train_lab.begin(), train_lab.end(), 1)) /
                    static_cast<double>(train_lab.size());
  const double entropy = -p1 * std::log(p1) - (1.0 - p1) * std::log(1.0 - p1);
  std::vector<double> diff(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) diff[i] = entropy - class_log_loss(p[i], test_lab[i]);
  return paired_test(diff, opt.test, Alternative::greater);
}

double mmd_statistic(std::span<const double> s1, std::span<const double> s2, const KernelFn& k) {
  if (s1.empty() || s2.empty()) throw DomainError("MMD needs nonempty samples");
  auto sum = [&](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (double x : a)
      for (double y : b) s += k(x, y);
    return s;
  };
  const double n1 = static_cast<double>(s1.size()), n2 = static_cast<double>(s2.size());
  return sum(s1, s1) / (n1 * n1) + sum(s2, s2) / (n2 * n2) - 2.0 * sum(s1, s2) / (n1 * n2);
}

MmdIdentity mmd_identity_check(std::span<const double> s1, std::span<const double> s2, const KernelFn& k) {
  auto empirical = [](std::span<const double> s) {
    return Distribution(Empirical{{s.begin(), s.end()}, std::vector<double>(s.size(), 1.0 / static_cast<double>(s.size()))});
  };
  std::vector<double> pooled(s1.begin(), s1.end());
  pooled.insert(pooled.end(), s2.begin(), s2.end());
  const Distribution p1 = empirical(s1), p2 = empirical(s2), p = empirical(pooled);

  double conditional = 0.0, marginal = 0.0;
  for (double y : s1) conditional += kernel_loss(p1, y, k);
  for (double y : s2) conditional += kernel_loss(p2, y, k);
  for (double y : pooled) marginal += kernel_loss(p, y, k);
  const double n = static_cast<double>(pooled.size());

  MmdIdentity r;
  r.predictive_difference = (conditional - marginal) / n;
  r.mmd = mmd_statistic(s1, s2, k);
  r.scaled_mmd = -static_cast<double>(s1.size()) * static_cast<double>(s2.size()) / (n * n) * r.mmd;
  return r;
}

}  // namespace probreg
