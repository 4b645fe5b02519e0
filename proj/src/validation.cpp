#include "probreg/validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include "probreg/error.hpp"
#include "probreg/numeric.hpp"
#include "probreg/parallel.hpp"
#include "probreg/random.hpp"

namespace probreg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// sqrt(sum (v - mean)^2 / (M (M - 1)))
double stderr_of(std::span<const double> v, double mean) {
  const auto m = static_cast<double>(v.size());
  if (v.size() < 2) return kNaN;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (m * (m - 1.0)));
}

int sign_of(double x) { return x > 0 ? 1 : (x < 0 ? -1 : 0); }

int direction_of(std::span<const double> diffs) {
  double s = 0.0;
  for (double d : diffs) s += d;
  return std::isnan(s) ? 0 : sign_of(s);
}

}  // namespace

LossSample summarize(std::vector<double> losses, std::string model, int fold) {
  LossSample s;
  s.model = std::move(model);
  s.fold = fold;
  s.n_infinite = static_cast<std::size_t>(
      std::count_if(losses.begin(), losses.end(), [](double l) { return std::isinf(l) && l > 0; }));
  if (losses.empty()) {
    s.mean = s.stderr_ = kNaN;
  } else if (s.n_infinite > 0) {
    s.mean = kInf;
    s.stderr_ = kNaN;
  } else {
    s.mean = mean_of(losses);
    s.stderr_ = stderr_of(losses, s.mean);
  }
  s.losses = std::move(losses);
  return s;
}

LossSample estimate_generalization(const PredictedBatch& batch, std::span<const double> y, const Loss& loss) {
  if (batch.size() != y.size()) throw ShapeError("batch and labels differ in length");
  std::vector<double> l(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) l[i] = loss(batch[i], y[i]);
  return summarize(std::move(l), batch.model);
}

CvResult kfold_cv(const ProbEstimator& e, const Dataset& d, std::size_t k, const Loss& loss, std::uint64_t split_seed,
                  std::uint64_t fit_seed, const CvOptions& opt) {
  CvResult out;
  out.fold_indices = kfold_indices(d.rows(), k, split_seed);
  for (const auto& f : out.fold_indices)
    if (f.size() < 2) throw FoldTooSmall("test fold has fewer than 2 points");

  const std::string name = e.render();
  std::vector<std::vector<double>> fold_losses(k);
  std::vector<std::vector<Distribution>> fold_preds(k);
  auto run = [&](std::size_t f) {
    const auto& test = out.fold_indices[f];
    const auto train_idx = complement(test, d.rows());
    const Dataset train = d.subset(train_idx);
    auto model = e.clone();
    model->fit(train, derive_seed(fit_seed, {f}));
    const Loss bound = loss.with_label_range(train.y.minCoeff(), train.y.maxCoeff());
    auto batch = model->predict(rows_of(d.X, test));
    std::vector<double> l(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) l[i] = bound(batch[i], d.y(static_cast<Eigen::Index>(test[i])));
    fold_losses[f] = std::move(l);
    fold_preds[f] = std::move(batch.items);
  };
  if (opt.parallel)
    parallel_for(k, run);
  else
    for (std::size_t f = 0; f < k; ++f) run(f);

  out.pointwise.assign(d.rows(), kNaN);
  std::vector<std::optional<Distribution>> preds(d.rows());
  for (std::size_t f = 0; f < k; ++f) {
    const auto& test = out.fold_indices[f];
    for (std::size_t i = 0; i < test.size(); ++i) {
      out.pointwise[test[i]] = fold_losses[f][i];
      preds[test[i]] = fold_preds[f][i];
    }
    out.folds.push_back(summarize(std::move(fold_losses[f]), name, static_cast<int>(f)));
  }
  out.predictions.reserve(d.rows());
  for (auto& p : preds) out.predictions.push_back(std::move(*p));

  LossSample agg;
  agg.model = name;
  agg.losses = out.pointwise;
  for (const auto& f : out.folds) agg.n_infinite += f.n_infinite;
  if (agg.n_infinite > 0) {
    agg.mean = kInf;
    agg.stderr_ = kNaN;
  } else {
    double m = 0.0, se = 0.0;
    for (const auto& f : out.folds) {
      m += f.mean;
      se += f.stderr_;
    }
    agg.mean = m / static_cast<double>(k);
    agg.stderr_ = opt.pooled_se ? stderr_of(out.pointwise, mean_of(out.pointwise)) : se / static_cast<double>(k);
  }
  out.aggregate = std::move(agg);
  return out;
}

std::string to_string(TestKind t) { return t == TestKind::wilcoxon ? "wilcoxon" : "t"; }

std::string to_string(Alternative a) {
  switch (a) {
    case Alternative::less: return "less";
    case Alternative::greater: return "greater";
    default: return "two-sided";
  }
}

ComparisonResult wilcoxon_signed_rank(std::span<const double> diffs, Alternative alt) {
  ComparisonResult r;
  r.test = TestKind::wilcoxon;
  r.alternative = alt;
  r.direction = direction_of(diffs);
  std::vector<double> d;
  for (double x : diffs) {
    if (!std::isfinite(x))
      ++r.n_dropped;
    else if (x != 0.0)
      d.push_back(x);
  }
  if (d.empty()) throw DegenerateSample("all paired differences are zero");
  const std::size_t n = d.size();
  r.n = n;

  std::vector<std::size_t> order = iota_indices(n);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(d[a]) < std::abs(d[b]); });
  // doubled average ranks stay integral
  std::vector<long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long r2 = static_cast<long>(i + 1 + j + 1);
    for (std::size_t t = i; t <= j; ++t) rank2[order[t]] = r2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long w2 = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) w2 += rank2[i];
  r.statistic = static_cast<double>(w2) / 2.0;

  double p_greater, p_less;
  if (n <= 25) {
    r.exact = true;
    const long total = std::accumulate(rank2.begin(), rank2.end(), 0L);
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (long rk : rank2) {
      for (long s = reach; s >= 0; --s)
        if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + rk)] += count[static_cast<std::size_t>(s)];
      reach += rk;
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double ge = 0.0, le = 0.0;
    for (long s = 0; s <= total; ++s) {
      if (s >= w2) ge += count[static_cast<std::size_t>(s)];
      if (s <= w2) le += count[static_cast<std::size_t>(s)];
    }
    p_greater = ge / all;
    p_less = le / all;
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    p_greater = normal_cdf(-(r.statistic - mu - 0.5) / sd);
    p_less = normal_cdf((r.statistic - mu + 0.5) / sd);
  }
  switch (alt) {
    case Alternative::greater: r.p_value = p_greater; break;
    case Alternative::less: r.p_value = p_less; break;
    default: r.p_value = std::min(1.0, 2.0 * std::min(p_greater, p_less));
  }
  return r;
}

ComparisonResult paired_t_test(std::span<const double> diffs, Alternative alt) {
  ComparisonResult r;
  r.test = TestKind::paired_t;
  r.alternative = alt;
  r.direction = direction_of(diffs);
  std::vector<double> d;
  for (double x : diffs) {
    if (std::isfinite(x))
      d.push_back(x);
    else
      ++r.n_dropped;
  }
  r.n = d.size();
  if (d.size() < 2) throw DegenerateSample("t-test needs at least two finite differences");
  const double m = mean_of(d);
  const double se = stderr_of(d, m);
  if (!(se > 0.0)) throw DegenerateSample("paired differences have zero variance");
  r.statistic = m / se;
  const double df = static_cast<double>(d.size() - 1);
  const double lower = student_t_cdf(r.statistic, df), upper = student_t_cdf(-r.statistic, df);
  switch (alt) {
    case Alternative::greater: r.p_value = upper; break;
    case Alternative::less: r.p_value = lower; break;
    default: r.p_value = std::min(1.0, 2.0 * std::min(lower, upper));
  }
  return r;
}

ComparisonResult paired_test(std::span<const double> diffs, TestKind kind, Alternative alt) {
  try {
    return kind == TestKind::wilcoxon ? wilcoxon_signed_rank(diffs, alt) : paired_t_test(diffs, alt);
  } catch (const DegenerateSample&) {
    ComparisonResult r;
    r.test = kind;
    r.alternative = alt;
    r.direction = direction_of(diffs);
    r.n = static_cast<std::size_t>(std::count_if(diffs.begin(), diffs.end(), [](double x) { return std::isfinite(x); }));
    r.n_dropped = diffs.size() - r.n;
    r.degenerate = true;
    return r;
  }
}

ComparisonMatrix compare_losses(const std::vector<std::string>& models, const std::vector<std::vector<double>>& losses,
                                TestKind test) {
  if (models.size() != losses.size()) throw ShapeError("one loss vector per model expected");
  ComparisonMatrix m;
  m.models = models;
  const std::size_t k = models.size();
  m.cells.assign(k, std::vector<std::optional<ComparisonResult>>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      if (losses[i].size() != losses[j].size()) throw ShapeError("loss vectors differ in length");
      std::vector<double> diff(losses[i].size());
      for (std::size_t t = 0; t < diff.size(); ++t) diff[t] = losses[i][t] - losses[j][t];
      m.cells[i][j] = paired_test(diff, test, Alternative::two_sided);
    }
  return m;
}

ComparisonMatrix compare_models(const std::vector<PredictedBatch>& batches, std::span<const double> y,
                                const Loss& loss, TestKind test) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> losses;
  for (const auto& b : batches) {
    names.push_back(b.model);
    losses.push_back(estimate_generalization(b, y, loss).losses);
  }
  return compare_losses(names, losses, test);
}

std::string format_cell(const ResultCell& c) {
  char buf[96];
  if (c.failed)
    std::snprintf(buf, sizeof buf, "(%d) failed", c.rank);
  else
    std::snprintf(buf, sizeof buf, "(%d) %.4g±%.4g", c.rank, c.mean, c.stderr_);
  std::string s = buf;
  if (c.tuned) s += '*';
  return s;
}

ResultTable result_table(const std::vector<ResultCell>& cells) {
  ResultTable t;
  std::map<std::string, std::size_t> task_ix, model_ix;
  for (const auto& c : cells) {
    if (task_ix.emplace(c.task, t.tasks.size()).second) t.tasks.push_back(c.task);
    if (model_ix.emplace(c.model, t.models.size()).second) t.models.push_back(c.model);
  }
  const std::size_t nm = t.models.size(), nt = t.tasks.size();
  std::vector<std::vector<ResultCell>> grid(nm, std::vector<ResultCell>(nt));
  for (std::size_t i = 0; i < nm; ++i)
    for (std::size_t j = 0; j < nt; ++j) {
      grid[i][j].model = t.models[i];
      grid[i][j].task = t.tasks[j];
      grid[i][j].failed = true;
    }
  for (const auto& c : cells) {
    auto& g = grid[model_ix[c.model]][task_ix[c.task]];
    g = c;
    if (!std::isfinite(c.mean)) g.failed = true;
  }
  for (std::size_t j = 0; j < nt; ++j) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < nm; ++i) ok += !grid[i][j].failed;
    for (std::size_t i = 0; i < nm; ++i) {
      auto& c = grid[i][j];
      if (c.failed) {
        c.rank = static_cast<int>(ok) + 1;
        continue;
      }
      int better = 0;
      for (std::size_t o = 0; o < nm; ++o)
        if (!grid[o][j].failed && grid[o][j].mean < c.mean) ++better;
      c.rank = better + 1;
    }
  }
  std::vector<double> mean_rank(nm, 0.0);
  for (std::size_t i = 0; i < nm; ++i) {
    for (const auto& c : grid[i]) mean_rank[i] += c.rank;
    if (nt > 0) mean_rank[i] /= static_cast<double>(nt);
  }
  auto order = iota_indices(nm);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return mean_rank[a] < mean_rank[b]; });
  std::vector<std::string> models;
  for (auto i : order) {
    models.push_back(t.models[i]);
    t.cells.push_back(grid[i]);
    t.mean_rank.push_back(mean_rank[i]);
  }
  t.models = std::move(models);
  return t;
}

std::string ResultTable::to_markdown() const {
  std::string s = "| model |";
  for (const auto& task : tasks) s += " " + task + " |";
  s += " mean rank |\n|---|";
  for (std::size_t j = 0; j < tasks.size(); ++j) s += "---|";
  s += "---|\n";
  for (std::size_t i = 0; i < models.size(); ++i) {
    s += "| " + models[i] + " |";
    for (const auto& c : cells[i]) s += " " + format_cell(c) + " |";
    char buf[32];
    std::snprintf(buf, sizeof buf, " %.2f |\n", mean_rank[i]);
    s += buf;
  }
  return s;
}

EntropyEstimates entropy_estimates(const PredictedBatch& informed, const PredictedBatch& uninformed,
                                   std::span<const double> y, const Loss& loss) {
  EntropyEstimates e;
  e.h_y = estimate_generalization(uninformed, y, loss);
  e.h_y_given_x = estimate_generalization(informed, y, loss);
  std::vector<double> diff(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) diff[i] = e.h_y.losses[i] - e.h_y_given_x.losses[i];
  e.gap = e.h_y.mean - e.h_y_given_x.mean;
  e.gap_stderr = std::isfinite(e.gap) ? stderr_of(diff, mean_of(diff)) : kNaN;
  return e;
}

BiasVarianceReport bias_variance_probe(const ProbEstimator& strategy, const SyntheticTruth& truth,
                                       std::size_t n_train, std::size_t replicates, std::size_t n_test,
                                       const Loss& loss, std::uint64_t seed) {
  if (replicates < 2) throw DomainError("bias-variance probe needs at least two replicates");
  if (n_test < 2 || n_train < 1) throw DomainError("bias-variance probe needs data");

  auto draw = [&](std::size_t n, Rng& rng) {
    Eigen::MatrixXd X = truth.features(n, rng);
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) y(i) = truth.conditional(X.row(i)).sample_one(rng);
    return Dataset(std::move(X), std::move(y));
  };

  Rng test_rng(derive_seed(seed, {0}));
  const Dataset test = draw(n_test, test_rng);

  std::vector<PredictedBatch> preds(replicates);
  parallel_for(replicates, [&](std::size_t r) {
    Rng rng(derive_seed(seed, {1, r}));
    const Dataset train = draw(n_train, rng);
    auto model = strategy.clone();
    model->fit(train, derive_seed(seed, {2, r}));
    preds[r] = model->predict(test.X);
  });

  const std::vector<double> w(replicates, 1.0 / static_cast<double>(replicates));
  std::vector<Distribution> avg;
  avg.reserve(n_test);
  std::vector<double> l_err(n_test), l_tot(n_test), l_avg(n_test);
  for (std::size_t j = 0; j < n_test; ++j) {
    const double yj = test.y(static_cast<Eigen::Index>(j));
    l_err[j] = loss(truth.conditional(test.X.row(static_cast<Eigen::Index>(j))), yj);
    std::vector<Distribution> comps;
    comps.reserve(replicates);
    double tot = 0.0;
    for (std::size_t r = 0; r < replicates; ++r) {
      comps.push_back(preds[r][j]);
      tot += loss(preds[r][j], yj);
    }
    l_tot[j] = tot / static_cast<double>(replicates);
    avg.push_back(mixture(comps, w));
    l_avg[j] = loss(avg.back(), yj);
  }

  BiasVarianceReport rep;
  rep.replicates = replicates;
  rep.n_test = n_test;
  rep.err = mean_of(l_err);
  rep.total = mean_of(l_tot);
  const double avg_loss = mean_of(l_avg);
  rep.var = rep.total - avg_loss;
  rep.bias = avg_loss - rep.err;

  std::vector<double> dv(n_test), db(n_test);
  for (std::size_t j = 0; j < n_test; ++j) {
    dv[j] = l_tot[j] - l_avg[j];
    db[j] = l_avg[j] - l_err[j];
  }
  rep.err_se = stderr_of(l_err, rep.err);
  rep.var_se = stderr_of(dv, mean_of(dv));
  rep.bias_se = stderr_of(db, mean_of(db));

  // removable part of the bias: best constant label shift of the averaged prediction
  auto shifted = [&](double a) {
    double s = 0.0;
    for (std::size_t j = 0; j < n_test; ++j) s += loss(avg[j], test.y(static_cast<Eigen::Index>(j)) - a);
    return s / static_cast<double>(n_test);
  };
  double spread = std::sqrt((test.y.array() - test.y.mean()).square().mean());
  if (!(spread > 0)) spread = 1.0;
  double a = golden_section_min(shifted, -3.0 * spread, 3.0 * spread, 1e-6 * spread);
  double best = shifted(a);
  if (!(best < avg_loss)) {
    a = 0.0;
    best = avg_loss;
  }
  rep.shift = a;
  rep.dbias = avg_loss - best;
  rep.pbias = rep.bias - rep.dbias;
  std::vector<double> dd(n_test), dp(n_test);
  for (std::size_t j = 0; j < n_test; ++j) {
    const double l_shift = a == 0.0 ? l_avg[j] : loss(avg[j], test.y(static_cast<Eigen::Index>(j)) - a);
    dd[j] = l_avg[j] - l_shift;
    dp[j] = l_shift - l_err[j];
  }
  rep.dbias_se = stderr_of(dd, mean_of(dd));
  rep.pbias_se = stderr_of(dp, mean_of(dp));
  return rep;
}

}  // namespace probreg
