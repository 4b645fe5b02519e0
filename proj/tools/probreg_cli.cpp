// Command line front end: cross-validated benchmarks, pairwise comparisons,
// independence tests, diagnostics export and model-spec checking.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "probreg/error.hpp"
#include "probreg/experiment.hpp"
#include "probreg/independence.hpp"
#include "probreg/model_spec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace probreg;

namespace {

struct Common {
  std::string config, data, target, models, losses, out, std_denominator, test;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  bool pooled_se = false;
};

void add_experiment_flags(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file; flags override it");
  sub->add_option("--data", c.data, "CSV file with a header row");
  sub->add_option("--target", c.target, "label column");
  sub->add_option("--models", c.models, "comma separated model specs");
  sub->add_option("--loss", c.losses, "comma separated loss ids");
  sub->add_option("--folds", c.folds, "number of CV folds");
  sub->add_option("--seed", c.seed, "master seed (required here or in the config)");
  sub->add_option("--out", c.out, "output directory");
  sub->add_flag("--pooled-se", c.pooled_se, "stderr from pooled per-point losses");
  sub->add_option("--std-denominator", c.std_denominator, "n or n-1")->check(CLI::IsMember({"n", "n-1"}));
  sub->add_option("--test", c.test, "paired test: wilcoxon or t")->check(CLI::IsMember({"wilcoxon", "t"}));
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DomainError("cannot read " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

ExperimentConfig make_config(const CLI::App& sub, const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : parse_config(read_file(c.config));
  if (sub.count("--data") || sub.count("--target")) {
    if (c.data.empty() || c.target.empty()) throw DomainError("--data and --target go together");
    cfg.datasets = {DatasetSpec{c.data, c.target, ""}};
  }
  if (sub.count("--models")) cfg.models = split_specs(c.models);
  if (sub.count("--loss")) {
    cfg.losses.clear();
    std::stringstream s(c.losses);
    for (std::string id; std::getline(s, id, ',');) cfg.losses.push_back(id);
  }
  if (sub.count("--folds")) cfg.folds = c.folds;
  if (sub.count("--seed")) cfg.seed = c.seed;
  if (sub.count("--out")) cfg.out = c.out;
  if (c.pooled_se) cfg.pooled_se = true;
  if (sub.count("--std-denominator")) cfg.ddof = c.std_denominator == "n" ? 0 : 1;
  if (sub.count("--test")) cfg.test = c.test == "t" ? TestKind::paired_t : TestKind::wilcoxon;
  if (!cfg.seed) throw DomainError("--seed is required (or \"seed\" in the config)");
  return cfg;
}

void print_comparisons(const ExperimentResult& r) {
  for (const auto& t : r.comparisons) {
    std::cout << "\n" << t.task << "\n";
    for (std::size_t a = 0; a < t.matrix.models.size(); ++a)
      for (std::size_t b = a + 1; b < t.matrix.models.size(); ++b) {
        const auto& c = *t.matrix.cells[a][b];
        std::cout << "  " << t.matrix.models[a] << " vs " << t.matrix.models[b] << ": "
                  << (c.direction < 0 ? "first lower" : c.direction > 0 ? "second lower" : "tie") << ", p=" << c.p_value
                  << (c.degenerate ? " (degenerate)" : "") << "\n";
      }
  }
}

int run_cv(const CLI::App& sub, const Common& c, bool compare, bool diagnostics_only) {
  auto cfg = make_config(sub, c);
  if (compare) cfg.compare = true;
  if (diagnostics_only) cfg.diagnostics = true;
  const auto r = run_experiment(cfg);
  if (diagnostics_only) {
    const fs::path dir = fs::path(cfg.out.empty() ? "." : cfg.out) / "diagnostics";
    fs::create_directories(dir);
    for (const auto& [name, csv] : r.diagnostics) {
      std::ofstream(dir / name, std::ios::binary) << csv;
      std::cout << (dir / name).string() << "\n";
    }
  } else {
    if (!cfg.out.empty()) write_outputs(r, cfg.out);
    std::cout << r.table.to_markdown();
    if (compare) print_comparisons(r);
  }
  for (const auto& cell : r.cells)
    if (cell.failed) std::cerr << "failed: " << cell.model << " on " << cell.task << ": " << cell.error << "\n";
  return r.any_failed ? 2 : 0;
}

json test_json(const ComparisonResult& r, double alpha) {
  return {{"test", to_string(r.test)},
          {"alternative", to_string(r.alternative)},
          {"statistic", r.statistic},
          {"p_value", r.p_value},
          {"n", r.n},
          {"direction", r.direction},
          {"degenerate", r.degenerate},
          {"alpha", alpha},
          {"alpha_decision", r.p_value < alpha ? "reject" : "retain"}};
}

void emit(const json& j, const std::string& out, const std::string& file) {
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(fs::path(out) / file, std::ios::binary) << text;
  }
}

// seeded split of the rows into a training part of the given fraction and the rest
std::pair<Dataset, Dataset> split_rows(const Dataset& d, double frac, std::uint64_t seed) {
  auto idx = iota_indices(d.rows());
  Rng rng(derive_seed(seed, {0x73706c}));
  shuffle(std::span(idx), rng);
  const auto n_tr = static_cast<std::size_t>(std::llround(frac * static_cast<double>(d.rows())));
  if (n_tr < 2 || d.rows() - n_tr < 2) throw DomainError("split leaves fewer than two rows on one side");
  std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_tr));
  std::vector<std::size_t> te(idx.begin() + static_cast<std::ptrdiff_t>(n_tr), idx.end());
  std::sort(tr.begin(), tr.end());
  std::sort(te.begin(), te.end());
  return {d.subset(tr), d.subset(te)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic regression benchmarks and tests"};
  app.require_subcommand(1);

  Common cv_opts, cmp_opts, diag_opts;
  auto* cv = app.add_subcommand("cv", "k-fold CV table of models x losses");
  add_experiment_flags(cv, cv_opts);
  auto* cmp = app.add_subcommand("compare", "CV table plus pairwise paired tests");
  add_experiment_flags(cmp, cmp_opts);
  auto* diag = app.add_subcommand("diagnose", "write per-row diagnostics CSVs");
  add_experiment_flags(diag, diag_opts);

  std::string ind_data, ind_target, ind_informed = "N(p=LR, s=RE(p, C(mean(y))))",
                                     ind_uninformed = "N(p=C(mean(y)), s=C(std(y)))", ind_test = "wilcoxon", ind_out;
  std::uint64_t ind_seed = 0;
  double ind_split = 0.5, ind_alpha = 0.05;
  auto* indep = app.add_subcommand("indep", "predictive independence test of label and features");
  indep->add_option("--data", ind_data)->required();
  indep->add_option("--target", ind_target)->required();
  indep->add_option("--seed", ind_seed)->required();
  indep->add_option("--informed", ind_informed, "model using the features");
  indep->add_option("--uninformed", ind_uninformed, "model ignoring the features");
  indep->add_option("--split", ind_split, "training fraction");
  indep->add_option("--test", ind_test)->check(CLI::IsMember({"wilcoxon", "t"}));
  indep->add_option("--alpha", ind_alpha);
  indep->add_option("--out", ind_out);

  std::string ts_data, ts_target, ts_test = "t", ts_out;
  std::uint64_t ts_seed = 0;
  double ts_split = 0.5, ts_alpha = 0.05;
  auto* ts = app.add_subcommand("twosample", "classifier two-sample test; the label column holds the sample id");
  ts->add_option("--data", ts_data)->required();
  ts->add_option("--target", ts_target, "column with exactly two distinct values")->required();
  ts->add_option("--seed", ts_seed)->required();
  ts->add_option("--split", ts_split, "training fraction per sample");
  ts->add_option("--test", ts_test)->check(CLI::IsMember({"wilcoxon", "t"}));
  ts->add_option("--alpha", ts_alpha);
  ts->add_option("--out", ts_out);

  std::string pc_models, pc_denominator = "n";
  auto* pc = app.add_subcommand("parse-check", "parse model specs and print their canonical form");
  pc->add_option("--models", pc_models)->required();
  pc->add_option("--std-denominator", pc_denominator)->check(CLI::IsMember({"n", "n-1"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cv) return run_cv(*cv, cv_opts, false, false);
    if (*cmp) return run_cv(*cmp, cmp_opts, true, false);
    if (*diag) return run_cv(*diag, diag_opts, false, true);
    if (*indep) {
      const auto d = load_csv(ind_data, ind_target);
      const auto [train, test] = split_rows(d, ind_split, ind_seed);
      const auto informed = parse_estimator(ind_informed);
      const auto uninformed = parse_estimator(ind_uninformed);
      const auto r = predictive_independence_test(train, test, *informed, *uninformed, LogLoss{},
                                                  ind_test == "t" ? TestKind::paired_t : TestKind::wilcoxon, ind_seed);
      emit(test_json(r, ind_alpha), ind_out, "indep.json");
      return 0;
    }
    if (*ts) {
      const auto d = load_csv(ts_data, ts_target);
      std::vector<double> labels;
      for (double v : d.y)
        if (std::find(labels.begin(), labels.end(), v) == labels.end()) labels.push_back(v);
      if (labels.size() != 2) throw DomainError("the sample column must hold exactly two distinct values");
      std::vector<std::size_t> a, b;
      for (std::size_t i = 0; i < d.rows(); ++i) (d.y(static_cast<Eigen::Index>(i)) == labels[0] ? a : b).push_back(i);
      TwoSampleOptions opt;
      opt.split = ts_split;
      opt.test = ts_test == "t" ? TestKind::paired_t : TestKind::wilcoxon;
      const auto r = two_sample_test(rows_of(d.X, a), rows_of(d.X, b), ts_seed, opt);
      emit(test_json(r, ts_alpha), ts_out, "twosample.json");
      return 0;
    }
    if (*pc) {
      int status = 0;
      for (const auto& spec : split_specs(pc_models)) {
        try {
          std::cout << parse_estimator(spec, {pc_denominator == "n" ? 0 : 1})->render() << "\n";
        } catch (const ParseError& e) {
          std::cerr << spec << "\n" << std::string(e.offset(), ' ') << "^ " << e.what() << "\n";
          status = 1;
        }
      }
      return status;
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
