#include "probreg/experiment.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "probreg/composite.hpp"
#include "probreg/error.hpp"
#include "probreg/model_spec.hpp"
#include "probreg/parallel.hpp"

namespace probreg {

using nlohmann::json;

namespace {

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string denominator_name(int ddof) { return ddof == 0 ? "n" : "n-1"; }

int ddof_of(const std::string& s) {
  if (s == "n") return 0;
  if (s == "n-1") return 1;
  throw DomainError("std denominator must be n or n-1, got '" + s + "'");
}

TestKind test_of(const std::string& s) {
  if (s == "wilcoxon") return TestKind::wilcoxon;
  if (s == "t") return TestKind::paired_t;
  throw DomainError("test must be wilcoxon or t, got '" + s + "'");
}

std::string dataset_name(const DatasetSpec& d) {
  return d.name.empty() ? std::filesystem::path(d.path).stem().string() : d.name;
}

json config_to_json(const ExperimentConfig& c) {
  json ds = json::array();
  for (const auto& d : c.datasets) ds.push_back({{"path", d.path}, {"target", d.target}, {"name", dataset_name(d)}});
  json j;
  j["datasets"] = ds;
  j["models"] = c.models;
  j["losses"] = c.losses;
  j["folds"] = c.folds;
  j["tuning_folds"] = c.tuning_folds;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["out"] = c.out;
  j["pooled_se"] = c.pooled_se;
  j["std_denominator"] = denominator_name(c.ddof);
  j["compare"] = c.compare;
  j["test"] = to_string(c.test);
  j["diagnostics"] = c.diagnostics;
  return j;
}

json comparison_json(const ComparisonResult& r) {
  return {{"test", to_string(r.test)},     {"statistic", number(r.statistic)}, {"p_value", number(r.p_value)},
          {"direction", r.direction},      {"n", r.n},                         {"dropped", r.n_dropped},
          {"exact", r.exact},              {"degenerate", r.degenerate}};
}

}  // namespace

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string sanitize_name(const std::string& spec) {
  std::string out;
  for (char c : spec) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-';
    if (keep)
      out += c;
    else if (!out.empty() && out.back() != '_')
      out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "model" : out;
}

bool operator==(const DatasetSpec& a, const DatasetSpec& b) {
  return a.path == b.path && a.target == b.target && dataset_name(a) == dataset_name(b);
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.datasets == b.datasets && a.models == b.models && a.losses == b.losses && a.folds == b.folds &&
         a.tuning_folds == b.tuning_folds && a.seed == b.seed && a.out == b.out && a.pooled_se == b.pooled_se &&
         a.ddof == b.ddof && a.compare == b.compare && a.test == b.test && a.diagnostics == b.diagnostics;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.byte > 0 ? e.byte - 1 : 0, "invalid JSON config");
  }
  if (!j.is_object()) throw DomainError("config must be a JSON object");
  ExperimentConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "datasets") {
        for (const auto& d : v) {
          DatasetSpec s;
          s.path = d.at("path").get<std::string>();
          s.target = d.at("target").get<std::string>();
          if (d.contains("name")) s.name = d.at("name").get<std::string>();
          c.datasets.push_back(s);
        }
      } else if (key == "models") {
        c.models.clear();
        if (v.is_string())
          c.models = split_specs(v.get<std::string>());
        else
          for (const auto& m : v) c.models.push_back(m.get<std::string>());
      } else if (key == "losses") {
        c.losses.clear();
        for (const auto& l : v) c.losses.push_back(l.get<std::string>());
      } else if (key == "folds") {
        c.folds = v.get<std::size_t>();
      } else if (key == "tuning_folds") {
        c.tuning_folds = v.get<std::size_t>();
      } else if (key == "seed") {
        if (!v.is_null()) c.seed = v.get<std::uint64_t>();
      } else if (key == "out") {
        c.out = v.get<std::string>();
      } else if (key == "pooled_se") {
        c.pooled_se = v.get<bool>();
      } else if (key == "std_denominator") {
        c.ddof = ddof_of(v.get<std::string>());
      } else if (key == "compare") {
        c.compare = v.get<bool>();
      } else if (key == "test") {
        c.test = test_of(v.get<std::string>());
      } else if (key == "diagnostics") {
        c.diagnostics = v.get<bool>();
      } else {
        throw DomainError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw DomainError(std::string("malformed config: ") + e.what());
  }
  return c;
}

std::string config_json(const ExperimentConfig& c) { return config_to_json(c).dump(2); }

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (!cfg.seed) throw DomainError("a seed is required");
  if (cfg.datasets.empty() || cfg.models.empty() || cfg.losses.empty())
    throw DomainError("config needs at least one dataset, model and loss");
  const std::uint64_t seed = *cfg.seed;
  const BuildOptions build{cfg.ddof};

  // parse everything up front so spec errors stop the run before any fitting
  std::vector<std::unique_ptr<ProbEstimator>> models;
  for (const auto& m : cfg.models) models.push_back(parse_estimator(m, build));
  std::vector<Loss> losses;
  for (const auto& l : cfg.losses) losses.push_back(parse_loss(l));
  std::vector<Dataset> data;
  std::vector<std::string> names;
  for (const auto& d : cfg.datasets) {
    data.push_back(load_csv(d.path, d.target));
    names.push_back(dataset_name(d));
  }

  ExperimentResult res;
  res.config = cfg;
  struct Job {
    std::size_t d, l, m;
  };
  std::vector<Job> jobs;
  for (std::size_t d = 0; d < data.size(); ++d)
    for (std::size_t l = 0; l < losses.size(); ++l)
      for (std::size_t m = 0; m < models.size(); ++m) {
        jobs.push_back({d, l, m});
        CellResult c;
        c.dataset = names[d];
        c.loss = cfg.losses[l];
        c.model = cfg.models[m];
        c.task = names[d] + ":" + cfg.losses[l];
        c.tuned = models[m]->tuned();
        res.cells.push_back(std::move(c));
      }

  const CvOptions cv_opt{cfg.pooled_se, false};
  parallel_for(jobs.size(), [&](std::size_t i) {
    const auto [d, l, m] = jobs[i];
    auto& cell = res.cells[i];
    const std::uint64_t split_seed = derive_seed(seed, {name_hash(names[d])});
    const std::uint64_t fit_seed = derive_seed(seed, {name_hash(names[d]), name_hash(cfg.models[m])});
    try {
      const auto est = with_tuning(models[m]->clone(), cfg.tuning_folds, losses[l]);
      cell.cv = kfold_cv(*est, data[d], cfg.folds, losses[l], split_seed, fit_seed, cv_opt);
    } catch (const FoldTooSmall&) {
      throw;
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
  });

  std::vector<ResultCell> table_cells;
  for (const auto& c : res.cells) {
    ResultCell r{c.model, c.task};
    r.tuned = c.tuned;
    r.failed = c.failed;
    if (c.cv) {
      r.mean = c.cv->aggregate.mean;
      r.stderr_ = c.cv->aggregate.stderr_;
    }
    res.any_failed = res.any_failed || c.failed;
    table_cells.push_back(r);
  }
  res.table = result_table(table_cells);

  if (cfg.compare) {
    for (const auto& task : res.table.tasks) {
      std::vector<std::string> ms;
      std::vector<std::vector<double>> ls;
      for (const auto& c : res.cells)
        if (c.task == task && c.cv) {
          ms.push_back(c.model);
          ls.push_back(c.cv->pointwise);
        }
      res.comparisons.push_back({task, compare_losses(ms, ls, cfg.test)});
    }
  }

  if (cfg.diagnostics) {
    const auto baseline = parse_estimator("N(p=C(mean(y)), s=C(std(y)))", build);
    std::set<std::string> used;
    for (std::size_t d = 0; d < data.size(); ++d) {
      const Loss& loss = losses.front();
      const Loss bound = loss.with_label_range(data[d].y.minCoeff(), data[d].y.maxCoeff());
      const std::uint64_t split_seed = derive_seed(seed, {name_hash(names[d])});
      const auto base_cv = kfold_cv(*baseline, data[d], cfg.folds, loss, split_seed,
                                    derive_seed(seed, {name_hash(names[d]), name_hash("baseline")}), cv_opt);
      const PredictedBatch base_batch{base_cv.predictions, baseline->render(), 0};
      const std::span<const double> y(data[d].y.data(), data[d].rows());
      for (const auto& c : res.cells) {
        if (c.dataset != names[d] || c.loss != cfg.losses.front() || !c.cv) continue;
        std::string file = (data.size() > 1 ? sanitize_name(names[d]) + "__" : "") + sanitize_name(c.model);
        for (int k = 2; used.count(file + ".csv"); ++k) file += "_" + std::to_string(k);
        used.insert(file + ".csv");
        const PredictedBatch batch{c.cv->predictions, c.model, 0};
        res.diagnostics.emplace_back(file + ".csv", diagnostics_export(batch, y, bound, &base_batch).to_csv());
      }
    }
    std::sort(res.diagnostics.begin(), res.diagnostics.end());
  }
  return res;
}

std::string ExperimentResult::to_json() const {
  std::map<std::pair<std::string, std::string>, int> rank;
  for (std::size_t i = 0; i < table.models.size(); ++i)
    for (const auto& c : table.cells[i]) rank[{c.model, c.task}] = c.rank;

  json results = json::array();
  for (const auto& c : cells) {
    json r{{"model", c.model}, {"task", c.task}, {"dataset", c.dataset}, {"loss", c.loss},
           {"rank", rank[{c.model, c.task}]}, {"tuned", c.tuned}, {"failed", c.failed}};
    if (c.cv) {
      r["mean"] = number(c.cv->aggregate.mean);
      r["stderr"] = number(c.cv->aggregate.stderr_);
      r["n_infinite"] = c.cv->aggregate.n_infinite;
      json folds = json::array();
      for (const auto& f : c.cv->folds) folds.push_back({{"fold", f.fold}, {"mean", number(f.mean)}, {"stderr", number(f.stderr_)}});
      r["folds"] = folds;
    } else {
      r["mean"] = nullptr;
      r["stderr"] = nullptr;
      r["error"] = c.error;
    }
    results.push_back(r);
  }
  // the output location is not part of the result
  json cfg = config_to_json(config);
  cfg.erase("out");
  json j{{"config", cfg}, {"results", results}};
  if (!comparisons.empty()) {
    json comps = json::array();
    for (const auto& t : comparisons) {
      json pairs = json::array();
      for (std::size_t a = 0; a < t.matrix.models.size(); ++a)
        for (std::size_t b = a + 1; b < t.matrix.models.size(); ++b) {
          json p = comparison_json(*t.matrix.cells[a][b]);
          p["a"] = t.matrix.models[a];
          p["b"] = t.matrix.models[b];
          pairs.push_back(p);
        }
      comps.push_back({{"task", t.task}, {"pairs", pairs}});
    }
    j["comparisons"] = comps;
  }
  return j.dump(2) + "\n";
}

void write_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DomainError("cannot write " + p.string());
    f << text;
  };
  write(dir / "results.json", r.to_json());
  write(dir / "results.md", r.table.to_markdown());
  if (!r.diagnostics.empty()) {
    fs::create_directories(dir / "diagnostics");
    for (const auto& [name, csv] : r.diagnostics) write(dir / "diagnostics" / name, csv);
  }
}

}  // namespace probreg
