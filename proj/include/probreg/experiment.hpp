#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "probreg/meta.hpp"
#include "probreg/validation.hpp"

namespace probreg {

struct DatasetSpec {
  std::string path;
  std::string target;
  /// Defaults to the file stem.
  std::string name;
};

struct ExperimentConfig {
  std::vector<DatasetSpec> datasets;
  std::vector<std::string> models;
  std::vector<std::string> losses{"log"};
  std::size_t folds = 5;
  std::size_t tuning_folds = 5;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool pooled_se = false;
  /// Denominator of C(std(y)): N - ddof.
  int ddof = 0;
  bool compare = false;
  TestKind test = TestKind::wilcoxon;
  bool diagnostics = true;
};

/// Reads the JSON config format; unknown keys raise DomainError.
ExperimentConfig parse_config(const std::string& json_text);
/// Normalized JSON with every field spelled out; parse_config(config_json(c)) == c.
std::string config_json(const ExperimentConfig& c);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
bool operator==(const DatasetSpec& a, const DatasetSpec& b);

struct CellResult {
  std::string dataset, model, loss, task;
  bool tuned = false;
  bool failed = false;
  std::string error;
  std::optional<CvResult> cv;
};

struct TaskComparison {
  std::string task;
  ComparisonMatrix matrix;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<CellResult> cells;
  ResultTable table;
  std::vector<TaskComparison> comparisons;
  /// (file name, csv text), sorted by file name.
  std::vector<std::pair<std::string, std::string>> diagnostics;
  bool any_failed = false;

  std::string to_json() const;
};

/// Runs every dataset x model x loss cell by k-fold CV. Splits depend on (seed, dataset);
/// fits on (seed, dataset, model), so adding or reordering models never changes a cell.
/// Fit failures mark the cell failed and the run continues.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes results.json, results.md and diagnostics/*.csv below `dir`.
void write_outputs(const ExperimentResult& r, const std::filesystem::path& dir);

/// File-name friendly form of a model spec.
std::string sanitize_name(const std::string& spec);

/// 64-bit FNV-1a, used to derive seeds from names.
std::uint64_t name_hash(const std::string& s);

}  // namespace probreg
