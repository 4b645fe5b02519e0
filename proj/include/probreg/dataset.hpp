#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace probreg {

/// Feature matrix (rows are observations) with aligned targets.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  std::string target_name;

  Dataset() = default;
  Dataset(Eigen::MatrixXd features, Eigen::VectorXd targets);

  std::size_t rows() const { return static_cast<std::size_t>(y.size()); }
  std::size_t cols() const { return static_cast<std::size_t>(X.cols()); }
  Dataset subset(std::span<const std::size_t> idx) const;
  Dataset with_targets(Eigen::VectorXd targets) const;
};

/// Reads a headed, comma separated numeric table; `target` names the label column.
Dataset load_csv(const std::filesystem::path& path, const std::string& target);
Dataset parse_csv(const std::string& text, const std::string& target);

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& X, std::span<const std::size_t> idx);
Eigen::VectorXd rows_of(const Eigen::VectorXd& y, std::span<const std::size_t> idx);

/// Seeded shuffled k-fold split; fold f is the test index set, sorted ascending.
std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed);

/// Complement of a sorted index set in [0, n).
std::vector<std::size_t> complement(std::span<const std::size_t> idx, std::size_t n);

}  // namespace probreg
