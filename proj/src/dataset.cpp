#include "probreg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "probreg/error.hpp"
#include "probreg/random.hpp"

namespace probreg {

Dataset::Dataset(Eigen::MatrixXd features, Eigen::VectorXd targets) : X(std::move(features)), y(std::move(targets)) {
  if (X.rows() != y.size()) throw ShapeError("feature rows and targets differ in length");
  for (Eigen::Index j = 0; j < X.cols(); ++j) feature_names.push_back("x" + std::to_string(j));
  target_name = "y";
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& X, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Eigen::VectorXd rows_of(const Eigen::VectorXd& y, std::span<const std::size_t> idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(idx[i])];
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset d = *this;
  d.X = rows_of(X, idx);
  d.y = rows_of(y, idx);
  return d;
}

Dataset Dataset::with_targets(Eigen::VectorXd targets) const {
  if (targets.size() != y.size()) throw ShapeError("replacement targets differ in length");
  Dataset d = *this;
  d.y = std::move(targets);
  return d;
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\"");
  auto e = s.find_last_not_of(" \t\r\"");
  return b == std::string_view::npos ? std::string() : std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& target) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IngestError(0, 0, "missing header row");
  const auto header = split(line);
  const auto tpos = std::find(header.begin(), header.end(), target);
  if (tpos == header.end()) throw IngestError(0, 0, "target column '" + target + "' not in header");
  const auto tcol = static_cast<std::size_t>(tpos - header.begin());

  std::vector<std::vector<double>> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw IngestError(row, cells.size(), "expected " + std::to_string(header.size()) + " fields");
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& cell = cells[c];
      if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "?")
        throw IngestError(row, c, "missing value in column '" + header[c] + "'");
      const char* first = cell.data();
      const char* last = first + cell.size();
      if (*first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, values[c]);
      if (ec != std::errc() || ptr != last || !std::isfinite(values[c]))
        throw IngestError(row, c, "non-numeric value '" + cell + "' in column '" + header[c] + "'");
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw IngestError(0, 0, "no data rows");

  Dataset d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.X.resize(n, static_cast<Eigen::Index>(header.size() - 1));
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == tcol)
        d.y[i] = rows[static_cast<std::size_t>(i)][c];
      else
        d.X(i, j++) = rows[static_cast<std::size_t>(i)][c];
    }
  }
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != tcol) d.feature_names.push_back(header[c]);
  d.target_name = target;
  return d;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& target) {
  std::ifstream f(path);
  if (!f) throw IngestError(0, 0, "cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_csv(buf.str(), target);
}

std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw DomainError("k-fold split needs k >= 2");
  if (n < k) throw DomainError("k-fold split needs at least k rows");
  auto order = iota_indices(n);
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::size_t> complement(std::span<const std::size_t> idx, std::size_t n) {
  std::vector<bool> taken(n, false);
  for (auto i : idx) taken.at(i) = true;
  std::vector<std::size_t> out;
  out.reserve(n - idx.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!taken[i]) out.push_back(i);
  return out;
}

}  // namespace probreg
