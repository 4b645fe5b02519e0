#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "probreg/learners.hpp"

namespace probreg {

struct SpecArg;

/// Syntax tree of a model spec such as "N(p=LR, s=Min(RE(p, C(std(y)))))".
///
/// A node is either a number list ("0.5" or a grid "1;2;4") or a name with an
/// optional parenthesised argument list. Offsets are byte positions in the source.
struct SpecNode {
  enum class Kind { number, call };

  Kind kind = Kind::call;
  std::string name;
  bool parens = false;
  std::vector<double> values;
  std::vector<SpecArg> args;
  std::size_t offset = 0;
};

struct SpecArg {
  /// Empty for positional arguments.
  std::string key;
  SpecNode value;
  std::size_t offset = 0;
};

/// Structural equality, offsets ignored.
bool operator==(const SpecNode& a, const SpecNode& b);
bool operator==(const SpecArg& a, const SpecArg& b);

/// Whitespace-insensitive recursive-descent parse; syntax errors raise ParseError.
SpecNode parse_model_spec(std::string_view text);

/// Canonical text: ", " between arguments, shortest round-trip numbers.
std::string render(const SpecNode& n);

struct BuildOptions {
  /// Denominator N - ddof for C(std(y)) and the baseline spreads.
  int ddof = 0;
};

/// Maps a tree onto estimator constructors. Unknown names, wrong arity or argument kinds and
/// RE outside a dispersion slot raise ParseError at the offending node.
std::unique_ptr<ProbEstimator> build_estimator(const SpecNode& n, const BuildOptions& opt = {});
std::unique_ptr<PointLearner> build_learner(const SpecNode& n, const BuildOptions& opt = {});

/// parse_model_spec followed by build_estimator.
std::unique_ptr<ProbEstimator> parse_estimator(std::string_view text, const BuildOptions& opt = {});

/// Splits a comma separated list of specs at top-level commas.
std::vector<std::string> split_specs(std::string_view text);

}  // namespace probreg
