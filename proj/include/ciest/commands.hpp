#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ciest/estimators.hpp"

namespace ciest {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitValidation = 2, kExitDivergence = 3, kExitIo = 4 };

/// "s0..s1" (inclusive) or a single seed "s".
std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text);

struct ValidateArgs {
  std::string scenario;
  std::optional<Algorithm> algorithm;  // defaults to the scenario's run.algorithm
};

struct RunArgs {
  std::string scenario;
  std::optional<Algorithm> algorithm;
  std::optional<std::uint64_t> iterations;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> seeds;
  std::optional<std::uint64_t> stride;
  std::optional<bool> record_estimates;
  std::string out;
  unsigned threads = 0;
  bool check_average = false;
};

struct AnalyzeArgs {
  std::string runs;
  std::vector<std::string> reports{"consistency", "mse", "consensus"};
  std::string out;
};

struct VarianceArgs {
  std::string scenario;
  std::string out;
  bool allow_unstable = false;
};

struct ReproduceArgs {
  std::string out;
  std::uint64_t seeds = 1000;
  std::uint64_t iterations = 100000;
  unsigned threads = 0;
};

// Each command reports on `out`/`err` and returns an ExitCode.
int cmd_validate(const ValidateArgs& args, std::ostream& out, std::ostream& err);
int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);
int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err);
int cmd_variance(const VarianceArgs& args, std::ostream& out, std::ostream& err);
int cmd_reproduce_2_4(const ReproduceArgs& args, std::ostream& out, std::ostream& err);

}  // namespace ciest
