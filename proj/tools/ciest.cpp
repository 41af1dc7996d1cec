// Command-line front end: validate, run, analyze, variance, reproduce-2-4.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ciest/commands.hpp"
#include "ciest/error.hpp"
#include "ciest/simd/kernels.hpp"

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed consensus+innovations estimation simulator"};
  app.require_subcommand(1);
  std::string isa = "auto";
  app.add_option("--isa", isa, "Kernel variant: auto, scalar or avx2")->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  ciest::ValidateArgs validate;
  std::string validate_algo;
  auto* v = app.add_subcommand("validate", "Check a scenario file against the algorithm's assumptions");
  v->add_option("--scenario", validate.scenario, "Scenario JSON file")->required();
  v->add_option("--algorithm", validate_algo, "lu, nu or nlu (default: the scenario's run.algorithm)");

  ciest::RunArgs run;
  std::string run_algo, run_seeds;
  std::uint64_t iterations = 0, stride = 0;
  bool record = false;
  auto* r = app.add_subcommand("run", "Run seeded trials and write one CSV per trial plus manifest.json");
  r->add_option("--scenario", run.scenario, "Scenario JSON file")->required();
  r->add_option("--algorithm", run_algo, "lu, nu or nlu");
  r->add_option("--iterations", iterations, "Iterations per trial");
  r->add_option("--seeds", run_seeds, "Seed range s0..s1 (inclusive) or a single seed");
  r->add_option("--stride", stride, "Record every R-th iterate (the final iterate is always kept)");
  r->add_flag("--record-estimates", record, "Also write the raw estimates (needed for normality reports)");
  r->add_option("--threads", run.threads, "Worker threads (0 = all cores)");
  r->add_flag("--check-average", run.check_average, "NLU: verify the block-average dynamics at every step");
  r->add_option("--out", run.out, "Output directory")->required();

  ciest::AnalyzeArgs analyze;
  std::string reports = "consistency,mse,consensus";
  auto* a = app.add_subcommand("analyze", "Monte-Carlo diagnostics over a run directory");
  a->add_option("--runs", analyze.runs, "Directory written by 'run'")->required();
  a->add_option("--report", reports, "Comma list of consistency, mse, consensus, normality");
  a->add_option("--out", analyze.out, "Report JSON path")->required();

  ciest::VarianceArgs variance;
  auto* va = app.add_subcommand("variance", "Closed-form asymptotic covariance of LU for a scenario");
  va->add_option("--scenario", variance.scenario, "Scenario JSON file")->required();
  va->add_option("--out", variance.out, "Report JSON path")->required();
  va->add_flag("--allow-unstable", variance.allow_unstable, "Report even when the stability condition fails");

  ciest::ReproduceArgs repro;
  auto* rp = app.add_subcommand("reproduce-2-4", "Scalar ten-sensor experiment: closed forms and simulated variance");
  rp->add_option("--out", repro.out, "Output directory")->required();
  rp->add_option("--seeds", repro.seeds, "Number of trials");
  rp->add_option("--iterations", repro.iterations, "Iterations per trial");
  rp->add_option("--threads", repro.threads, "Worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ciest::kExitValidation;
  }

  try {
    ciest::simd::select(ciest::simd::parse_isa(isa));
    if (*v) {
      if (!validate_algo.empty()) validate.algorithm = ciest::parse_algorithm(validate_algo);
      return ciest::cmd_validate(validate, std::cout, std::cerr);
    }
    if (*r) {
      if (!run_algo.empty()) run.algorithm = ciest::parse_algorithm(run_algo);
      if (!run_seeds.empty()) run.seeds = ciest::parse_seed_range(run_seeds);
      if (r->count("--iterations")) run.iterations = iterations;
      if (r->count("--stride")) run.stride = stride;
      if (record) run.record_estimates = true;
      return ciest::cmd_run(run, std::cout, std::cerr);
    }
    if (*a) {
      analyze.reports = split_list(reports);
      return ciest::cmd_analyze(analyze, std::cout, std::cerr);
    }
    if (*va) return ciest::cmd_variance(variance, std::cout, std::cerr);
    if (*rp) return ciest::cmd_reproduce_2_4(repro, std::cout, std::cerr);
  } catch (const ciest::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ciest::kExitValidation;
  }
  return ciest::kExitFailure;
}
