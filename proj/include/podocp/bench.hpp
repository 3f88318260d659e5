#pragma once

#include "podocp/ocp.hpp"
#include "podocp/pod.hpp"
#include "podocp/rom.hpp"

#include <json.hpp>

#include <filesystem>

/// Error, speedup and eigenvalue-decay studies of a reduced model against its
/// truth problem. Report file schemas are described in docs/reports.md.
namespace podocp::bench {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// One test parameter at one basis size.
struct ErrorSample {
  int n = 0;
  std::array<double, ocp::kVarCount> errors{};
  double reduced_cost = 0.0;
  double truth_cost = 0.0;
  double cost_error = 0.0;
};

struct ErrorRow {
  int n = 0;
  int dimension = 0;
  /// Means over the successful test parameters.
  std::array<double, ocp::kVarCount> mean_error{};
  double mean_cost_error = 0.0;
};

struct ErrorSweep {
  std::vector<ParameterPoint> tested;
  std::vector<double> truth_seconds;
  /// raw[i][k]: tested[i] at n_list[k].
  std::vector<std::vector<ErrorSample>> raw;
  std::vector<ErrorRow> rows;
  /// Parameters whose truth or reduced solve failed, with the reason.
  std::vector<std::pair<ParameterPoint, std::string>> failures;
};

/// Solves the truth problem once per test parameter (on `jobs` threads) and
/// compares the reduced solutions at every n in n_list. A failing truth solve
/// excludes the parameter and records it; a failing reduced solve does too.
ErrorSweep error_sweep(const ocp::TruthProblem& truth, const rom::ReducedModel& model,
                       const std::vector<ParameterPoint>& test_set, const std::vector<int>& n_list,
                       int jobs = 1);

struct SpeedupRow {
  int n = 0;
  int dimension = 0;
  double mean_truth_seconds = 0.0;
  double mean_reduced_seconds = 0.0;
  double speedup = 0.0;
  /// Reduced solves too short for the clock were timed in batches.
  bool batched = false;
  /// Per-parameter medians.
  std::vector<double> reduced_seconds;
};

struct SpeedupSweep {
  std::vector<ParameterPoint> sample;
  /// Per-parameter truth medians.
  std::vector<double> truth_seconds;
  std::vector<SpeedupRow> rows;
  int repeats = 5;
};

/// Sequential timings. Each timed call is preceded by one discarded warm-up
/// run; the value kept per parameter is the median of `repeats` runs. The
/// reduced time covers theta evaluation, assembly and the dense solve.
/// speedup = mean truth time / mean reduced time.
SpeedupSweep speedup_sweep(const ocp::TruthProblem& truth, const rom::ReducedModel& model,
                           const std::vector<ParameterPoint>& sample, const std::vector<int>& n_list,
                           int repeats = 5);

/// Median of the values (mean of the two central ones for even counts).
double median(std::vector<double> values);

struct DecayRow {
  ocp::Var var = ocp::Var::V;
  int n = 0;
  double eigenvalue = 0.0;
  double cumulative = 0.0;
};

/// Per variable, every stored eigenvalue with its cumulative energy fraction.
std::vector<DecayRow> eigen_decay(const std::array<pod::PodResult, ocp::kVarCount>& spectra);

/// Environment record shared by every report.
Json environment(const ocp::TruthProblem& truth, double mesh_h, int training_size, std::uint64_t training_seed,
                 std::uint64_t test_seed, double eps_tol);

/// Today's date as YYYYMMDD (local time).
std::string date_stamp();

/// `<problem>_<quantity>_<date>.csv` in dir.
fs::path report_path(const fs::path& dir, ProblemId problem, std::string_view quantity,
                     std::string_view date, std::string_view extension = "csv");

/// Write CSV files (and a JSON summary for the sweeps); return the paths.
std::vector<fs::path> write_error_report(const ErrorSweep& s, ProblemId problem, const std::vector<int>& n_list,
                                         const Json& env, const fs::path& dir, std::string_view date);
std::vector<fs::path> write_speedup_report(const SpeedupSweep& s, ProblemId problem, const Json& env,
                                           const fs::path& dir, std::string_view date);
fs::path write_decay_report(const std::vector<DecayRow>& rows, ProblemId problem, const fs::path& dir,
                            std::string_view date);

}  // namespace podocp::bench
