#pragma once

#include "podocp/common.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>

/// Run configuration read from a JSON file with nested sections:
///
///   problem                          "stokes_td" | "ns_steady"
///   mesh        h                    target element size, (0, 0.5]
///   time        nt, final_time,      stokes_td only; initial_state is
///               initial_state        "steady" (default) or "zero"
///   parameters  box                  [[lo, hi], ...], one pair per component
///   training    size, seed           |Lambda| and sampling seed
///   pod         eps_tol, n_max, supremizers
///   physics     alpha1, alpha2, alpha, eta, inflow_scale, target_scale
///   newton      tol, max_iter
///   validation  test_size, seed, n_list, speedup_sample, repeats
///   output      root, model
///   jobs                             worker threads for snapshot solves
///
/// Missing keys take the defaults below; unknown keys are rejected.
namespace podocp::config {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  ProblemSettings settings = ProblemSettings::defaults(ProblemId::StokesTD);
  double h = 0.25;

  int training_size = 70;
  std::uint64_t training_seed = 1;

  double eps_tol = 1e-4;
  int n_max = 35;
  bool supremizers = true;

  int test_size = 50;
  std::uint64_t test_seed = 2;
  std::vector<int> n_list = {15, 20, 25, 30, 35};
  int speedup_sample = 5;
  int repeats = 5;

  fs::path output_root = "podocp_out";
  /// Persisted reduced model used by validate and online.
  fs::path model;
  int jobs = 1;

  ProblemId problem() const { return settings.problem; }
};

/// Defaults of a problem before any file is applied.
RunConfig defaults(ProblemId problem);

/// Parses and validates. Throws ConfigError naming the offending key.
RunConfig from_json(const Json& j);
RunConfig load(const fs::path& path);

/// Every field, defaults included.
Json to_json(const RunConfig& c);

/// Range checks for all numeric fields; throws ConfigError.
void validate(const RunConfig& c);

}  // namespace podocp::config
