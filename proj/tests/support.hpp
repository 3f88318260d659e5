#pragma once

#include "podocp/ocp.hpp"

#include <random>
#include <string>

namespace podocp::testing {

/// Coarse stokes_td problem: h = 0.5, few time steps.
inline ProblemSettings small_stokes(int nt = 4) {
  auto s = ProblemSettings::defaults(ProblemId::StokesTD);
  s.nt = nt;
  return s;
}

inline ProblemSettings small_ns() { return ProblemSettings::defaults(ProblemId::NsSteady); }

inline ocp::TruthProblem coarse_truth(const ProblemSettings& s, double h = 0.5) {
  return ocp::TruthProblem(geometry::build_bifurcation_mesh(h), s);
}

inline Vector random_vector(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

/// Captures warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_sink(previous_); }
  std::vector<std::string> messages;

 private:
  WarningSink previous_;
};

}  // namespace podocp::testing
