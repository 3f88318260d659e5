#include "podocp/common.hpp"

#include <iostream>
#include <mutex>
#include <sstream>

namespace podocp {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink() {
  static WarningSink s = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return s;
}

}  // namespace

void warn(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(message);
}

WarningSink set_warning_sink(WarningSink s) {
  std::lock_guard lock(sink_mutex());
  WarningSink previous = std::move(sink());
  sink() = std::move(s);
  return previous;
}

std::string_view to_string(ProblemId problem) {
  switch (problem) {
    case ProblemId::StokesTD:
      return "stokes_td";
    case ProblemId::NsSteady:
      return "ns_steady";
  }
  return "unknown";
}

ProblemId problem_from_string(std::string_view name) {
  if (name == "stokes_td") return ProblemId::StokesTD;
  if (name == "ns_steady") return ProblemId::NsSteady;
  throw InvalidArgument("unknown problem id '" + std::string(name) + "'");
}

int parameter_count(ProblemId problem) {
  return problem == ProblemId::StokesTD ? 3 : 1;
}

bool ParameterBox::contains(const std::vector<double>& values) const {
  if (values.size() != bounds.size()) return false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < bounds[i].first || values[i] > bounds[i].second) return false;
  }
  return true;
}

std::string_view to_string(InitialState state) {
  return state == InitialState::Steady ? "steady" : "zero";
}

InitialState initial_state_from_string(std::string_view name) {
  if (name == "steady") return InitialState::Steady;
  if (name == "zero") return InitialState::Zero;
  throw InvalidArgument("unknown initial state '" + std::string(name) + "' (expected steady or zero)");
}

ParameterBox default_box(ProblemId problem) {
  if (problem == ProblemId::StokesTD) {
    return ParameterBox{{{0.01, 1.0}, {1.0, 2.0}, {0.01, 1.0}}};
  }
  return ParameterBox{{{0.7, 1.5}}};
}

ParameterPoint::ParameterPoint(ProblemId problem, std::vector<double> values)
    : problem_(problem), values_(std::move(values)) {
  if (static_cast<int>(values_.size()) != parameter_count(problem)) {
    std::ostringstream os;
    os << to_string(problem) << " expects " << parameter_count(problem)
       << " parameter components, got " << values_.size();
    throw InvalidArgument(os.str());
  }
}

std::string ParameterPoint::str() const {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (i) os << ", ";
    os << values_[i];
  }
  os << ')';
  return os.str();
}

ProblemSettings ProblemSettings::defaults(ProblemId problem) {
  ProblemSettings s;
  s.problem = problem;
  s.box = default_box(problem);
  return s;
}

}  // namespace podocp
