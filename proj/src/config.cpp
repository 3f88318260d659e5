#include "podocp/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace podocp::config {

namespace {

void check_keys(const Json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("'" + section + "' must be an object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ConfigError("unknown key '" + (section.empty() ? "" : section + ".") + item.key() + "'");
}

template <class T>
void read(const Json& j, const char* key, const std::string& section, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("bad value for '" + section + "." + key + "'");
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

RunConfig defaults(ProblemId problem) {
  RunConfig c;
  c.settings = ProblemSettings::defaults(problem);
  if (problem == ProblemId::NsSteady) {
    c.h = 0.1;
    c.training_size = 100;
    c.n_max = 10;
    c.n_list = {1, 2, 4, 6, 8, 10};
  }
  return c;
}

RunConfig from_json(const Json& j) {
  check_keys(j, "", {"problem", "mesh", "time", "parameters", "training", "pod", "physics", "newton",
                     "validation", "output", "jobs"});
  if (!j.contains("problem")) throw ConfigError("missing key 'problem'");
  ProblemId problem;
  try {
    problem = problem_from_string(j.at("problem").get<std::string>());
  } catch (const std::exception&) {
    throw ConfigError("'problem' must be \"stokes_td\" or \"ns_steady\"");
  }
  RunConfig c = defaults(problem);
  ProblemSettings& s = c.settings;
  const Json empty = Json::object();
  const auto section = [&](const char* name) -> const Json& { return j.contains(name) ? j.at(name) : empty; };

  const Json& mesh = section("mesh");
  check_keys(mesh, "mesh", {"h"});
  read(mesh, "h", "mesh", c.h);

  const Json& time = section("time");
  check_keys(time, "time", {"nt", "final_time", "initial_state"});
  read(time, "nt", "time", s.nt);
  read(time, "final_time", "time", s.final_time);
  if (time.contains("initial_state")) {
    try {
      s.initial_state = initial_state_from_string(time.at("initial_state").get<std::string>());
    } catch (const std::exception&) {
      throw ConfigError("'time.initial_state' must be \"steady\" or \"zero\"");
    }
  }

  const Json& params = section("parameters");
  check_keys(params, "parameters", {"box"});
  if (params.contains("box")) {
    s.box.bounds.clear();
    try {
      for (const auto& b : params.at("box"))
        s.box.bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
    } catch (const Json::exception&) {
      throw ConfigError("'parameters.box' must be a list of [lo, hi] pairs");
    }
  }

  const Json& training = section("training");
  check_keys(training, "training", {"size", "seed"});
  read(training, "size", "training", c.training_size);
  read(training, "seed", "training", c.training_seed);

  const Json& pod = section("pod");
  check_keys(pod, "pod", {"eps_tol", "n_max", "supremizers"});
  read(pod, "eps_tol", "pod", c.eps_tol);
  read(pod, "n_max", "pod", c.n_max);
  read(pod, "supremizers", "pod", c.supremizers);

  const Json& physics = section("physics");
  check_keys(physics, "physics", {"alpha1", "alpha2", "alpha", "eta", "inflow_scale", "target_scale"});
  read(physics, "alpha1", "physics", s.alpha1);
  read(physics, "alpha2", "physics", s.alpha2);
  read(physics, "alpha", "physics", s.alpha);
  read(physics, "eta", "physics", s.eta);
  read(physics, "inflow_scale", "physics", s.inflow_scale);
  read(physics, "target_scale", "physics", s.target_scale);

  const Json& newton = section("newton");
  check_keys(newton, "newton", {"tol", "max_iter"});
  read(newton, "tol", "newton", s.newton_tol);
  read(newton, "max_iter", "newton", s.newton_max_iter);

  const Json& val = section("validation");
  check_keys(val, "validation", {"test_size", "seed", "n_list", "speedup_sample", "repeats"});
  read(val, "test_size", "validation", c.test_size);
  read(val, "seed", "validation", c.test_seed);
  read(val, "n_list", "validation", c.n_list);
  read(val, "speedup_sample", "validation", c.speedup_sample);
  read(val, "repeats", "validation", c.repeats);

  const Json& out = section("output");
  check_keys(out, "output", {"root", "model"});
  std::string root = c.output_root.string(), model;
  read(out, "root", "output", root);
  read(out, "model", "output", model);
  c.output_root = root;
  c.model = model;

  if (j.contains("jobs")) {
    try {
      c.jobs = j.at("jobs").get<int>();
    } catch (const Json::exception&) {
      throw ConfigError("bad value for 'jobs'");
    }
  }
  validate(c);
  return c;
}

RunConfig load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(is);
  } catch (const Json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

Json to_json(const RunConfig& c) {
  const ProblemSettings& s = c.settings;
  Json box = Json::array();
  for (const auto& [lo, hi] : s.box.bounds) box.push_back({lo, hi});
  return Json{
      {"problem", to_string(s.problem)},
      {"mesh", {{"h", c.h}}},
      {"time", {{"nt", s.nt}, {"final_time", s.final_time}, {"initial_state", to_string(s.initial_state)}}},
      {"parameters", {{"box", box}}},
      {"training", {{"size", c.training_size}, {"seed", c.training_seed}}},
      {"pod", {{"eps_tol", c.eps_tol}, {"n_max", c.n_max}, {"supremizers", c.supremizers}}},
      {"physics",
       {{"alpha1", s.alpha1},
        {"alpha2", s.alpha2},
        {"alpha", s.alpha},
        {"eta", s.eta},
        {"inflow_scale", s.inflow_scale},
        {"target_scale", s.target_scale}}},
      {"newton", {{"tol", s.newton_tol}, {"max_iter", s.newton_max_iter}}},
      {"validation",
       {{"test_size", c.test_size},
        {"seed", c.test_seed},
        {"n_list", c.n_list},
        {"speedup_sample", c.speedup_sample},
        {"repeats", c.repeats}}},
      {"output", {{"root", c.output_root.string()}, {"model", c.model.string()}}},
      {"jobs", c.jobs},
  };
}

void validate(const RunConfig& c) {
  const ProblemSettings& s = c.settings;
  require(positive_finite(c.h) && c.h <= 0.5, "mesh.h must be in (0, 0.5]");
  require(s.nt >= 1 && s.nt <= 10000, "time.nt must be in [1, 10000]");
  require(positive_finite(s.final_time), "time.final_time must be positive");
  require(s.box.dimension() == parameter_count(s.problem),
          "parameters.box needs " + std::to_string(parameter_count(s.problem)) + " intervals");
  for (const auto& [lo, hi] : s.box.bounds)
    require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, "parameters.box intervals need lo <= hi");
  if (s.problem == ProblemId::StokesTD) {
    require(s.box.bounds[0].first > 0.0, "parameters.box: viscosity parameter must stay positive");
    require(s.box.bounds[1].first > 0.0, "parameters.box: stretch parameter must stay positive");
  } else {
    require(s.box.bounds[0].first > 0.0, "parameters.box: inflow parameter must stay positive");
  }
  require(c.training_size >= 1, "training.size must be at least 1");
  require(c.eps_tol > 0.0 && c.eps_tol < 1.0, "pod.eps_tol must be in (0, 1)");
  require(c.n_max >= 1, "pod.n_max must be at least 1");
  require(positive_finite(s.alpha1) && positive_finite(s.alpha2) && positive_finite(s.alpha),
          "physics.alpha1, alpha2 and alpha must be positive");
  require(positive_finite(s.eta), "physics.eta must be positive");
  require(std::isfinite(s.inflow_scale) && std::isfinite(s.target_scale), "physics scales must be finite");
  require(positive_finite(s.newton_tol) && s.newton_tol < 1.0, "newton.tol must be in (0, 1)");
  require(s.newton_max_iter >= 1, "newton.max_iter must be at least 1");
  require(c.test_size >= 1, "validation.test_size must be at least 1");
  require(!c.n_list.empty(), "validation.n_list must not be empty");
  for (int n : c.n_list) require(n >= 1, "validation.n_list entries must be at least 1");
  require(c.speedup_sample >= 1, "validation.speedup_sample must be at least 1");
  require(c.repeats >= 1, "validation.repeats must be at least 1");
  require(c.jobs >= 1 && c.jobs <= 1024, "jobs must be in [1, 1024]");
}

}  // namespace podocp::config
