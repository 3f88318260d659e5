// podocp: offline training, online evaluation, validation sweeps and mesh
// export for the two bifurcation benchmarks.
//
// Exit codes: 0 success, 2 usage or config error, 3 solver failure,
// 4 I/O failure.

#include "podocp/bench.hpp"
#include "podocp/config.hpp"
#include "podocp/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

using namespace podocp;
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

enum Exit : int { kOk = 0, kUsage = 2, kSolver = 3, kIo = 4 };

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Options {
  std::string config;
  std::string model;
  std::string mu;
  std::string out;
  int n = 0;
  int jobs = 0;
  double h = 0.0;
  bool export_vtk = false;
  bool compare_truth = false;
};

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

/// --out, then PODOCP_OUT, then the config value.
fs::path output_root(const Options& opt, const fs::path& configured) {
  if (!opt.out.empty()) return opt.out;
  if (const char* env = std::getenv("PODOCP_OUT"); env && *env) return env;
  return configured;
}

/// New directory <root>/<command>_<problem>_<timestamp>[_k]; never reuses one.
fs::path fresh_directory(const fs::path& root, std::string_view command, ProblemId problem) {
  const std::string base = std::string(command) + "_" + std::string(to_string(problem)) + "_" + timestamp();
  fs::create_directories(root);
  for (int k = 0;; ++k) {
    const fs::path dir = root / (k == 0 ? base : base + "_" + std::to_string(k));
    if (fs::create_directory(dir)) return dir;
  }
}

void write_json(const Json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("cannot write " + path.string());
}

config::RunConfig load_config(const Options& opt) {
  if (opt.config.empty()) throw UsageError("--config is required");
  config::RunConfig c = config::load(opt.config);
  if (opt.jobs > 0) c.jobs = opt.jobs;
  if (opt.n > 0) c.n_max = opt.n;
  if (opt.h > 0.0) c.h = opt.h;
  if (!opt.model.empty()) c.model = opt.model;
  config::validate(c);
  return c;
}

ParameterPoint parse_mu(const std::string& text, ProblemId problem) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || !std::isfinite(v)) throw UsageError("--mu: cannot read '" + item + "' as a number");
    values.push_back(v);
  }
  if (static_cast<int>(values.size()) != parameter_count(problem))
    throw UsageError("--mu: " + std::string(to_string(problem)) + " needs " +
                     std::to_string(parameter_count(problem)) + " components, got " +
                     std::to_string(values.size()));
  return ParameterPoint(problem, values);
}

/// Records stages and files; written on success and on failure alike.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command) : dir_(std::move(dir)) {
    j_["command"] = std::move(command);
    j_["status"] = "running";
    j_["stages"] = Json::array();
    j_["files"] = Json::array();
  }
  void stage(const std::string& name) {
    current_ = name;
    std::cout << "[" << name << "]" << std::endl;
  }
  void done(double seconds) { j_["stages"].push_back({{"stage", current_}, {"seconds", seconds}}); }
  void file(const fs::path& p) { j_["files"].push_back(fs::relative(p, dir_).string()); }
  void note(const std::string& key, Json value) { j_[key] = std::move(value); }
  void finish() {
    j_["status"] = "complete";
    write();
  }
  void fail(const std::string& message) {
    j_["status"] = "incomplete";
    j_["failed_stage"] = current_;
    j_["error"] = message;
    write();
  }
  const std::string& current() const { return current_; }

 private:
  void write() const {
    std::ofstream os(dir_ / "MANIFEST.json");
    os << j_.dump(2) << '\n';
  }
  fs::path dir_;
  Json j_;
  std::string current_ = "setup";
};

/// Runs f inside a named stage and records its wall time.
template <class F>
auto staged(Manifest& m, const std::string& name, F&& f) {
  m.stage(name);
  const auto t0 = Clock::now();
  if constexpr (std::is_void_v<decltype(f())>) {
    f();
    m.done(std::chrono::duration<double>(Clock::now() - t0).count());
  } else {
    auto r = f();
    m.done(std::chrono::duration<double>(Clock::now() - t0).count());
    return r;
  }
}

/// Converts the library's exceptions into exit codes, finalizing the
/// manifest (when there is one) with the failing stage.
template <class F>
int guarded(Manifest* manifest, F&& f) {
  auto report = [&](const std::string& kind, const std::string& what, int code) {
    const std::string stage = manifest ? manifest->current() : "setup";
    std::cerr << "error (" << kind << ", stage " << stage << "): " << what << '\n';
    if (manifest) manifest->fail(what);
    return code;
  };
  try {
    f();
    if (manifest) manifest->finish();
    return kOk;
  } catch (const UsageError& e) {
    return report("usage", e.what(), kUsage);
  } catch (const config::ConfigError& e) {
    return report("config", e.what(), kUsage);
  } catch (const MeshResolutionError& e) {
    return report("config", e.what(), kUsage);
  } catch (const InvalidArgument& e) {
    return report("usage", e.what(), kUsage);
  } catch (const SolverFailure& e) {
    return report("solver", e.what(), kSolver);
  } catch (const IoError& e) {
    return report("io", e.what(), kIo);
  } catch (const fs::filesystem_error& e) {
    return report("io", e.what(), kIo);
  } catch (const std::exception& e) {
    return report("internal", e.what(), kSolver);
  }
}

// ---------------------------------------------------------------------------
// offline
// ---------------------------------------------------------------------------

int cmd_offline(const Options& opt) {
  config::RunConfig c;
  fs::path dir;
  if (int code = guarded(nullptr, [&] {
        c = load_config(opt);
        dir = fresh_directory(output_root(opt, c.output_root), "offline", c.problem());
        write_json(config::to_json(c), dir / "config.resolved.json");
      }))
    return code;
  std::cout << "output: " << dir.string() << std::endl;
  Manifest manifest(dir, "offline");
  manifest.file(dir / "config.resolved.json");
  return guarded(&manifest, [&] {
    const auto truth = staged(manifest, "mesh", [&] {
      auto mesh = geometry::build_bifurcation_mesh(c.h);
      return std::make_unique<ocp::TruthProblem>(std::move(mesh), c.settings);
    });
    std::cout << "truth dofs " << truth->sizes().total() << std::endl;

    const auto snapshots = staged(manifest, "snapshots", [&] {
      const auto training = pod::sample_training_set(c.problem(), c.settings.box, c.training_size, c.training_seed);
      auto s = pod::collect_snapshots(*truth, training, c.jobs);
      if (s.count() == 0) throw SolverFailure("every training solve failed");
      const fs::path path = dir / "snapshots.bin";
      io::save_snapshots(s, c.h, path);
      manifest.file(path);
      return s;
    });
    if (snapshots.partial()) manifest.note("failed_parameters", snapshots.failures);

    const auto offline = staged(manifest, "pod", [&] {
      auto r = pod::build_reduced_basis(*truth, snapshots, c.eps_tol, c.n_max, c.supremizers);
      const fs::path path =
          bench::write_decay_report(bench::eigen_decay(r.spectra), c.problem(), dir, bench::date_stamp());
      manifest.file(path);
      return r;
    });
    std::cout << "N " << offline.basis.n << ", reduced dimension " << offline.basis.dimension() << std::endl;

    staged(manifest, "projection", [&] {
      const auto model = rom::project(*truth, offline.basis);
      const fs::path path = dir / "model.bin";
      io::save_model(model, c.settings, c.h, path, &offline.spectra);
      manifest.file(path);
      std::cout << "model: " << path.string() << std::endl;
    });
    manifest.note("n", offline.basis.n);
    manifest.note("dimension", offline.basis.dimension());
    if (snapshots.partial())
      throw SolverFailure(std::to_string(snapshots.failures.size()) + " training solve(s) failed; the model " +
                          "was built from the remaining snapshots");
  });
}

// ---------------------------------------------------------------------------
// online
// ---------------------------------------------------------------------------

std::unique_ptr<ocp::TruthProblem> rebuild_truth(const io::LoadedModel& lm) {
  return std::make_unique<ocp::TruthProblem>(geometry::build_bifurcation_mesh(lm.mesh_h), lm.model.online.settings);
}

/// Steps nearest to t = 0.05, 0.5 and 1 (scaled to the final time).
std::vector<int> export_steps(const ProblemSettings& s) {
  if (s.problem != ProblemId::StokesTD) return {0};
  std::vector<int> steps;
  for (double frac : {0.05, 0.5, 1.0}) {
    const int n = static_cast<int>(std::lround(frac * s.nt)) - 1;
    const int k = std::clamp(n, 0, s.nt - 1);
    if (steps.empty() || steps.back() != k) steps.push_back(k);
  }
  return steps;
}

int cmd_online(const Options& opt) {
  io::LoadedModel lm;
  ParameterPoint mu;
  fs::path model_path = opt.model;
  fs::path root = "podocp_out";
  if (int code = guarded(nullptr, [&] {
        if (model_path.empty() && !opt.config.empty()) {
          const auto c = load_config(opt);
          model_path = c.model;
          root = c.output_root;
        }
        if (model_path.empty()) throw UsageError("--model (or a config with output.model) is required");
        if (opt.mu.empty()) throw UsageError("--mu is required");
        lm = io::load_model(model_path);
        mu = parse_mu(opt.mu, lm.model.problem);
        if (!mu.inside(lm.model.online.settings.box))
          warn("mu = " + mu.str() + " lies outside the parameter box; continuing");
        if (opt.n > 0) {
          if (opt.n > lm.model.basis.n)
            throw UsageError("--n " + std::to_string(opt.n) + " exceeds the model's N = " +
                             std::to_string(lm.model.basis.n));
          lm.model = lm.model.truncated(opt.n);
        }
      }))
    return code;

  const bool write_files = opt.export_vtk || opt.compare_truth || !opt.out.empty();
  fs::path dir;
  std::unique_ptr<Manifest> manifest;
  if (write_files) {
    if (int code = guarded(nullptr, [&] { dir = fresh_directory(output_root(opt, root), "online", mu.problem()); }))
      return code;
    manifest = std::make_unique<Manifest>(dir, "online");
    std::cout << "output: " << dir.string() << std::endl;
  }
  return guarded(manifest.get(), [&] {
    Json result{{"model", model_path.string()}, {"mu", mu.values()}, {"n", lm.model.basis.n},
                {"dimension", lm.model.dimension()}};
    const auto red = rom::solve_reduced(lm.model.online, mu);
    std::cout << std::setprecision(10) << "J_N " << red.cost << "\n"
              << "online seconds " << red.seconds << "\n"
              << "reduced dimension " << lm.model.dimension() << std::endl;
    result["J_N"] = red.cost;
    result["online_seconds"] = red.seconds;
    result["reduced_residual"] = red.residual;

    std::unique_ptr<ocp::TruthProblem> truth;
    if (opt.export_vtk || opt.compare_truth) truth = rebuild_truth(lm);
    Vector x;
    if (truth) x = rom::reconstruct(lm.model, mu, red.coefficients);
    const double mu2 = mu.problem() == ProblemId::StokesTD ? mu[1] : 1.0;

    if (opt.compare_truth) {
      manifest->stage("truth");
      const auto t0 = Clock::now();
      const auto sol = ocp::solve_ocp(*truth, mu);
      manifest->done(std::chrono::duration<double>(Clock::now() - t0).count());
      const auto err = rom::relative_errors(*truth, x, sol.x);
      const double cost_error = std::abs(red.cost - sol.cost) / std::abs(sol.cost);
      std::cout << "J " << sol.cost << "\ntruth seconds " << sol.diagnostics.seconds << "\nrelative errors";
      Json errors = Json::object();
      for (int k = 0; k < ocp::kVarCount; ++k) {
        const std::string var(ocp::to_string(static_cast<ocp::Var>(k)));
        std::cout << ' ' << var << '=' << err[k];
        errors[var] = err[k];
      }
      std::cout << " J=" << cost_error << std::endl;
      result["J"] = sol.cost;
      result["truth_seconds"] = sol.diagnostics.seconds;
      result["relative_errors"] = errors;
      result["relative_cost_error"] = cost_error;
      if (opt.export_vtk)
        for (int step : export_steps(lm.model.online.settings)) {
          const fs::path p = dir / ("truth_step" + std::to_string(step) + ".vtk");
          io::write_fields_vtk(*truth, sol.x, step, p, mu2);
          manifest->file(p);
        }
    }
    if (opt.export_vtk) {
      manifest->stage("export");
      for (int step : export_steps(lm.model.online.settings)) {
        const fs::path p = dir / ("reduced_step" + std::to_string(step) + ".vtk");
        io::write_fields_vtk(*truth, x, step, p, mu2);
        manifest->file(p);
        std::cout << "wrote " << p.string() << std::endl;
      }
    }
    if (manifest) {
      write_json(result, dir / "online.json");
      manifest->file(dir / "online.json");
    }
  });
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int cmd_validate(const Options& opt) {
  config::RunConfig c;
  io::LoadedModel lm;
  fs::path dir;
  if (int code = guarded(nullptr, [&] {
        c = load_config(opt);
        if (c.model.empty()) throw UsageError("validate needs a model (--model or output.model)");
        lm = io::load_model(c.model);
        if (lm.model.problem != c.problem()) throw UsageError("the model was trained for another problem");
        for (int n : c.n_list)
          if (n > lm.model.basis.n)
            throw UsageError("validation.n_list entry " + std::to_string(n) + " exceeds the model's N = " +
                             std::to_string(lm.model.basis.n));
        dir = fresh_directory(output_root(opt, c.output_root), "validate", c.problem());
        write_json(config::to_json(c), dir / "config.resolved.json");
      }))
    return code;
  std::cout << "output: " << dir.string() << std::endl;
  Manifest manifest(dir, "validate");
  manifest.file(dir / "config.resolved.json");
  return guarded(&manifest, [&] {
    const auto truth = staged(manifest, "mesh", [&] { return rebuild_truth(lm); });
    const auto& s = lm.model.online.settings;
    const auto test = pod::sample_training_set(c.problem(), s.box, c.test_size, c.test_seed);
    const Json env = bench::environment(*truth, lm.mesh_h, c.training_size, c.training_seed, c.test_seed, c.eps_tol);
    const std::string date = bench::date_stamp();

    const auto errors = staged(manifest, "error_sweep", [&] {
      auto r = bench::error_sweep(*truth, lm.model, test, c.n_list, c.jobs);
      for (const auto& p : bench::write_error_report(r, c.problem(), c.n_list, env, dir, date)) manifest.file(p);
      return r;
    });
    std::cout << "N  dim  v  p  u  w  q  J\n" << std::setprecision(4);
    for (const auto& row : errors.rows) {
      std::cout << row.n << ' ' << row.dimension;
      for (double e : row.mean_error) std::cout << ' ' << e;
      std::cout << ' ' << row.mean_cost_error << '\n';
    }

    staged(manifest, "speedup_sweep", [&] {
      const int k = std::min<int>(c.speedup_sample, static_cast<int>(test.size()));
      const std::vector<ParameterPoint> sample(test.begin(), test.begin() + k);
      const auto r = bench::speedup_sweep(*truth, lm.model, sample, c.n_list, c.repeats);
      for (const auto& p : bench::write_speedup_report(r, c.problem(), env, dir, date)) manifest.file(p);
      std::cout << "N  truth_s  reduced_s  speedup\n";
      for (const auto& row : r.rows)
        std::cout << row.n << ' ' << row.mean_truth_seconds << ' ' << row.mean_reduced_seconds << ' '
                  << row.speedup << (row.batched ? " (batched)" : "") << '\n';
    });

    if (lm.spectra) {
      staged(manifest, "eigen_decay", [&] {
        manifest.file(bench::write_decay_report(bench::eigen_decay(*lm.spectra), c.problem(), dir, date));
      });
    } else {
      warn("the model holds no POD spectra; eigenvalue report skipped");
    }
    if (!errors.failures.empty())
      throw SolverFailure(std::to_string(errors.failures.size()) + " test parameter(s) failed; see the error report");
  });
}

// ---------------------------------------------------------------------------
// mesh
// ---------------------------------------------------------------------------

int cmd_mesh(const Options& opt) {
  return guarded(nullptr, [&] {
    double h = opt.h > 0.0 ? opt.h : 0.25;
    fs::path root = "podocp_out";
    ProblemId problem = ProblemId::StokesTD;
    if (!opt.config.empty()) {
      const auto c = load_config(opt);
      h = c.h;
      root = c.output_root;
      problem = c.problem();
    }
    double mu2 = 1.0;
    if (!opt.mu.empty()) {
      if (problem != ProblemId::StokesTD) throw UsageError("--mu is only meaningful for stokes_td meshes");
      mu2 = parse_mu(opt.mu, problem)[1];
    }
    const fs::path dir = fresh_directory(output_root(opt, root), "mesh", problem);
    const auto mesh = geometry::deform(geometry::build_bifurcation_mesh(h), geometry::stretch_map(mu2));
    const fs::path path = dir / "mesh.vtk";
    geometry::write_vtk(mesh, path);
    std::cout << "triangles " << mesh.triangles.size() << ", max edge " << mesh.h << "\nwrote " << path.string()
              << std::endl;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"POD-Galerkin reduced models for optimal flow control on a bifurcation"};
  app.require_subcommand(1);
  Options opt;

  auto* offline = app.add_subcommand("offline", "snapshots, POD, supremizers, projection; writes model.bin");
  offline->add_option("--config", opt.config, "JSON run configuration")->required();
  offline->add_option("--jobs", opt.jobs, "worker threads for snapshot solves")->check(CLI::Range(1, 1024));
  offline->add_option("--n", opt.n, "override pod.n_max")->check(CLI::PositiveNumber);
  offline->add_option("--out", opt.out, "output root");

  auto* online = app.add_subcommand("online", "reduced solve at one parameter");
  online->add_option("--model", opt.model, "model.bin written by offline");
  online->add_option("--config", opt.config, "config whose output.model names the model");
  online->add_option("--mu", opt.mu, "comma-separated parameter components")->required();
  online->add_option("--n", opt.n, "truncate the model to N levels")->check(CLI::PositiveNumber);
  online->add_flag("--export-vtk", opt.export_vtk, "write reduced fields (t = 0.05, 0.5, 1 for stokes_td)");
  online->add_flag("--compare-truth", opt.compare_truth, "also solve the truth problem and report errors");
  online->add_option("--out", opt.out, "output root");

  auto* validate = app.add_subcommand("validate", "error and speedup sweeps plus eigenvalue report");
  validate->add_option("--config", opt.config, "JSON run configuration")->required();
  validate->add_option("--model", opt.model, "override output.model");
  validate->add_option("--jobs", opt.jobs, "worker threads for truth solves")->check(CLI::Range(1, 1024));
  validate->add_option("--out", opt.out, "output root");

  auto* mesh = app.add_subcommand("mesh", "export the bifurcation mesh as VTK");
  mesh->add_option("--config", opt.config, "JSON run configuration (mesh.h)");
  mesh->add_option("--mesh-h", opt.h, "element size when no config is given")->check(CLI::PositiveNumber);
  mesh->add_option("--mu", opt.mu, "stokes_td parameter; the mesh is stretched by mu2");
  mesh->add_option("--out", opt.out, "output root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (*offline) return cmd_offline(opt);
  if (*online) return cmd_online(opt);
  if (*validate) return cmd_validate(opt);
  return cmd_mesh(opt);
}
