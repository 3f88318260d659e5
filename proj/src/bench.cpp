#include "podocp/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <thread>

namespace podocp::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Smallest observable difference of the clock.
double clock_tick() {
  const double period = static_cast<double>(Clock::period::num) / Clock::period::den;
  double best = 1.0;
  for (int k = 0; k < 5; ++k) {
    const auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) b = Clock::now();
    best = std::min(best, std::chrono::duration<double>(b - a).count());
  }
  return std::max(best, period);
}

std::ofstream open(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << std::setprecision(17);
  return os;
}

void close(std::ofstream& os, const fs::path& path) {
  os.flush();
  if (!os) throw IoError("write failed: " + path.string());
}

std::string mu_columns(const ParameterPoint& mu) {
  std::string out;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    std::ostringstream os;
    os << std::setprecision(17) << mu[i];
    out += (i ? "," : "") + os.str();
  }
  return out;
}

std::string mu_header(ProblemId problem) {
  std::string out;
  for (int i = 0; i < parameter_count(problem); ++i) out += (i ? ",mu" : "mu") + std::to_string(i + 1);
  return out;
}

void write_json(const Json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

ErrorSweep error_sweep(const ocp::TruthProblem& truth, const rom::ReducedModel& model,
                       const std::vector<ParameterPoint>& test_set, const std::vector<int>& n_list, int jobs) {
  for (int n : n_list)
    if (n < 1 || n > model.basis.n) throw InvalidArgument("error_sweep: n outside the trained range");

  const int count = static_cast<int>(test_set.size());
  std::vector<std::optional<ocp::OcpSolution>> truth_sol(count);
  std::vector<double> truth_time(count, 0.0);
  std::vector<std::string> truth_error(count);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        const auto t0 = Clock::now();
        truth_sol[i] = ocp::solve_ocp(truth, test_set[i]);
        truth_time[i] = seconds_since(t0);
      } catch (const SolverFailure& e) {
        truth_error[i] = std::string("truth: ") + e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min(jobs, count); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<rom::ReducedModel> models;
  for (int n : n_list) models.push_back(model.truncated(n));

  ErrorSweep out;
  for (int i = 0; i < count; ++i) {
    const ParameterPoint& mu = test_set[i];
    if (!truth_sol[i]) {
      warn("error sweep: excluding " + mu.str() + " (" + truth_error[i] + ")");
      out.failures.emplace_back(mu, truth_error[i]);
      continue;
    }
    const ocp::OcpSolution& ref = *truth_sol[i];
    std::vector<ErrorSample> samples;
    try {
      for (std::size_t k = 0; k < n_list.size(); ++k) {
        const rom::ReducedSolution rs = rom::solve_reduced(models[k].online, mu);
        ErrorSample s;
        s.n = n_list[k];
        s.errors = rom::relative_errors(truth, rom::reconstruct(models[k], mu, rs.coefficients), ref.x);
        s.reduced_cost = rs.cost;
        s.truth_cost = ref.cost;
        s.cost_error = std::abs(rs.cost - ref.cost) / std::abs(ref.cost);
        samples.push_back(s);
      }
    } catch (const SolverFailure& e) {
      const std::string why = std::string("reduced: ") + e.what();
      warn("error sweep: excluding " + mu.str() + " (" + why + ")");
      out.failures.emplace_back(mu, why);
      continue;
    }
    out.tested.push_back(mu);
    out.truth_seconds.push_back(truth_time[i]);
    out.raw.push_back(std::move(samples));
  }

  for (std::size_t k = 0; k < n_list.size(); ++k) {
    ErrorRow row;
    row.n = n_list[k];
    row.dimension = models[k].dimension();
    const double m = static_cast<double>(out.raw.size());
    for (const auto& samples : out.raw) {
      for (int v = 0; v < ocp::kVarCount; ++v) row.mean_error[v] += samples[k].errors[v] / m;
      row.mean_cost_error += samples[k].cost_error / m;
    }
    out.rows.push_back(row);
  }
  return out;
}

SpeedupSweep speedup_sweep(const ocp::TruthProblem& truth, const rom::ReducedModel& model,
                           const std::vector<ParameterPoint>& sample, const std::vector<int>& n_list, int repeats) {
  if (sample.empty()) throw InvalidArgument("speedup_sweep: empty parameter sample");
  if (repeats < 1) throw InvalidArgument("speedup_sweep: repeats must be positive");
  SpeedupSweep out;
  out.sample = sample;
  out.repeats = repeats;

  for (const auto& mu : sample) {
    ocp::solve_ocp(truth, mu);
    std::vector<double> t;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = Clock::now();
      ocp::solve_ocp(truth, mu);
      t.push_back(seconds_since(t0));
    }
    out.truth_seconds.push_back(median(t));
  }
  double truth_sum = 0.0;
  for (double t : out.truth_seconds) truth_sum += t;
  const double truth_mean = truth_sum / sample.size();

  const double tick = clock_tick();
  for (int n : n_list) {
    const rom::ReducedModel m = model.truncated(n);
    SpeedupRow row;
    row.n = n;
    row.dimension = m.dimension();
    row.mean_truth_seconds = truth_mean;
    for (const auto& mu : sample) {
      rom::solve_reduced(m.online, mu);
      std::vector<double> t;
      for (int r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        rom::solve_reduced(m.online, mu);
        t.push_back(seconds_since(t0));
      }
      double med = median(t);
      if (med < 10.0 * tick) {
        // Batched fallback: enough calls per measurement to span 1000 ticks.
        row.batched = true;
        const int batch = static_cast<int>(std::ceil(1000.0 * tick / std::max(med, tick)));
        t.clear();
        for (int r = 0; r < repeats; ++r) {
          const auto t0 = Clock::now();
          for (int b = 0; b < batch; ++b) rom::solve_reduced(m.online, mu);
          t.push_back(seconds_since(t0) / batch);
        }
        med = median(t);
      }
      row.reduced_seconds.push_back(med);
    }
    double sum = 0.0;
    for (double t : row.reduced_seconds) sum += t;
    row.mean_reduced_seconds = sum / sample.size();
    row.speedup = row.mean_truth_seconds / row.mean_reduced_seconds;
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<DecayRow> eigen_decay(const std::array<pod::PodResult, ocp::kVarCount>& spectra) {
  std::vector<DecayRow> rows;
  for (int k = 0; k < ocp::kVarCount; ++k) {
    const pod::PodResult& r = spectra[k];
    for (int n = 1; n <= r.eigenvalues.size(); ++n)
      rows.push_back({static_cast<ocp::Var>(k), n, r.eigenvalues[n - 1], r.retained_energy(n)});
  }
  return rows;
}

Json environment(const ocp::TruthProblem& truth, double mesh_h, int training_size, std::uint64_t training_seed,
                 std::uint64_t test_seed, double eps_tol) {
  const auto& s = truth.settings();
  return Json{{"problem", to_string(s.problem)},
              {"mesh_h", mesh_h},
              {"mesh_max_edge", truth.mesh().h},
              {"triangles", truth.mesh().triangles.size()},
              {"truth_dofs", truth.sizes().total()},
              {"nt", truth.sizes().nt},
              {"training_size", training_size},
              {"training_seed", training_seed},
              {"test_seed", test_seed},
              {"eps_tol", eps_tol},
              {"newton_tol", s.newton_tol},
              {"alpha1", s.alpha1},
              {"alpha2", s.alpha2},
              {"alpha", s.alpha},
              {"eta", s.eta},
              {"hardware_threads", std::thread::hardware_concurrency()},
              {"hardware_note", "timings sequential, wall clock, single process"}};
}

std::string date_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[16];
  std::strftime(buf, sizeof buf, "%Y%m%d", &tm);
  return buf;
}

fs::path report_path(const fs::path& dir, ProblemId problem, std::string_view quantity, std::string_view date,
                     std::string_view extension) {
  return dir / (std::string(to_string(problem)) + "_" + std::string(quantity) + "_" + std::string(date) + "." +
                std::string(extension));
}

std::vector<fs::path> write_error_report(const ErrorSweep& s, ProblemId problem, const std::vector<int>& n_list,
                                         const Json& env, const fs::path& dir, std::string_view date) {
  std::vector<fs::path> written;

  const fs::path summary = report_path(dir, problem, "errors", date);
  {
    auto os = open(summary);
    os << "n,dimension,err_v,err_p,err_u,err_w,err_q,err_J,tested,failed\n";
    for (const auto& r : s.rows) {
      os << r.n << ',' << r.dimension;
      for (double e : r.mean_error) os << ',' << e;
      os << ',' << r.mean_cost_error << ',' << s.tested.size() << ',' << s.failures.size() << '\n';
    }
    close(os, summary);
  }
  written.push_back(summary);

  const fs::path raw = report_path(dir, problem, "errors_raw", date);
  {
    auto os = open(raw);
    os << "index," << mu_header(problem) << ",n,err_v,err_p,err_u,err_w,err_q,J_reduced,J_truth,err_J\n";
    for (std::size_t i = 0; i < s.raw.size(); ++i)
      for (const auto& x : s.raw[i]) {
        os << i << ',' << mu_columns(s.tested[i]) << ',' << x.n;
        for (double e : x.errors) os << ',' << e;
        os << ',' << x.reduced_cost << ',' << x.truth_cost << ',' << x.cost_error << '\n';
      }
    close(os, raw);
  }
  written.push_back(raw);

  Json j = {{"environment", env}, {"n_list", n_list}, {"tested", s.tested.size()}};
  Json rows = Json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"n", r.n},
                    {"dimension", r.dimension},
                    {"mean_error",
                     {{"v", r.mean_error[0]},
                      {"p", r.mean_error[1]},
                      {"u", r.mean_error[2]},
                      {"w", r.mean_error[3]},
                      {"q", r.mean_error[4]}}},
                    {"mean_cost_error", r.mean_cost_error}});
  j["rows"] = rows;
  Json failures = Json::array();
  for (const auto& [mu, why] : s.failures) failures.push_back({{"mu", mu.values()}, {"reason", why}});
  j["failures"] = failures;
  const fs::path json = report_path(dir, problem, "errors", date, "json");
  write_json(j, json);
  written.push_back(json);
  return written;
}

std::vector<fs::path> write_speedup_report(const SpeedupSweep& s, ProblemId problem, const Json& env,
                                           const fs::path& dir, std::string_view date) {
  std::vector<fs::path> written;
  const fs::path summary = report_path(dir, problem, "speedup", date);
  {
    auto os = open(summary);
    os << "n,dimension,mean_truth_seconds,mean_reduced_seconds,speedup,batched\n";
    for (const auto& r : s.rows)
      os << r.n << ',' << r.dimension << ',' << r.mean_truth_seconds << ',' << r.mean_reduced_seconds << ','
         << r.speedup << ',' << (r.batched ? 1 : 0) << '\n';
    close(os, summary);
  }
  written.push_back(summary);

  const fs::path raw = report_path(dir, problem, "speedup_raw", date);
  {
    auto os = open(raw);
    os << "index," << mu_header(problem) << ",n,seconds\n";
    for (std::size_t i = 0; i < s.sample.size(); ++i) {
      os << i << ',' << mu_columns(s.sample[i]) << ",truth," << s.truth_seconds[i] << '\n';
      for (const auto& r : s.rows)
        os << i << ',' << mu_columns(s.sample[i]) << ',' << r.n << ',' << r.reduced_seconds[i] << '\n';
    }
    close(os, raw);
  }
  written.push_back(raw);

  Json j = {{"environment", env}, {"repeats", s.repeats}, {"sample", s.sample.size()}};
  Json rows = Json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"n", r.n},
                    {"dimension", r.dimension},
                    {"mean_truth_seconds", r.mean_truth_seconds},
                    {"mean_reduced_seconds", r.mean_reduced_seconds},
                    {"speedup", r.speedup},
                    {"batched", r.batched}});
  j["rows"] = rows;
  const fs::path json = report_path(dir, problem, "speedup", date, "json");
  write_json(j, json);
  written.push_back(json);
  return written;
}

fs::path write_decay_report(const std::vector<DecayRow>& rows, ProblemId problem, const fs::path& dir,
                            std::string_view date) {
  const fs::path path = report_path(dir, problem, "eigen", date);
  auto os = open(path);
  os << "variable,n,eigenvalue,cumulative\n";
  for (const auto& r : rows)
    os << ocp::to_string(r.var) << ',' << r.n << ',' << r.eigenvalue << ',' << r.cumulative << '\n';
  close(os, path);
  return path;
}

}  // namespace podocp::bench
