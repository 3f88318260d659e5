#include "podocp/io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <cstring>
#include <limits>

using namespace podocp;
using namespace podocp::io;

namespace {

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("podocp_test_" + name); }

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Offline {
  ocp::TruthProblem truth = testing::coarse_truth(testing::small_stokes(3));
  std::vector<ParameterPoint> training = pod::sample_training_set(ProblemId::StokesTD, truth.settings().box, 3, 4);
  pod::SnapshotSet snapshots = pod::collect_snapshots(truth, training);
  pod::OfflineResult offline = pod::build_reduced_basis(truth, snapshots, 1e-8, 3);
  rom::ReducedModel model = rom::project(truth, offline.basis);
};

Offline& offline() {
  static Offline o;
  return o;
}

}  // namespace

TEST_CASE("container round trip is bit exact") {
  Container c;
  c.header["kind"] = "test";
  Matrix a(2, 3);
  a << 1.0, -0.0, std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::infinity(), 1e308,
      1.0 / 3.0;
  c.add("a", a);
  c.add("v", Vector(Vector::LinSpaced(5, 0.0, 1.0)));
  c.add("empty", Matrix(0, 0));
  const auto path = temp("container.bin");
  write_container(c, path);
  const auto r = read_container(path);
  CHECK(r.header.value("kind", "") == "test");
  REQUIRE(r.has("a"));
  CHECK(std::memcmp(r.get("a").data(), a.data(), sizeof(double) * a.size()) == 0);
  CHECK(std::signbit(r.get("a")(0, 1)));
  CHECK(r.get("v").cols() == 1);
  CHECK(r.get("empty").size() == 0);
  CHECK_FALSE(r.has("b"));
  CHECK_THROWS_AS(r.get("b"), IoError);
  CHECK(bytes(path).substr(0, 8) == "PODOCPB1");
  fs::remove(path);
}

TEST_CASE("corrupt containers are rejected") {
  const auto path = temp("bad.bin");
  std::ofstream(path, std::ios::binary) << "NOTMAGIC";
  CHECK_THROWS_AS(read_container(path), IoError);
  Container c;
  c.add("x", Vector(Vector::Ones(100)));
  write_container(c, path);
  const std::string full = bytes(path);
  std::ofstream(path, std::ios::binary) << full.substr(0, full.size() - 16);
  CHECK_THROWS_AS(read_container(path), IoError);
  fs::remove(path);
  CHECK_THROWS_AS(read_container(temp("missing.bin")), IoError);
}

TEST_CASE("snapshot round trip") {
  auto& o = offline();
  const auto path = temp("snapshots.bin");
  save_snapshots(o.snapshots, 0.5, path);
  const auto r = load_snapshots(path);
  CHECK(r.problem == o.snapshots.problem);
  CHECK(r.parameters == o.snapshots.parameters);
  CHECK(r.sizes.total() == o.snapshots.sizes.total());
  for (int k = 0; k < ocp::kVarCount; ++k) CHECK(r.columns[k] == o.snapshots.columns[k]);
  CHECK(r.cost == o.snapshots.cost);
  CHECK_THROWS_AS(load_model(path), IoError);
  fs::remove(path);
}

TEST_CASE("model round trip gives identical online solves") {
  auto& o = offline();
  const auto path = temp("model.bin");
  save_model(o.model, o.truth.settings(), 0.5, path, &o.offline.spectra);
  const auto loaded = load_model(path);
  CHECK(loaded.mesh_h == 0.5);
  REQUIRE(loaded.spectra.has_value());
  CHECK((*loaded.spectra)[0].eigenvalues == o.offline.spectra[0].eigenvalues);
  CHECK((*loaded.spectra)[2].retained == o.offline.spectra[2].retained);
  const auto& m = loaded.model;
  CHECK(m.dimension() == o.model.dimension());
  CHECK(m.online.has_start() == o.model.online.has_start());
  const ParameterPoint mu(ProblemId::StokesTD, {0.3, 1.8, 0.6});
  // The loaded model solves without any truth object.
  const auto a = rom::solve_reduced(o.model.online, mu);
  const auto b = rom::solve_reduced(m.online, mu);
  CHECK(a.coefficients == b.coefficients);
  CHECK(a.cost == b.cost);
  CHECK(m.basis.velocity.columns == o.model.basis.velocity.columns);
  CHECK(m.basis.velocity.level == o.model.basis.velocity.level);
  CHECK((rom::reconstruct(m, mu, b.coefficients) - rom::reconstruct(o.model, mu, a.coefficients)).norm() == 0.0);
  CHECK(m.truncated(2).dimension() == 26);

  // Equal inputs give identical files.
  const auto again = temp("model2.bin");
  save_model(o.model, o.truth.settings(), 0.5, again, &o.offline.spectra);
  CHECK(bytes(path) == bytes(again));
  fs::remove(path);
  fs::remove(again);
}

TEST_CASE("settings and parameters round trip through JSON") {
  auto s = testing::small_stokes(7);
  s.alpha2 = 3e-5;
  s.initial_state = InitialState::Zero;
  const auto r = settings_from_json(to_json(s));
  CHECK(r.nt == 7);
  CHECK(r.alpha2 == 3e-5);
  CHECK(r.initial_state == InitialState::Zero);
  CHECK(r.box.bounds == s.box.bounds);
  const ParameterPoint mu(ProblemId::NsSteady, {1.234567890123});
  CHECK(parameter_from_json(to_json(mu)) == mu);
}

TEST_CASE("matrix market round trip") {
  const auto& truth = offline().truth;
  const SparseMatrix a = truth.velocity_product();
  const auto path = temp("a.mtx");
  write_matrix_market(a, path);
  const SparseMatrix b = read_matrix_market(path);
  CHECK(b.rows() == a.rows());
  CHECK((a - b).norm() == 0.0);
  std::ofstream(path) << "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n";
  CHECK_THROWS_AS(read_matrix_market(path), IoError);
  fs::remove(path);
}

TEST_CASE("field export") {
  auto& o = offline();
  const auto sol = ocp::solve_ocp(o.truth, o.training[0]);
  const auto path = temp("fields.vtk");
  write_fields_vtk(o.truth, sol.x, 1, path, o.training[0][1]);
  const std::string text = bytes(path);
  for (const char* key : {"POINT_DATA", "VECTORS v", "VECTORS w", "SCALARS p", "SCALARS q"})
    CHECK(text.find(key) != std::string::npos);
  CHECK_THROWS_AS(write_fields_vtk(o.truth, sol.x, o.truth.sizes().nt, path), InvalidArgument);
  CHECK_THROWS_AS(write_fields_vtk(o.truth, Vector::Zero(3), 0, path), InvalidArgument);
  fs::remove(path);
}
