#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "optrack/errors.hpp"
#include "optrack/io.hpp"
#include "optrack/program_json.hpp"
#include "optrack/toy.hpp"
#include "support.hpp"

using namespace optrack;
using namespace optrack::testing;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "optrack_unit_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("format_double round-trips") {
  Rng rng(31);
  for (int k = 0; k < 1000; ++k) {
    const double x = std::ldexp(uniform(rng, -1, 1), static_cast<int>(uniform(rng, -60, 60)));
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("atomic writes create parents and leave no temporary") {
  const fs::path p = scratch("nested/dir/out.txt");
  fs::remove_all(p.parent_path());
  write_file_atomic(p.string(), "first\n");
  write_file_atomic(p.string(), "second\n");
  CHECK(slurp(p) == "second\n");
  CHECK_FALSE(fs::exists(p.string() + ".tmp"));
}

TEST_CASE("numeric csv reader") {
  const fs::path p = scratch("table.csv");
  write_file_atomic(p.string(), "a,b\n1,2.5\n# note\n\n-3,1e-3\n");
  const auto rows = read_numeric_csv(p.string(), true);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][0] == -3.0);
  CHECK(rows[1][1] == 1e-3);
  write_file_atomic(p.string(), "a\nx\n");
  CHECK_THROWS_AS(read_numeric_csv(p.string(), true), IoError);
  CHECK_THROWS_AS(read_numeric_csv(scratch("missing.csv").string(), true), IoError);
}

TEST_CASE("program documents round-trip") {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const auto prog = random_program(rng);
    const auto back = program_from_json(Json::parse(program_to_json(prog).dump()));
    CHECK(program_hash(back) == program_hash(prog));
    CHECK(back.layout() == prog.layout());
    const BlockVector z(prog.layout(), uniform_vector(rng, prog.layout().total(), -2, 2));
    const Eigen::VectorXd s = uniform_vector(rng, prog.param_dim(), -1, 1);
    // Terms may be regrouped, so only summation order differs.
    CHECK(evaluate_objective(back, z) == doctest::Approx(evaluate_objective(prog, z)).epsilon(1e-14));
    CHECK((evaluate_constraint(back, z, s) - evaluate_constraint(prog, z, s)).norm() < 1e-14);
    for (int i = 0; i < prog.num_blocks(); ++i) {
      const Eigen::VectorXd x = uniform_vector(rng, prog.layout().size(i), -3, 3);
      CHECK(project(back.set(i), x) == project(prog.set(i), x));
      CHECK(back.set(i).kind() == prog.set(i).kind());
    }
  }
}

TEST_CASE("infinite bounds survive serialisation") {
  const double inf = std::numeric_limits<double>::infinity();
  const auto set = ConvexSet::box(Eigen::Vector2d(-inf, 0), Eigen::Vector2d(1, inf));
  const Json j = set_to_json(set);
  const auto back = set_from_json(Json::parse(j.dump()));
  const auto* box = back.get_if<ConvexSet::Box>();
  REQUIRE(box != nullptr);
  CHECK(box->lower[0] == -inf);
  CHECK(box->upper[1] == inf);
}

TEST_CASE("save and load through a file") {
  const auto toy = toy_program();
  const fs::path p = scratch("toy.json");
  save_program(toy, p.string());
  CHECK(program_hash(load_program(p.string())) == program_hash(toy));
  CHECK_THROWS_AS(load_program(scratch("absent.json").string()), IoError);
  write_file_atomic(p.string(), "{ not json");
  CHECK_THROWS_AS(load_program(p.string()), ModelError);
}

TEST_CASE("malformed documents are rejected") {
  Json j = program_to_json(toy_program());
  Json bad_set = j;
  bad_set["sets"][0]["type"] = "simplex";
  CHECK_THROWS_AS(program_from_json(bad_set), ModelError);
  CHECK_THROWS_AS(matrix_from_json(Json::parse("[[1,2],[3]]")), ModelError);
  CHECK_THROWS_AS(vector_from_json(Json::parse("{\"a\":1}")), ModelError);
  CHECK_THROWS_AS(vector_from_json(Json::parse("[\"nan-ish\"]")), ModelError);
}

}  // TEST_SUITE
