#include "optrack/cli.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "optrack/diagnostics.hpp"
#include "optrack/errors.hpp"
#include "optrack/io.hpp"
#include "optrack/nmpc.hpp"
#include "optrack/program_json.hpp"
#include "optrack/solver.hpp"
#include "optrack/toy.hpp"

namespace optrack {

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Options {
  std::string builtin;
  std::string program_path;
  std::string params_path;
  std::optional<double> rho;
  int M = 30;
  std::string alpha_text;
  std::string path = "lifted";
  std::string probe_path = "direct";
  double dt = 0.01;
  std::optional<int> steps;
  std::optional<double> T;
  std::string x0_text;
  double init_scale = 5.0;
  std::optional<double> oracle_rho;
  double tol = 1e-8;
  int max_outer = 200;
  double drift = 0.01;
  double budget = 5000.0;
  std::string dt_grid = "0.005:0.045:0.005";
  std::string rho_grid = "10";
  std::string M_grid;
  std::string z0_text;
  std::string mu_text;
  bool full_state = false;
  int burn_in = 5;
  std::string out_dir = "optrack-out";
  std::uint64_t seed = 0;
  bool timing = false;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw UsageError("'" + text + "' is not a number");
  }
  if (used != t.size()) throw UsageError("'" + text + "' is not a number");
  return v;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_number(cell));
  if (out.empty()) throw UsageError("empty list");
  return out;
}

Eigen::VectorXd parse_vector(const std::string& text) {
  const auto v = parse_list(text);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string hex(std::uint64_t h) {
  std::ostringstream s;
  s << "0x" << std::hex << h;
  return s.str();
}

Json number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

struct Run {
  Run(std::string c, std::vector<std::string> a, const Options& o)
      : command(std::move(c)), argv(std::move(a)), opt(o) {}

  std::string command;
  std::vector<std::string> argv;
  const Options& opt;
  Json config = Json::object();
  Json results = Json::object();
  std::vector<std::string> outputs;
  std::string program_hash;

  void write(const std::string& name, const std::string& contents) {
    write_file_atomic((std::filesystem::path(opt.out_dir) / name).string(), contents);
    outputs.push_back(name);
  }

  void finish() {
    Json m;
    m["tool"] = "optrack";
    m["command"] = command;
    m["argv"] = argv;
    m["program_hash"] = program_hash;
    m["seed"] = opt.seed;
    m["tolerances"] = {{"oracle_tol", opt.tol}, {"oracle_max_outer", opt.max_outer}};
    m["config"] = config;
    m["results"] = results;
    m["outputs"] = outputs;
    write("manifest.json", m.dump(2) + "\n");
  }
};

TrackerConfig tracker_config(const MultiConvexProgram& prog, const Options& opt, double rho, int M) {
  TrackerConfig config = TrackerConfig::defaults(prog, rho, M, solver_path_from_string(opt.path));
  if (!opt.alpha_text.empty()) {
    const auto a = parse_list(opt.alpha_text);
    if (a.size() == 1) {
      config.alpha.assign(static_cast<std::size_t>(prog.num_blocks()), a.front());
    } else {
      config.alpha = a;
    }
  }
  config.validate(prog);
  return config;
}

OracleOptions oracle_options(const Options& opt, double default_rho) {
  OracleOptions o;
  o.rho = opt.oracle_rho.value_or(default_rho);
  o.tol = opt.tol;
  o.max_outer = opt.max_outer;
  if (!(o.rho > 0.0)) throw UsageError("--oracle-rho must be positive");
  if (!(o.tol > 0.0)) throw UsageError("--tol must be positive");
  if (o.max_outer < 1) throw UsageError("--max-outer must be at least 1");
  return o;
}

Json tracker_json(const TrackerConfig& c) {
  return {{"rho", c.rho}, {"M", c.sweeps}, {"alpha", c.alpha}, {"path", to_string(c.path)}};
}

// --- DC motor -------------------------------------------------------------

struct MotorSetup {
  NmpcSpec spec;
  Eigen::VectorXd x0;
  int steps = 0;
  std::vector<Eigen::VectorXd> refs;
};

MotorSetup motor_setup(const Options& opt) {
  MotorSetup m;
  if (!(opt.dt > 0.0 && opt.dt <= 0.1)) throw UsageError("--dt must lie in (0, 0.1]");
  m.spec = dc_motor_spec(opt.dt);
  m.x0 = opt.x0_text.empty() ? dc_motor_equilibrium(-2.0).x : parse_vector(opt.x0_text);
  if (m.x0.size() != 2) throw UsageError("--x0 needs two entries");
  if (opt.steps) {
    m.steps = *opt.steps;
  } else {
    m.steps = static_cast<int>(std::lround(opt.T.value_or(6.0) / opt.dt));
  }
  if (m.steps < 1) throw UsageError("the run needs at least one step");
  m.refs = square_wave_reference(2, opt.dt, m.steps);
  return m;
}

Json motor_json(const MotorSetup& m) {
  return {{"builtin", "dc-motor"}, {"dt", m.spec.dt}, {"horizon", m.spec.horizon},
          {"steps", m.steps},      {"x0", vector_to_json(m.x0)},
          {"spec", nmpc_spec_to_json(m.spec)}};
}

ClosedLoopOptions loop_options(const Options& opt) {
  ClosedLoopOptions loop;
  loop.oracle = oracle_options(opt, nmpc_oracle_options().rho);
  loop.warm_scale = opt.init_scale;
  loop.record_timing = opt.timing;
  return loop;
}

// --- generic programs -------------------------------------------------------

struct ProgramSetup {
  std::optional<MultiConvexProgram> prog;
  std::string name;
  std::vector<Eigen::VectorXd> params;
  PrimalDualPoint start;
};

ProgramSetup program_setup(const Options& opt, int default_steps) {
  ProgramSetup p;
  if (!opt.program_path.empty()) {
    p.prog.emplace(load_program(opt.program_path));
    p.name = opt.program_path;
    if (opt.params_path.empty()) throw UsageError("--program needs --params");
    for (const auto& row : read_numeric_csv(opt.params_path, true)) {
      Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
      if (s.size() != p.prog->param_dim()) {
        throw DimensionError("parameter rows must have " + std::to_string(p.prog->param_dim()) +
                             " columns");
      }
      p.params.push_back(std::move(s));
    }
    if (opt.steps) {
      if (*opt.steps < 1 || *opt.steps > static_cast<int>(p.params.size())) {
        throw UsageError("--steps exceeds the parameter schedule");
      }
      p.params.resize(static_cast<std::size_t>(*opt.steps));
    }
    if (p.params.empty()) throw UsageError("parameter schedule is empty");
    p.start = zero_point(*p.prog);
    for (int i = 0; i < p.prog->num_blocks(); ++i) {
      p.start.z.block(i) = project(p.prog->set(i), p.start.z.block(i));
    }
  } else if (opt.builtin == "toy") {
    p.prog.emplace(toy_program());
    p.name = "toy";
    const int steps = opt.steps.value_or(default_steps);
    if (steps < 1) throw UsageError("the run needs at least one step");
    for (int k = 0; k < steps; ++k) p.params.push_back(Eigen::VectorXd::Constant(1, 1.0 + opt.drift * k));
    p.start = zero_point(*p.prog);
    p.start.z.data().setConstant(0.5);
  } else {
    throw UsageError("this command needs --builtin toy or --program/--params");
  }
  if (!opt.z0_text.empty()) {
    const Eigen::VectorXd z0 = parse_vector(opt.z0_text);
    if (z0.size() != p.prog->layout().total()) throw UsageError("--z0 has the wrong length");
    p.start.z.data() = z0;
  }
  if (!opt.mu_text.empty()) {
    const Eigen::VectorXd mu = parse_vector(opt.mu_text);
    if (mu.size() != p.prog->num_rows()) throw UsageError("--mu has the wrong length");
    p.start.mu = mu;
  }
  return p;
}

Json program_json_config(const ProgramSetup& p) {
  return {{"program", p.name}, {"steps", p.params.size()}};
}

PrimalDualPoint scaled(const PrimalDualPoint& w, double factor) {
  PrimalDualPoint out = w;
  out.z.data() *= factor;
  out.mu *= factor;
  return out;
}

std::string points_csv(const MultiConvexProgram& prog, const std::vector<PrimalDualPoint>& points,
                       const std::vector<Eigen::VectorXd>& params) {
  std::ostringstream out;
  out << "k,kkt_residual,feasibility";
  for (int j = 0; j < prog.layout().total(); ++j) out << ",z" << (j + 1);
  for (int r = 0; r < prog.num_rows(); ++r) out << ",mu" << (r + 1);
  out << "\n";
  for (std::size_t k = 0; k < points.size(); ++k) {
    out << k << "," << format_double(kkt_residual(prog, points[k], params[k])) << ","
        << format_double(evaluate_constraint(prog, points[k].z, params[k]).norm());
    for (Eigen::Index j = 0; j < points[k].z.data().size(); ++j) out << "," << format_double(points[k].z.data()[j]);
    for (Eigen::Index r = 0; r < points[k].mu.size(); ++r) out << "," << format_double(points[k].mu[r]);
    out << "\n";
  }
  return out.str();
}

// --- commands ----------------------------------------------------------------

void cmd_track(Run& run) {
  const Options& opt = run.opt;
  const double rho = *opt.rho;
  if (opt.builtin == "dc-motor") {
    const MotorSetup m = motor_setup(opt);
    const auto prog = build_nmpc_program(m.spec);
    const TrackerConfig config = tracker_config(prog, opt, rho, opt.M);
    run.program_hash = hex(program_hash(prog));
    run.config = motor_json(m);
    run.config["tracker"] = tracker_json(config);
    run.config["init_scale"] = opt.init_scale;
    const auto trace = run_closed_loop(m.spec, config, m.x0, m.refs, m.steps, loop_options(opt));
    run.write("trace.csv", trace_to_csv(trace));
    int held = 0;
    for (const auto& row : trace.steps) held += row.held ? 1 : 0;
    run.results = {{"rows", trace.steps.size()}, {"held_steps", held}};
    return;
  }
  const ProgramSetup p = program_setup(opt, 100);
  const MultiConvexProgram& prog = *p.prog;
  const TrackerConfig config = tracker_config(prog, opt, rho, opt.M);
  run.program_hash = hex(program_hash(prog));
  run.config = program_json_config(p);
  run.config["tracker"] = tracker_json(config);
  run.config["init_scale"] = opt.init_scale;
  const OracleOptions oracle = oracle_options(opt, 10.0);
  OracleResult w0;
  try {
    w0 = solve_to_convergence(prog, p.start, p.params.front(), oracle);
  } catch (const NonConvergence& e) {
    throw OracleLoopFailure(0, e.what());
  }
  TrackerState state = make_tracker_state(prog, config, scaled(w0.point, opt.init_scale));
  std::ostringstream csv;
  csv << "step,sweep,al_value,displacement,feasibility,kkt_residual\n";
  for (std::size_t k = 1; k < p.params.size(); ++k) {
    const StepReport r = track_step(prog, state, p.params[k]);
    for (std::size_t l = 0; l < r.al_values.size(); ++l) {
      csv << k << "," << l << "," << format_double(r.al_values[l]) << ","
          << format_double(l == 0 ? 0.0 : r.displacements[l - 1]) << ","
          << format_double(r.feasibility) << "," << format_double(r.kkt_residual) << "\n";
    }
  }
  run.write("steps.csv", csv.str());
  run.results = {{"steps", p.params.size() - 1}};
}

void cmd_oracle(Run& run) {
  const Options& opt = run.opt;
  if (opt.builtin == "dc-motor") {
    const MotorSetup m = motor_setup(opt);
    run.program_hash = hex(program_hash(build_nmpc_program(m.spec)));
    run.config = motor_json(m);
    const ClosedLoopOptions loop = loop_options(opt);
    run.config["oracle_rho"] = loop.oracle.rho;
    const auto trace = run_oracle_loop(m.spec, m.x0, m.refs, m.steps, loop);
    run.write("trace.csv", trace_to_csv(trace));
    double worst = 0.0;
    for (const auto& row : trace.steps) worst = std::max(worst, row.kkt_residual);
    run.results = {{"rows", trace.steps.size()}, {"max_kkt_residual", worst}};
    return;
  }
  const ProgramSetup p = program_setup(opt, 100);
  const OracleOptions oracle = oracle_options(opt, 10.0);
  run.program_hash = hex(program_hash(*p.prog));
  run.config = program_json_config(p);
  run.config["oracle_rho"] = oracle.rho;
  const auto points = oracle_path(*p.prog, p.start, p.params, oracle);
  run.write("points.csv", points_csv(*p.prog, points, p.params));
  run.results = {{"rows", points.size()}};
}

void cmd_dt_sweep(Run& run) {
  const Options& opt = run.opt;
  DtSweepOptions so;
  so.budget = opt.budget;
  so.T = opt.T.value_or(6.0);
  so.rho = opt.rho.value_or(200.0);
  so.full_state = opt.full_state;
  if (!opt.x0_text.empty()) so.x0 = parse_vector(opt.x0_text);
  so.loop = loop_options(opt);
  const auto grid = parse_grid(opt.dt_grid);
  run.config = {{"builtin", "dc-motor"}, {"budget", so.budget}, {"T", so.T}, {"rho", so.rho},
                {"dt_grid", grid}, {"full_state", so.full_state}, {"oracle_rho", so.loop.oracle.rho}};
  run.program_hash = hex(program_hash(build_nmpc_program(dc_motor_spec(grid.front()))));
  const auto rows = dt_sweep(grid, so);
  std::ostringstream csv;
  csv << "dt,M_per_step,nl2_error\n";
  Json infeasible = Json::array();
  for (const auto& r : rows) {
    csv << format_double(r.dt) << "," << r.M << "," << format_double(r.nl2_error) << "\n";
    if (!r.feasible) infeasible.push_back(r.dt);
  }
  run.write("dt_sweep.csv", csv.str());
  run.results = {{"rows", rows.size()}, {"infeasible_dt", infeasible}};
}

void cmd_rate(Run& run) {
  const Options& opt = run.opt;
  const ProgramSetup p = program_setup(opt, 1);
  const double rho = opt.rho.value_or(10.0);
  const auto Ms = parse_int_grid(opt.M_grid.empty() ? "1,2,5,10,20,50" : opt.M_grid);
  run.program_hash = hex(program_hash(*p.prog));
  run.config = program_json_config(p);
  run.config["rho"] = rho;
  run.config["M"] = Ms;
  run.config["z0"] = vector_to_json(p.start.z.data());
  run.config["mu"] = vector_to_json(p.start.mu);
  run.config["s"] = vector_to_json(p.params.front());
  const RateFit fit = rate_experiment(*p.prog, p.start.z, p.start.mu, p.params.front(), Ms, rho);
  std::ostringstream csv;
  csv << "M,error\n";
  for (std::size_t i = 0; i < fit.M.size(); ++i) csv << fit.M[i] << "," << format_double(fit.errors[i]) << "\n";
  run.write("rate.csv", csv.str());
  run.results = {{"psi_hat", number(fit.psi_hat)},
                 {"C_hat", number(fit.C_hat)},
                 {"points_used", fit.points_used},
                 {"fit_valid", fit.fit_valid}};
}

void cmd_contraction(Run& run) {
  const Options& opt = run.opt;
  const ProgramSetup p = program_setup(opt, 100);
  const auto rhos = parse_grid(opt.rho_grid);
  const auto Ms = parse_int_grid(opt.M_grid.empty() ? "20" : opt.M_grid);
  const OracleOptions oracle = oracle_options(opt, 10.0);
  const SolverPath path = solver_path_from_string(opt.probe_path);
  run.program_hash = hex(program_hash(*p.prog));
  run.config = program_json_config(p);
  run.config["rho_grid"] = rhos;
  run.config["M_grid"] = Ms;
  run.config["path"] = to_string(path);
  run.config["init_scale"] = opt.init_scale;
  run.config["drift"] = opt.drift;
  run.config["burn_in"] = opt.burn_in;
  const auto orc = oracle_path(*p.prog, p.start, p.params, oracle);
  const auto rows =
      contraction_probe(*p.prog, orc, scaled(orc.front(), opt.init_scale), p.params, rhos, Ms,
                                      path, opt.burn_in);
  std::ostringstream csv;
  csv << "rho,M,beta_w,beta_s,residual\n";
  Json flags = Json::array();
  for (const auto& r : rows) {
    csv << format_double(r.rho) << "," << r.M << "," << format_double(r.fit.beta_w) << ","
        << format_double(r.fit.beta_s) << "," << format_double(r.fit.residual) << "\n";
    flags.push_back({{"rho", r.rho},
                     {"M", r.M},
                     {"degenerate", r.fit.degenerate},
                     {"beta_s_identifiable", r.fit.beta_s_identifiable}});
  }
  run.write("contraction.csv", csv.str());
  run.results = {{"rows", rows.size()}, {"cells", flags}};
}

void cmd_compare(Run& run) {
  const Options& opt = run.opt;
  const MotorSetup m = motor_setup(opt);
  const auto prog = build_nmpc_program(m.spec);
  const TrackerConfig config = tracker_config(prog, opt, opt.rho.value_or(200.0), opt.M);
  const ClosedLoopOptions loop = loop_options(opt);
  run.program_hash = hex(program_hash(prog));
  run.config = motor_json(m);
  run.config["tracker"] = tracker_json(config);
  run.config["init_scale"] = opt.init_scale;
  run.config["oracle_rho"] = loop.oracle.rho;
  const auto tracked = run_closed_loop(m.spec, config, m.x0, m.refs, m.steps, loop);
  const auto oracle = run_oracle_loop(m.spec, m.x0, m.refs, m.steps, loop);
  std::ostringstream csv;
  csv << "k,t_seconds,speed_tracked,speed_oracle,u_tracked,u_oracle,feasibility_tracked\n";
  for (std::size_t k = 0; k < tracked.steps.size(); ++k) {
    const auto& a = tracked.steps[k];
    const auto& b = oracle.steps[k];
    csv << k << "," << format_double(a.t) << "," << format_double(a.x[1]) << ","
        << format_double(b.x[1]) << "," << format_double(a.u[0]) << "," << format_double(b.u[0])
        << "," << format_double(a.feasibility) << "\n";
  }
  run.write("compare.csv", csv.str());
  const auto xa = state_trajectory(tracked);
  const auto xb = state_trajectory(oracle);
  run.results = {{"nl2_error", normalized_l2(xa, xb, 1)},
                 {"nl2_error_full_state", normalized_l2(xa, xb, -1)}};
}

void add_output_options(CLI::App* app, Options& opt) {
  app->add_option("--out", opt.out_dir, "Output directory");
  app->add_option("--seed", opt.seed, "Recorded in the manifest");
  app->add_flag("--timing", opt.timing, "Record wall-clock solve times");
}

void add_oracle_options(CLI::App* app, Options& opt) {
  app->add_option("--tol", opt.tol, "Oracle KKT residual tolerance");
  app->add_option("--max-outer", opt.max_outer, "Oracle outer iterations");
  app->add_option("--oracle-rho", opt.oracle_rho, "Oracle penalty parameter");
}

void add_source_options(CLI::App* app, Options& opt) {
  app->add_option("--builtin", opt.builtin, "Builtin problem")
      ->check(CLI::IsMember({"dc-motor", "toy"}));
  app->add_option("--program", opt.program_path, "Program JSON file");
  app->add_option("--params", opt.params_path, "Parameter schedule CSV (one s_k per row)");
  app->add_option("--drift", opt.drift, "Toy parameter drift per step");
  app->add_option("--z0", opt.z0_text, "Initial primal point (comma list)");
  app->add_option("--mu", opt.mu_text, "Initial multiplier (comma list)");
}

void add_motor_options(CLI::App* app, Options& opt) {
  app->add_option("--dt", opt.dt, "Sampling period in seconds");
  app->add_option("--steps", opt.steps, "Number of steps");
  app->add_option("--T", opt.T, "Simulated seconds (when --steps is absent)");
  app->add_option("--x0", opt.x0_text, "Initial plant state (comma list)");
}

void add_tracker_options(CLI::App* app, Options& opt) {
  app->add_option("--M", opt.M, "Primal sweeps per step");
  app->add_option("--alpha", opt.alpha_text, "Proximal weights (one value or one per block)");
  app->add_option("--path", opt.path, "Block solver path")->check(CLI::IsMember({"direct", "lifted"}));
  app->add_option("--init-scale", opt.init_scale, "Initial warm start = scale * w*_0");
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw UsageError("empty grid");
  if (t.find(':') == std::string::npos) return parse_list(t);
  std::vector<double> parts;
  std::stringstream ss(t);
  std::string cell;
  while (std::getline(ss, cell, ':')) parts.push_back(parse_number(cell));
  if (parts.size() != 3) throw UsageError("grid '" + text + "' must be start:stop:step");
  const double start = parts[0], stop = parts[1], step = parts[2];
  if (!(step > 0.0) || stop < start) throw UsageError("grid '" + text + "' is empty or has step <= 0");
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
  if (n > 1000000) throw UsageError("grid '" + text + "' is too large");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    // Round to 12 significant digits so 0.005 + 3*0.001 prints as 0.008.
    std::ostringstream s;
    s.precision(12);
    s << start + static_cast<double>(i) * step;
    out.push_back(std::stod(s.str()));
  }
  return out;
}

std::vector<int> parse_int_grid(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_grid(text)) {
    if (v != std::floor(v) || std::abs(v) > 1e9) throw UsageError("'" + text + "' must list integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Parametric tracking of multi-convex programs"};
  app.name("optrack");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  auto* track = app.add_subcommand("track", "Tracked closed loop or parameter run");
  add_source_options(track, opt);
  add_motor_options(track, opt);
  add_tracker_options(track, opt);
  add_oracle_options(track, opt);
  add_output_options(track, opt);
  track->add_option("--rho", opt.rho, "Penalty parameter")->required();

  auto* oracle = app.add_subcommand("oracle", "Converged reference run");
  add_source_options(oracle, opt);
  add_motor_options(oracle, opt);
  add_oracle_options(oracle, opt);
  add_output_options(oracle, opt);
  oracle->add_option("--init-scale", opt.init_scale, "Unused; accepted for symmetry with track");

  auto* experiment = app.add_subcommand("experiment", "Diagnostics experiments");
  experiment->require_subcommand(1);

  auto* sweep = experiment->add_subcommand("dt-sweep", "Error versus sampling period at fixed budget");
  sweep->add_option("--budget", opt.budget, "Block minimisations per second");
  sweep->add_option("--dt", opt.dt_grid, "dt grid");
  sweep->add_option("--T", opt.T, "Simulated seconds per cell");
  sweep->add_option("--rho", opt.rho, "Penalty parameter");
  sweep->add_option("--x0", opt.x0_text, "Initial plant state");
  sweep->add_option("--init-scale", opt.init_scale, "Initial warm start = scale * w*_0");
  sweep->add_flag("--full-state", opt.full_state, "Error over the full state instead of speed");
  add_oracle_options(sweep, opt);
  add_output_options(sweep, opt);

  auto* rate = experiment->add_subcommand("rate", "Inner-loop error versus M at fixed (mu, s)");
  add_source_options(rate, opt);
  rate->add_option("--M", opt.M_grid, "M values");
  rate->add_option("--rho", opt.rho, "Penalty parameter");
  add_output_options(rate, opt);

  auto* contraction = experiment->add_subcommand("contraction", "Empirical contraction coefficients");
  add_source_options(contraction, opt);
  contraction->add_option("--steps", opt.steps, "Number of steps");
  contraction->add_option("--rho", opt.rho_grid, "rho grid");
  contraction->add_option("--M", opt.M_grid, "M grid");
  contraction->add_option("--path", opt.probe_path, "Block solver path")
      ->check(CLI::IsMember({"direct", "lifted"}));
  contraction->add_option("--init-scale", opt.init_scale, "Initial point = scale * w*_0");
  contraction->add_option("--burn-in", opt.burn_in, "Leading steps left out of the regression");
  add_oracle_options(contraction, opt);
  add_output_options(contraction, opt);

  auto* compare = experiment->add_subcommand("compare", "Tracked versus oracle closed loop");
  add_motor_options(compare, opt);
  add_tracker_options(compare, opt);
  compare->add_option("--rho", opt.rho, "Penalty parameter");
  add_oracle_options(compare, opt);
  add_output_options(compare, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return kExitUsage;
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  std::string name;
  std::function<void(Run&)> fn;
  if (track->parsed()) {
    name = "track";
    fn = cmd_track;
    if (opt.builtin.empty() && opt.program_path.empty()) opt.builtin = "dc-motor";
  } else if (oracle->parsed()) {
    name = "oracle";
    fn = cmd_oracle;
    if (opt.builtin.empty() && opt.program_path.empty()) opt.builtin = "dc-motor";
  } else if (sweep->parsed()) {
    name = "experiment dt-sweep";
    fn = cmd_dt_sweep;
  } else if (rate->parsed()) {
    name = "experiment rate";
    fn = cmd_rate;
    if (opt.builtin.empty() && opt.program_path.empty()) opt.builtin = "toy";
  } else if (contraction->parsed()) {
    name = "experiment contraction";
    fn = cmd_contraction;
    if (opt.builtin.empty() && opt.program_path.empty()) opt.builtin = "toy";
  } else {
    name = "experiment compare";
    fn = cmd_compare;
  }
  if (!opt.program_path.empty() && !opt.builtin.empty()) {
    err << "usage error: --builtin and --program are mutually exclusive\n";
    return kExitUsage;
  }
  if ((rate->parsed() || contraction->parsed()) && opt.builtin == "dc-motor") {
    err << "usage error: " << name << " works on --builtin toy or --program\n";
    return kExitUsage;
  }

  Run run{name, args, opt};
  try {
    fn(run);
    run.finish();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const OracleLoopFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NonConvergence& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    err << "invalid program file: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "invalid configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
  out << name << ": wrote";
  for (const auto& f : run.outputs) out << " " << (std::filesystem::path(opt.out_dir) / f).string();
  out << "\n";
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"optrack"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace optrack
