#include "cgan/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "cgan/csv.hpp"

namespace cgan {

using nlohmann::json;

const std::vector<ExperimentId>& all_experiments() {
  static const std::vector<ExperimentId> ids{
      ExperimentId::InterpFinal,     ExperimentId::InterpIntermediate, ExperimentId::InterpCircle,
      ExperimentId::ExtrapStateRate, ExperimentId::ExtrapStateOnly,    ExperimentId::ExtrapConstrained};
  return ids;
}

std::string experiment_name(ExperimentId id) {
  switch (id) {
    case ExperimentId::InterpFinal: return "interp-final";
    case ExperimentId::InterpIntermediate: return "interp-intermediate";
    case ExperimentId::InterpCircle: return "interp-circle";
    case ExperimentId::ExtrapStateRate: return "extrap-state-rate";
    case ExperimentId::ExtrapStateOnly: return "extrap-state-only";
    case ExperimentId::ExtrapConstrained: return "extrap-constrained";
  }
  return "?";
}

std::optional<ExperimentId> parse_experiment(const std::string& name) {
  for (ExperimentId id : all_experiments())
    if (experiment_name(id) == name) return id;
  return std::nullopt;
}

bool is_extrapolation(ExperimentId id) {
  return id == ExperimentId::ExtrapStateRate || id == ExperimentId::ExtrapStateOnly ||
         id == ExperimentId::ExtrapConstrained;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " expects on|off, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !in.eof()) throw ConfigError("config: bad value for " + key + ": '" + v + "'");
  return out;
}

// Hidden layers of equal width.
std::vector<Index> hidden(Index count, Index width) {
  return std::vector<Index>(static_cast<std::size_t>(count), width);
}

}  // namespace

void merge_config_file(const std::string& path, Overrides& into, std::optional<std::uint64_t>& seed,
                       std::optional<std::string>& out_dir) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key == "constraint") {
      if (!into.constraint) into.constraint = parse_switch(key, value);
    } else if (key == "noise") {
      if (!into.noise) into.noise = parse_switch(key, value);
    } else if (key == "projection") {
      if (!into.projection) into.projection = parse_switch(key, value);
    } else if (key == "residual-noise-c") {
      if (!into.residual_noise_c) into.residual_noise_c = parse_number<double>(key, value);
    } else if (key == "samples") {
      if (!into.samples) into.samples = parse_number<Index>(key, value);
    } else if (key == "max-iter") {
      if (!into.max_iter) into.max_iter = parse_number<std::size_t>(key, value);
    } else if (key == "seed") {
      if (!seed) seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "out") {
      if (!out_dir) out_dir = value;
    } else {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
}

// Defaults per experiment:
//   interpolation: M = 1e4, m = 1e3, lr0 = 1e-2, c = 0.01, TOL = 3 / sqrt(M/3);
//     interp-final / interp-intermediate: z ~ U[0,1], both nets 5 x 10 hidden;
//     interp-circle: R = 1.1, z ~ U[0,10], generator 10 x 10, discriminator 5 x 10.
//   extrapolation: R = 1.6, z in [0,10], N_cloud = 50 (dz = 0.05), TOL = 1 / sqrt(M/3),
//     generator 15 x 20, discriminator 5 x 20;
//     extrap-state-rate: R_range = 1.6e-3, V_range = 1e-3, no training constraint;
//     extrap-state-only: R_range = 0.03 R, V_range = 0.03, no training constraint;
//     extrap-constrained: as state-only ranges, state and rate, both residuals enforced.
//   scheduler: N_check = 2000, r_lower = 0.2, r_upper = 0.8, r_drop = 0.25, alpha = 2,
//     lr_min = 1e-12.
ResolvedRun resolve(ExperimentId id, const Overrides& ov, std::uint64_t seed) {
  ResolvedRun run;
  run.id = id;
  GanConfig& g = run.gan;
  g.seed = seed;
  g.samples = ov.samples.value_or(10000);
  g.batch = 1000;
  g.initial_lr = 1e-2;
  g.residual_noise_c = ov.residual_noise_c.value_or(0.01);
  g.max_iter = ov.max_iter.value_or(200000);
  if (g.samples <= 0) throw ConfigError("samples must be positive");
  if (g.residual_noise_c < 0.0) throw ConfigError("residual-noise-c must be >= 0");

  const double third = static_cast<double>(g.samples) / 3.0;
  const bool extrap = is_extrapolation(id);
  if (!extrap && (ov.noise || ov.projection))
    throw ConfigError("--noise and --projection apply to extrapolation experiments only");

  switch (id) {
    case ExperimentId::InterpFinal:
    case ExperimentId::InterpIntermediate: {
      g.enforce_constraint = ov.constraint.value_or(true);
      g.spec = id == ExperimentId::InterpFinal ? ConstraintSpec::final_step()
                                               : ConstraintSpec::intermediate(g.enforce_constraint);
      g.generator_hidden = hidden(5, 10);
      g.discriminator_hidden = hidden(5, 10);
      g.scheduler.tol = 3.0 / std::sqrt(third);
      break;
    }
    case ExperimentId::InterpCircle: {
      g.enforce_constraint = ov.constraint.value_or(true);
      g.spec = ConstraintSpec::circle_interp(1.1, 0.0, 10.0);
      g.generator_hidden = hidden(10, 10);
      g.discriminator_hidden = hidden(5, 10);
      g.scheduler.tol = 3.0 / std::sqrt(third);
      break;
    }
    case ExperimentId::ExtrapStateRate:
    case ExperimentId::ExtrapStateOnly:
    case ExperimentId::ExtrapConstrained: {
      const double R = 1.6;
      const StateMode mode = id == ExperimentId::ExtrapStateOnly ? StateMode::StateOnly
                                                                  : StateMode::StateRate;
      g.enforce_constraint = ov.constraint.value_or(id == ExperimentId::ExtrapConstrained);
      g.noisy_cloud = ov.noise.value_or(true);
      g.cloud.n_cloud = 50;
      if (id == ExperimentId::ExtrapStateRate) {
        g.cloud.r_range = R * 1e-3;
        g.cloud.v_range = 1e-3;
      } else {
        g.cloud.r_range = R * 3e-2;
        g.cloud.v_range = 3e-2;
      }
      if (g.samples % g.cloud.n_cloud != 0)
        throw ConfigError("samples must be a multiple of the cloud size (50)");
      const Index n_points = g.samples / g.cloud.n_cloud;
      if (n_points < 2) throw ConfigError("samples too small for a trajectory grid");
      const double dz = 10.0 / static_cast<double>(n_points);
      g.spec = ConstraintSpec::circle_extrap(R, dz, mode, 0.0, 10.0);
      g.generator_hidden = hidden(15, 20);
      g.discriminator_hidden = hidden(5, 20);
      g.scheduler.tol = 1.0 / std::sqrt(third);

      RolloutConfig rc;
      rc.mode = mode;
      rc.projection = ov.projection.value_or(true);
      rc.n_steps = n_points;
      rc.step = dz;
      rc.radius = R;
      run.rollout = rc;
      break;
    }
  }
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return run;
}

int exit_code(const RunManifest& m) {
  if (m.outcome == "aborted") return 3;
  if (m.outcome == "stalled") return 2;
  return 0;
}

namespace {

json config_snapshot(const ResolvedRun& run) {
  const GanConfig& g = run.gan;
  json j;
  j["experiment"] = experiment_name(run.id);
  j["constraint_kind"] = constraint_kind_name(g.spec.kind);
  j["radius"] = g.spec.radius;
  j["step"] = g.spec.step;
  j["domain"] = {g.spec.domain_lo, g.spec.domain_hi};
  j["generate_inner"] = g.spec.generate_inner;
  j["state_mode"] = state_mode_name(g.spec.mode);
  j["generator_widths"] = g.generator_widths();
  j["discriminator_widths"] = g.discriminator_widths();
  j["samples"] = g.samples;
  j["batch"] = g.batch;
  j["initial_lr"] = g.initial_lr;
  j["residual_noise_c"] = g.residual_noise_c;
  j["resample_residual_noise"] = g.resample_residual_noise;
  j["enforce_constraint"] = g.enforce_constraint;
  j["noisy_cloud"] = g.noisy_cloud;
  j["cloud"] = {{"r_range", g.cloud.r_range}, {"v_range", g.cloud.v_range}, {"n_cloud", g.cloud.n_cloud}};
  j["seed"] = g.seed;
  j["max_iter"] = g.max_iter;
  const auto& s = g.scheduler;
  j["scheduler"] = {{"n_check", s.n_check}, {"r_lower", s.r_lower}, {"r_upper", s.r_upper},
                    {"r_drop", s.r_drop},   {"alpha", s.alpha},     {"lr_min", s.lr_min},
                    {"tol", s.tol}};
  if (run.rollout) {
    j["rollout"] = {{"mode", state_mode_name(run.rollout->mode)},
                    {"projection", run.rollout->projection},
                    {"n_steps", run.rollout->n_steps},
                    {"step", run.rollout->step}};
  }
  return j;
}

double last_parcel_mean(const TrainingState& state, std::size_t n, double IterationRecord::*field) {
  const auto& h = state.history;
  const std::size_t k = std::min(n, h.size());
  if (k == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = h.size() - k; i < h.size(); ++i) total += h[i].*field;
  return total / static_cast<double>(k);
}

void write_grid_csv(const std::vector<double>& viol, const ConstraintSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "z,re_constraint\n";
  const Index n = static_cast<Index>(viol.size());
  for (Index k = 0; k < n; ++k) {
    const double z = spec.domain_lo + (spec.domain_hi - spec.domain_lo) * static_cast<double>(k) /
                                          static_cast<double>(n - 1);
    out << format_real(z) << ',' << format_real(viol[static_cast<std::size_t>(k)]) << '\n';
  }
}

void write_text(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

std::vector<double> circle_constraint_grid(const Mlp<double>& generator, const ConstraintSpec& spec,
                                           Index n_points) {
  if (spec.kind != ConstraintKind::CircleInterp)
    throw std::invalid_argument("circle_constraint_grid: circle-interp spec required");
  if (n_points < 2) throw std::invalid_argument("circle_constraint_grid: need at least 2 points");
  Matrix z(1, n_points);
  for (Index k = 0; k < n_points; ++k)
    z(0, k) = spec.domain_lo +
              (spec.domain_hi - spec.domain_lo) * static_cast<double>(k) / static_cast<double>(n_points - 1);
  const Matrix out = predict(generator, z);
  const Matrix res = residual_batch(spec, z, out);
  std::vector<double> v(static_cast<std::size_t>(n_points));
  for (Index k = 0; k < n_points; ++k) v[static_cast<std::size_t>(k)] = std::abs(res(0, k));
  return v;
}

RunArtifacts run_experiment_full(const ResolvedRun& run, const RunOptions& options) {
  RunArtifacts art;
  RunManifest& m = art.manifest;
  const GanConfig& g = run.gan;
  m.experiment = experiment_name(run.id);
  m.seed = g.seed;
  m.constraint = g.enforce_constraint;
  if (run.rollout) {
    m.noise = g.noisy_cloud;
    m.projection = run.rollout->projection;
  }
  m.config_json = config_snapshot(run).dump(2);

  namespace fs = std::filesystem;
  const bool write = !options.out_dir.empty();
  auto file = [&](const std::string& key, const std::string& name) {
    const std::string p = (fs::path(options.out_dir) / name).string();
    m.files[key] = name;
    return p;
  };
  if (write) fs::create_directories(options.out_dir);

  try {
    const Dataset data = build_dataset(g);
    TrainHooks hooks;
    hooks.on_parcel = options.on_parcel;
    art.training = train(g, data, hooks);
    const TrainingState& st = art.training->state;
    m.outcome = outcome_name(art.training->outcome);
    m.iterations = st.iteration;
    if (!st.history.empty()) {
      m.final_re_m = st.history.back().re_m;
      m.final_d_loss_abs = last_parcel_mean(st, g.scheduler.n_check, &IterationRecord::d_loss_abs);
      m.final_g_loss_abs = last_parcel_mean(st, g.scheduler.n_check, &IterationRecord::g_loss_abs);
    }
    m.test_re_m = compute_re_m(st.generator, g.spec, data.test.inputs, data.test.targets, data.test.z);
    if (write) {
      write_trace_csv(st, file("trace", "trace.csv"));
      write_decisions_csv(st, file("decisions", "decisions.csv"));
      save_snapshot(st.generator, file("generator", "generator.txt"));
    }

    if (g.spec.kind == ConstraintKind::CircleInterp) {
      art.constraint_grid = circle_constraint_grid(st.generator, g.spec, 1000);
      m.max_constraint_violation =
          *std::max_element(art.constraint_grid.begin(), art.constraint_grid.end());
      if (write) write_grid_csv(art.constraint_grid, g.spec, file("constraint_grid", "constraint_grid.csv"));
    }

    if (run.rollout) {
      RolloutConfig raw = *run.rollout;
      raw.projection = false;
      RolloutConfig proj = *run.rollout;
      proj.projection = true;
      art.raw_rollout = rollout(st.generator, raw);
      if (write) write_trajectory_csv(*art.raw_rollout, file("trajectory_raw", "trajectory_raw.csv"));
      art.projected_rollout = rollout(st.generator, proj);
      if (write)
        write_trajectory_csv(*art.projected_rollout, file("trajectory_projected", "trajectory_projected.csv"));
      const Trajectory& chosen = run.rollout->projection ? *art.projected_rollout : *art.raw_rollout;
      m.max_trajectory_error = trajectory_error(chosen).max_position();
      const auto viol = constraint_violation_series(chosen);
      m.max_constraint_violation = *std::max_element(viol.begin(), viol.end());
    }
  } catch (const DivergenceError& e) {
    m.outcome = "aborted";
    m.diagnostic = e.what();
  } catch (const RolloutError& e) {
    m.outcome = "aborted";
    m.diagnostic = e.what();
  }
  if (write) {
    file("manifest", "manifest.json");
    write_text(manifest_to_json(m) + "\n", (fs::path(options.out_dir) / "manifest.json").string());
  }
  return art;
}

RunManifest run_experiment(const ResolvedRun& run, const RunOptions& options) {
  return run_experiment_full(run, options).manifest;
}

namespace {

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["experiment"] = m.experiment;
  j["seed"] = m.seed;
  j["constraint"] = m.constraint;
  put_optional(j, "noise", m.noise);
  put_optional(j, "projection", m.projection);
  j["outcome"] = m.outcome;
  j["diagnostic"] = m.diagnostic;
  j["iterations"] = m.iterations;
  put_optional(j, "final_re_m", m.final_re_m);
  put_optional(j, "final_d_loss_abs", m.final_d_loss_abs);
  put_optional(j, "final_g_loss_abs", m.final_g_loss_abs);
  put_optional(j, "test_re_m", m.test_re_m);
  put_optional(j, "max_trajectory_error", m.max_trajectory_error);
  put_optional(j, "max_constraint_violation", m.max_constraint_violation);
  j["files"] = m.files;
  j["config"] = json::parse(m.config_json.empty() ? "{}" : m.config_json);
  return j.dump(2);
}

RunManifest manifest_from_json(const std::string& text) {
  const json j = json::parse(text);
  RunManifest m;
  m.experiment = j.at("experiment").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.constraint = j.at("constraint").get<bool>();
  m.noise = get_optional<bool>(j, "noise");
  m.projection = get_optional<bool>(j, "projection");
  m.outcome = j.at("outcome").get<std::string>();
  m.diagnostic = j.value("diagnostic", "");
  m.iterations = j.at("iterations").get<std::size_t>();
  m.final_re_m = get_optional<double>(j, "final_re_m");
  m.final_d_loss_abs = get_optional<double>(j, "final_d_loss_abs");
  m.final_g_loss_abs = get_optional<double>(j, "final_g_loss_abs");
  m.test_re_m = get_optional<double>(j, "test_re_m");
  m.max_trajectory_error = get_optional<double>(j, "max_trajectory_error");
  m.max_constraint_violation = get_optional<double>(j, "max_constraint_violation");
  if (j.contains("files")) m.files = j["files"].get<std::map<std::string, std::string>>();
  if (j.contains("config")) m.config_json = j["config"].dump(2);
  return m;
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

Summary emit_summary(std::vector<RunManifest> manifests) {
  auto rank = [](const std::string& name) {
    const auto id = parse_experiment(name);
    return id ? static_cast<int>(*id) : static_cast<int>(all_experiments().size());
  };
  std::stable_sort(manifests.begin(), manifests.end(), [&](const RunManifest& a, const RunManifest& b) {
    if (rank(a.experiment) != rank(b.experiment)) return rank(a.experiment) < rank(b.experiment);
    if (a.experiment != b.experiment) return a.experiment < b.experiment;
    return a.seed < b.seed;
  });

  auto onoff = [](const std::optional<bool>& v) -> std::string {
    return v ? (*v ? "on" : "off") : "";
  };
  const std::vector<std::string> header{"experiment", "seed",       "constraint",
                                        "noise",      "projection", "outcome",
                                        "iterations", "final_re_m", "max_trajectory_error",
                                        "max_constraint_violation"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : manifests) {
    rows.push_back({m.experiment, std::to_string(m.seed), m.constraint ? "on" : "off", onoff(m.noise),
                    onoff(m.projection), m.outcome, std::to_string(m.iterations),
                    format_optional(m.final_re_m), format_optional(m.max_trajectory_error),
                    format_optional(m.max_constraint_violation)});
  }

  Summary s;
  std::ostringstream csv;
  for (std::size_t i = 0; i < header.size(); ++i) csv << (i ? "," : "") << header[i];
  csv << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) csv << (i ? "," : "") << r[i];
    csv << '\n';
  }
  s.csv = csv.str();

  // The table shows shorter numbers than the CSV.
  auto short_num = [](const std::optional<double>& v) -> std::string {
    if (!v) return "-";
    std::ostringstream o;
    o << std::setprecision(4) << *v;
    return o.str();
  };
  std::vector<std::vector<std::string>> cells{header};
  for (std::size_t k = 0; k < manifests.size(); ++k) {
    auto r = rows[k];
    r[7] = short_num(manifests[k].final_re_m);
    r[8] = short_num(manifests[k].max_trajectory_error);
    r[9] = short_num(manifests[k].max_constraint_violation);
    for (auto& c : r)
      if (c.empty()) c = "-";
    cells.push_back(std::move(r));
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& r : cells)
    for (std::size_t i = 0; i < r.size(); ++i) widths[i] = std::max(widths[i], r[i].size());
  std::ostringstream table;
  for (const auto& r : cells) {
    for (std::size_t i = 0; i < r.size(); ++i)
      table << std::left << std::setw(static_cast<int>(widths[i]) + 2) << r[i];
    table << '\n';
  }
  s.table = table.str();
  return s;
}

}  // namespace cgan
