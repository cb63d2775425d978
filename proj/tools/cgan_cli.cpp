// Command-line driver for the reproduction experiments.
//
//   cgan list
//   cgan run <experiment> [--constraint on|off] [--noise on|off] [--projection on|off]
//            [--residual-noise-c C] [--samples M] [--max-iter N] [--seed S] [--out DIR]
//            [--config FILE] [--verbose]
//   cgan batch <experiment> --seeds 1-5 [--jobs N] [run flags...]
//   cgan summary <manifest.json>... [--csv FILE]
//
// Exit codes: 0 converged/completed, 2 stalled, 3 aborted, 4 config error.

#include <malloc.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cgan/csv.hpp"
#include "cgan/experiments.hpp"

namespace {

constexpr int kExitConfig = 4;

struct RunFlags {
  std::string constraint, noise, projection;
  std::optional<double> residual_noise_c;
  std::optional<long long> samples;
  std::optional<std::size_t> max_iter;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string config;
  bool verbose = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  const auto onoff = CLI::IsMember({"on", "off"});
  cmd->add_option("--constraint", f.constraint, "Enforce the constraint residual during training")->check(onoff);
  cmd->add_option("--noise", f.noise, "Noisy-cloud training inputs (extrapolation)")->check(onoff);
  cmd->add_option("--projection", f.projection, "Project rollout states onto the constraints")->check(onoff);
  cmd->add_option("--residual-noise-c", f.residual_noise_c, "Residual noise constant c");
  cmd->add_option("--samples", f.samples, "Total sample count M");
  cmd->add_option("--max-iter", f.max_iter, "Iteration cap");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--config", f.config, "Flat key = value config file; flags win");
  cmd->add_flag("--verbose,-v", f.verbose, "Report every parcel on stderr");
}

cgan::Overrides to_overrides(RunFlags& f) {
  cgan::Overrides ov;
  if (!f.constraint.empty()) ov.constraint = f.constraint == "on";
  if (!f.noise.empty()) ov.noise = f.noise == "on";
  if (!f.projection.empty()) ov.projection = f.projection == "on";
  ov.residual_noise_c = f.residual_noise_c;
  if (f.samples) ov.samples = static_cast<cgan::Index>(*f.samples);
  ov.max_iter = f.max_iter;
  if (!f.config.empty()) cgan::merge_config_file(f.config, ov, f.seed, f.out);
  return ov;
}

int do_run(const std::string& name, RunFlags& f) {
  const auto id = cgan::parse_experiment(name);
  if (!id) {
    std::cerr << "unknown experiment '" << name << "' (see `cgan list`)\n";
    return kExitConfig;
  }
  cgan::ResolvedRun run;
  try {
    const auto ov = to_overrides(f);
    run = cgan::resolve(*id, ov, f.seed.value_or(1));
  } catch (const cgan::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  cgan::RunOptions opts;
  opts.out_dir = f.out.value_or("runs/" + name + "-seed" + std::to_string(run.gan.seed));
  if (f.verbose) {
    opts.on_parcel = [](const cgan::TrainingState& s, const cgan::ParcelRecord& p) {
      double mean = 0.0;
      const std::size_t n = std::min<std::size_t>(s.history.size(), 2000);
      for (std::size_t i = s.history.size() - n; i < s.history.size(); ++i) mean += s.history[i].re_m;
      std::fprintf(stderr, "parcel %4zu  iter %7zu  mean RE_m %.4e  checks %d%d%d  lr %.3e%s\n", p.parcel,
                   s.iteration, mean / static_cast<double>(n), p.decision.fired[0], p.decision.fired[1],
                   p.decision.fired[2], p.lr_after, p.converged ? "  converged" : "");
    };
  }
  const auto manifest = cgan::run_experiment(run, opts);
  std::cout << cgan::emit_summary({manifest}).table;
  if (!manifest.diagnostic.empty()) std::cerr << "aborted: " << manifest.diagnostic << '\n';
  std::cout << "outputs in " << opts.out_dir << '\n';
  return cgan::exit_code(manifest);
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      out.push_back(std::stoull(part));
    } else {
      const auto lo = std::stoull(part.substr(0, dash));
      const auto hi = std::stoull(part.substr(dash + 1));
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
  }
  return out;
}

// Runs one child process per seed, at most `jobs` at a time.
int do_batch(const std::string& name, const std::string& seeds_spec, int jobs,
             const std::vector<std::string>& passthrough, const std::string& out_root) {
  std::vector<std::uint64_t> seeds;
  try {
    seeds = parse_seeds(seeds_spec);
  } catch (const std::exception&) {
    std::cerr << "bad --seeds '" << seeds_spec << "'\n";
    return kExitConfig;
  }
  if (seeds.empty() || jobs < 1) return kExitConfig;
  const std::string self = std::filesystem::read_symlink("/proc/self/exe").string();
  std::map<pid_t, std::uint64_t> running;
  std::vector<std::string> manifests;
  int worst = 0;
  auto reap_one = [&]() {
    int status = 0;
    const pid_t pid = ::wait(&status);
    if (pid <= 0) return;
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 3;
    worst = std::max(worst, code);
    running.erase(pid);
  };
  for (auto seed : seeds) {
    while (static_cast<int>(running.size()) >= jobs) reap_one();
    const std::string out = out_root + "/" + name + "-seed" + std::to_string(seed);
    manifests.push_back(out + "/manifest.json");
    std::vector<std::string> args{self, "run", name, "--seed", std::to_string(seed), "--out", out};
    args.insert(args.end(), passthrough.begin(), passthrough.end());
    const pid_t pid = ::fork();
    if (pid == 0) {
      std::vector<char*> argv;
      for (auto& a : args) argv.push_back(a.data());
      argv.push_back(nullptr);
      ::execv(self.c_str(), argv.data());
      std::_Exit(127);
    }
    running[pid] = seed;
  }
  while (!running.empty()) reap_one();

  std::vector<cgan::RunManifest> loaded;
  for (const auto& p : manifests) {
    try {
      loaded.push_back(cgan::read_manifest(p));
    } catch (const std::exception& e) {
      std::cerr << e.what() << '\n';
    }
  }
  if (!loaded.empty()) std::cout << cgan::emit_summary(loaded).table;
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates and frees the same large batch matrices every step;
  // keeping them on the heap avoids an mmap/munmap pair per temporary.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  CLI::App app{"Constraint-enforcing GAN experiments"};
  app.require_subcommand(1);

  app.add_subcommand("list", "List experiment ids");

  auto* run = app.add_subcommand("run", "Run one experiment");
  std::string run_name;
  RunFlags run_flags;
  run->add_option("experiment", run_name, "Experiment id")->required();
  run->add_option("--seed", run_flags.seed, "Run seed");
  add_run_flags(run, run_flags);

  auto* batch = app.add_subcommand("batch", "Run one experiment over several seeds");
  std::string batch_name, seeds = "1-5", batch_out = "runs";
  int jobs = 1;
  RunFlags batch_flags;
  batch->add_option("experiment", batch_name, "Experiment id")->required();
  batch->add_option("--seeds", seeds, "Seed list, e.g. 1-5 or 1,3,7");
  batch->add_option("--jobs", jobs, "Parallel processes")->check(CLI::PositiveNumber);
  batch->add_option("--out-root", batch_out, "Parent directory for per-seed outputs");
  add_run_flags(batch, batch_flags);

  auto* summary = app.add_subcommand("summary", "Summarise manifests");
  std::vector<std::string> manifest_paths;
  std::string summary_csv;
  summary->add_option("manifests", manifest_paths, "manifest.json files")->required();
  summary->add_option("--csv", summary_csv, "Also write the summary CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (app.got_subcommand("list")) {
    for (auto id : cgan::all_experiments()) std::cout << cgan::experiment_name(id) << '\n';
    return 0;
  }
  if (app.got_subcommand("run")) return do_run(run_name, run_flags);
  if (app.got_subcommand("batch")) {
    std::vector<std::string> pass;
    auto fwd = [&](const char* flag, const std::string& v) {
      if (!v.empty()) pass.insert(pass.end(), {flag, v});
    };
    fwd("--constraint", batch_flags.constraint);
    fwd("--noise", batch_flags.noise);
    fwd("--projection", batch_flags.projection);
    if (batch_flags.residual_noise_c) fwd("--residual-noise-c", cgan::format_real(*batch_flags.residual_noise_c));
    if (batch_flags.samples) fwd("--samples", std::to_string(*batch_flags.samples));
    if (batch_flags.max_iter) fwd("--max-iter", std::to_string(*batch_flags.max_iter));
    fwd("--config", batch_flags.config);
    return do_batch(batch_name, seeds, jobs, pass, batch_out);
  }
  if (app.got_subcommand("summary")) {
    std::vector<cgan::RunManifest> ms;
    try {
      for (const auto& p : manifest_paths) ms.push_back(cgan::read_manifest(p));
    } catch (const std::exception& e) {
      std::cerr << e.what() << '\n';
      return kExitConfig;
    }
    const auto s = cgan::emit_summary(ms);
    std::cout << s.table;
    if (!summary_csv.empty()) {
      std::ofstream out(summary_csv);
      out << s.csv;
    }
    return 0;
  }
  return 0;
}
