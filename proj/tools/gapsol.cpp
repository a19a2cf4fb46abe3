// gapsol: band structures, coupled mode equations and gap-soliton
// approximations for out-of-plane Maxwell fields in 2D photonic crystals.
//
// Settings are resolved as flag > environment > config file.

#include "gapsol/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>

namespace {

enum Exit { ok = 0, failure = 1, bad_config = 2, assumption = 3, no_convergence = 4 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gapsol " GAPSOL_VERSION " - photonic band edges, coupled mode equations and gap solitons"};
  app.require_subcommand(1, 1);
  std::string config, out;
  int threads = -1;
  bool verbose = false;
  app.add_option("-c,--config", config, "TOML run configuration")->envname("GAPSOL_CONFIG");
  app.add_option("-o,--out", out, "output directory (overrides run.out)")->envname("GAPSOL_OUT");
  app.add_option("-t,--threads", threads, "worker threads, 0 = logical cores (overrides run.threads)")
      ->envname("GAPSOL_THREADS")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("-v,--verbose", verbose, "per-step progress")->envname("GAPSOL_VERBOSE");
  app.set_version_flag("--version", GAPSOL_VERSION);

  const std::vector<std::pair<std::string, std::string>> subs{
      {"check", "assumption report for the medium"},
      {"bands", "band structure along the configured k-path"},
      {"gaps", "BZ-grid sweep and spectral gaps"},
      {"edge", "gap edge: level set, Hessians, Bloch pairs"},
      {"cme", "resonance sets and coupling coefficients"},
      {"solve-cme", "Newton solve of the coupled mode equations"},
      {"assemble", "envelope ansatz on the supercell"},
      {"verify", "ansatz residual over soliton.residual_eps"},
      {"correct", "Newton corrector at the first soliton.eps_params value"},
      {"sweep", "corrector over soliton.eps_params and slope fits"}};
  for (const auto& [name, help] : subs) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const std::string stage = app.get_subcommands().front()->get_name();

  try {
    gapsol::RunConfig cfg = config.empty() ? gapsol::parse_config_string("") : gapsol::load_config(config);
    if (!out.empty()) cfg.run.out = out;
    if (threads >= 0) cfg.run.threads = threads;
    if (verbose) cfg.run.verbose = true;
    gapsol::validate(cfg);
    gapsol::Pipeline p(cfg);
    p.run(stage);
    std::cout << "gapsol " << stage << ": artifacts in " << p.out().string() << "\n";
    return ok;
  } catch (const gapsol::ConfigError& e) {
    std::cerr << "gapsol: config error: " << e.what() << "\n";
    return bad_config;
  } catch (const gapsol::StageError& e) {
    std::cerr << "gapsol: " << e.what() << "\n";
    return failure;
  } catch (const gapsol::AssumptionError& e) {
    std::cerr << "gapsol: " << e.what() << "\n";
    return assumption;
  } catch (const gapsol::ConvergenceError& e) {
    std::cerr << "gapsol: " << e.what() << "\n";
    return no_convergence;
  } catch (const std::exception& e) {
    std::cerr << "gapsol: " << e.what() << "\n";
    return failure;
  }
}
