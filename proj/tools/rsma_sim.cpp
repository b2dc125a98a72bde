// Link-level simulator for the 2-user RSMA downlink: campaign runner,
// back-off calibration, Shannon-bound curves and a self-test suite.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "rsma/cli.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CliState {
  rsma::RunSpec spec;
  std::string config_path;
  std::string scheme_arg;
  std::string snr_arg;
  std::string grid_arg;
  bool seed_given = false;
};

void add_common_options(CLI::App* cmd, CliState& st) {
  cmd->add_option("--config", st.config_path, "JSON config file (flags override it)");
  cmd->add_option("--scheme", st.scheme_arg, "rsma|sdma|noma|all or a comma list");
  cmd->add_option("--snr", st.snr_arg, "SNR grid in dB: start:step:stop or comma list");
  cmd->add_option("--alpha", st.spec.base.alpha, "CSIT quality scaling exponent");
  cmd->add_option("--qos", st.spec.base.qos, "per-user QoS rate R0 in bps/Hz");
  cmd->add_option("--beta", st.spec.base.beta, "maximum code rate");
  cmd->add_option("--symbols", st.spec.base.symbols, "modulated block length S");
  cmd->add_option("--trials", st.spec.base.trials, "Monte-Carlo trials per SNR point");
  cmd->add_option("--saa", st.spec.base.saa_samples, "SAA sample count M");
  cmd->add_option("--list", st.spec.base.list_size, "SCL list size");
  cmd->add_option("--jobs", st.spec.base.jobs, "parallel trial workers");
  cmd->add_option("--backoff", st.spec.backoff_path, "back-off table CSV");
  cmd->add_option("--out", st.spec.output, "output file path");
  cmd->add_option("--format", st.spec.format, "csv|json");
  cmd->add_option("--verbosity", st.spec.verbosity, "0 = quiet");
  cmd->add_option("--seed", st.spec.base.seed, "master seed")
      ->each([&st](const std::string&) { st.seed_given = true; });
}

// Precedence: flags > config file > RSMA_SIM_SEED (seed only) > defaults.
void resolve(CliState& st, CLI::App* cmd) {
  if (!st.config_path.empty()) {
    std::ifstream f(st.config_path);
    if (!f) throw rsma::ConfigError("cannot open config file '" + st.config_path + "'");
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw rsma::ConfigError(std::string("config parse error: ") + e.what());
    }
    rsma::RunSpec file_spec;
    rsma::apply_config_json(j, file_spec);
    auto keep_file = [&](const char* flag) { return cmd->count(flag) == 0; };
    if (keep_file("--scheme") && st.scheme_arg.empty()) st.spec.schemes = file_spec.schemes;
    if (keep_file("--snr") && st.snr_arg.empty()) st.spec.base.snr_db = file_spec.base.snr_db;
    if (keep_file("--alpha")) st.spec.base.alpha = file_spec.base.alpha;
    if (keep_file("--qos")) st.spec.base.qos = file_spec.base.qos;
    if (keep_file("--beta")) st.spec.base.beta = file_spec.base.beta;
    if (keep_file("--symbols")) st.spec.base.symbols = file_spec.base.symbols;
    if (keep_file("--trials")) st.spec.base.trials = file_spec.base.trials;
    if (keep_file("--saa")) st.spec.base.saa_samples = file_spec.base.saa_samples;
    if (keep_file("--list")) st.spec.base.list_size = file_spec.base.list_size;
    if (keep_file("--jobs")) st.spec.base.jobs = file_spec.base.jobs;
    if (keep_file("--backoff")) st.spec.backoff_path = file_spec.backoff_path;
    if (keep_file("--out")) st.spec.output = file_spec.output;
    if (keep_file("--format")) st.spec.format = file_spec.format;
    if (keep_file("--verbosity")) st.spec.verbosity = file_spec.verbosity;
    if (j.contains("max_iterations")) st.spec.base.max_iterations = file_spec.base.max_iterations;
    if (j.contains("tolerance")) st.spec.base.tolerance = file_spec.base.tolerance;
    if (j.contains("grid") && st.grid_arg.empty())
      st.spec.calibration.grid_db = file_spec.calibration.grid_db;
    const CLI::Option* bt = cmd->get_option_no_throw("--bler-target");
    if (j.contains("bler_target") && (bt == nullptr || bt->count() == 0))
      st.spec.calibration.bler_target = file_spec.calibration.bler_target;
    if (j.contains("seed") && !st.seed_given) {
      st.spec.base.seed = file_spec.base.seed;
      st.seed_given = true;
    }
  }
  if (!st.scheme_arg.empty()) st.spec.schemes = rsma::cli_detail::parse_scheme_list(st.scheme_arg);
  if (!st.snr_arg.empty()) st.spec.base.snr_db = rsma::cli_detail::parse_snr_grid(st.snr_arg);
  if (!st.grid_arg.empty())
    st.spec.calibration.grid_db = rsma::cli_detail::parse_snr_grid(st.grid_arg);
  if (!st.seed_given) {
    if (const char* env = std::getenv("RSMA_SIM_SEED"))
      st.spec.base.seed = std::strtoull(env, nullptr, 10);
  }
  if (!st.spec.backoff_path.empty())
    st.spec.base.backoff = rsma::BackoffTable::load(st.spec.backoff_path);
  rsma::validate_spec(st.spec);
}

int cmd_run(CliState& st, CLI::App* cmd) {
  resolve(st, cmd);
  std::vector<rsma::CampaignResult> results;
  for (rsma::Scheme s : st.spec.schemes) {
    rsma::CampaignConfig cfg = st.spec.base;
    cfg.scheme = s;
    if (st.spec.verbosity > 0)
      std::cout << "running " << rsma::scheme_name(s) << " campaign (" << cfg.snr_db.size()
                << " SNR points x " << cfg.trials << " trials)...\n";
    results.push_back(rsma::run_campaign(cfg));
  }
  rsma::emit_results(results, st.spec);
  return kExitOk;
}

int cmd_bounds(CliState& st, CLI::App* cmd) {
  resolve(st, cmd);
  std::ostringstream os;
  os << "scheme,snr_db,esr_bound\n";
  for (rsma::Scheme s : st.spec.schemes) {
    rsma::CampaignConfig cfg = st.spec.base;
    cfg.scheme = s;
    for (const auto& [snr, esr] : rsma::shannon_bounds(cfg)) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g\n", rsma::scheme_name(s), snr, esr);
      os << buf;
    }
  }
  const std::string path = st.spec.output.empty() ? "bounds.csv" : st.spec.output;
  rsma::write_text_file(path, os.str());
  if (st.spec.verbosity > 0) std::cout << "wrote " << path << "\n";
  return kExitOk;
}

int cmd_calibrate(CliState& st, CLI::App* cmd) {
  resolve(st, cmd);
  rsma::BackoffTable table;
  for (rsma::Scheme s : st.spec.schemes) {
    rsma::CampaignConfig cfg = st.spec.base;
    cfg.scheme = s;
    if (st.spec.verbosity > 0) std::cout << "calibrating " << rsma::scheme_name(s) << "...\n";
    const rsma::CalibrationResult cal = rsma::calibrate_backoff(cfg, st.spec.calibration);
    for (const auto& row : cal.table.rows) table.rows.push_back(row);
    for (const std::string& w : cal.warnings) std::cerr << "warning: " << w << "\n";
  }
  const std::string path = st.spec.output.empty() ? "backoff.csv" : st.spec.output;
  table.save(path);
  if (st.spec.verbosity > 0) std::cout << "wrote " << path << "\n";
  return kExitOk;
}

int cmd_selftest(CliState&) {
  return rsma::run_selftest(std::cout) ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RSMA downlink link-level simulator"};
  app.require_subcommand(1);

  CliState st;
  CLI::App* run = app.add_subcommand("run", "run a throughput campaign");
  CLI::App* calibrate = app.add_subcommand("calibrate", "produce an energy back-off table");
  CLI::App* bounds = app.add_subcommand("bounds", "Shannon-bound (ESR) curves only");
  CLI::App* selftest = app.add_subcommand("selftest", "run the invariant self-test suite");
  add_common_options(run, st);
  add_common_options(calibrate, st);
  add_common_options(bounds, st);
  calibrate->add_option("--grid", st.grid_arg, "back-off candidate grid, dB (start:step:stop)");
  calibrate->add_option("--bler-target", st.spec.calibration.bler_target,
                        "per-stream BLER target");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(st, run);
    if (calibrate->parsed()) return cmd_calibrate(st, calibrate);
    if (bounds->parsed()) return cmd_bounds(st, bounds);
    if (selftest->parsed()) return cmd_selftest(st);
    return kExitConfig;
  } catch (const rsma::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
