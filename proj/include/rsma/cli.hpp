#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsma/sim.hpp"

namespace rsma {

/// Fully-resolved run description: campaign settings plus output handling.
struct RunSpec {
  std::vector<Scheme> schemes = {Scheme::rsma, Scheme::sdma, Scheme::noma};
  CampaignConfig base;
  CalibrationOptions calibration;
  std::string output;
  std::string format = "csv";  // csv | json
  std::string backoff_path;
  int verbosity = 1;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace cli_detail {

inline Scheme parse_scheme(const std::string& s) {
  if (s == "rsma") return Scheme::rsma;
  if (s == "sdma") return Scheme::sdma;
  if (s == "noma") return Scheme::noma;
  throw ConfigError("unknown scheme '" + s + "' (valid: rsma, sdma, noma, all)");
}

inline std::vector<Scheme> parse_scheme_list(const std::string& s) {
  if (s == "all") return {Scheme::rsma, Scheme::sdma, Scheme::noma};
  std::vector<Scheme> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(parse_scheme(tok));
  if (out.empty()) throw ConfigError("empty scheme list");
  return out;
}

/// "start:step:stop" (inclusive) or a comma list of dB values.
inline std::vector<double> parse_snr_grid(const std::string& s) {
  std::vector<double> out;
  if (s.find(':') != std::string::npos) {
    double start, step, stop;
    char c1, c2;
    std::istringstream is(s);
    if (!(is >> start >> c1 >> step >> c2 >> stop) || c1 != ':' || c2 != ':')
      throw ConfigError("bad SNR range '" + s + "' (expected start:step:stop)");
    if (step <= 0 || stop < start) throw ConfigError("bad SNR range '" + s + "'");
    for (double v = start; v <= stop + 1e-9; v += step) out.push_back(v);
  } else {
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ConfigError("bad SNR value '" + tok + "'");
      }
    }
  }
  if (out.empty()) throw ConfigError("empty SNR grid");
  return out;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace cli_detail

/// Applies a JSON config file onto a spec. Unknown keys are rejected.
inline void apply_config_json(const nlohmann::json& j, RunSpec& spec) {
  static const std::vector<std::string> known = {
      "scheme", "snr",     "alpha",  "qos",    "beta",   "symbols",        "trials",
      "saa",    "seed",    "list",   "jobs",   "backoff", "output",        "format",
      "max_iterations",    "tolerance", "grid", "bler_target", "verbosity"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown config key '" + it.key() + "'");
  }
  using cli_detail::parse_scheme_list;
  using cli_detail::parse_snr_grid;
  if (j.contains("scheme")) spec.schemes = parse_scheme_list(j.at("scheme").get<std::string>());
  if (j.contains("snr")) spec.base.snr_db = parse_snr_grid(j.at("snr").get<std::string>());
  if (j.contains("alpha")) spec.base.alpha = j.at("alpha").get<double>();
  if (j.contains("qos")) spec.base.qos = j.at("qos").get<double>();
  if (j.contains("beta")) spec.base.beta = j.at("beta").get<double>();
  if (j.contains("symbols")) spec.base.symbols = j.at("symbols").get<int>();
  if (j.contains("trials")) spec.base.trials = j.at("trials").get<int>();
  if (j.contains("saa")) spec.base.saa_samples = j.at("saa").get<int>();
  if (j.contains("seed")) spec.base.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("list")) spec.base.list_size = j.at("list").get<int>();
  if (j.contains("jobs")) spec.base.jobs = j.at("jobs").get<int>();
  if (j.contains("backoff")) spec.backoff_path = j.at("backoff").get<std::string>();
  if (j.contains("output")) spec.output = j.at("output").get<std::string>();
  if (j.contains("format")) spec.format = j.at("format").get<std::string>();
  if (j.contains("max_iterations")) spec.base.max_iterations = j.at("max_iterations").get<int>();
  if (j.contains("tolerance")) spec.base.tolerance = j.at("tolerance").get<double>();
  if (j.contains("grid")) spec.calibration.grid_db = parse_snr_grid(j.at("grid").get<std::string>());
  if (j.contains("bler_target")) spec.calibration.bler_target = j.at("bler_target").get<double>();
  if (j.contains("verbosity")) spec.verbosity = j.at("verbosity").get<int>();
}

inline void validate_spec(const RunSpec& spec) {
  if (spec.base.trials < 1) throw ConfigError("trials must be >= 1");
  if (spec.base.symbols < 1) throw ConfigError("symbols must be >= 1");
  if (spec.base.snr_db.empty()) throw ConfigError("SNR grid must be non-empty");
  if (spec.base.beta <= 0.0 || spec.base.beta > 1.0) throw ConfigError("beta must be in (0,1]");
  if (spec.base.alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (spec.base.qos < 0.0) throw ConfigError("qos must be >= 0");
  if (spec.base.saa_samples < 1) throw ConfigError("saa must be >= 1");
  if (spec.base.list_size < 1) throw ConfigError("list must be >= 1");
  if (spec.format != "csv" && spec.format != "json")
    throw ConfigError("format must be csv or json");
}

// ---------------------------------------------------------------------------
// Result emission.
// ---------------------------------------------------------------------------

inline std::string results_to_csv(const std::vector<CampaignResult>& results) {
  using cli_detail::fmt;
  std::ostringstream os;
  os << "scheme,snr_db,throughput_bps_hz,esr_bound,tp_common,tp_private1,tp_private2,"
        "bler_common,bler_p1,bler_p2,infeasible_count\n";
  for (const CampaignResult& r : results) {
    for (const SnrPointResult& p : r.points) {
      os << scheme_name(r.scheme) << ',' << fmt(p.snr_db) << ',' << fmt(p.throughput) << ','
         << fmt(p.esr_bound) << ',' << fmt(p.tp_common) << ',' << fmt(p.tp_private1) << ','
         << fmt(p.tp_private2) << ',' << fmt(p.bler_common) << ',' << fmt(p.bler_p1) << ','
         << fmt(p.bler_p2) << ',' << p.infeasible_count << '\n';
    }
  }
  return os.str();
}

inline nlohmann::json results_to_json(const std::vector<CampaignResult>& results) {
  nlohmann::json rows = nlohmann::json::array();
  for (const CampaignResult& r : results) {
    for (const SnrPointResult& p : r.points) {
      rows.push_back({{"scheme", scheme_name(r.scheme)},
                      {"snr_db", p.snr_db},
                      {"throughput_bps_hz", p.throughput},
                      {"esr_bound", p.esr_bound},
                      {"tp_common", p.tp_common},
                      {"tp_private1", p.tp_private1},
                      {"tp_private2", p.tp_private2},
                      {"bler_common", p.bler_common},
                      {"bler_p1", p.bler_p1},
                      {"bler_p2", p.bler_p2},
                      {"infeasible_count", p.infeasible_count}});
    }
  }
  return nlohmann::json{{"results", rows}};
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write output file '" + path + "'");
  f << content;
  if (!f) throw std::runtime_error("failed writing output file '" + path + "'");
}

inline void emit_results(const std::vector<CampaignResult>& results, const RunSpec& spec) {
  const std::string path =
      spec.output.empty() ? (spec.format == "json" ? "campaign.json" : "campaign.csv")
                          : spec.output;
  if (spec.format == "json")
    write_text_file(path, results_to_json(results).dump(2) + "\n");
  else
    write_text_file(path, results_to_csv(results));
  if (spec.verbosity > 0) std::cout << "wrote " << path << "\n";
}

// ---------------------------------------------------------------------------
// Self test: fast invariants that exercise the full chain without noise.
// ---------------------------------------------------------------------------

namespace cli_detail {

/// Noiseless end-to-end round trip on orthogonal channels with one forced
/// alphabet on every active stream. The precoder scales keep cross-stream
/// interference orders of magnitude below the constellation spacing.
inline bool selftest_chain(Scheme scheme, int order, std::ostream& log) {
  const int nt = 2;
  Eigen::MatrixXcd est(nt, 2);
  est << 1.0, 0.0, 0.0, 1.0;
  const CsitModel model = CsitModel::with_error_variance(1000.0, 0.0);
  Rng rng(7);
  const SaaInstance inst = SaaInstance::draw(est, model, 1, rng);

  const double m = std::log2(static_cast<double>(order));
  const double rate = order == 4 ? 1.0 : order == 16 ? 2.0 : order == 64 ? 4.5 : 6.2;
  const double amp_c = 1e5, amp_p = 1e2;

  PrecoderMatrix pm = PrecoderMatrix::zero(nt);
  RateAllocation backed;
  const Eigen::VectorXcd e1 = est.col(0), e2 = est.col(1);
  switch (scheme) {
    case Scheme::rsma:
      pm.p_c = amp_c / std::numbers::sqrt2 * (e1 + e2);
      pm.p[0] = amp_p * e1;
      pm.p[1] = amp_p * e2;
      backed.common_rate_user = {rate, rate};
      backed.common_share = {rate / 2, rate / 2};
      backed.private_rate = {rate, rate};
      break;
    case Scheme::sdma:
      pm.p[0] = amp_p * e1;
      pm.p[1] = amp_p * e2;
      backed.private_rate = {rate, rate};
      break;
    case Scheme::noma:
      pm.p_c = amp_c / std::numbers::sqrt2 * (e1 + e2);
      pm.p[1] = amp_p * e2;
      backed.common_rate_user = {rate, rate};
      backed.common_share = {rate, 0.0};
      backed.private_rate = {0.0, rate};
      break;
  }

  const std::array<std::uint64_t, 3> seeds = {11, 22, 33};
  const LinkConfig link =
      build_link(inst, pm, backed, 0.9, 256, CrcSpec::crc11(), 8, 0.0, 0.0, seeds);
  const int expect_order = static_cast<int>(std::lround(std::pow(2.0, m)));
  for (int s = 0; s < 3; ++s) {
    if (!link.active(s)) continue;
    if (link.streams[s].mcs.mod_order != expect_order) {
      log << "selftest: " << scheme_name(scheme) << "/" << order << ": stream " << s
          << " selected order " << link.streams[s].mcs.mod_order << "\n";
      return false;
    }
  }

  Rng data_rng(123);
  const SplitMessage msg = split_payload(link, backed, data_rng);
  const TransmitBlock blk = transmit(msg, link);

  long expect_bits = 0;
  long got_bits = 0;
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXcd hk = inst.estimate.col(k);
    std::vector<cdouble> y(link.symbols);
    for (int t = 0; t < link.symbols; ++t) {
      cdouble v = 0.0;
      for (int r = 0; r < nt; ++r) v += std::conj(hk[r]) * blk.x(r, t);
      y[t] = v;
    }
    const ReceiveResult rx = receive_sic(y, hk, k, link);
    const MergeOutcome merged = merge_messages(msg, rx, k);
    expect_bits += msg.common_len(k) * (link.active(0) ? 1 : 0) +
                   msg.private_len(k) * (link.active(k + 1) ? 1 : 0);
    got_bits += merged.recovered_bits;
  }
  if (got_bits != expect_bits || expect_bits == 0) {
    log << "selftest: " << scheme_name(scheme) << "/" << order << ": recovered " << got_bits
        << " of " << expect_bits << " bits\n";
    return false;
  }
  return true;
}

}  // namespace cli_detail

inline bool run_selftest(std::ostream& log) {
  bool ok = true;

  for (Scheme s : {Scheme::rsma, Scheme::sdma, Scheme::noma})
    for (int order : {4, 16, 64, 256}) {
      const bool pass = cli_detail::selftest_chain(s, order, log);
      log << (pass ? "PASS" : "FAIL") << " noiseless round-trip " << scheme_name(s) << " "
          << order << "-QAM\n";
      ok = ok && pass;
    }

  {
    Rng rng(42);
    const Eigen::MatrixXcd est = sample_estimate(2, 2, rng);
    const CsitModel model = CsitModel::from_alpha(100.0, 0.6);
    bool pass = true;
    for (const ChannelSet& set : sample_realizations(est, model, 100, rng)) {
      const Eigen::MatrixXcd lhs = set.realization;
      const Eigen::MatrixXcd rhs =
          std::sqrt(1.0 - model.sigma_e2) * set.estimate + std::sqrt(model.sigma_e2) * set.error;
      pass = pass && (lhs - rhs).cwiseAbs().maxCoeff() < 1e-12;
    }
    log << (pass ? "PASS" : "FAIL") << " channel reconstruction identity\n";
    ok = ok && pass;
  }

  {
    CampaignConfig cfg;
    cfg.scheme = Scheme::rsma;
    cfg.trials = 1;
    cfg.saa_samples = 32;
    cfg.snr_db = {20.0};
    const TrialRecord a = run_trial(cfg, 20.0, 0);
    const TrialRecord b = run_trial(cfg, 20.0, 0);
    const bool pass = a.d1 == b.d1 && a.d2 == b.d2 && a.asr_bound == b.asr_bound &&
                      a.common.errors == b.common.errors;
    log << (pass ? "PASS" : "FAIL") << " trial determinism\n";
    ok = ok && pass;
  }
  return ok;
}

}  // namespace rsma
