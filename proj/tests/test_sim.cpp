#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rsma/sim.hpp"

using namespace rsma;

namespace {

CampaignConfig micro_config(Scheme scheme) {
  CampaignConfig cfg;
  cfg.scheme = scheme;
  cfg.snr_db = {15.0, 25.0};
  cfg.trials = 4;
  cfg.saa_samples = 24;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("Eq. (7) aggregation is exact integer-ratio arithmetic") {
  CampaignConfig cfg = micro_config(Scheme::rsma);
  std::vector<TrialRecord> recs(1);
  recs[0].d1 = 256;
  recs[0].d2 = 256;
  recs[0].channel_uses = 256;
  const SnrPointResult pt = aggregate_point(cfg, 10.0, recs);
  CHECK(pt.throughput == 2.0);

  // every block failing -> zero throughput
  std::vector<TrialRecord> fails(3);
  for (auto& r : fails) r.channel_uses = 256;
  CHECK(aggregate_point(cfg, 10.0, fails).throughput == 0.0);
}

TEST_CASE("trials are deterministic given the seed") {
  const CampaignConfig cfg = micro_config(Scheme::rsma);
  const TrialRecord a = run_trial(cfg, 25.0, 1);
  const TrialRecord b = run_trial(cfg, 25.0, 1);
  CHECK(a.d1 == b.d1);
  CHECK(a.d2 == b.d2);
  CHECK(a.asr_bound == b.asr_bound);
  CHECK(a.common.errors == b.common.errors);
  CHECK(a.max_power_frac == b.max_power_frac);
}

TEST_CASE("high SNR, near-perfect CSIT and a rate margin recover every payload") {
  // Without back-off the AMC assigns rates at the operating SINR itself, so
  // blocks sit at ~50% BLER no matter how high the SNR; the margin is what
  // opens the noiseless-limit behavior.
  CampaignConfig cfg = micro_config(Scheme::rsma);
  cfg.alpha = 2.0;  // sigma_e^2 = Pt^-2, negligible at 60 dB
  cfg.backoff.append(Scheme::rsma, 60.0, StreamClass::common, 6.0);
  cfg.backoff.append(Scheme::rsma, 60.0, StreamClass::priv, 3.0);
  const TrialRecord rec = run_trial(cfg, 60.0, 0);
  REQUIRE_FALSE(rec.infeasible);
  CHECK(rec.common.errors + rec.p1.errors + rec.p2.errors == 0);
  CHECK(rec.d1 + rec.d2 > 0);
  long attributed = rec.common.recovered_bits + rec.p1.recovered_bits + rec.p2.recovered_bits;
  CHECK(rec.d1 + rec.d2 == attributed);
}

TEST_CASE("per-stream throughput decomposition sums to the total") {
  for (Scheme s : {Scheme::rsma, Scheme::sdma, Scheme::noma}) {
    const CampaignConfig cfg = micro_config(s);
    const CampaignResult res = run_campaign(cfg);
    for (const SnrPointResult& pt : res.points) {
      CHECK_THAT(pt.tp_common + pt.tp_private1 + pt.tp_private2,
                 Catch::Matchers::WithinAbs(pt.throughput, 1e-9));
      CHECK(pt.throughput <= pt.esr_bound + 0.1);
      CHECK(pt.throughput <= 2 * 7.2 + 1e-9);
    }
  }
}

TEST_CASE("parallel execution reproduces the sequential result") {
  CampaignConfig seq = micro_config(Scheme::rsma);
  CampaignConfig par = seq;
  par.jobs = 3;
  const CampaignResult a = run_campaign(seq);
  const CampaignResult b = run_campaign(par);
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].throughput == b.points[i].throughput);
    CHECK(a.points[i].esr_bound == b.points[i].esr_bound);
  }
}

TEST_CASE("shannon bounds replicate the campaign's paired ESR column") {
  const CampaignConfig cfg = micro_config(Scheme::noma);
  const CampaignResult run = run_campaign(cfg);
  const auto bounds = shannon_bounds(cfg);
  REQUIRE(bounds.size() == run.points.size());
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    CHECK(bounds[i].first == run.points[i].snr_db);
    CHECK(bounds[i].second == run.points[i].esr_bound);
  }
}

TEST_CASE("calibration emits per-class rows inside the grid and meets its target in-sample") {
  CampaignConfig cfg = micro_config(Scheme::rsma);
  cfg.snr_db = {25.0};
  cfg.trials = 12;
  CalibrationOptions opt;
  opt.grid_db = {0.0, 2.0, 4.0, 6.0};
  const CalibrationResult cal = calibrate_backoff(cfg, opt);
  REQUIRE(cal.table.rows.size() == 2);
  for (const auto& row : cal.table.rows) {
    CHECK(row.backoff_db >= 0.0);
    CHECK(row.backoff_db <= 6.0);
    CHECK(row.snr_db == 25.0);
  }
  const double bo_c = cal.table.lookup(Scheme::rsma, 25.0, StreamClass::common);
  const double bo_p = cal.table.lookup(Scheme::rsma, 25.0, StreamClass::priv);
  // vacuous target keeps the unconstrained throughput maximizer
  CalibrationOptions vac = opt;
  vac.bler_target = 1.0;
  const CalibrationResult unconstrained = calibrate_backoff(cfg, vac);
  const double vc = unconstrained.table.lookup(Scheme::rsma, 25.0, StreamClass::common);
  CHECK(vc <= bo_c + 1e-12);
  (void)bo_p;
}

TEST_CASE("infeasible trials contribute channel uses but no bits") {
  // An aggressive QoS at low SNR makes SDMA infeasible on most draws.
  CampaignConfig cfg = micro_config(Scheme::sdma);
  cfg.qos = 2.5;
  cfg.snr_db = {0.0};
  cfg.trials = 6;
  const CampaignResult res = run_campaign(cfg);
  REQUIRE(res.points.size() == 1);
  CHECK(res.points[0].infeasible_count > 0);
}
