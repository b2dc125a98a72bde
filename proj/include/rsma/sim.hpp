#pragma once

#include <atomic>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsma/amc.hpp"
#include "rsma/channel.hpp"
#include "rsma/precoder.hpp"
#include "rsma/transceiver.hpp"

namespace rsma {

/// Full campaign description. SNR maps to transmit power as Pt = 10^(SNR/10)
/// with unit receiver noise.
struct CampaignConfig {
  Scheme scheme = Scheme::rsma;
  std::vector<double> snr_db = {5, 10, 15, 20, 25, 30, 35};
  double alpha = 0.6;
  double qos = 0.0;  // R0 in bps/Hz
  double beta = 0.9;
  int symbols = 256;
  int trials = 200;
  int saa_samples = 200;  // desk-scale default, production uses 1000
  int max_iterations = 200;
  double tolerance = 3e-4;  // desk-scale default, solver library default is 1e-4
  int list_size = 8;
  std::uint64_t seed = 0;
  int jobs = 1;
  CrcSpec crc = CrcSpec::crc11();
  BackoffTable backoff;

  SolverOptions solver_options() const {
    SolverOptions o;
    o.saa_samples = saa_samples;
    o.max_iterations = max_iterations;
    o.tolerance = tolerance;
    o.qos_rate = qos;
    return o;
  }
};

struct StreamOutcome {
  bool active = false;
  int attempts = 0;
  int errors = 0;
  long recovered_bits = 0;
  double spectral_efficiency = 0.0;
};

/// Per-trial outcome: Eq.-style bit counts D_{s,k}, channel uses, per-stream
/// error events and the instance's optimized ASR (the Shannon-bound sample).
struct TrialRecord {
  long d1 = 0, d2 = 0;
  int channel_uses = 0;
  bool infeasible = false;
  StreamOutcome common, p1, p2;
  double asr_bound = 0.0;
  double max_power_frac = 0.0;

  double throughput() const {
    return channel_uses > 0 ? static_cast<double>(d1 + d2) / channel_uses : 0.0;
  }
};

namespace sim_detail {

inline std::uint64_t substream_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(master);
  for (std::uint64_t p : path) s = mix64(s ^ p);
  return s;
}

inline std::uint64_t snr_key(double snr_db) {
  return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::llround(snr_db * 1000.0)));
}

}  // namespace sim_detail

/// One Monte-Carlo trial: draw the estimate, optimize the scheme's precoders
/// on a fixed SAA ensemble, back off, pick MCSs, run the coded chain through
/// one true channel realization and count recovered bits. Channel estimates,
/// SAA draws, payload bits and noise use substreams keyed by
/// (seed, snr, trial) only, so schemes and QoS settings are paired.
inline TrialRecord run_trial(const CampaignConfig& cfg, double snr_db, int trial) {
  using sim_detail::substream_seed;
  const std::uint64_t sk = sim_detail::snr_key(snr_db);
  const std::uint64_t tr = static_cast<std::uint64_t>(trial);
  const double pt = std::pow(10.0, snr_db / 10.0);
  const CsitModel model = CsitModel::from_alpha(pt, cfg.alpha);

  Rng est_rng = Rng::substream(cfg.seed, {stream_tag::kEstimate, sk, tr});
  const Eigen::MatrixXcd estimate = sample_estimate(2, 2, est_rng);
  Rng saa_rng = Rng::substream(cfg.seed, {stream_tag::kSaaError, sk, tr});
  const SaaInstance inst = SaaInstance::draw(estimate, model, cfg.saa_samples, saa_rng);

  const PrecoderSolution sol = optimize(cfg.scheme, inst, cfg.solver_options());

  TrialRecord rec;
  rec.channel_uses = cfg.symbols;
  rec.asr_bound = sol.status == SolveStatus::ok ? sol.rates.objective() : 0.0;
  if (sol.status == SolveStatus::infeasible) {
    rec.infeasible = true;
    return rec;
  }

  const double total_power = sol.precoders.total_power();
  if (total_power > 0.0) {
    const double top = std::max({sol.precoders.common_power(), sol.precoders.private_power(0),
                                 sol.precoders.private_power(1)});
    rec.max_power_frac = top / total_power;
  }

  const double bo_c = cfg.backoff.lookup(cfg.scheme, snr_db, StreamClass::common);
  const double bo_p = cfg.backoff.lookup(cfg.scheme, snr_db, StreamClass::priv);
  const RateAllocation backed = apply_backoff(inst, sol.precoders, sol.rates, bo_c, bo_p);

  const std::array<std::uint64_t, 3> il_seeds = {
      substream_seed(cfg.seed, {stream_tag::kInterleaver, sk, tr, 0}),
      substream_seed(cfg.seed, {stream_tag::kInterleaver, sk, tr, 1}),
      substream_seed(cfg.seed, {stream_tag::kInterleaver, sk, tr, 2})};
  const LinkConfig link = build_link(inst, sol.precoders, backed, cfg.beta, cfg.symbols, cfg.crc,
                                     cfg.list_size, bo_c, bo_p, il_seeds);

  rec.common.active = link.active(0);
  rec.p1.active = link.active(1);
  rec.p2.active = link.active(2);
  rec.common.spectral_efficiency = link.streams[0].mcs.spectral_efficiency();
  rec.p1.spectral_efficiency = link.streams[1].mcs.spectral_efficiency();
  rec.p2.spectral_efficiency = link.streams[2].mcs.spectral_efficiency();

  Rng data_rng = Rng::substream(cfg.seed, {stream_tag::kData, sk, tr});
  const SplitMessage msg = split_payload(link, backed, data_rng);
  const TransmitBlock blk = transmit(msg, link);

  Rng truth_rng = Rng::substream(cfg.seed, {stream_tag::kTrueChannel, sk, tr});
  const ChannelSet truth = sample_realization(estimate, model, truth_rng);
  Rng noise_rng = Rng::substream(cfg.seed, {stream_tag::kNoise, sk, tr});

  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXcd hk = truth.realization.col(k);
    std::vector<cdouble> y(cfg.symbols);
    for (int t = 0; t < cfg.symbols; ++t) {
      cdouble v = 0.0;
      for (int r = 0; r < hk.size(); ++r) v += std::conj(hk[r]) * blk.x(r, t);
      y[t] = v + noise_rng.cgaussian();
    }
    const ReceiveResult rx = receive_sic(y, hk, k, link);
    const MergeOutcome merged = merge_messages(msg, rx, k);
    (k == 0 ? rec.d1 : rec.d2) = merged.recovered_bits;
    if (rx.common_attempted) {
      rec.common.attempts += 1;
      if (merged.common_error)
        rec.common.errors += 1;
      else
        rec.common.recovered_bits += msg.common_len(k);
    }
    StreamOutcome& po = k == 0 ? rec.p1 : rec.p2;
    if (rx.private_attempted) {
      po.attempts += 1;
      if (merged.private_error)
        po.errors += 1;
      else
        po.recovered_bits += msg.private_len(k);
    }
  }
  return rec;
}

/// Aggregated result for one SNR point. Bit counts are aggregated as exact
/// integer sums; tp_* columns decompose the total throughput by stream.
struct SnrPointResult {
  double snr_db = 0.0;
  double throughput = 0.0;
  double esr_bound = 0.0;
  double tp_common = 0.0, tp_private1 = 0.0, tp_private2 = 0.0;
  double bler_common = 0.0, bler_p1 = 0.0, bler_p2 = 0.0;
  long infeasible_count = 0;
  long trials = 0;
  double tp_mean = 0.0, tp_m2 = 0.0;  // per-trial throughput running stats
  long single_stream_trials = 0;      // trials with >= 90% power on one stream

  double tp_stderr() const {
    if (trials < 2) return 0.0;
    return std::sqrt(tp_m2 / (trials - 1) / trials);
  }
};

struct CampaignResult {
  Scheme scheme = Scheme::rsma;
  std::vector<SnrPointResult> points;
};

inline SnrPointResult aggregate_point(const CampaignConfig& cfg, double snr_db,
                                      const std::vector<TrialRecord>& recs) {
  SnrPointResult pt;
  pt.snr_db = snr_db;
  long bits_total = 0, uses_total = 0;
  long rec_c = 0, rec_p1 = 0, rec_p2 = 0;
  long att_c = 0, err_c = 0, att_p1 = 0, err_p1 = 0, att_p2 = 0, err_p2 = 0;
  double esr_acc = 0.0;
  for (const TrialRecord& r : recs) {
    bits_total += r.d1 + r.d2;
    uses_total += r.channel_uses;
    rec_c += r.common.recovered_bits;
    rec_p1 += r.p1.recovered_bits;
    rec_p2 += r.p2.recovered_bits;
    att_c += r.common.attempts;
    err_c += r.common.errors;
    att_p1 += r.p1.attempts;
    err_p1 += r.p1.errors;
    att_p2 += r.p2.attempts;
    err_p2 += r.p2.errors;
    esr_acc += r.asr_bound;
    if (r.infeasible) ++pt.infeasible_count;
    if (r.max_power_frac >= 0.9) ++pt.single_stream_trials;
    ++pt.trials;
    const double tp = r.throughput();
    const double delta = tp - pt.tp_mean;
    pt.tp_mean += delta / pt.trials;
    pt.tp_m2 += delta * (tp - pt.tp_mean);
  }
  pt.throughput = uses_total > 0 ? static_cast<double>(bits_total) / uses_total : 0.0;
  pt.tp_common = uses_total > 0 ? static_cast<double>(rec_c) / uses_total : 0.0;
  pt.tp_private1 = uses_total > 0 ? static_cast<double>(rec_p1) / uses_total : 0.0;
  pt.tp_private2 = uses_total > 0 ? static_cast<double>(rec_p2) / uses_total : 0.0;
  pt.bler_common = att_c > 0 ? static_cast<double>(err_c) / att_c : 0.0;
  pt.bler_p1 = att_p1 > 0 ? static_cast<double>(err_p1) / att_p1 : 0.0;
  pt.bler_p2 = att_p2 > 0 ? static_cast<double>(err_p2) / att_p2 : 0.0;
  pt.esr_bound = recs.empty() ? 0.0 : esr_acc / static_cast<double>(recs.size());
  return pt;
}

inline std::vector<TrialRecord> run_point_trials(const CampaignConfig& cfg, double snr_db) {
  std::vector<TrialRecord> recs(cfg.trials);
  if (cfg.jobs <= 1) {
    for (int t = 0; t < cfg.trials; ++t) recs[t] = run_trial(cfg, snr_db, t);
    return recs;
  }
  std::vector<std::future<void>> futs;
  std::atomic<int> next{0};
  const int workers = std::min(cfg.jobs, cfg.trials);
  for (int w = 0; w < workers; ++w) {
    futs.push_back(std::async(std::launch::async, [&]() {
      for (int t = next.fetch_add(1); t < cfg.trials; t = next.fetch_add(1))
        recs[t] = run_trial(cfg, snr_db, t);
    }));
  }
  for (auto& f : futs) f.get();
  return recs;
}

/// Throughput = sum_l (D_{s,1} + D_{s,2}) / sum_l S^(l), per SNR point.
inline CampaignResult run_campaign(const CampaignConfig& cfg) {
  if (cfg.trials < 1) throw std::invalid_argument("run_campaign: trials >= 1");
  if (cfg.snr_db.empty()) throw std::invalid_argument("run_campaign: SNR grid empty");
  CampaignResult res;
  res.scheme = cfg.scheme;
  for (double snr : cfg.snr_db)
    res.points.push_back(aggregate_point(cfg, snr, run_point_trials(cfg, snr)));
  return res;
}

/// Shannon-bound (ESR) curve over the same estimate/SAA substreams as the
/// matching campaign; no codec involved.
inline std::vector<std::pair<double, double>> shannon_bounds(const CampaignConfig& cfg) {
  std::vector<std::pair<double, double>> out;
  for (double snr : cfg.snr_db) {
    const std::uint64_t sk = sim_detail::snr_key(snr);
    const double pt = std::pow(10.0, snr / 10.0);
    const CsitModel model = CsitModel::from_alpha(pt, cfg.alpha);
    double acc = 0.0;
    for (int t = 0; t < cfg.trials; ++t) {
      Rng est_rng = Rng::substream(cfg.seed, {stream_tag::kEstimate, sk, (std::uint64_t)t});
      const Eigen::MatrixXcd estimate = sample_estimate(2, 2, est_rng);
      Rng saa_rng = Rng::substream(cfg.seed, {stream_tag::kSaaError, sk, (std::uint64_t)t});
      const SaaInstance inst = SaaInstance::draw(estimate, model, cfg.saa_samples, saa_rng);
      const PrecoderSolution sol = optimize(cfg.scheme, inst, cfg.solver_options());
      if (sol.status == SolveStatus::ok) acc += sol.rates.objective();
    }
    out.emplace_back(snr, acc / cfg.trials);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Energy back-off calibration.
// ---------------------------------------------------------------------------

struct CalibrationOptions {
  std::vector<double> grid_db = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  double bler_target = 0.1;
  double confidence_z = 1.28;    // one-sided upper confidence bound on BLER
  double selection_margin = 0.6;  // point estimate must clear margin * target
};

struct CalibrationResult {
  BackoffTable table;
  std::vector<std::string> warnings;
};

namespace sim_detail {

struct CalTrialContext {
  SaaInstance inst;
  PrecoderSolution sol;
  Eigen::MatrixXcd truth;
  int trial = 0;
};

struct CalStats {
  long att[3] = {0, 0, 0};
  long err[3] = {0, 0, 0};
  long bits = 0;
  long uses = 0;

  // class 0 = common, class 1 = both private streams pooled
  long class_att(int c) const { return c == 0 ? att[0] : att[1] + att[2]; }
  long class_err(int c) const { return c == 0 ? err[0] : err[1] + err[2]; }
  double class_bler(int c) const {
    const long a = class_att(c);
    return a > 0 ? static_cast<double>(class_err(c)) / a : 0.0;
  }
  double class_bler_ucb(int c, double z) const {
    const long a = class_att(c);
    if (a == 0) return 0.0;
    const double p = class_bler(c);
    return p + z * std::sqrt(std::max(p * (1.0 - p), 1e-12) / a);
  }
  double throughput() const { return uses > 0 ? static_cast<double>(bits) / uses : 0.0; }
};

/// Runs the coded chain for one prepared trial under candidate back-offs.
inline void cal_run(const CampaignConfig& cfg, double snr_db, const CalTrialContext& ctx,
                    double bo_c, double bo_p, CalStats& st) {
  using sim_detail::substream_seed;
  const std::uint64_t sk = snr_key(snr_db);
  const std::uint64_t tr = static_cast<std::uint64_t>(ctx.trial);
  st.uses += cfg.symbols;
  if (ctx.sol.status == SolveStatus::infeasible) return;
  const RateAllocation backed = apply_backoff(ctx.inst, ctx.sol.precoders, ctx.sol.rates, bo_c, bo_p);
  const std::array<std::uint64_t, 3> il_seeds = {
      substream_seed(cfg.seed, {stream_tag::kInterleaver, sk, tr, 0}),
      substream_seed(cfg.seed, {stream_tag::kInterleaver, sk, tr, 1}),
      substream_seed(cfg.seed, {stream_tag::kInterleaver, sk, tr, 2})};
  const LinkConfig link = build_link(ctx.inst, ctx.sol.precoders, backed, cfg.beta, cfg.symbols,
                                     cfg.crc, cfg.list_size, bo_c, bo_p, il_seeds);
  Rng data_rng = Rng::substream(cfg.seed, {stream_tag::kData, sk, tr});
  const SplitMessage msg = split_payload(link, backed, data_rng);
  const TransmitBlock blk = transmit(msg, link);
  Rng noise_rng = Rng::substream(cfg.seed, {stream_tag::kNoise, sk, tr});
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXcd hk = ctx.truth.col(k);
    std::vector<cdouble> y(cfg.symbols);
    for (int t = 0; t < cfg.symbols; ++t) {
      cdouble v = 0.0;
      for (int r = 0; r < hk.size(); ++r) v += std::conj(hk[r]) * blk.x(r, t);
      y[t] = v + noise_rng.cgaussian();
    }
    const ReceiveResult rx = receive_sic(y, hk, k, link);
    const MergeOutcome merged = merge_messages(msg, rx, k);
    st.bits += merged.recovered_bits;
    if (rx.common_attempted) {
      st.att[0] += 1;
      if (merged.common_error) st.err[0] += 1;
    }
    if (rx.private_attempted) {
      st.att[k + 1] += 1;
      if (merged.private_error) st.err[k + 1] += 1;
    }
  }
}

}  // namespace sim_detail

/// Per (scheme, SNR, stream class): among candidate back-offs whose per-stream
/// BLER upper-confidence bound meets the target, pick the throughput
/// maximizer (ties toward the smallest back-off). A coarse sweep with equal
/// class back-offs is refined around its winner. When no candidate meets the
/// target the largest grid value is used and flagged.
inline CalibrationResult calibrate_backoff(const CampaignConfig& cfg,
                                           const CalibrationOptions& opt = {}) {
  if (opt.grid_db.empty()) throw std::invalid_argument("calibrate_backoff: empty grid");
  CalibrationResult out;
  for (double snr : cfg.snr_db) {
    // Prepare per-trial contexts once; the precoder solve is back-off free.
    std::vector<sim_detail::CalTrialContext> ctxs(cfg.trials);
    const std::uint64_t sk = sim_detail::snr_key(snr);
    const double pt = std::pow(10.0, snr / 10.0);
    const CsitModel model = CsitModel::from_alpha(pt, cfg.alpha);
    for (int t = 0; t < cfg.trials; ++t) {
      Rng est_rng = Rng::substream(cfg.seed, {stream_tag::kEstimate, sk, (std::uint64_t)t});
      const Eigen::MatrixXcd estimate = sample_estimate(2, 2, est_rng);
      Rng saa_rng = Rng::substream(cfg.seed, {stream_tag::kSaaError, sk, (std::uint64_t)t});
      ctxs[t].inst = SaaInstance::draw(estimate, model, cfg.saa_samples, saa_rng);
      ctxs[t].sol = optimize(cfg.scheme, ctxs[t].inst, cfg.solver_options());
      Rng truth_rng = Rng::substream(cfg.seed, {stream_tag::kTrueChannel, sk, (std::uint64_t)t});
      ctxs[t].truth = sample_realization(estimate, model, truth_rng).realization;
      ctxs[t].trial = t;
    }

    auto evaluate = [&](double bo_c, double bo_p) {
      sim_detail::CalStats st;
      for (const auto& ctx : ctxs) sim_detail::cal_run(cfg, snr, ctx, bo_c, bo_p, st);
      return st;
    };
    auto feasible = [&](const sim_detail::CalStats& st) {
      for (int c = 0; c < 2; ++c) {
        if (st.class_att(c) == 0) continue;
        if (st.class_bler_ucb(c, opt.confidence_z) > opt.bler_target) return false;
        if (st.class_bler(c) > opt.selection_margin * opt.bler_target) return false;
      }
      return true;
    };

    struct Cand {
      double bo_c, bo_p, tp;
      bool ok;
    };
    std::vector<Cand> cands;
    auto probe = [&](double bc, double bp) {
      for (const Cand& c : cands)
        if (c.bo_c == bc && c.bo_p == bp) return;
      const sim_detail::CalStats st = evaluate(bc, bp);
      cands.push_back({bc, bp, st.throughput(), feasible(st)});
    };
    auto best_of = [&]() {
      int best = -1;
      for (std::size_t i = 0; i < cands.size(); ++i) {
        if (!cands[i].ok) continue;
        if (best < 0) {
          best = (int)i;
          continue;
        }
        const Cand& a = cands[i];
        const Cand& b = cands[best];
        if (a.tp > b.tp + 1e-12 ||
            (std::abs(a.tp - b.tp) <= 1e-12 && a.bo_c + a.bo_p < b.bo_c + b.bo_p - 1e-12))
          best = (int)i;
      }
      return best;
    };

    // Coarse equal back-offs, then independent per-class sweeps (the common
    // and private streams need very different margins), then a local polish.
    for (double b : opt.grid_db) probe(b, b);
    int best = best_of();
    double c_c = best >= 0 ? cands[best].bo_c : opt.grid_db.back();
    double c_p = best >= 0 ? cands[best].bo_p : opt.grid_db.back();
    for (double b : opt.grid_db) probe(b, c_p);
    best = best_of();
    if (best >= 0) {
      c_c = cands[best].bo_c;
      c_p = cands[best].bo_p;
    }
    for (double b : opt.grid_db) probe(c_c, b);
    best = best_of();
    if (best >= 0) {
      c_c = cands[best].bo_c;
      c_p = cands[best].bo_p;
    }
    const double step = opt.grid_db.size() > 1 ? opt.grid_db[1] - opt.grid_db[0] : 0.5;
    for (int dc = -1; dc <= 1; ++dc)
      for (int dp = -1; dp <= 1; ++dp) {
        const double bc = c_c + dc * step * 0.5;
        const double bp = c_p + dp * step * 0.5;
        if (bc < 0 || bp < 0 || bc > opt.grid_db.back() || bp > opt.grid_db.back()) continue;
        probe(bc, bp);
      }
    best = best_of();
    double bo_c, bo_p;
    if (best >= 0) {
      bo_c = cands[best].bo_c;
      bo_p = cands[best].bo_p;
    } else {
      bo_c = bo_p = opt.grid_db.back();
      std::ostringstream os;
      os << scheme_name(cfg.scheme) << " @ " << snr
         << " dB: no candidate met the BLER target, using the largest back-off";
      out.warnings.push_back(os.str());
    }
    out.table.append(cfg.scheme, snr, StreamClass::common, bo_c);
    out.table.append(cfg.scheme, snr, StreamClass::priv, bo_p);
  }
  return out;
}

}  // namespace rsma
