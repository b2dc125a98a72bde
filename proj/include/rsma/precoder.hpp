#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsma/channel.hpp"
#include "rsma/detail/qcqp.hpp"
#include "rsma/rng.hpp"

namespace rsma {

enum class Scheme { rsma, sdma, noma };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::rsma: return "rsma";
    case Scheme::sdma: return "sdma";
    case Scheme::noma: return "noma";
  }
  return "?";
}

/// Linear precoders for the common stream and the two private streams.
struct PrecoderMatrix {
  Eigen::VectorXcd p_c;
  std::array<Eigen::VectorXcd, 2> p;

  static PrecoderMatrix zero(int n_t) {
    PrecoderMatrix m;
    m.p_c = Eigen::VectorXcd::Zero(n_t);
    m.p[0] = Eigen::VectorXcd::Zero(n_t);
    m.p[1] = Eigen::VectorXcd::Zero(n_t);
    return m;
  }

  double common_power() const { return p_c.squaredNorm(); }
  double private_power(int k) const { return p[k].squaredNorm(); }
  double total_power() const { return common_power() + private_power(0) + private_power(1); }
};

/// Average (SAA) rates in bps/Hz plus the common-rate split.
struct RateAllocation {
  std::array<double, 2> common_rate_user{0.0, 0.0};  // Rbar_{c,k}
  std::array<double, 2> private_rate{0.0, 0.0};      // Rbar_k
  std::array<double, 2> common_share{0.0, 0.0};      // Cbar_k

  double common_rate() const { return std::min(common_rate_user[0], common_rate_user[1]); }
  double user_total(int k) const { return common_share[k] + private_rate[k]; }
  double objective() const { return user_total(0) + user_total(1); }
};

struct SolverOptions {
  int saa_samples = 1000;
  int max_iterations = 200;
  double tolerance = 1e-4;  // relative objective change
  double qos_rate = 0.0;    // R0 in bps/Hz
};

enum class SolveStatus { ok, infeasible };

struct PrecoderSolution {
  PrecoderMatrix precoders;
  RateAllocation rates;
  SolveStatus status = SolveStatus::ok;
  Scheme scheme = Scheme::rsma;
  int noma_weak_user = -1;
  std::vector<double> objective_trace;  // accepted objectives, bps/Hz
};

/// One channel estimate together with its fixed SAA conditional ensemble.
struct SaaInstance {
  Eigen::MatrixXcd estimate;  // n_t x 2
  CsitModel model;
  std::array<Eigen::MatrixXcd, 2> h;  // per user: n_t x M realizations

  int sample_count() const { return static_cast<int>(h[0].cols()); }
  int n_t() const { return static_cast<int>(estimate.rows()); }

  static SaaInstance draw(const Eigen::MatrixXcd& estimate, const CsitModel& model, int m,
                          Rng& rng) {
    if (estimate.cols() != 2) throw std::invalid_argument("SaaInstance: two users required");
    if (m < 1) throw std::invalid_argument("SaaInstance: need at least one sample");
    SaaInstance inst;
    inst.estimate = estimate;
    inst.model = model;
    const int nt = static_cast<int>(estimate.rows());
    inst.h[0].resize(nt, m);
    inst.h[1].resize(nt, m);
    const double se = std::sqrt(model.sigma_e2);
    const double sc = std::sqrt(1.0 - model.sigma_e2);
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < 2; ++k)
        for (int r = 0; r < nt; ++r)
          inst.h[k](r, i) = sc * estimate(r, k) + se * rng.cgaussian();
    return inst;
  }
};

struct StreamSinrs {
  double common = 0.0;
  double priv = 0.0;
};

/// SINRs of the common and private streams at both users for one realization,
/// unit noise variance. The private-stream SINR assumes the common stream has
/// been cancelled.
inline std::array<StreamSinrs, 2> instantaneous_sinrs(const Eigen::MatrixXcd& realization,
                                                      const PrecoderMatrix& pm) {
  std::array<StreamSinrs, 2> out;
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXcd hk = realization.col(k);
    const double xc = std::norm(hk.dot(pm.p_c));
    const double x1 = std::norm(hk.dot(pm.p[0]));
    const double x2 = std::norm(hk.dot(pm.p[1]));
    out[k].common = xc / (x1 + x2 + 1.0);
    const double own = k == 0 ? x1 : x2;
    const double other = k == 0 ? x2 : x1;
    out[k].priv = own / (other + 1.0);
  }
  return out;
}

namespace precoder_detail {

/// h_k^H p for the i-th stored realization, straight pointer walk.
inline std::complex<double> column_dot(const Eigen::MatrixXcd& h, int i,
                                       const Eigen::VectorXcd& p) {
  const std::complex<double>* hc = h.data() + static_cast<std::ptrdiff_t>(i) * h.rows();
  std::complex<double> acc = 0.0;
  for (Eigen::Index r = 0; r < h.rows(); ++r) acc += std::conj(hc[r]) * p[r];
  return acc;
}

}  // namespace precoder_detail

/// SAA average rates over the instance ensemble. The per-stream SINR scale
/// factors implement energy back-off (1.0 = no back-off). Shares are left 0.
inline RateAllocation saa_rates(const SaaInstance& inst, const PrecoderMatrix& pm,
                                double scale_common = 1.0, double scale_private = 1.0) {
  RateAllocation r;
  const int m = inst.sample_count();
  const double inv_ln2 = 1.0 / std::numbers::ln2;
  for (int k = 0; k < 2; ++k) {
    double acc_c = 0.0, acc_p = 0.0;
    for (int i = 0; i < m; ++i) {
      const double xc = std::norm(precoder_detail::column_dot(inst.h[k], i, pm.p_c));
      const double x1 = std::norm(precoder_detail::column_dot(inst.h[k], i, pm.p[0]));
      const double x2 = std::norm(precoder_detail::column_dot(inst.h[k], i, pm.p[1]));
      const double gc = xc / (x1 + x2 + 1.0);
      const double own = k == 0 ? x1 : x2;
      const double other = k == 0 ? x2 : x1;
      const double gp = own / (other + 1.0);
      acc_c += std::log1p(scale_common * gc);
      acc_p += std::log1p(scale_private * gp);
    }
    r.common_rate_user[k] = acc_c * inv_ln2 / m;
    r.private_rate[k] = acc_p * inv_ln2 / m;
  }
  return r;
}

/// Average rates for a given estimate under the CSIT model, drawing a fresh
/// M-sample conditional ensemble.
inline RateAllocation average_rates(const Eigen::MatrixXcd& estimate, const CsitModel& model,
                                    const PrecoderMatrix& pm, const SolverOptions& opts,
                                    Rng& rng) {
  const SaaInstance inst = SaaInstance::draw(estimate, model, opts.saa_samples, rng);
  return saa_rates(inst, pm);
}

// ---------------------------------------------------------------------------
// ASR maximization by alternating optimization on the AWMMSE surrogate.
// ---------------------------------------------------------------------------

namespace precoder_detail {

inline constexpr double kSharePad = 1e-10;
inline constexpr double kPowerPad = 1e-12;

/// Active variables of the restricted problem (per scheme).
struct Layout {
  int nt = 2;
  bool common = false;
  std::array<bool, 2> priv{false, false};
  std::array<bool, 2> share{false, false};
  bool minimax_t = false;
  int off_c = -1;
  std::array<int, 2> off_p{-1, -1};
  std::array<int, 2> off_s{-1, -1};
  int off_t = -1;
  int dim = 0;

  static Layout make(int nt, bool common, std::array<bool, 2> priv, std::array<bool, 2> share,
                     bool minimax_t = false) {
    Layout lo;
    lo.nt = nt;
    lo.common = common;
    lo.priv = priv;
    lo.share = share;
    lo.minimax_t = minimax_t;
    int off = 0;
    if (common) {
      lo.off_c = off;
      off += 2 * nt;
    }
    for (int k = 0; k < 2; ++k)
      if (priv[k]) {
        lo.off_p[k] = off;
        off += 2 * nt;
      }
    for (int k = 0; k < 2; ++k)
      if (share[k]) {
        lo.off_s[k] = off;
        off += 1;
      }
    if (minimax_t) {
      lo.off_t = off;
      off += 1;
    }
    lo.dim = off;
    return lo;
  }
};

struct State {
  PrecoderMatrix pm;
  std::array<double, 2> share_nats{0.0, 0.0};
};

inline Eigen::VectorXd pack(const Layout& lo, const State& st, double t_val = 0.0) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(lo.dim);
  auto put = [&](int off, const Eigen::VectorXcd& v) {
    z.segment(off, lo.nt) = v.real();
    z.segment(off + lo.nt, lo.nt) = v.imag();
  };
  if (lo.common) put(lo.off_c, st.pm.p_c);
  for (int k = 0; k < 2; ++k)
    if (lo.priv[k]) put(lo.off_p[k], st.pm.p[k]);
  for (int k = 0; k < 2; ++k)
    if (lo.share[k]) z[lo.off_s[k]] = st.share_nats[k];
  if (lo.minimax_t) z[lo.off_t] = t_val;
  return z;
}

inline State unpack(const Layout& lo, const Eigen::VectorXd& z) {
  State st;
  st.pm = PrecoderMatrix::zero(lo.nt);
  auto get = [&](int off) {
    Eigen::VectorXcd v(lo.nt);
    for (int i = 0; i < lo.nt; ++i) v[i] = {z[off + i], z[off + lo.nt + i]};
    return v;
  };
  if (lo.common) st.pm.p_c = get(lo.off_c);
  for (int k = 0; k < 2; ++k)
    if (lo.priv[k]) st.pm.p[k] = get(lo.off_p[k]);
  for (int k = 0; k < 2; ++k)
    if (lo.share[k]) st.share_nats[k] = std::max(0.0, z[lo.off_s[k]]);
  return st;
}

/// SAA-averaged AWMMSE coefficients for the current precoders: quadratic
/// matrices, linear vectors and constants of the per-user common and private
/// augmented weighted MSEs.
struct RoundStats {
  std::array<Eigen::MatrixXcd, 2> a_c, a_p;
  std::array<Eigen::VectorXcd, 2> b_c, b_p;
  std::array<double, 2> kap_c{0.0, 0.0}, kap_p{0.0, 0.0};
};

inline RoundStats accumulate(const SaaInstance& inst, const Layout& lo,
                             const PrecoderMatrix& pm) {
  const int nt = lo.nt;
  const int m = inst.sample_count();
  RoundStats rs;
  for (int k = 0; k < 2; ++k) {
    rs.a_c[k] = Eigen::MatrixXcd::Zero(nt, nt);
    rs.a_p[k] = Eigen::MatrixXcd::Zero(nt, nt);
    rs.b_c[k] = Eigen::VectorXcd::Zero(nt);
    rs.b_p[k] = Eigen::VectorXcd::Zero(nt);
  }
  for (int k = 0; k < 2; ++k) {
    std::complex<double>* ac = rs.a_c[k].data();
    std::complex<double>* ap = rs.a_p[k].data();
    std::complex<double>* bc = rs.b_c[k].data();
    std::complex<double>* bp = rs.b_p[k].data();
    for (int i = 0; i < m; ++i) {
      const std::complex<double>* hk = inst.h[k].data() + static_cast<std::ptrdiff_t>(i) * nt;
      std::complex<double> xc = 0.0, x1 = 0.0, x2 = 0.0;
      for (int r = 0; r < nt; ++r) {
        const std::complex<double> hr = std::conj(hk[r]);
        xc += hr * pm.p_c[r];
        x1 += hr * pm.p[0][r];
        x2 += hr * pm.p[1][r];
      }
      const double tp = std::norm(x1) + std::norm(x2) + 1.0;  // private stage total
      if (lo.common) {
        const double tc = std::norm(xc) + tp;
        const double eps = std::max(1.0 - std::norm(xc) / tc, 1e-14);
        const double u = 1.0 / eps;
        const double g2 = std::norm(xc) / (tc * tc);
        for (int c = 0; c < nt; ++c)
          for (int r = 0; r < nt; ++r) ac[c * nt + r] += (u * g2) * hk[r] * std::conj(hk[c]);
        const std::complex<double> w = (u / tc) * xc;
        for (int r = 0; r < nt; ++r) bc[r] += w * hk[r];
        rs.kap_c[k] += u * (g2 + 1.0) - std::log(u);
      }
      if (lo.priv[k]) {
        const std::complex<double> xk = k == 0 ? x1 : x2;
        const double eps = std::max(1.0 - std::norm(xk) / tp, 1e-14);
        const double u = 1.0 / eps;
        const double g2 = std::norm(xk) / (tp * tp);
        for (int c = 0; c < nt; ++c)
          for (int r = 0; r < nt; ++r) ap[c * nt + r] += (u * g2) * hk[r] * std::conj(hk[c]);
        const std::complex<double> w = (u / tp) * xk;
        for (int r = 0; r < nt; ++r) bp[r] += w * hk[r];
        rs.kap_p[k] += u * (g2 + 1.0) - std::log(u);
      }
    }
    rs.a_c[k] /= m;
    rs.a_p[k] /= m;
    rs.b_c[k] /= m;
    rs.b_p[k] /= m;
    rs.kap_c[k] /= m;
    rs.kap_p[k] /= m;
  }
  return rs;
}

/// Adds the averaged AWMSE xi_bar_{c,k} to q (quadratic over all active
/// streams, linear in p_c).
inline void add_common_wmse(qcqp::Quad& q, const Layout& lo, const RoundStats& rs, int k) {
  q.add_hermitian(lo.off_c, rs.a_c[k]);
  for (int j = 0; j < 2; ++j)
    if (lo.priv[j]) q.add_hermitian(lo.off_p[j], rs.a_c[k]);
  q.add_linear(lo.off_c, rs.b_c[k], -2.0);
  q.c += rs.kap_c[k];
}

/// Adds the averaged AWMSE xi_bar_k (quadratic over active private streams,
/// linear in p_k).
inline void add_private_wmse(qcqp::Quad& q, const Layout& lo, const RoundStats& rs, int k) {
  for (int j = 0; j < 2; ++j)
    if (lo.priv[j]) q.add_hermitian(lo.off_p[j], rs.a_p[k]);
  q.add_linear(lo.off_p[k], rs.b_p[k], -2.0);
  q.c += rs.kap_p[k];
}

inline double nats(double bits) { return bits * std::numbers::ln2; }
inline double bits(double nats_v) { return nats_v / std::numbers::ln2; }

/// Private-stage rates in nats under the current layout (inactive streams 0).
inline std::array<double, 2> private_rate_nats(const SaaInstance& inst, const Layout& lo,
                                               const PrecoderMatrix& pm) {
  const RateAllocation r = saa_rates(inst, pm);
  std::array<double, 2> out{0.0, 0.0};
  for (int k = 0; k < 2; ++k)
    if (lo.priv[k]) out[k] = nats(r.private_rate[k]);
  return out;
}

inline double common_budget_nats(const SaaInstance& inst, const Layout& lo,
                                 const PrecoderMatrix& pm) {
  if (!lo.common) return 0.0;
  const RateAllocation r = saa_rates(inst, pm);
  return nats(r.common_rate());
}

struct AoResult {
  State st;
  double objective_nats = 0.0;
  std::vector<double> trace_bits;
};

enum class AoMode { sum_rate, max_min };

/// Private-streams-only subproblem (no common stream, shares or QoS): the
/// weighted-MSE objective separates per precoder under the power constraint,
/// so the optimum is p_j = (A + lambda I)^-1 b_j with the multiplier found by
/// bisection on the power.
inline PrecoderMatrix separable_subproblem(const Layout& lo, const RoundStats& rs, double pt) {
  const int nt = lo.nt;
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(nt, nt);
  for (int k = 0; k < 2; ++k)
    if (lo.priv[k]) a += rs.a_p[k];

  auto solve_at = [&](double lambda, PrecoderMatrix& pm) {
    Eigen::MatrixXcd shifted = a;
    shifted.diagonal().array() += lambda;
    const Eigen::LDLT<Eigen::MatrixXcd> ldlt(shifted);
    double power = 0.0;
    for (int k = 0; k < 2; ++k) {
      if (!lo.priv[k]) continue;
      pm.p[k] = ldlt.solve(rs.b_p[k]);
      power += pm.p[k].squaredNorm();
    }
    return power;
  };

  PrecoderMatrix pm = PrecoderMatrix::zero(nt);
  if (solve_at(0.0, pm) <= pt) return pm;
  double lo_l = 0.0, hi_l = 1e-9;
  while (solve_at(hi_l, pm) > pt) {
    lo_l = hi_l;
    hi_l *= 4.0;
    if (hi_l > 1e18) break;
  }
  for (int it = 0; it < 120; ++it) {
    const double mid = 0.5 * (lo_l + hi_l);
    if (solve_at(mid, pm) > pt)
      lo_l = mid;
    else
      hi_l = mid;
  }
  solve_at(hi_l, pm);  // final point respects the budget
  return pm;
}

/// Alternating optimization: refresh MMSE equalizers/weights, solve the
/// convex precoder subproblem, accept only improving steps.
inline AoResult alternating_opt(const SaaInstance& inst, const Layout& lo, State st,
                                const SolverOptions& opts, AoMode mode, bool qos_active) {
  const double pt = inst.model.pt;
  const double r0n = nats(opts.qos_rate);

  auto true_objective = [&](const State& s) {
    const std::array<double, 2> rp = private_rate_nats(inst, lo, s.pm);
    if (mode == AoMode::sum_rate) {
      double v = rp[0] + rp[1];
      for (int k = 0; k < 2; ++k)
        if (lo.share[k]) v += s.share_nats[k];
      return v;
    }
    // max-min over user totals with the best feasible share split
    const double budget = common_budget_nats(inst, lo, s.pm);
    if (lo.share[0] && lo.share[1]) {
      const double lo_r = std::min(rp[0], rp[1]);
      const double hi_r = std::max(rp[0], rp[1]);
      return lo_r + budget <= hi_r ? lo_r + budget : 0.5 * (lo_r + hi_r + budget);
    }
    for (int k = 0; k < 2; ++k)
      if (lo.share[k]) return std::min(budget, rp[1 - k]);
    return std::min(rp[0], rp[1]);
  };

  AoResult res;
  res.st = std::move(st);
  res.objective_nats = true_objective(res.st);
  res.trace_bits.push_back(bits(res.objective_nats));

  const bool separable = mode == AoMode::sum_rate && !lo.common && !lo.share[0] &&
                         !lo.share[1] && !(qos_active && r0n > 0.0);

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const RoundStats rs = accumulate(inst, lo, res.st.pm);

    if (separable) {
      State cand;
      cand.pm = separable_subproblem(lo, rs, pt);
      const double obj = true_objective(cand);
      if (!(obj > res.objective_nats)) break;
      const double rel = (obj - res.objective_nats) / std::max(std::abs(obj), 1e-12);
      res.st = std::move(cand);
      res.objective_nats = obj;
      res.trace_bits.push_back(bits(obj));
      if (rel < opts.tolerance) break;
      continue;
    }

    qcqp::Quad f0(lo.dim);
    std::vector<qcqp::Quad> gs;
    if (mode == AoMode::sum_rate) {
      for (int k = 0; k < 2; ++k)
        if (lo.priv[k]) add_private_wmse(f0, lo, rs, k);
      for (int k = 0; k < 2; ++k)
        if (lo.share[k]) f0.l[lo.off_s[k]] -= 1.0;
    } else {
      f0.l[lo.off_t] -= 1.0;
    }

    if (lo.common) {
      for (int k = 0; k < 2; ++k) {
        qcqp::Quad g(lo.dim);
        add_common_wmse(g, lo, rs, k);
        g.c -= 1.0;
        for (int j = 0; j < 2; ++j)
          if (lo.share[j]) g.l[lo.off_s[j]] += 1.0;
        gs.push_back(std::move(g));
      }
    }
    if (mode == AoMode::sum_rate && qos_active && r0n > 0.0) {
      for (int k = 0; k < 2; ++k) {
        if (!lo.share[k] && !lo.priv[k]) continue;
        qcqp::Quad g(lo.dim);
        g.c += r0n;
        if (lo.share[k]) g.l[lo.off_s[k]] -= 1.0;
        if (lo.priv[k]) {
          g.c -= 1.0;
          add_private_wmse(g, lo, rs, k);
        }
        gs.push_back(std::move(g));
      }
    }
    if (mode == AoMode::max_min) {
      for (int k = 0; k < 2; ++k) {
        if (!lo.share[k] && !lo.priv[k]) continue;
        qcqp::Quad g(lo.dim);
        g.l[lo.off_t] += 1.0;
        if (lo.share[k]) g.l[lo.off_s[k]] -= 1.0;
        if (lo.priv[k]) {
          g.c -= 1.0;
          add_private_wmse(g, lo, rs, k);
        }
        gs.push_back(std::move(g));
      }
    }
    for (int k = 0; k < 2; ++k)
      if (lo.share[k]) {
        qcqp::Quad g(lo.dim);
        g.l[lo.off_s[k]] -= 1.0;
        gs.push_back(std::move(g));
      }
    {
      qcqp::Quad g(lo.dim);
      if (lo.common) g.add_norm2(lo.off_c, lo.nt, 1.0 / pt);
      for (int k = 0; k < 2; ++k)
        if (lo.priv[k]) g.add_norm2(lo.off_p[k], lo.nt, 1.0 / pt);
      g.c -= 1.0;
      gs.push_back(std::move(g));
    }

    // The warm start must satisfy the power budget before packing.
    const double tot = res.st.pm.total_power();
    if (tot > pt) {
      const double sc = std::sqrt(pt / tot * (1.0 - 1e-12));
      res.st.pm.p_c *= sc;
      res.st.pm.p[0] *= sc;
      res.st.pm.p[1] *= sc;
    }

    double t_warm = 0.0;
    if (mode == AoMode::max_min) {
      // strictly below the current surrogate min-total
      double tmin = std::numeric_limits<double>::infinity();
      const std::array<double, 2> rp = private_rate_nats(inst, lo, res.st.pm);
      for (int k = 0; k < 2; ++k) {
        if (!lo.share[k] && !lo.priv[k]) continue;
        double tot = (lo.share[k] ? res.st.share_nats[k] : 0.0) + (lo.priv[k] ? rp[k] : 0.0);
        tmin = std::min(tmin, tot);
      }
      t_warm = tmin - 1e-6;
    }
    Eigen::VectorXd z0 = pack(lo, res.st, t_warm);

    std::vector<double> shifts(gs.size());
    for (std::size_t i = 0; i < gs.size(); ++i) {
      const double pad = i + 1 == gs.size() ? kPowerPad : kSharePad;
      shifts[i] = std::max(gs[i].value(z0), 0.0) + pad;
    }

    const qcqp::BarrierResult br = qcqp::barrier_minimize(f0, gs, shifts, std::move(z0));
    if (!br.ok) break;
    State cand = unpack(lo, br.z);
    const double obj = true_objective(cand);
    if (!(obj > res.objective_nats)) break;
    const double rel = (obj - res.objective_nats) / std::max(std::abs(obj), 1e-12);
    res.st = std::move(cand);
    res.objective_nats = obj;
    res.trace_bits.push_back(bits(obj));
    if (rel < opts.tolerance) break;
    if (mode == AoMode::max_min && qos_active && obj >= r0n * (1.0 + 1e-6) + 1e-12) break;
  }
  return res;
}

/// Default warm start: matched private beamformers, common stream (when
/// active) along the dominant left singular vector with a 10% power share.
/// A tiny deterministic asymmetry avoids symmetric saddle points.
inline State default_init(const SaaInstance& inst, const Layout& lo) {
  const int nt = lo.nt;
  const double pt = inst.model.pt;
  State st;
  st.pm = PrecoderMatrix::zero(nt);
  const int n_priv = (lo.priv[0] ? 1 : 0) + (lo.priv[1] ? 1 : 0);
  // RSMA: 10% common / 90% private; NOMA (one private): even split; SDMA: all private.
  const double common_frac = lo.common ? (n_priv == 2 ? 0.1 : 0.5) : 0.0;
  const double priv_budget = pt * (1.0 - common_frac);
  auto unit_toward = [&](int k) {
    Eigen::VectorXcd dir = inst.estimate.col(k);
    const double nrm = dir.norm();
    if (nrm < 1e-12) return Eigen::VectorXcd::Unit(nt, 0).eval();
    return (dir / nrm).eval();
  };
  // The tilt breaks the symmetric saddle of (near-)collinear channels so the
  // alternating optimization can reach single-stream operating points.
  for (int k = 0; k < 2; ++k) {
    if (!lo.priv[k]) continue;
    const double tilt = n_priv == 2 ? (k == 0 ? 1.04 : 0.96) : 1.0;
    st.pm.p[k] = std::sqrt(priv_budget / n_priv * tilt) * unit_toward(k);
  }
  if (lo.common) {
    Eigen::VectorXcd dir;
    if (n_priv == 2) {
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(inst.estimate, Eigen::ComputeThinU);
      dir = svd.matrixU().col(0);
    } else {
      // NOMA: common carries the weak user's message, beam toward it
      dir = unit_toward(lo.priv[0] ? 1 : 0);
    }
    st.pm.p_c = std::sqrt(pt * common_frac) * dir;
  }
  return st;
}

/// Split feasibility under QoS at fixed precoders; fills the lower bounds.
inline bool qos_split_feasible(const SaaInstance& inst, const Layout& lo, const PrecoderMatrix& pm,
                               double r0n, std::array<double, 2>& lb, double& budget) {
  const std::array<double, 2> rp = private_rate_nats(inst, lo, pm);
  budget = common_budget_nats(inst, lo, pm);
  double need = 0.0;
  for (int k = 0; k < 2; ++k) {
    lb[k] = 0.0;
    const double base = lo.priv[k] ? rp[k] : 0.0;
    if (lo.share[k]) {
      lb[k] = std::max(0.0, r0n - base);
      need += lb[k];
    } else if (base < r0n - 1e-9) {
      return false;
    }
  }
  return need <= budget + 1e-9;
}

/// Final share assignment: use the full common budget, honor QoS lower
/// bounds, split the remainder equally (ties toward equal split).
inline void finalize_shares(const SaaInstance& inst, const Layout& lo, State& st, double r0n) {
  const double budget = common_budget_nats(inst, lo, st.pm);
  int n_share = (lo.share[0] ? 1 : 0) + (lo.share[1] ? 1 : 0);
  st.share_nats = {0.0, 0.0};
  if (!lo.common || n_share == 0) return;
  std::array<double, 2> lb{0.0, 0.0};
  const std::array<double, 2> rp = private_rate_nats(inst, lo, st.pm);
  double need = 0.0;
  for (int k = 0; k < 2; ++k)
    if (lo.share[k]) {
      lb[k] = std::max(0.0, r0n - (lo.priv[k] ? rp[k] : 0.0));
      need += lb[k];
    }
  if (need > budget) {
    const double scale = need > 0.0 ? budget / need : 0.0;
    for (int k = 0; k < 2; ++k) st.share_nats[k] = lo.share[k] ? lb[k] * scale : 0.0;
    return;
  }
  const double spread = (budget - need) / n_share;
  for (int k = 0; k < 2; ++k) st.share_nats[k] = lo.share[k] ? lb[k] + spread : 0.0;
}

struct CoreResult {
  State st;
  SolveStatus status = SolveStatus::ok;
  std::vector<double> trace_bits;
};

inline AoResult best_sum_rate_ao(const SaaInstance& inst, const Layout& lo,
                                 const SolverOptions& opts) {
  return alternating_opt(inst, lo, default_init(inst, lo), opts, AoMode::sum_rate, false);
}

/// Restricted ASR solve: unconstrained stage, then (with QoS) a max-min
/// rescue and a constrained stage when the QoS is not already met. The
/// reported trace is the AO sequence of the run that produced the returned
/// solution.
inline CoreResult solve_restricted(const SaaInstance& inst, const Layout& lo,
                                   const SolverOptions& opts) {
  const double r0n = nats(opts.qos_rate);
  CoreResult out;

  AoResult stage_a = best_sum_rate_ao(inst, lo, opts);
  out.trace_bits = stage_a.trace_bits;

  if (opts.qos_rate <= 0.0) {
    out.st = std::move(stage_a.st);
    finalize_shares(inst, lo, out.st, 0.0);
    return out;
  }

  std::array<double, 2> lb{};
  double budget = 0.0;
  if (qos_split_feasible(inst, lo, stage_a.st.pm, r0n, lb, budget)) {
    out.st = std::move(stage_a.st);
    finalize_shares(inst, lo, out.st, r0n);
    return out;
  }

  const Layout lo_rescue = Layout::make(lo.nt, lo.common, lo.priv, lo.share, true);
  AoResult rescue =
      alternating_opt(inst, lo_rescue, stage_a.st, opts, AoMode::max_min, /*qos=*/true);

  if (rescue.objective_nats < r0n - 1e-9) {
    out.st = std::move(stage_a.st);
    finalize_shares(inst, lo, out.st, r0n);
    out.status = SolveStatus::infeasible;
    return out;
  }

  State warm = rescue.st;
  if (qos_split_feasible(inst, lo, warm.pm, r0n, lb, budget)) {
    double need = lb[0] + lb[1];
    const int n_share = (lo.share[0] ? 1 : 0) + (lo.share[1] ? 1 : 0);
    for (int k = 0; k < 2; ++k)
      if (lo.share[k]) warm.share_nats[k] = lb[k] + (n_share ? (budget - need) / n_share : 0.0);
  }
  AoResult stage_b = alternating_opt(inst, lo, warm, opts, AoMode::sum_rate, /*qos=*/true);
  out.trace_bits = std::move(stage_b.trace_bits);
  out.st = std::move(stage_b.st);
  finalize_shares(inst, lo, out.st, r0n);
  return out;
}

inline PrecoderSolution make_solution(const SaaInstance& inst, const Layout& lo, CoreResult core,
                                      Scheme scheme, int weak = -1) {
  PrecoderSolution sol;
  sol.precoders = core.st.pm;
  sol.rates = saa_rates(inst, sol.precoders);
  if (!lo.common) sol.rates.common_rate_user = {0.0, 0.0};
  sol.rates.common_share = {bits(core.st.share_nats[0]), bits(core.st.share_nats[1])};
  sol.status = core.status;
  sol.scheme = scheme;
  sol.noma_weak_user = weak;
  sol.objective_trace = std::move(core.trace_bits);
  return sol;
}

}  // namespace precoder_detail

/// SDMA: private streams only (common stream and shares switched off).
inline PrecoderSolution optimize_sdma(const SaaInstance& inst, const SolverOptions& opts) {
  using namespace precoder_detail;
  const Layout lo = Layout::make(inst.n_t(), false, {true, true}, {false, false});
  return make_solution(inst, lo, solve_restricted(inst, lo, opts), Scheme::sdma);
}

/// NOMA: the weak user's private stream is off and its message rides the
/// common stream; the strong user keeps no common share. The weak user is
/// the one with the smaller estimated channel norm; when the norms are
/// within 1 dB both orders are solved and the better objective kept.
inline PrecoderSolution optimize_noma(const SaaInstance& inst, const SolverOptions& opts) {
  using namespace precoder_detail;
  const double g0 = inst.estimate.col(0).squaredNorm();
  const double g1 = inst.estimate.col(1).squaredNorm();
  const double diff_db = 10.0 * std::log10(std::max(g0, 1e-300) / std::max(g1, 1e-300));
  std::vector<int> weak_candidates;
  if (std::abs(diff_db) < 1.0)
    weak_candidates = {0, 1};
  else
    weak_candidates = {diff_db < 0.0 ? 0 : 1};

  PrecoderSolution best;
  bool have = false;
  for (int w : weak_candidates) {
    std::array<bool, 2> priv{false, false};
    std::array<bool, 2> share{false, false};
    priv[1 - w] = true;
    share[w] = true;
    const Layout lo = Layout::make(inst.n_t(), true, priv, share);
    PrecoderSolution sol =
        make_solution(inst, lo, solve_restricted(inst, lo, opts), Scheme::noma, w);
    const bool better =
        !have ||
        (sol.status == SolveStatus::ok && best.status == SolveStatus::infeasible) ||
        (sol.status == best.status && sol.rates.objective() > best.rates.objective());
    if (better) {
      best = std::move(sol);
      have = true;
    }
  }
  return best;
}

/// RSMA ASR maximization. SDMA and NOMA solutions are valid points of the
/// RSMA feasible set, so they are solved as candidates and the best feasible
/// objective is returned; this keeps the restriction ordering exact.
inline PrecoderSolution optimize_rsma(const SaaInstance& inst, const SolverOptions& opts) {
  using namespace precoder_detail;
  const Layout lo = Layout::make(inst.n_t(), true, {true, true}, {true, true});
  PrecoderSolution full =
      make_solution(inst, lo, solve_restricted(inst, lo, opts), Scheme::rsma);

  PrecoderSolution cands[2] = {optimize_sdma(inst, opts), optimize_noma(inst, opts)};
  PrecoderSolution best = std::move(full);
  for (auto& c : cands) {
    const bool better =
        (c.status == SolveStatus::ok && best.status == SolveStatus::infeasible) ||
        (c.status == best.status && c.rates.objective() > best.rates.objective());
    if (better) {
      c.scheme = Scheme::rsma;
      best = std::move(c);
    }
  }
  return best;
}

inline PrecoderSolution optimize(Scheme scheme, const SaaInstance& inst,
                                 const SolverOptions& opts) {
  switch (scheme) {
    case Scheme::rsma: return optimize_rsma(inst, opts);
    case Scheme::sdma: return optimize_sdma(inst, opts);
    case Scheme::noma: return optimize_noma(inst, opts);
  }
  throw std::logic_error("optimize: unknown scheme");
}

/// Ergodic sum rate: mean optimized ASR over fresh channel estimates
/// (infeasible instances contribute zero).
inline double ergodic_sum_rate(Scheme scheme, const CsitModel& model, int n_estimates,
                               const SolverOptions& opts, Rng& rng, int n_t = 2) {
  if (n_estimates < 1) throw std::invalid_argument("ergodic_sum_rate: n_estimates >= 1");
  double acc = 0.0;
  for (int i = 0; i < n_estimates; ++i) {
    const Eigen::MatrixXcd est = sample_estimate(n_t, 2, rng);
    const SaaInstance inst = SaaInstance::draw(est, model, opts.saa_samples, rng);
    const PrecoderSolution sol = optimize(scheme, inst, opts);
    if (sol.status == SolveStatus::ok) acc += sol.rates.objective();
  }
  return acc / n_estimates;
}

}  // namespace rsma
