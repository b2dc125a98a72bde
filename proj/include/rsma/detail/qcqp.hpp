#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace rsma::qcqp {

/// Convex quadratic f(z) = 0.5 z^T Q z + l^T z + c with helpers to embed
/// complex Hermitian forms over the real stacking [Re p; Im p].
struct Quad {
  Eigen::MatrixXd Q;
  Eigen::VectorXd l;
  double c = 0.0;

  explicit Quad(int dim)
      : Q(Eigen::MatrixXd::Zero(dim, dim)), l(Eigen::VectorXd::Zero(dim)) {}

  double value(const Eigen::VectorXd& z) const { return 0.5 * z.dot(Q * z) + l.dot(z) + c; }
  Eigen::VectorXd grad(const Eigen::VectorXd& z) const { return Q * z + l; }

  /// Adds coeff * p^H A p for the complex vector p stored at real offset off
  /// (A Hermitian, coeff >= 0 to preserve convexity).
  void add_hermitian(int off, const Eigen::MatrixXcd& a, double coeff = 1.0) {
    const int nt = static_cast<int>(a.rows());
    const Eigen::MatrixXd re = coeff * 2.0 * a.real();
    const Eigen::MatrixXd im = coeff * 2.0 * a.imag();
    Q.block(off, off, nt, nt) += re;
    Q.block(off + nt, off + nt, nt, nt) += re;
    Q.block(off, off + nt, nt, nt) -= im;
    Q.block(off + nt, off, nt, nt) += im;
  }

  /// Adds coeff * Re{beta^H p} for p at real offset off.
  void add_linear(int off, const Eigen::VectorXcd& beta, double coeff) {
    const int nt = static_cast<int>(beta.size());
    l.segment(off, nt) += coeff * beta.real();
    l.segment(off + nt, nt) += coeff * beta.imag();
  }

  /// Adds coeff * ||p||^2.
  void add_norm2(int off, int nt, double coeff) {
    for (int i = 0; i < 2 * nt; ++i) Q(off + i, off + i) += 2.0 * coeff;
  }
};

struct BarrierOptions {
  double t0 = 32.0;
  double mu = 30.0;
  double gap_tol = 3e-10;       // duality-gap proxy m/t
  double newton_tol = 1e-12;    // half the Newton decrement
  int max_newton_per_stage = 60;
};

struct BarrierResult {
  Eigen::VectorXd z;
  bool ok = false;
};

/// Log-barrier interior-point minimization of f0 subject to g_i(z) <= shift_i.
/// The start must satisfy g_i(z0) < shift_i strictly.
inline BarrierResult barrier_minimize(const Quad& f0, const std::vector<Quad>& gs,
                                      const std::vector<double>& shifts, Eigen::VectorXd z,
                                      const BarrierOptions& opt = {}) {
  const int dim = static_cast<int>(z.size());
  const int m = static_cast<int>(gs.size());
  BarrierResult res;

  auto min_slack = [&](const Eigen::VectorXd& x) {
    double s = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) s = std::min(s, shifts[i] - gs[i].value(x));
    return s;
  };
  if (min_slack(z) <= 0.0) return res;

  auto phi = [&](const Eigen::VectorXd& x, double t) {
    double v = t * f0.value(x);
    for (int i = 0; i < m; ++i) {
      const double s = shifts[i] - gs[i].value(x);
      if (s <= 0.0) return std::numeric_limits<double>::infinity();
      v -= std::log(s);
    }
    return v;
  };

  Eigen::MatrixXd hess(dim, dim);
  Eigen::VectorXd grad(dim);
  for (double t = opt.t0; m > 0 && static_cast<double>(m) / t > opt.gap_tol; t *= opt.mu) {
    for (int it = 0; it < opt.max_newton_per_stage; ++it) {
      hess = t * f0.Q;
      grad = t * f0.grad(z);
      for (int i = 0; i < m; ++i) {
        const double s = shifts[i] - gs[i].value(z);
        const Eigen::VectorXd gi = gs[i].grad(z);
        hess += gi * gi.transpose() / (s * s) + gs[i].Q / s;
        grad += gi / s;
      }
      hess.diagonal().array() += 1e-12 * (1.0 + hess.trace() / dim);
      const Eigen::VectorXd step = Eigen::LDLT<Eigen::MatrixXd>(hess).solve(-grad);
      const double decrement = -0.5 * grad.dot(step);
      if (!(decrement > 0.0)) break;
      if (decrement < opt.newton_tol) break;

      const double phi0 = phi(z, t);
      double a = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::VectorXd cand = z + a * step;
        const double pc = phi(cand, t);
        if (pc <= phi0 - 0.25 * a * 2.0 * decrement || (pc < phi0 && a < 1e-9)) {
          z = cand;
          moved = true;
          break;
        }
        a *= 0.5;
      }
      if (!moved) break;
    }
  }
  res.z = std::move(z);
  res.ok = true;
  return res;
}

}  // namespace rsma::qcqp
