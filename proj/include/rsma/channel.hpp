#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rsma/rng.hpp"

namespace rsma {

/// Channel matrices are n_t x n_users; column k is user k's channel vector.
using ChannelMatrix = Eigen::MatrixXcd;

/// Error variance of the CSIT estimate: sigma_e^2 = Pt^(-alpha).
inline double error_variance(double pt, double alpha) {
  if (pt <= 0.0) throw std::domain_error("error_variance: Pt must be positive");
  if (alpha < 0.0) throw std::domain_error("error_variance: alpha must be nonnegative");
  return std::pow(pt, -alpha);
}

/// Imperfect-CSIT model: transmit power and quality scaling exponent.
struct CsitModel {
  double alpha = 0.0;
  double pt = 1.0;
  double sigma_e2 = 1.0;

  static CsitModel from_alpha(double pt, double alpha) {
    CsitModel m;
    m.alpha = alpha;
    m.pt = pt;
    m.sigma_e2 = error_variance(pt, alpha);
    return m;
  }

  /// Explicit error variance (sigma_e2 = 0 models the perfect-CSIT limit).
  static CsitModel with_error_variance(double pt, double sigma_e2) {
    if (pt <= 0.0) throw std::domain_error("CsitModel: Pt must be positive");
    if (sigma_e2 < 0.0 || sigma_e2 > 1.0)
      throw std::domain_error("CsitModel: sigma_e2 must lie in [0,1]");
    CsitModel m;
    m.alpha = sigma_e2 > 0.0 ? -std::log(sigma_e2) / std::log(pt) : 0.0;
    m.pt = pt;
    m.sigma_e2 = sigma_e2;
    return m;
  }
};

/// One conditional channel draw: realization = sqrt(1-sigma_e^2)*estimate + sigma_e*error.
struct ChannelSet {
  ChannelMatrix estimate;
  ChannelMatrix error;
  ChannelMatrix realization;
  CsitModel model;
};

/// i.i.d. CN(0,1) channel estimate, n_t x n_users.
inline ChannelMatrix sample_estimate(int n_t, int n_users, Rng& rng) {
  if (n_t < 1 || n_users < 1)
    throw std::domain_error("sample_estimate: dimensions must be >= 1");
  ChannelMatrix h(n_t, n_users);
  for (int c = 0; c < n_users; ++c)
    for (int r = 0; r < n_t; ++r) h(r, c) = rng.cgaussian();
  return h;
}

/// Draws one realization conditioned on the estimate.
inline ChannelSet sample_realization(const ChannelMatrix& estimate, const CsitModel& model,
                                     Rng& rng) {
  ChannelSet set;
  set.estimate = estimate;
  set.model = model;
  set.error = ChannelMatrix(estimate.rows(), estimate.cols());
  for (Eigen::Index c = 0; c < estimate.cols(); ++c)
    for (Eigen::Index r = 0; r < estimate.rows(); ++r) set.error(r, c) = rng.cgaussian();
  const double se = std::sqrt(model.sigma_e2);
  const double sc = std::sqrt(1.0 - model.sigma_e2);
  set.realization = sc * set.estimate + se * set.error;
  return set;
}

/// M conditional realizations sharing one estimate (the SAA ensemble).
inline std::vector<ChannelSet> sample_realizations(const ChannelMatrix& estimate,
                                                   const CsitModel& model, int count, Rng& rng) {
  if (count < 1) throw std::domain_error("sample_realizations: count must be >= 1");
  std::vector<ChannelSet> sets;
  sets.reserve(count);
  for (int m = 0; m < count; ++m) sets.push_back(sample_realization(estimate, model, rng));
  return sets;
}

}  // namespace rsma
