#pragma once

// Reference implementations used as independent oracles by the unit and
// acceptance suites. They deliberately avoid the library's decoding and
// equalizer code paths.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "rsma/polar.hpp"
#include "rsma/precoder.hpp"

namespace rsma::oracles {

/// Plain successive-cancellation decoder (min-sum LLR recursion).
struct ScReference {
  const PolarCode& code;
  BitVector chain_dec;

  BitVector rec(const std::vector<double>& llr, int base) {
    const std::size_t sz = llr.size();
    if (sz == 1) {
      const std::uint8_t b =
          code.chain_frozen[base] ? 0 : static_cast<std::uint8_t>(llr[0] < 0);
      chain_dec[base] = b;
      return {b};
    }
    const std::size_t h = sz / 2;
    std::vector<double> l1(h);
    for (std::size_t j = 0; j < h; ++j) {
      const double a = llr[j], b = llr[j + h];
      const double m = std::min(std::abs(a), std::abs(b));
      l1[j] = (a < 0) == (b < 0) ? m : -m;
    }
    const BitVector c1 = rec(l1, base);
    std::vector<double> l2(h);
    for (std::size_t j = 0; j < h; ++j)
      l2[j] = c1[j] ? llr[j + h] - llr[j] : llr[j + h] + llr[j];
    const BitVector c2 = rec(l2, base + static_cast<int>(h));
    BitVector out(sz);
    for (std::size_t j = 0; j < h; ++j) {
      out[j] = c1[j] ^ c2[j];
      out[j + h] = c2[j];
    }
    return out;
  }

  BitVector decode(std::span<const double> llrs) {
    std::vector<double> ch(code.mother_n);
    for (int i = 0; i < code.mother_n; ++i)
      ch[i] = i < code.block_len ? llrs[i] : polar_detail::kLlrSat;
    chain_dec.assign(code.mother_n, 0);
    rec(ch, 0);
    BitVector payload(code.payload_len());
    for (int t = 0; t < code.payload_len(); ++t)
      payload[t] = chain_dec[polar_detail::bit_reverse(code.info_set[t], code.n_levels)];
    return payload;
  }
};

/// Genie-aided SC Monte-Carlo density evolution for the all-zero codeword:
/// per-bit-channel error counts under known-prior decoding.
struct GenieDensityEvolution {
  std::vector<long> errors;

  explicit GenieDensityEvolution(int n) : errors(n, 0) {}

  void rec(const std::vector<double>& llr, int base) {
    const std::size_t sz = llr.size();
    if (sz == 1) {
      if (llr[0] < 0) ++errors[base];
      return;
    }
    const std::size_t h = sz / 2;
    std::vector<double> l1(h), l2(h);
    for (std::size_t j = 0; j < h; ++j) {
      const double a = llr[j], b = llr[j + h];
      const double m = std::min(std::abs(a), std::abs(b));
      l1[j] = (a < 0) == (b < 0) ? m : -m;
    }
    rec(l1, base);
    for (std::size_t j = 0; j < h; ++j) l2[j] = llr[j + h] + llr[j];  // true bits all zero
    rec(l2, base + static_cast<int>(h));
  }

  /// Top-k most reliable chain inputs after `trials` noise draws at the given
  /// design SNR (Es/N0, real BPSK channel).
  std::vector<int> top_channels(int n, int k, double snr_db, int trials, Rng& rng) {
    const double snr = std::pow(10.0, snr_db / 10.0);
    const double sigma2 = 1.0 / (2.0 * snr);
    std::vector<double> llr(n);
    for (int t = 0; t < trials; ++t) {
      for (int i = 0; i < n; ++i) {
        const double y = 1.0 + std::sqrt(sigma2) * rng.gaussian();
        llr[i] = 2.0 * y / sigma2;
      }
      rec(llr, 0);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return errors[a] < errors[b]; });
    std::vector<int> top(order.begin(), order.begin() + k);
    std::sort(top.begin(), top.end());
    return top;
  }
};

/// E{|g y - s|^2} assembled independently and minimized numerically over the
/// complex equalizer (three-point parabola line searches per axis).
inline std::complex<double> numeric_mmse(const Eigen::VectorXcd& h,
                                         const Eigen::VectorXcd& target_p,
                                         const std::vector<const Eigen::VectorXcd*>& all_p) {
  double total = 1.0;  // unit noise
  for (const auto* p : all_p) total += std::norm(h.dot(*p));
  const std::complex<double> cross = h.dot(target_p);
  auto mse = [&](std::complex<double> g) {
    return std::norm(g) * total - 2.0 * (g * cross).real() + 1.0;
  };
  std::complex<double> g = 0.0;
  for (int sweep = 0; sweep < 4; ++sweep) {
    for (int axis = 0; axis < 2; ++axis) {
      const std::complex<double> dir =
          axis == 0 ? std::complex<double>(1, 0) : std::complex<double>(0, 1);
      const double f0 = mse(g - dir), f1 = mse(g), f2 = mse(g + dir);
      const double denom = f0 - 2.0 * f1 + f2;
      if (denom > 0) g += dir * ((f0 - f2) / (2.0 * denom));
    }
  }
  return g;
}

}  // namespace rsma::oracles
