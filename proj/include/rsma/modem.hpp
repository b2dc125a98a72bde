#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "rsma/rng.hpp"

namespace rsma {

using BitVector = std::vector<std::uint8_t>;
using cdouble = std::complex<double>;

/// Square QAM alphabet with unit average energy and per-axis reflected Gray
/// labeling. Label bits are MSB-first per axis with the I-axis bits first:
/// for m bits per symbol, bits [0, m/2) select the I level and bits
/// [m/2, m) the Q level. A bit pattern read as a Gray codeword g maps to
/// level (L-1) - 2*gray_decode(g), so the all-zeros label is the most
/// positive level on both axes (4-QAM: (0,0) -> (+1+j)/sqrt(2)).
struct QamAlphabet {
  int order = 0;              // |M| in {4, 16, 64, 256}
  int bits_per_symbol = 0;    // m = log2|M|
  std::vector<cdouble> points;  // indexed by m-bit label

  static const QamAlphabet& get(int order) {
    static const QamAlphabet q4 = make(4);
    static const QamAlphabet q16 = make(16);
    static const QamAlphabet q64 = make(64);
    static const QamAlphabet q256 = make(256);
    switch (order) {
      case 4: return q4;
      case 16: return q16;
      case 64: return q64;
      case 256: return q256;
      default: throw std::domain_error("QamAlphabet: unsupported order");
    }
  }

  static QamAlphabet make(int order) {
    QamAlphabet a;
    a.order = order;
    a.bits_per_symbol = 0;
    while ((1 << a.bits_per_symbol) < order) ++a.bits_per_symbol;
    if ((1 << a.bits_per_symbol) != order || a.bits_per_symbol % 2 != 0)
      throw std::domain_error("QamAlphabet: order must be an even power of two");
    const int mh = a.bits_per_symbol / 2;
    const int levels = 1 << mh;
    // Unit average energy: E{|s|^2} = 2(L^2-1)/3 for odd-integer levels.
    const double scale = std::sqrt(3.0 / (2.0 * (levels * levels - 1.0)));
    a.points.resize(order);
    for (int label = 0; label < order; ++label) {
      const int gi = label >> mh;         // I-axis bits (first half)
      const int gq = label & (levels - 1);  // Q-axis bits (second half)
      a.points[label] = {axis_level(gi, levels) * scale, axis_level(gq, levels) * scale};
    }
    return a;
  }

 private:
  static double axis_level(int gray_bits, int levels) {
    int pos = gray_bits;
    for (int shift = 1; shift < levels; shift <<= 1) pos ^= pos >> shift;
    return static_cast<double>(levels - 1 - 2 * pos);
  }
};

/// Maps consecutive m-bit groups to constellation points.
inline std::vector<cdouble> modulate(std::span<const std::uint8_t> bits, const QamAlphabet& a) {
  const int m = a.bits_per_symbol;
  if (bits.size() % m != 0)
    throw std::invalid_argument("modulate: bit count not divisible by bits/symbol");
  std::vector<cdouble> out(bits.size() / m);
  for (std::size_t s = 0; s < out.size(); ++s) {
    int label = 0;
    for (int b = 0; b < m; ++b) label = (label << 1) | bits[s * m + b];
    out[s] = a.points[label];
  }
  return out;
}

/// Hard nearest-neighbor decision back to label bits.
inline BitVector hard_demodulate(std::span<const cdouble> symbols, const QamAlphabet& a) {
  const int m = a.bits_per_symbol;
  BitVector bits(symbols.size() * m);
  for (std::size_t s = 0; s < symbols.size(); ++s) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int label = 0; label < a.order; ++label) {
      const double d = std::norm(symbols[s] - a.points[label]);
      if (d < best_d) {
        best_d = d;
        best = label;
      }
    }
    for (int b = 0; b < m; ++b) bits[s * m + b] = (best >> (m - 1 - b)) & 1;
  }
  return bits;
}

/// Seeded uniform random bit permutation (BICM interleaver).
struct Interleaver {
  std::vector<std::uint32_t> perm;  // out[i] = in[perm[i]]

  static Interleaver random(std::size_t n, Rng& rng) {
    Interleaver il;
    il.perm.resize(n);
    std::iota(il.perm.begin(), il.perm.end(), 0u);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = rng.uniform_int(i);
      std::swap(il.perm[i - 1], il.perm[j]);
    }
    return il;
  }

  static Interleaver identity(std::size_t n) {
    Interleaver il;
    il.perm.resize(n);
    std::iota(il.perm.begin(), il.perm.end(), 0u);
    return il;
  }

  template <typename T>
  std::vector<T> interleave(std::span<const T> in) const {
    if (in.size() != perm.size()) throw std::invalid_argument("interleave: length mismatch");
    std::vector<T> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[perm[i]];
    return out;
  }

  template <typename T>
  std::vector<T> deinterleave(std::span<const T> in) const {
    if (in.size() != perm.size()) throw std::invalid_argument("deinterleave: length mismatch");
    std::vector<T> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[perm[i]] = in[i];
    return out;
  }
};

/// Max-log LLRs from MMSE-equalized symbols. For each received value e = g'y,
/// psi(a) = |e/rho - a|^2 and the i-th bit LLR is
/// gamma * [min over labels with bit 1 of psi - min over labels with bit 0],
/// so a positive LLR favors bit 0. rho = gamma/(1+gamma).
inline std::vector<double> llr_compute(std::span<const cdouble> equalized, double gamma,
                                       double rho, const QamAlphabet& a) {
  const int m = a.bits_per_symbol;
  std::vector<double> llrs(equalized.size() * m, 0.0);
  if (gamma <= 0.0 || rho <= 0.0) return llrs;  // zero confidence
  for (std::size_t s = 0; s < equalized.size(); ++s) {
    const cdouble z = equalized[s] / rho;
    double min0[8], min1[8];
    for (int b = 0; b < m; ++b) {
      min0[b] = std::numeric_limits<double>::infinity();
      min1[b] = std::numeric_limits<double>::infinity();
    }
    for (int label = 0; label < a.order; ++label) {
      const double psi = std::norm(z - a.points[label]);
      for (int b = 0; b < m; ++b) {
        if ((label >> (m - 1 - b)) & 1) {
          if (psi < min1[b]) min1[b] = psi;
        } else {
          if (psi < min0[b]) min0[b] = psi;
        }
      }
    }
    for (int b = 0; b < m; ++b) llrs[s * m + b] = gamma * (min1[b] - min0[b]);
  }
  return llrs;
}

}  // namespace rsma
