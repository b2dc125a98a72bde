#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "rsma/modem.hpp"  // BitVector

namespace rsma {

// ---------------------------------------------------------------------------
// CRC outer code (systematic append, MSB-first shift register, zero init).
// ---------------------------------------------------------------------------

struct CrcSpec {
  int length = 11;
  std::uint32_t poly = 0xE21;  // x^11+x^10+x^9+x^5+1, top coefficient included

  static CrcSpec crc11() { return CrcSpec{11, 0xE21}; }
  static CrcSpec none() { return CrcSpec{0, 0}; }
};

inline BitVector crc_compute(std::span<const std::uint8_t> payload, const CrcSpec& crc) {
  BitVector out(crc.length, 0);
  if (crc.length == 0) return out;
  const std::uint32_t mask = (1u << crc.length) - 1u;
  const std::uint32_t taps = crc.poly & mask;
  std::uint32_t reg = 0;
  for (std::uint8_t b : payload) {
    const std::uint32_t fb = ((reg >> (crc.length - 1)) & 1u) ^ b;
    reg = (reg << 1) & mask;
    if (fb) reg ^= taps;
  }
  for (int t = 0; t < crc.length; ++t) out[t] = (reg >> (crc.length - 1 - t)) & 1u;
  return out;
}

inline BitVector crc_attach(std::span<const std::uint8_t> payload, const CrcSpec& crc) {
  BitVector full(payload.begin(), payload.end());
  const BitVector c = crc_compute(payload, crc);
  full.insert(full.end(), c.begin(), c.end());
  return full;
}

/// True when the trailing crc.length bits match the CRC of the leading part.
inline bool crc_check(std::span<const std::uint8_t> bits, const CrcSpec& crc) {
  if (crc.length == 0) return true;
  if (bits.size() < static_cast<std::size_t>(crc.length)) return false;
  const auto payload = bits.first(bits.size() - crc.length);
  const BitVector expect = crc_compute(payload, crc);
  return std::equal(expect.begin(), expect.end(), bits.end() - crc.length);
}

// ---------------------------------------------------------------------------
// Gaussian-approximation density evolution.
// ---------------------------------------------------------------------------

namespace polar_detail {

inline constexpr double kMeanCap = 2000.0;  // phi underflows shortly above this
inline constexpr double kLlrSat = 1e30;     // decoder LLR for shortened positions

inline int bit_reverse(int i, int n_bits) {
  int r = 0;
  for (int b = 0; b < n_bits; ++b) r |= ((i >> b) & 1) << (n_bits - 1 - b);
  return r;
}

/// phi(x) = 1 - E{tanh(L/2)} for L ~ N(x, 2x); Trifonov's approximation.
inline double ga_phi(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 10.0) return std::exp(-0.4527 * std::pow(x, 0.86) + 0.0218);
  const double t = std::sqrt(3.14159265358979323846 / x) * std::exp(-x / 4.0);
  return t * (1.0 - 10.0 / (7.0 * x));
}

inline double ga_phi_inv(double y) {
  if (y >= 1.0) return 0.0;
  if (y <= ga_phi(kMeanCap)) return kMeanCap;
  double lo = 0.0, hi = kMeanCap;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ga_phi(mid) > y)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Check-node combination of two LLR means (a + b - a*b form avoids
/// cancellation for near-perfect inputs).
inline double ga_check(double ma, double mb) {
  const double pa = ga_phi(ma), pb = ga_phi(mb);
  const double y = pa + pb - pa * pb;
  return ga_phi_inv(y);
}

/// Bit-channel LLR means for the F^{(x)n} chain given per-position channel
/// means (leaf order = chain input index; pairing is (j, j+half)).
inline std::vector<double> ga_bit_means(std::vector<double> ch) {
  const std::size_t n = ch.size();
  if (n == 1) return ch;
  const std::size_t h = n / 2;
  std::vector<double> worse(h), better(h);
  for (std::size_t j = 0; j < h; ++j) {
    worse[j] = ga_check(ch[j], ch[j + h]);
    better[j] = std::min(ch[j] + ch[j + h], kMeanCap);
  }
  std::vector<double> out = ga_bit_means(std::move(worse));
  std::vector<double> up = ga_bit_means(std::move(better));
  out.insert(out.end(), up.begin(), up.end());
  return out;
}

/// In-place v = w * F^{(x)n} over F2 with the split-half butterfly.
inline void polar_transform(BitVector& w) {
  const std::size_t n = w.size();
  for (std::size_t half = n / 2; half >= 1; half /= 2)
    for (std::size_t base = 0; base < n; base += 2 * half)
      for (std::size_t j = 0; j < half; ++j) w[base + j] ^= w[base + half + j];
}

}  // namespace polar_detail

/// Info set (natural u-domain indices, sorted) of the K most reliable bit
/// channels under GA density evolution at the given design SNR. With
/// G = B_N F^{(x)n}, chain position i carries u[bitrev(i)].
inline std::vector<int> construct_ga(int n_mother, int k_info, double design_snr_db) {
  if (n_mother < 2 || (n_mother & (n_mother - 1)) != 0)
    throw std::domain_error("construct_ga: N must be a power of two >= 2");
  if (k_info < 1 || k_info > n_mother) throw std::domain_error("construct_ga: need 0 < K <= N");
  const double snr = std::pow(10.0, design_snr_db / 10.0);
  std::vector<double> ch(n_mother, std::min(4.0 * snr, polar_detail::kMeanCap));
  const std::vector<double> means = polar_detail::ga_bit_means(std::move(ch));
  std::vector<int> order(n_mother);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (means[a] != means[b]) return means[a] > means[b];
    return a > b;
  });
  int n_bits = 0;
  while ((1 << n_bits) < n_mother) ++n_bits;
  std::vector<int> info;
  info.reserve(k_info);
  for (int t = 0; t < k_info; ++t) info.push_back(polar_detail::bit_reverse(order[t], n_bits));
  std::sort(info.begin(), info.end());
  return info;
}

// ---------------------------------------------------------------------------
// Code descriptor.
// ---------------------------------------------------------------------------

/// CRC-aided polar code, shortened from mother length N = 2^n down to
/// block_len by forcing the tail of the chain-ordered codeword to known
/// zeros (the lower-triangular structure of F^{(x)n} guarantees the tail is
/// zero once the matching chain inputs are frozen).
struct PolarCode {
  int mother_n = 0;   // N = 2^n
  int n_levels = 0;   // n
  int block_len = 0;  // transmitted length, N/2 < block_len <= N
  int info_len = 0;   // K, info bits including CRC
  CrcSpec crc;
  double design_snr_db = 0.0;

  std::vector<int> info_set;             // u-domain indices, sorted ascending
  std::vector<std::uint8_t> chain_frozen;  // [N], 1 = frozen at chain position
  std::vector<int> chain_info;           // chain positions of info bits, ascending
  std::vector<int> extract_perm;         // u-order t -> index into chain-order decisions

  int payload_len() const { return info_len - crc.length; }
  int shortened_count() const { return mother_n - block_len; }

  /// Chain-input reliability ranking (best first) under GA at the design SNR,
  /// restricted to the inputs a length-block_len shortened code may use.
  static std::vector<int> chain_reliability_order(int block_len, double design_snr_db) {
    if (block_len < 2) throw std::domain_error("PolarCode: block_len must be >= 2");
    int mother = 1;
    while (mother < block_len) mother *= 2;
    const double snr = std::pow(10.0, design_snr_db / 10.0);
    std::vector<double> ch(mother, std::min(4.0 * snr, polar_detail::kMeanCap));
    for (int i = block_len; i < mother; ++i) ch[i] = polar_detail::kMeanCap;
    const std::vector<double> means = polar_detail::ga_bit_means(std::move(ch));
    std::vector<int> order;
    order.reserve(block_len);
    for (int i = 0; i < block_len; ++i) order.push_back(i);  // shortened inputs stay frozen
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (means[a] != means[b]) return means[a] > means[b];
      return a > b;
    });
    return order;
  }

  static PolarCode from_chain_order(int block_len, int info_len, double design_snr_db,
                                    std::span<const int> order, const CrcSpec& crc) {
    if (block_len < 2) throw std::domain_error("PolarCode: block_len must be >= 2");
    if (info_len < 1 || info_len > block_len)
      throw std::domain_error("PolarCode: need 0 < K <= block_len");
    if (info_len <= crc.length)
      throw std::domain_error("PolarCode: K must exceed the CRC length");
    PolarCode c;
    c.block_len = block_len;
    c.info_len = info_len;
    c.crc = crc;
    c.design_snr_db = design_snr_db;
    c.mother_n = 1;
    c.n_levels = 0;
    while (c.mother_n < block_len) {
      c.mother_n *= 2;
      ++c.n_levels;
    }

    c.chain_frozen.assign(c.mother_n, 1);
    c.chain_info.clear();
    for (int t = 0; t < info_len; ++t) {
      c.chain_frozen[order[t]] = 0;
      c.chain_info.push_back(order[t]);
    }
    std::sort(c.chain_info.begin(), c.chain_info.end());

    c.info_set.clear();
    for (int i : c.chain_info) c.info_set.push_back(polar_detail::bit_reverse(i, c.n_levels));
    std::sort(c.info_set.begin(), c.info_set.end());

    c.extract_perm.resize(info_len);
    for (int t = 0; t < info_len; ++t) {
      const int chain_pos = polar_detail::bit_reverse(c.info_set[t], c.n_levels);
      const auto it = std::lower_bound(c.chain_info.begin(), c.chain_info.end(), chain_pos);
      c.extract_perm[t] = static_cast<int>(it - c.chain_info.begin());
    }
    return c;
  }

  static PolarCode construct(int block_len, int info_len, double design_snr_db,
                             const CrcSpec& crc = CrcSpec::crc11()) {
    const std::vector<int> order = chain_reliability_order(block_len, design_snr_db);
    return from_chain_order(block_len, info_len, design_snr_db, order, crc);
  }
};

/// Encodes payload (info_len - crc bits); appends the CRC, places info+CRC
/// into the u-domain info set in index order, applies G = B_N F^{(x)n} and
/// drops the shortened tail.
inline BitVector polar_encode(const PolarCode& code, std::span<const std::uint8_t> payload) {
  if (payload.size() != static_cast<std::size_t>(code.payload_len()))
    throw std::invalid_argument("polar_encode: payload length mismatch");
  const BitVector full = crc_attach(payload, code.crc);
  BitVector u(code.mother_n, 0);
  for (int t = 0; t < code.info_len; ++t) u[code.info_set[t]] = full[t];
  BitVector w(code.mother_n);
  for (int i = 0; i < code.mother_n; ++i)
    w[i] = u[polar_detail::bit_reverse(i, code.n_levels)];
  polar_detail::polar_transform(w);
  w.resize(code.block_len);
  return w;
}

// ---------------------------------------------------------------------------
// Successive cancellation list decoder.
// ---------------------------------------------------------------------------

struct PolarDecodeResult {
  BitVector payload;  // info bits without CRC
  bool crc_ok = false;
  double path_metric = 0.0;
};

namespace polar_detail {

class SclWorkspace {
 public:
  SclWorkspace(const PolarCode& code, int list_size, double shortened_llr)
      : code_(code), list_(list_size), n_(code.n_levels), big_n_(code.mother_n),
        shortened_llr_(shortened_llr) {}

  PolarDecodeResult run(std::span<const double> llrs) {
    paths_.clear();
    arena_.clear();
    Path p0;
    p0.pm = 0.0;
    p0.head = -1;
    p0.llr.resize(n_ + 1);
    p0.cw.resize(n_ + 1);
    p0.llr[0] = std::make_shared<std::vector<double>>(big_n_);
    for (int i = 0; i < big_n_; ++i)
      (*p0.llr[0])[i] = i < code_.block_len ? llrs[i] : shortened_llr_;
    for (int d = 1; d <= n_; ++d)
      p0.llr[d] = std::make_shared<std::vector<double>>(big_n_ >> d);
    for (int d = 0; d < n_; ++d)
      p0.cw[d] = std::make_shared<std::vector<std::uint8_t>>(big_n_ >> (d + 1));
    p0.root = std::make_shared<std::vector<std::uint8_t>>(big_n_);
    paths_.push_back(std::move(p0));

    rec(0, big_n_, 0, kRootTarget, 0);

    std::vector<int> by_metric(paths_.size());
    std::iota(by_metric.begin(), by_metric.end(), 0);
    std::stable_sort(by_metric.begin(), by_metric.end(),
                     [&](int a, int b) { return paths_[a].pm < paths_[b].pm; });

    PolarDecodeResult best;
    bool have_best = false;
    for (int idx : by_metric) {
      BitVector full = extract(paths_[idx]);
      if (!have_best) {
        best.payload.assign(full.begin(), full.end() - code_.crc.length);
        best.crc_ok = code_.crc.length == 0;
        best.path_metric = paths_[idx].pm;
        have_best = true;
        if (best.crc_ok) return best;
      }
      if (code_.crc.length > 0 && crc_check(full, code_.crc)) {
        best.payload.assign(full.begin(), full.end() - code_.crc.length);
        best.crc_ok = true;
        best.path_metric = paths_[idx].pm;
        return best;
      }
    }
    return best;
  }

 private:
  static constexpr int kRootTarget = -1;

  struct Path {
    double pm = 0.0;
    std::int32_t head = -1;  // decision arena head (info leaves only)
    std::vector<std::shared_ptr<std::vector<double>>> llr;
    std::vector<std::shared_ptr<std::vector<std::uint8_t>>> cw;
    std::shared_ptr<std::vector<std::uint8_t>> root;
  };
  struct Decision {
    std::int32_t parent;
    std::uint8_t bit;
  };

  template <typename T>
  static T& unique(std::shared_ptr<T>& ptr) {
    if (ptr.use_count() > 1) ptr = std::make_shared<T>(*ptr);
    return *ptr;
  }

  std::vector<std::uint8_t>& out_buf(Path& p, int target) {
    if (target == kRootTarget) return unique(p.root);
    return unique(p.cw[target]);
  }

  void rec(int depth, int size, int leaf_base, int out_target, int out_off) {
    if (size == 1) {
      leaf(leaf_base, out_target, out_off);
      return;
    }
    const int h = size / 2;
    for (Path& p : paths_) {
      const std::vector<double>& src = *p.llr[depth];
      std::vector<double>& dst = unique(p.llr[depth + 1]);
      for (int j = 0; j < h; ++j) {
        const double a = src[j], b = src[j + h];
        const double m = std::min(std::abs(a), std::abs(b));
        dst[j] = (a < 0) == (b < 0) ? m : -m;
      }
    }
    rec(depth + 1, h, leaf_base, depth, 0);
    for (Path& p : paths_) {
      const std::vector<double>& src = *p.llr[depth];
      const std::vector<std::uint8_t>& left = *p.cw[depth];
      std::vector<double>& dst = unique(p.llr[depth + 1]);
      for (int j = 0; j < h; ++j)
        dst[j] = left[j] ? src[j + h] - src[j] : src[j + h] + src[j];
    }
    rec(depth + 1, h, leaf_base + h, out_target, out_off + h);
    for (Path& p : paths_) {
      const std::vector<std::uint8_t>& left = *p.cw[depth];
      std::vector<std::uint8_t>& out = out_buf(p, out_target);
      for (int j = 0; j < h; ++j) out[out_off + j] = left[j] ^ out[out_off + h + j];
    }
  }

  void leaf(int chain_pos, int out_target, int out_off) {
    if (code_.chain_frozen[chain_pos]) {
      for (Path& p : paths_) {
        const double lam = (*p.llr[n_])[0];
        if (lam < 0) p.pm -= lam;
        out_buf(p, out_target)[out_off] = 0;
      }
      return;
    }
    struct Cand {
      double pm;
      int path;
      std::uint8_t bit;
    };
    std::vector<Cand> cands;
    cands.reserve(paths_.size() * 2);
    for (std::size_t i = 0; i < paths_.size(); ++i) {
      const double lam = (*paths_[i].llr[n_])[0];
      const double pen = std::abs(lam);
      cands.push_back({paths_[i].pm + (lam < 0 ? pen : 0.0), static_cast<int>(i), 0});
      cands.push_back({paths_[i].pm + (lam >= 0 ? pen : 0.0), static_cast<int>(i), 1});
    }
    const std::size_t keep = std::min<std::size_t>(list_, cands.size());
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.pm != b.pm) return a.pm < b.pm;
      if (a.path != b.path) return a.path < b.path;
      return a.bit < b.bit;
    });
    cands.resize(keep);

    std::vector<Path> next(keep);
    std::vector<std::uint8_t> used(paths_.size(), 0);
    std::vector<int> clone_of(keep, -1);
    for (std::size_t c = 0; c < keep; ++c) {
      if (!used[cands[c].path])
        used[cands[c].path] = 1;
      else
        clone_of[c] = cands[c].path;
    }
    // Copy clones while their sources are still intact, then move the rest.
    for (std::size_t c = 0; c < keep; ++c)
      if (clone_of[c] >= 0) next[c] = paths_[clone_of[c]];
    for (std::size_t c = 0; c < keep; ++c)
      if (clone_of[c] < 0) next[c] = std::move(paths_[cands[c].path]);
    for (std::size_t c = 0; c < keep; ++c) {
      Path& p = next[c];
      p.pm = cands[c].pm;
      arena_.push_back({p.head, cands[c].bit});
      p.head = static_cast<std::int32_t>(arena_.size()) - 1;
      out_buf(p, out_target)[out_off] = cands[c].bit;
    }
    paths_ = std::move(next);
  }

  BitVector extract(const Path& p) const {
    BitVector chain_bits(code_.info_len);
    std::int32_t node = p.head;
    for (int t = code_.info_len - 1; t >= 0; --t) {
      chain_bits[t] = arena_[node].bit;
      node = arena_[node].parent;
    }
    BitVector full(code_.info_len);
    for (int t = 0; t < code_.info_len; ++t) full[t] = chain_bits[code_.extract_perm[t]];
    return full;
  }

  const PolarCode& code_;
  int list_;
  int n_;
  int big_n_;
  double shortened_llr_;
  std::vector<Path> paths_;
  std::vector<Decision> arena_;
};

}  // namespace polar_detail

/// CRC-aided SCL decoding. Returns the best CRC-passing path, else the best
/// path metric with crc_ok = false (always true for codes without CRC).
inline PolarDecodeResult decode_scl(const PolarCode& code, std::span<const double> llrs,
                                    int list_size,
                                    double shortened_llr = polar_detail::kLlrSat) {
  if (llrs.size() != static_cast<std::size_t>(code.block_len))
    throw std::invalid_argument("decode_scl: LLR length mismatch");
  if (list_size < 1) throw std::invalid_argument("decode_scl: list size must be >= 1");
  polar_detail::SclWorkspace ws(code, list_size, shortened_llr);
  return ws.run(llrs);
}

}  // namespace rsma
