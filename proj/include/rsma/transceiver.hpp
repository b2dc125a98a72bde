#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "rsma/amc.hpp"
#include "rsma/modem.hpp"
#include "rsma/polar.hpp"
#include "rsma/precoder.hpp"
#include "rsma/rng.hpp"

namespace rsma {

namespace transceiver_detail {

/// Reliability rankings are cached per (block length, quantized design SNR);
/// the info count varies per block, so codes are assembled from the cached
/// order in O(N).
inline double quantize_snr_db(double snr_db) {
  const double clamped = std::clamp(snr_db, -10.0, 40.0);
  return std::round(clamped * 2.0) / 2.0;
}

inline std::shared_ptr<const std::vector<int>> cached_order(int block_len, double snr_db_q) {
  static std::map<std::pair<int, int>, std::shared_ptr<const std::vector<int>>> cache;
  static std::mutex mu;
  const std::pair<int, int> key{block_len, static_cast<int>(std::lround(snr_db_q * 2.0))};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto order = std::make_shared<const std::vector<int>>(
      PolarCode::chain_reliability_order(block_len, snr_db_q));
  cache.emplace(key, order);
  return order;
}

inline std::shared_ptr<const PolarCode> make_code(int block_len, int info_len, double snr_db,
                                                  const CrcSpec& crc) {
  const double q = quantize_snr_db(snr_db);
  const auto order = cached_order(block_len, q);
  return std::make_shared<const PolarCode>(
      PolarCode::from_chain_order(block_len, info_len, q, *order, crc));
}

}  // namespace transceiver_detail

/// Per-stream codec binding for one block.
struct StreamLink {
  McsEntry mcs;
  std::shared_ptr<const PolarCode> code;
  std::uint64_t interleaver_seed = 0;
};

/// Everything the transmitter and receivers share for one block: precoders
/// (with disabled streams zeroed), per-stream MCS, codes and interleaver
/// seeds. Receivers regenerate interleavers from the seeds; no state is
/// carried across the link.
struct LinkConfig {
  PrecoderMatrix pm;
  std::array<StreamLink, 3> streams;  // 0 = common, 1..2 = private
  int symbols = 0;
  int list_size = 8;
  CrcSpec crc;

  bool active(int s) const { return streams[s].mcs.active; }
};

/// AMC decision + codec setup from backed-off average rates. Streams whose
/// rate or payload budget vanishes are disabled and their precoder column is
/// zeroed so that every downstream formula sees a consistent signal model.
inline LinkConfig build_link(const SaaInstance& inst, const PrecoderMatrix& pm,
                             const RateAllocation& backed, double beta, int symbols,
                             const CrcSpec& crc, int list_size, double backoff_common_db,
                             double backoff_private_db,
                             const std::array<std::uint64_t, 3>& interleaver_seeds) {
  LinkConfig link;
  link.pm = pm;
  link.symbols = symbols;
  link.crc = crc;
  link.list_size = list_size;

  const double share_sum = backed.common_share[0] + backed.common_share[1];
  const double rate_c = share_sum > 1e-12 ? backed.common_rate() : 0.0;
  const double rates[3] = {rate_c, backed.private_rate[0], backed.private_rate[1]};
  const double scales[3] = {std::pow(10.0, -backoff_common_db / 10.0),
                            std::pow(10.0, -backoff_private_db / 10.0),
                            std::pow(10.0, -backoff_private_db / 10.0)};
  for (int s = 0; s < 3; ++s) {
    StreamLink& sl = link.streams[s];
    sl.mcs = select_mcs(rates[s], beta, symbols, crc.length);
    sl.interleaver_seed = interleaver_seeds[s];
    if (!sl.mcs.active) continue;
    const double gamma = mean_stream_sinr(inst, pm, s, scales[s]);
    const double snr_db = 10.0 * std::log10(std::max(gamma, 1e-3));
    sl.code = transceiver_detail::make_code(sl.mcs.coded_len, sl.mcs.info_len, snr_db, crc);
  }
  if (!link.streams[0].mcs.active) link.pm.p_c.setZero();
  for (int k = 0; k < 2; ++k)
    if (!link.streams[k + 1].mcs.active) link.pm.p[k].setZero();
  return link;
}

/// Split payloads: the common payload is divided between the users
/// proportionally to their common-rate shares (largest-remainder rounding,
/// ties toward user 1); private payloads fill their code's info budget.
struct SplitMessage {
  BitVector common_user[2];
  BitVector private_user[2];

  int common_len(int k) const { return static_cast<int>(common_user[k].size()); }
  int private_len(int k) const { return static_cast<int>(private_user[k].size()); }
};

inline SplitMessage split_payload(const LinkConfig& link, const RateAllocation& backed,
                                  Rng& data_rng) {
  SplitMessage msg;
  if (link.active(0)) {
    const int payload = link.streams[0].mcs.info_len - link.crc.length;
    const double c1 = std::max(backed.common_share[0], 0.0);
    const double c2 = std::max(backed.common_share[1], 0.0);
    const double tot = c1 + c2;
    int n1 = 0;
    if (tot > 0.0) {
      const double q1 = payload * c1 / tot;
      const double q2 = payload * c2 / tot;
      n1 = static_cast<int>(std::floor(q1));
      const int n2 = static_cast<int>(std::floor(q2));
      if (n1 + n2 < payload && (q1 - n1) >= (q2 - n2)) ++n1;  // tie toward user 1
      n1 = std::clamp(n1, 0, payload);
    }
    msg.common_user[0].resize(n1);
    msg.common_user[1].resize(payload - n1);
    for (auto& b : msg.common_user[0]) b = static_cast<std::uint8_t>(data_rng.bit());
    for (auto& b : msg.common_user[1]) b = static_cast<std::uint8_t>(data_rng.bit());
  }
  for (int k = 0; k < 2; ++k) {
    if (!link.active(k + 1)) continue;
    msg.private_user[k].resize(link.streams[k + 1].mcs.info_len - link.crc.length);
    for (auto& b : msg.private_user[k]) b = static_cast<std::uint8_t>(data_rng.bit());
  }
  return msg;
}

/// One transmitted block: per-stream symbols and the antenna-domain signal.
struct TransmitBlock {
  Eigen::MatrixXcd x;  // n_t x S
  std::array<std::vector<cdouble>, 3> symbols;
};

namespace transceiver_detail {

inline std::vector<cdouble> encode_stream(const LinkConfig& link, int s,
                                          std::span<const std::uint8_t> payload) {
  const StreamLink& sl = link.streams[s];
  const BitVector coded = polar_encode(*sl.code, payload);
  Rng il_rng(sl.interleaver_seed);
  const Interleaver il = Interleaver::random(coded.size(), il_rng);
  const BitVector interleaved = il.interleave(std::span<const std::uint8_t>(coded));
  return modulate(interleaved, QamAlphabet::get(sl.mcs.mod_order));
}

}  // namespace transceiver_detail

inline TransmitBlock transmit(const SplitMessage& msg, const LinkConfig& link) {
  TransmitBlock blk;
  const int nt = static_cast<int>(link.pm.p_c.size());
  blk.x = Eigen::MatrixXcd::Zero(nt, link.symbols);
  for (int s = 0; s < 3; ++s) {
    if (!link.active(s)) continue;
    BitVector payload;
    if (s == 0) {
      payload = msg.common_user[0];
      payload.insert(payload.end(), msg.common_user[1].begin(), msg.common_user[1].end());
    } else {
      payload = msg.private_user[s - 1];
    }
    blk.symbols[s] = transceiver_detail::encode_stream(link, s, payload);
    const Eigen::VectorXcd& p = s == 0 ? link.pm.p_c : link.pm.p[s - 1];
    for (int t = 0; t < link.symbols; ++t) blk.x.col(t) += p * blk.symbols[s][t];
  }
  return blk;
}

/// Closed-form MMSE equalizers for user k (unit noise variance):
/// g'_{c,k} = p_c^H h / (|h^H p_c|^2 + sum_j |h^H p_j|^2 + 1),
/// g'_k     = p_k^H h / (sum_j |h^H p_j|^2 + 1).
struct EqualizerPair {
  cdouble common{0.0, 0.0};
  cdouble priv{0.0, 0.0};
};

inline EqualizerPair mmse_equalizers(const Eigen::VectorXcd& h, const PrecoderMatrix& pm,
                                     int user) {
  const cdouble xc = h.dot(pm.p_c);
  const cdouble x1 = h.dot(pm.p[0]);
  const cdouble x2 = h.dot(pm.p[1]);
  const double priv_power = std::norm(x1) + std::norm(x2);
  EqualizerPair eq;
  eq.common = std::conj(xc) / (std::norm(xc) + priv_power + 1.0);
  eq.priv = std::conj(user == 0 ? x1 : x2) / (priv_power + 1.0);
  return eq;
}

/// Per-user receive outcome. Decoded payloads are set when the stream was
/// attempted; the ok flags reflect the CRC checks.
struct ReceiveResult {
  bool common_attempted = false;
  bool common_crc_ok = false;
  BitVector common_payload;
  bool private_attempted = false;
  bool private_crc_ok = false;
  BitVector private_payload;
  cdouble equalizer_common{0.0, 0.0};
  cdouble equalizer_private{0.0, 0.0};
};

/// HD-SIC receive chain for user k: equalize/decode the common stream, on a
/// CRC pass rebuild it through the transmitter operations and cancel, then
/// equalize/decode the private stream. On a common CRC failure the private
/// stream is decoded against the uncancelled signal with the matching MMSE
/// equalizer (both outcomes count as a common-stream block error upstream).
inline ReceiveResult receive_sic(std::span<const cdouble> y, const Eigen::VectorXcd& h, int user,
                                 const LinkConfig& link) {
  ReceiveResult res;
  const int s_priv = user + 1;
  const cdouble hc = h.dot(link.pm.p_c);
  const cdouble h1 = h.dot(link.pm.p[0]);
  const cdouble h2 = h.dot(link.pm.p[1]);
  const double pc = std::norm(hc);
  const double p1 = std::norm(h1);
  const double p2 = std::norm(h2);

  std::vector<cdouble> work(y.begin(), y.end());
  bool cancelled = false;

  if (link.active(0)) {
    res.common_attempted = true;
    const double t_c = pc + p1 + p2 + 1.0;
    const cdouble g_c = std::conj(hc) / t_c;
    const double gamma_c = pc / (p1 + p2 + 1.0);
    const double rho_c = gamma_c / (1.0 + gamma_c);
    res.equalizer_common = g_c;

    std::vector<cdouble> eq(work.size());
    for (std::size_t t = 0; t < work.size(); ++t) eq[t] = g_c * work[t];
    const QamAlphabet& alpha = QamAlphabet::get(link.streams[0].mcs.mod_order);
    std::vector<double> llrs = llr_compute(eq, gamma_c, rho_c, alpha);
    Rng il_rng(link.streams[0].interleaver_seed);
    const Interleaver il = Interleaver::random(llrs.size(), il_rng);
    const std::vector<double> dellrs = il.deinterleave(std::span<const double>(llrs));
    const PolarDecodeResult dec = decode_scl(*link.streams[0].code, dellrs, link.list_size);
    res.common_crc_ok = dec.crc_ok;
    res.common_payload = dec.payload;

    if (dec.crc_ok) {
      const std::vector<cdouble> rebuilt =
          transceiver_detail::encode_stream(link, 0, dec.payload);
      for (std::size_t t = 0; t < work.size(); ++t) work[t] -= hc * rebuilt[t];
      cancelled = true;
    }
  }

  if (link.active(s_priv)) {
    res.private_attempted = true;
    const double own = user == 0 ? p1 : p2;
    const double other = user == 0 ? p2 : p1;
    const double resid_c = (link.active(0) && !cancelled) ? pc : 0.0;
    const double t_p = resid_c + p1 + p2 + 1.0;
    const cdouble g_p = std::conj(user == 0 ? h1 : h2) / t_p;
    const double gamma_p = own / (resid_c + other + 1.0);
    const double rho_p = gamma_p / (1.0 + gamma_p);
    res.equalizer_private = g_p;

    std::vector<cdouble> eq(work.size());
    for (std::size_t t = 0; t < work.size(); ++t) eq[t] = g_p * work[t];
    const QamAlphabet& alpha = QamAlphabet::get(link.streams[s_priv].mcs.mod_order);
    std::vector<double> llrs = llr_compute(eq, gamma_p, rho_p, alpha);
    Rng il_rng(link.streams[s_priv].interleaver_seed);
    const Interleaver il = Interleaver::random(llrs.size(), il_rng);
    const std::vector<double> dellrs = il.deinterleave(std::span<const double>(llrs));
    const PolarDecodeResult dec = decode_scl(*link.streams[s_priv].code, dellrs, link.list_size);
    res.private_crc_ok = dec.crc_ok;
    res.private_payload = dec.payload;
  }
  return res;
}

/// Recovered information bits D_{s,k} for user k: its own slice of the common
/// payload when that decode is correct, plus its private payload when that
/// decode is correct. Success requires both a CRC pass and bit equality with
/// the transmitted payload (undetected CRC errors do not count).
struct MergeOutcome {
  long recovered_bits = 0;
  bool common_error = false;   // meaningful when the common stream was attempted
  bool private_error = false;  // meaningful when the private stream was attempted
};

inline MergeOutcome merge_messages(const SplitMessage& sent, const ReceiveResult& rx, int user) {
  MergeOutcome out;
  if (rx.common_attempted) {
    bool good = rx.common_crc_ok;
    if (good) {
      const int off = user == 0 ? 0 : sent.common_len(0);
      const int len = sent.common_len(user);
      if (static_cast<int>(rx.common_payload.size()) < off + len) {
        good = false;
      } else {
        for (int i = 0; i < len && good; ++i)
          good = rx.common_payload[off + i] == sent.common_user[user][i];
      }
    }
    out.common_error = !good;
    if (good) out.recovered_bits += sent.common_len(user);
  }
  if (rx.private_attempted) {
    bool good = rx.private_crc_ok &&
                rx.private_payload.size() == sent.private_user[user].size();
    if (good)
      for (std::size_t i = 0; i < rx.private_payload.size() && good; ++i)
        good = rx.private_payload[i] == sent.private_user[user][i];
    out.private_error = !good;
    if (good) out.recovered_bits += sent.private_len(user);
  }
  return out;
}

}  // namespace rsma
