#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsma/precoder.hpp"

namespace rsma {

/// Modulation alphabets available to the AMC: {4, 16, 64, 256}-QAM.
inline constexpr int kQamOrders[4] = {4, 16, 64, 256};
inline constexpr double kMaxModBits = 8.0;  // M-dagger: log2 of the largest order

/// Feasible alphabets for an average rate: log2|M| >= min(rate/beta, M-dagger).
/// Never empty (the cap keeps 256-QAM always feasible).
inline std::vector<int> feasible_set(double rate, double beta) {
  if (beta <= 0.0 || beta > 1.0) throw std::domain_error("feasible_set: beta in (0,1] required");
  const double need = std::min(std::max(rate, 0.0) / beta, kMaxModBits);
  std::vector<int> out;
  for (int order : kQamOrders) {
    const double m = std::log2(static_cast<double>(order));
    if (m >= need - 1e-12) out.push_back(order);
  }
  return out;
}

/// Per-stream modulation and coding choice. The code rate is the exact
/// rational info_len / coded_len; the ceil in the rate rule may exceed beta
/// by less than one coded bit.
struct McsEntry {
  bool active = false;
  int mod_order = 0;
  int bits_per_symbol = 0;
  int coded_len = 0;  // N_l = S * log2|M_l|
  int info_len = 0;   // K_l including CRC
  double code_rate = 0.0;

  double spectral_efficiency() const {
    return active ? code_rate * bits_per_symbol : 0.0;
  }
};

/// Smallest feasible alphabet and the matching flexible polar code rate
/// r_l = ceil(N_l * min(rate / log2|M_l|, beta)) / N_l. Streams whose info
/// budget cannot exceed the CRC are disabled.
inline McsEntry select_mcs(double rate, double beta, int symbols, int crc_len) {
  McsEntry e;
  if (rate <= 0.0 || symbols <= 0) return e;
  const std::vector<int> q = feasible_set(rate, beta);
  const int order = q.front();
  const int m = static_cast<int>(std::lround(std::log2(static_cast<double>(order))));
  const int n = symbols * m;
  const double target = std::min(rate / m, beta);
  const int k = static_cast<int>(std::ceil(n * target - 1e-9));
  if (k < crc_len + 1) return e;
  e.active = true;
  e.mod_order = order;
  e.bits_per_symbol = m;
  e.coded_len = n;
  e.info_len = k;
  e.code_rate = static_cast<double>(k) / n;
  return e;
}

/// Per-block MCS decision for the common and private streams.
struct McsDecision {
  McsEntry common;
  std::array<McsEntry, 2> priv;
  int symbols = 0;

  const McsEntry& stream(int s) const {  // 0 = common, 1 = private 1, 2 = private 2
    return s == 0 ? common : priv[s - 1];
  }
};

enum class StreamClass { common, priv };

inline const char* stream_class_name(StreamClass c) {
  return c == StreamClass::common ? "common" : "private";
}

/// Energy back-off values in dB, keyed by (scheme, SNR point, stream class).
/// Lookup picks the nearest SNR row of the matching scheme and class; an
/// empty table means 0 dB everywhere.
struct BackoffTable {
  struct Row {
    Scheme scheme;
    double snr_db;
    StreamClass stream;
    double backoff_db;
  };
  std::vector<Row> rows;

  double lookup(Scheme scheme, double snr_db, StreamClass cls) const {
    double best = 0.0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const Row& r : rows) {
      if (r.scheme != scheme || r.stream != cls) continue;
      const double d = std::abs(r.snr_db - snr_db);
      if (d < best_dist) {
        best_dist = d;
        best = r.backoff_db;
      }
    }
    return best;
  }

  void append(Scheme scheme, double snr_db, StreamClass cls, double backoff_db) {
    if (backoff_db < 0.0) throw std::domain_error("BackoffTable: back-off must be >= 0 dB");
    rows.push_back({scheme, snr_db, cls, backoff_db});
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "scheme,snr_db,stream,backoff_db\n";
    char buf[128];
    for (const Row& r : rows) {
      std::snprintf(buf, sizeof(buf), "%s,%.10g,%s,%.10g\n", scheme_name(r.scheme), r.snr_db,
                    stream_class_name(r.stream), r.backoff_db);
      os << buf;
    }
    return os.str();
  }

  static BackoffTable from_csv_text(const std::string& text) {
    BackoffTable t;
    std::istringstream is(text);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (first) {
        first = false;
        if (line.rfind("scheme", 0) == 0) continue;
      }
      std::istringstream ls(line);
      std::string scheme, snr, stream, bo;
      if (!std::getline(ls, scheme, ',') || !std::getline(ls, snr, ',') ||
          !std::getline(ls, stream, ',') || !std::getline(ls, bo, ','))
        throw std::runtime_error("BackoffTable: malformed CSV row: " + line);
      Row r;
      if (scheme == "rsma")
        r.scheme = Scheme::rsma;
      else if (scheme == "sdma")
        r.scheme = Scheme::sdma;
      else if (scheme == "noma")
        r.scheme = Scheme::noma;
      else
        throw std::runtime_error("BackoffTable: unknown scheme: " + scheme);
      if (stream == "common")
        r.stream = StreamClass::common;
      else if (stream == "private")
        r.stream = StreamClass::priv;
      else
        throw std::runtime_error("BackoffTable: unknown stream class: " + stream);
      r.snr_db = std::stod(snr);
      r.backoff_db = std::stod(bo);
      t.rows.push_back(r);
    }
    return t;
  }

  static BackoffTable load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("BackoffTable: cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return from_csv_text(os.str());
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("BackoffTable: cannot write " + path);
    f << to_csv();
  }
};

/// Recomputes the average rates with each stream's effective SINR scaled down
/// by the back-off factor, shrinking the common shares proportionally so the
/// split still fits the backed-off common rate.
inline RateAllocation apply_backoff(const SaaInstance& inst, const PrecoderMatrix& pm,
                                    const RateAllocation& rates, double backoff_common_db,
                                    double backoff_private_db) {
  const double sc = std::pow(10.0, -backoff_common_db / 10.0);
  const double sp = std::pow(10.0, -backoff_private_db / 10.0);
  RateAllocation out = saa_rates(inst, pm, sc, sp);
  const double before = rates.common_rate();
  const double ratio = before > 0.0 ? out.common_rate() / before : 0.0;
  out.common_share[0] = rates.common_share[0] * ratio;
  out.common_share[1] = rates.common_share[1] * ratio;
  return out;
}

/// Post-back-off mean SINR of a stream over the SAA ensemble; used as the
/// polar-code design point.
inline double mean_stream_sinr(const SaaInstance& inst, const PrecoderMatrix& pm, int stream,
                               double scale) {
  using precoder_detail::column_dot;
  const int m = inst.sample_count();
  double acc = 0.0;
  if (stream == 0) {
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < m; ++i) {
        const double xc = std::norm(column_dot(inst.h[k], i, pm.p_c));
        const double xi = std::norm(column_dot(inst.h[k], i, pm.p[0])) +
                          std::norm(column_dot(inst.h[k], i, pm.p[1]));
        acc += xc / (xi + 1.0);
      }
    return scale * acc / (2 * m);
  }
  const int k = stream - 1;
  for (int i = 0; i < m; ++i) {
    const double own = std::norm(column_dot(inst.h[k], i, pm.p[k]));
    const double other = std::norm(column_dot(inst.h[k], i, pm.p[1 - k]));
    acc += own / (other + 1.0);
  }
  return scale * acc / m;
}

}  // namespace rsma
