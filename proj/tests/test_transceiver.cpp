#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "rsma/transceiver.hpp"
#include "support/oracles.hpp"

using namespace rsma;

namespace {

SaaInstance orthogonal_instance() {
  Eigen::MatrixXcd est(2, 2);
  est << 1.0, 0.0, 0.0, 1.0;
  Rng rng(1);
  return SaaInstance::draw(est, CsitModel::with_error_variance(100.0, 0.0), 1, rng);
}

LinkConfig make_test_link(const SaaInstance& inst, const PrecoderMatrix& pm,
                          const RateAllocation& backed) {
  return build_link(inst, pm, backed, 0.9, 256, CrcSpec::crc11(), 8, 0.0, 0.0, {5, 6, 7});
}

}  // namespace

TEST_CASE("payload split follows the largest-remainder rule") {
  const SaaInstance inst = orthogonal_instance();
  PrecoderMatrix pm = PrecoderMatrix::zero(2);
  pm.p_c = 300.0 * (inst.estimate.col(0) + inst.estimate.col(1));

  RateAllocation backed;
  backed.common_rate_user = {2.0, 2.0};

  // payload 501 bits (K = 512 incl. CRC-11), 2:1 split -> 334/167
  backed.common_share = {2.0 / 3.0, 1.0 / 3.0};
  LinkConfig link = make_test_link(inst, pm, backed);
  REQUIRE(link.active(0));
  REQUIRE(link.streams[0].mcs.info_len == 512);
  Rng rng(2);
  SplitMessage msg = split_payload(link, backed, rng);
  CHECK(msg.common_len(0) == 334);
  CHECK(msg.common_len(1) == 167);

  // equal shares split within one bit
  backed.common_share = {1.0, 1.0};
  msg = split_payload(link, backed, rng);
  CHECK(std::abs(msg.common_len(0) - msg.common_len(1)) <= 1);
  CHECK(msg.common_len(0) + msg.common_len(1) == 501);

  // one-sided share: everything goes to user 1
  backed.common_share = {1.5, 0.0};
  msg = split_payload(link, backed, rng);
  CHECK(msg.common_len(0) == 501);
  CHECK(msg.common_len(1) == 0);
}

TEST_CASE("explicit 2:1 split of a 100-bit payload gives 67/33") {
  // exercised through the largest-remainder helper semantics: quotas 66.7/33.3
  const int payload = 100;
  const double c1 = 2.0, c2 = 1.0;
  const double q1 = payload * c1 / (c1 + c2);
  const double q2 = payload * c2 / (c1 + c2);
  int n1 = static_cast<int>(std::floor(q1));
  const int n2 = static_cast<int>(std::floor(q2));
  if (n1 + n2 < payload && (q1 - n1) >= (q2 - n2)) ++n1;
  CHECK(n1 == 67);
  CHECK(payload - n1 == 33);
}

TEST_CASE("transmit superposes precoded streams with unit stream power") {
  const SaaInstance inst = orthogonal_instance();
  PrecoderMatrix pm = PrecoderMatrix::zero(2);
  pm.p_c = 2.0 * (inst.estimate.col(0) + inst.estimate.col(1));
  pm.p[0] = 3.0 * inst.estimate.col(0);
  pm.p[1] = 1.5 * inst.estimate.col(1);
  RateAllocation backed;
  backed.common_rate_user = {2.0, 2.0};
  backed.common_share = {1.0, 1.0};
  backed.private_rate = {2.0, 2.0};
  const LinkConfig link = make_test_link(inst, pm, backed);
  REQUIRE(link.active(0));
  REQUIRE(link.active(1));
  REQUIRE(link.active(2));

  Rng rng(3);
  double power = 0.0;
  const int blocks = 200;
  for (int b = 0; b < blocks; ++b) {
    const SplitMessage msg = split_payload(link, backed, rng);
    const TransmitBlock blk = transmit(msg, link);
    // x column t = sum_s p_s * s_s[t]
    for (int t = 0; t < 5; ++t) {
      Eigen::Vector2cd expect = Eigen::Vector2cd::Zero();
      expect += pm.p_c * blk.symbols[0][t];
      expect += pm.p[0] * blk.symbols[1][t];
      expect += pm.p[1] * blk.symbols[2][t];
      CHECK((blk.x.col(t) - expect).norm() < 1e-12);
    }
    power += blk.x.squaredNorm() / link.symbols;
  }
  power /= blocks;
  CHECK_THAT(power, Catch::Matchers::WithinRel(pm.total_power(), 0.02));
}

TEST_CASE("zero precoders give a zero transmit signal") {
  const SaaInstance inst = orthogonal_instance();
  PrecoderMatrix pm = PrecoderMatrix::zero(2);
  RateAllocation backed;  // all streams disabled
  const LinkConfig link = make_test_link(inst, pm, backed);
  Rng rng(4);
  const SplitMessage msg = split_payload(link, backed, rng);
  const TransmitBlock blk = transmit(msg, link);
  CHECK(blk.x.norm() == 0.0);
}

TEST_CASE("common-only transmission is rank one") {
  const SaaInstance inst = orthogonal_instance();
  PrecoderMatrix pm = PrecoderMatrix::zero(2);
  pm.p_c = 2.0 * (inst.estimate.col(0) + 0.5 * inst.estimate.col(1));
  RateAllocation backed;
  backed.common_rate_user = {1.0, 1.0};
  backed.common_share = {0.5, 0.5};
  const LinkConfig link = make_test_link(inst, pm, backed);
  Rng rng(5);
  const SplitMessage msg = split_payload(link, backed, rng);
  const TransmitBlock blk = transmit(msg, link);
  const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(blk.x);
  CHECK(svd.singularValues()(1) < 1e-9 * svd.singularValues()(0));
}

TEST_CASE("closed-form MMSE equalizers match numerical minimization") {
  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::MatrixXcd h = sample_estimate(2, 2, rng);
    PrecoderMatrix pm = PrecoderMatrix::zero(2);
    for (int i = 0; i < 2; ++i) {
      pm.p_c[i] = 2.0 * rng.cgaussian();
      pm.p[0][i] = rng.cgaussian();
      pm.p[1][i] = rng.cgaussian();
    }
    for (int user = 0; user < 2; ++user) {
      const Eigen::VectorXcd hk = h.col(user);
      const EqualizerPair eq = mmse_equalizers(hk, pm, user);
      // common stage sees all three streams; private stage sees the privates
      const std::complex<double> gc =
          rsma::oracles::numeric_mmse(hk, pm.p_c, {&pm.p_c, &pm.p[0], &pm.p[1]});
      const std::complex<double> gp =
          rsma::oracles::numeric_mmse(hk, pm.p[user], {&pm.p[0], &pm.p[1]});
      CHECK(std::abs(eq.common - gc) < 1e-9);
      CHECK(std::abs(eq.priv - gp) < 1e-9);
    }
  }
}

TEST_CASE("MMSE equalizer edge cases") {
  const Eigen::VectorXcd h = Eigen::Vector2cd(1.0, std::complex<double>(0.0, 1.0));
  const PrecoderMatrix zero = PrecoderMatrix::zero(2);
  const EqualizerPair eq = mmse_equalizers(h, zero, 0);
  CHECK(eq.common == cdouble(0.0, 0.0));
  CHECK(eq.priv == cdouble(0.0, 0.0));

  // single active common stream with |h^H p_c|^2 = gamma: g' h^H p_c = rho
  PrecoderMatrix pm = PrecoderMatrix::zero(2);
  pm.p_c = std::sqrt(3.0) / h.norm() * h;
  const double gamma = std::norm(h.dot(pm.p_c));
  const EqualizerPair e2 = mmse_equalizers(h, pm, 0);
  const std::complex<double> prod = e2.common * h.dot(pm.p_c);
  CHECK_THAT(prod.real(), Catch::Matchers::WithinAbs(gamma / (1.0 + gamma), 1e-12));
  CHECK_THAT(prod.imag(), Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("SIC reconstruction is bit-exact when the common CRC passes") {
  const SaaInstance inst = orthogonal_instance();
  PrecoderMatrix pm = PrecoderMatrix::zero(2);
  pm.p_c = 40.0 * (inst.estimate.col(0) + inst.estimate.col(1));
  pm.p[0] = 3.0 * inst.estimate.col(0);
  pm.p[1] = 3.0 * inst.estimate.col(1);
  RateAllocation backed;
  backed.common_rate_user = {2.0, 2.0};
  backed.common_share = {1.0, 1.0};
  backed.private_rate = {1.5, 1.5};
  const LinkConfig link = make_test_link(inst, pm, backed);
  Rng rng(7);
  const SplitMessage msg = split_payload(link, backed, rng);
  const TransmitBlock blk = transmit(msg, link);

  Rng noise(8);
  for (int user = 0; user < 2; ++user) {
    const Eigen::VectorXcd hk = inst.estimate.col(user);
    std::vector<cdouble> y(link.symbols);
    for (int t = 0; t < link.symbols; ++t) {
      cdouble v = 0.0;
      for (int r = 0; r < 2; ++r) v += std::conj(hk[r]) * blk.x(r, t);
      y[t] = v + noise.cgaussian();
    }
    const ReceiveResult rx = receive_sic(y, hk, user, link);
    REQUIRE(rx.common_crc_ok);
    // replaying the transmitter on the decoded payload reproduces s_c exactly
    const std::vector<cdouble> rebuilt =
        transceiver_detail::encode_stream(link, 0, rx.common_payload);
    double max_err = 0.0;
    for (int t = 0; t < link.symbols; ++t)
      max_err = std::max(max_err, std::abs(rebuilt[t] - blk.symbols[0][t]));
    CHECK(max_err == 0.0);
  }
}

TEST_CASE("disabled common stream degenerates to a private-only receiver") {
  const SaaInstance inst = orthogonal_instance();
  PrecoderMatrix with_pc = PrecoderMatrix::zero(2);
  with_pc.p[0] = 3.0 * inst.estimate.col(0);
  with_pc.p[1] = 3.0 * inst.estimate.col(1);
  RateAllocation backed;
  backed.private_rate = {1.5, 1.5};  // no common shares -> common stays off
  const LinkConfig link = make_test_link(inst, with_pc, backed);
  CHECK_FALSE(link.active(0));
  CHECK(link.pm.p_c.norm() == 0.0);

  Rng rng(9);
  const SplitMessage msg = split_payload(link, backed, rng);
  const TransmitBlock blk = transmit(msg, link);
  Rng noise(10);
  const Eigen::VectorXcd hk = inst.estimate.col(0);
  std::vector<cdouble> y(link.symbols);
  for (int t = 0; t < link.symbols; ++t) {
    cdouble v = 0.0;
    for (int r = 0; r < 2; ++r) v += std::conj(hk[r]) * blk.x(r, t);
    y[t] = v + noise.cgaussian();
  }
  const ReceiveResult rx = receive_sic(y, hk, 0, link);
  CHECK_FALSE(rx.common_attempted);
  REQUIRE(rx.private_attempted);
  CHECK(rx.private_crc_ok);
  CHECK(rx.private_payload == msg.private_user[0]);
}

TEST_CASE("merge counts only correctly recovered slices") {
  SplitMessage sent;
  sent.common_user[0] = {1, 0, 1};
  sent.common_user[1] = {0, 1};
  sent.private_user[0] = {1, 1, 0, 0};

  ReceiveResult rx;
  rx.common_attempted = true;
  rx.common_crc_ok = true;
  rx.common_payload = {1, 0, 1, 0, 1};
  rx.private_attempted = true;
  rx.private_crc_ok = true;
  rx.private_payload = {1, 1, 0, 0};

  const MergeOutcome all = merge_messages(sent, rx, 0);
  CHECK(all.recovered_bits == 7);
  CHECK_FALSE(all.common_error);
  CHECK_FALSE(all.private_error);

  ReceiveResult common_fail = rx;
  common_fail.common_crc_ok = false;
  const MergeOutcome cf = merge_messages(sent, common_fail, 0);
  CHECK(cf.recovered_bits == 4);
  CHECK(cf.common_error);

  // undetected CRC error: flag passes but bits differ -> no credit
  ReceiveResult wrong_bits = rx;
  wrong_bits.common_payload = {1, 1, 1, 0, 1};
  const MergeOutcome wb = merge_messages(sent, wrong_bits, 0);
  CHECK(wb.recovered_bits == 4);
  CHECK(wb.common_error);

  ReceiveResult both_fail = rx;
  both_fail.common_crc_ok = false;
  both_fail.private_crc_ok = false;
  const MergeOutcome bf = merge_messages(sent, both_fail, 0);
  CHECK(bf.recovered_bits == 0);

  // user 2's slice sits after user 1's in the common payload
  const MergeOutcome u2 = merge_messages(sent, rx, 1);
  CHECK(u2.recovered_bits == 2);
}
