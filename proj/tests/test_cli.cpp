#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rsma/cli.hpp"

using namespace rsma;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::vector<CampaignResult> micro_campaign() {
  std::vector<CampaignResult> results;
  for (Scheme s : {Scheme::rsma, Scheme::sdma, Scheme::noma}) {
    CampaignConfig cfg;
    cfg.scheme = s;
    cfg.snr_db = {15.0, 25.0};
    cfg.trials = 5;
    cfg.saa_samples = 32;
    cfg.seed = 12345;
    results.push_back(run_campaign(cfg));
  }
  return results;
}

}  // namespace

TEST_CASE("scheme list parsing") {
  CHECK(cli_detail::parse_scheme_list("all").size() == 3);
  const auto two = cli_detail::parse_scheme_list("sdma,rsma");
  REQUIRE(two.size() == 2);
  CHECK(two[0] == Scheme::sdma);
  CHECK(two[1] == Scheme::rsma);
  CHECK_THROWS_WITH(cli_detail::parse_scheme_list("bogus"),
                    Catch::Matchers::ContainsSubstring("rsma, sdma, noma"));
}

TEST_CASE("snr grid parsing") {
  const auto grid = cli_detail::parse_snr_grid("5:5:35");
  REQUIRE(grid.size() == 7);
  CHECK(grid.front() == 5.0);
  CHECK(grid.back() == 35.0);
  const auto pair = cli_detail::parse_snr_grid("10,22.5");
  REQUIRE(pair.size() == 2);
  CHECK(pair[1] == 22.5);
  CHECK_THROWS_AS(cli_detail::parse_snr_grid("10:5"), ConfigError);
  CHECK_THROWS_AS(cli_detail::parse_snr_grid("abc"), ConfigError);
  CHECK_THROWS_AS(cli_detail::parse_snr_grid("35:5:10"), ConfigError);
}

TEST_CASE("json config application and schema validation") {
  RunSpec spec;
  apply_config_json(nlohmann::json::parse(R"({
    "scheme": "rsma",
    "snr": "5:5:35",
    "alpha": 0.6,
    "qos": 0.1,
    "trials": 50,
    "seed": 42
  })"),
                    spec);
  CHECK(spec.schemes == std::vector<Scheme>{Scheme::rsma});
  CHECK(spec.base.snr_db.size() == 7);
  CHECK(spec.base.qos == 0.1);
  CHECK(spec.base.trials == 50);
  CHECK(spec.base.seed == 42);

  RunSpec other;
  CHECK_THROWS_WITH(apply_config_json(nlohmann::json::parse(R"({"snrr": "5:5:10"})"), other),
                    Catch::Matchers::ContainsSubstring("snrr"));
}

TEST_CASE("spec validation rejects bad values") {
  RunSpec spec;
  spec.base.trials = 0;
  CHECK_THROWS_AS(validate_spec(spec), ConfigError);
  spec.base.trials = 10;
  spec.base.beta = 1.5;
  CHECK_THROWS_AS(validate_spec(spec), ConfigError);
  spec.base.beta = 0.9;
  spec.format = "xml";
  CHECK_THROWS_AS(validate_spec(spec), ConfigError);
  spec.format = "json";
  CHECK_NOTHROW(validate_spec(spec));
}

TEST_CASE("fixed-seed micro campaign matches the golden CSV and JSON") {
  const auto results = micro_campaign();
  const std::string csv = results_to_csv(results);
  const std::string json = results_to_json(results).dump(2) + "\n";

  const std::string golden_dir = std::string(RSMA_SOURCE_DIR) + "/tests/golden";
  if (const char* regen = std::getenv("RSMA_REGEN_GOLDEN"); regen && regen[0] == '1') {
    std::ofstream(golden_dir + "/micro.csv", std::ios::binary) << csv;
    std::ofstream(golden_dir + "/micro.json", std::ios::binary) << json;
    SUCCEED("regenerated golden files");
    return;
  }
  CHECK(csv == read_file(golden_dir + "/micro.csv"));
  CHECK(json == read_file(golden_dir + "/micro.json"));
}

TEST_CASE("json output round-trips and mirrors the CSV schema") {
  const auto results = micro_campaign();
  const nlohmann::json j = results_to_json(results);
  const nlohmann::json back = nlohmann::json::parse(j.dump());
  REQUIRE(back.contains("results"));
  REQUIRE(back["results"].size() == 6);  // 3 schemes x 2 SNR points
  std::size_t idx = 0;
  for (const auto& r : results) {
    for (const auto& p : r.points) {
      const auto& row = back["results"][idx++];
      CHECK(row["scheme"].get<std::string>() == scheme_name(r.scheme));
      CHECK(row["snr_db"].get<double>() == p.snr_db);
      CHECK(row["throughput_bps_hz"].get<double>() == p.throughput);
      CHECK(row["esr_bound"].get<double>() == p.esr_bound);
      CHECK(row["infeasible_count"].get<long>() == p.infeasible_count);
      const double parts = row["tp_common"].get<double>() +
                           row["tp_private1"].get<double>() +
                           row["tp_private2"].get<double>();
      CHECK_THAT(parts, Catch::Matchers::WithinAbs(p.throughput, 1e-9));
    }
  }
}

TEST_CASE("emit_results writes the requested format and rejects bad paths") {
  const auto results = micro_campaign();
  RunSpec spec;
  spec.output = std::filesystem::temp_directory_path() / "rsma_cli_test.csv";
  spec.format = "csv";
  spec.verbosity = 0;
  emit_results(results, spec);
  CHECK(read_file(spec.output) == results_to_csv(results));
  std::filesystem::remove(spec.output);

  spec.output = "/nonexistent-dir/out.csv";
  CHECK_THROWS(emit_results(results, spec));
}
