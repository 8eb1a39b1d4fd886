#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "aqbias/campaign.hpp"
#include "aqbias/error.hpp"
#include "aqbias/io.hpp"
#include "aqbias/synth.hpp"
#include "support.hpp"

namespace aqbias {
namespace {

namespace fs = std::filesystem;

TEST(TimestampPattern, ParseAndFormat) {
  const Hour h = to_hour({2022, 12, 7, 17});
  EXPECT_EQ(format_timestamp_pattern(h, "M_%Y%m%dT%H.grid"), "M_20221207T17.grid");
  EXPECT_EQ(parse_timestamp_pattern("M_20221207T17.grid", "M_%Y%m%dT%H.grid"), h);
  EXPECT_EQ(parse_timestamp_pattern("out-2022-12-07-17.asc", "out-%Y-%m-%d-%H.asc"), h);
  EXPECT_THROW(parse_timestamp_pattern("X_20221207T17.grid", "M_%Y%m%dT%H.grid"), FormatError);
  EXPECT_THROW(parse_timestamp_pattern("M_2022120T17.grid", "M_%Y%m%dT%H.grid"), FormatError);
  EXPECT_THROW(parse_timestamp_pattern("M_20221307T17.grid", "M_%Y%m%dT%H.grid"), FormatError);
}

class CampaignTest : public ::testing::Test {
 protected:
  void SetUp() override {
    spec_ = test::small_spec(30);
    spec_.missing_rate = 0.1;
    camp_ = generate(spec_);
    write_synthetic_campaign(camp_, spec_, dir_.path().string());
  }

  test::TempDir dir_{"campaign"};
  SynthSpec spec_;
  SynthCampaign camp_;
};

TEST_F(CampaignTest, ConfigRoundTrip) {
  const CampaignConfig cfg = read_campaign_config(dir_.file("config.json"));
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.layout(), spec_.layout);
  EXPECT_EQ(cfg.channel_names(), spec_.channels);
  const CampaignConfig back = CampaignConfig::from_json(cfg.to_json(), cfg.base_dir);
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(cfg.resolve("model/x.grid"), (dir_.path() / "model/x.grid").string());
}

TEST_F(CampaignTest, AssembleReproducesGenerator) {
  const Assembly a = assemble(read_campaign_config(dir_.file("config.json")));
  EXPECT_EQ(a.grids.hours.size(), spec_.n_hours);
  EXPECT_TRUE(a.observations == camp_.observations);
  ASSERT_EQ(a.covariates.k(), camp_.covariates.k());
  for (std::size_t s = 0; s < a.covariates.k(); ++s)
    EXPECT_EQ(a.covariates.layers[s], camp_.covariates.layers[s]);
  std::size_t missing = 0;
  for (const auto& [id, n] : a.missing_hours) missing += n;
  EXPECT_GT(missing, 0u);
}

TEST_F(CampaignTest, ListGridsRejectsDuplicateHours) {
  CampaignConfig cfg = read_campaign_config(dir_.file("config.json"));
  const GridIndex idx = list_grids(cfg);
  ASSERT_EQ(idx.hours.size(), spec_.n_hours);
  EXPECT_TRUE(std::is_sorted(idx.hours.begin(), idx.hours.end()));
  fs::copy_file(idx.paths[0], dir_.path() / "model" / "M_copy.grid");
  cfg.timestamp_pattern.clear();
  EXPECT_THROW(list_grids(cfg), DataError);
}

TEST_F(CampaignTest, PatternMustAgreeWithHeader) {
  const CampaignConfig cfg = read_campaign_config(dir_.file("config.json"));
  const GridIndex idx = list_grids(cfg);
  // Swap the names of the first two grids: the names still list valid hours
  // but disagree with the headers.
  const fs::path tmp = dir_.path() / "swap.tmp";
  fs::rename(idx.paths[0], tmp);
  fs::rename(idx.paths[1], idx.paths[0]);
  fs::rename(tmp, idx.paths[1]);
  EXPECT_EQ(list_grids(cfg).hours, idx.hours);
  EXPECT_THROW(assemble(cfg), FormatError);
}

TEST_F(CampaignTest, MissingDeviceFileIsFormatError) {
  CampaignConfig cfg = read_campaign_config(dir_.file("config.json"));
  cfg.devices[0].path = "devices/absent.csv";
  EXPECT_THROW(assemble(cfg), FormatError);
}

TEST(Synth, DeterministicAndSpecRoundTrip) {
  SynthSpec s = test::small_spec(20, 5);
  s.station_sites = {StationSite::traffic, StationSite::park, StationSite::open, StationSite::any};
  const SynthCampaign a = generate(s), b = generate(s);
  EXPECT_TRUE(a.observations == b.observations);
  EXPECT_EQ(a.model[3].values, b.model[3].values);
  EXPECT_EQ(SynthSpec::from_json(s.to_json()), s);
  s.seed = 6;
  EXPECT_NE(generate(s).model[3].values, a.model[3].values);
  s.station_sites.pop_back();
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(parse_station_site("roadside"), ConfigError);
}

TEST(Synth, ModelOutputFollowsBiasModel) {
  const SynthSpec s = test::small_spec(10);
  const SynthCampaign c = generate(s);
  const auto& g = c.covariates.geometry;
  for (std::size_t t = 0; t < c.model.size(); ++t) {
    const double* xt = c.observations.xt_at(t);
    for (std::size_t cell = 0; cell < g.size(); cell += 37) {
      std::vector<double> xs;
      for (const auto& layer : c.covariates.layers) xs.push_back(layer[cell]);
      const double lat = c.latent[t].values[cell];
      const double expect = eval_l0(s.bias, {xt, 2}) + lat * (1.0 + eval_lc(s.bias, xs, {xt, 2}));
      EXPECT_NEAR(c.model[t].values[cell], expect, 1e-9 * std::max(1.0, std::abs(expect)));
    }
  }
}

}  // namespace
}  // namespace aqbias
