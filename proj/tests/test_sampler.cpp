#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <omp.h>

#include "aqbias/error.hpp"
#include "aqbias/priors.hpp"
#include "aqbias/sampler.hpp"
#include "aqbias/synth.hpp"
#include "support.hpp"

namespace aqbias {
namespace {

SamplerConfig short_config() {
  SamplerConfig cfg;
  cfg.n_adapt = 400;
  cfg.n_burn = 100;
  cfg.n_keep = 200;
  cfg.n_chains = 3;
  cfg.seed = 99;
  return cfg;
}

std::vector<RegressionRow> station_rows() {
  RegressionSynthSpec s;
  s.bias = test::sample_bias();
  s.n_stations = 6;
  s.n_hours = 60;
  s.seed = 3;
  return generate_station_regression(s);
}

std::vector<RegressionRow> campaign_rows() {
  return build_rows(generate(test::small_spec(40)).observations).rows;
}

const PriorSpec& priors() {
  static const PriorSpec p = default_priors(CovariateLayout::rouen(), rouen_channels());
  return p;
}

TEST(Sampler, DeterministicForSeed) {
  const auto rows = campaign_rows();
  const ChainResult a = gibbs_fit(rows, priors(), short_config());
  const ChainResult b = gibbs_fit(rows, priors(), short_config());
  EXPECT_EQ(a.draws, b.draws);
  SamplerConfig other = short_config();
  other.seed = 100;
  EXPECT_NE(gibbs_fit(rows, priors(), other).draws, a.draws);
}

TEST(Sampler, IndependentOfThreadCount) {
  const auto rows = campaign_rows();
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const ChainResult a = gibbs_fit(rows, priors(), short_config());
  omp_set_num_threads(4);
  const ChainResult b = gibbs_fit(rows, priors(), short_config());
  omp_set_num_threads(saved);
  EXPECT_EQ(a.draws, b.draws);
}

TEST(Sampler, EveryDrawSatisfiesSignConstraints) {
  const auto rows = campaign_rows();
  const ChainResult r = gibbs_fit(rows, priors(), short_config());
  const auto expanded = priors().expand(r.layout);
  ASSERT_EQ(r.layout.n_sensors(), 3u);
  for (std::size_t c = 0; c < r.n_chains(); ++c)
    for (std::size_t it = 0; it < r.n_keep; ++it)
      for (std::size_t p = 0; p < r.n_params(); ++p)
        ASSERT_TRUE(expanded[p].in_support(r.draw(c, it, p)))
            << r.layout.names()[p] << " = " << r.draw(c, it, p);
}

TEST(Sampler, ShapesAndSummaries) {
  const auto rows = station_rows();
  const SamplerConfig cfg = short_config();
  const ChainResult r = gibbs_fit(rows, priors(), cfg);
  EXPECT_EQ(r.layout.n_sensors(), 0u);
  EXPECT_EQ(r.n_chains(), cfg.n_chains);
  for (const auto& d : r.draws) EXPECT_EQ(d.size(), cfg.n_keep * r.n_params());
  for (std::size_t p = 0; p < r.n_params(); ++p) {
    const auto pooled = r.pooled(p);
    double mean = 0.0;
    for (double v : pooled) mean += v;
    mean /= static_cast<double>(pooled.size());
    EXPECT_NEAR(r.mean[p], mean, 1e-9 * std::max(1.0, std::abs(mean)));
    EXPECT_GT(r.sd[p], 0.0);
    for (const auto& acc : r.acceptance) {
      EXPECT_GT(acc[p], 0.0);
      EXPECT_LE(acc[p], 1.0);
    }
  }
}

TEST(Sampler, RecoversStationOnlyBias) {
  RegressionSynthSpec s;
  s.bias = test::sample_bias();
  s.bias.sigma0 = 5.0;
  s.n_stations = 12;
  s.n_hours = 150;
  s.seed = 8;
  const auto rows = generate_station_regression(s);
  SamplerConfig cfg = short_config();
  cfg.n_adapt = 1500;
  cfg.n_burn = 300;
  cfg.n_keep = 600;
  const ChainResult r = gibbs_fit(rows, priors(), cfg);
  const auto truth = pack_parameters(r.layout, {s.bias, {}});
  for (std::size_t p = 0; p < r.n_params(); ++p)
    EXPECT_LE(std::abs(r.mean[p] - truth[p]), 4.0 * r.sd[p]) << r.layout.names()[p];
}

TEST(Sampler, RefusesSensorOnlyRows) {
  auto rows = campaign_rows();
  std::erase_if(rows, [](const RegressionRow& r) { return r.kind == DeviceKind::station; });
  EXPECT_THROW(gibbs_fit(rows, priors(), short_config()), DataError);
  EXPECT_THROW(gibbs_fit({}, priors(), short_config()), DataError);
}

TEST(Sampler, RejectsInitOutsideSupport) {
  const auto rows = station_rows();
  const ParameterLayout L = layout_for_rows(rows, CovariateLayout::rouen(), rouen_channels());
  auto init = prior_means(priors().expand(L));
  init[L.ac()] = 0.5;
  EXPECT_THROW(gibbs_fit(rows, priors(), short_config(), init), ConfigError);
  init.pop_back();
  EXPECT_THROW(gibbs_fit(rows, priors(), short_config(), init), ConfigError);
}

TEST(Sampler, ConfigValidationAndJson) {
  SamplerConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  const SamplerConfig back = SamplerConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.n_adapt, 8000u);
  EXPECT_EQ(back.n_burn, 2000u);
  EXPECT_EQ(back.n_keep, 2500u);
  EXPECT_EQ(back.n_chains, 3u);
  cfg.n_keep = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SamplerConfig{};
  cfg.target_accept = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Parameters, PackUnpackRoundTrip) {
  const SynthSpec spec = test::small_spec();
  std::vector<std::string> ids;
  for (const auto& s : spec.sensors) ids.push_back(s.sensor_id);
  const ParameterLayout L(spec.layout, spec.channels, ids);
  PosteriorEstimate est{spec.bias, spec.sensors};
  std::sort(est.sensors.begin(), est.sensors.end(),
            [](const auto& a, const auto& b) { return a.sensor_id < b.sensor_id; });
  const auto theta = pack_parameters(L, est);
  ASSERT_EQ(theta.size(), L.size());
  EXPECT_EQ(theta[L.ac()], spec.bias.ac);
  const PosteriorEstimate back = unpack_parameters(L, theta);
  EXPECT_EQ(back.bias, est.bias);
  EXPECT_EQ(back.sensors, est.sensors);
}

TEST(Estimate, BinnedMode) {
  // 9 draws -> 3 bins over [0, 9]: {0,1,2.5} {3.5,4,4.5,5,5.5} {9}.
  EXPECT_DOUBLE_EQ(binned_mode({0, 1, 2.5, 3.5, 4, 4.5, 5, 9, 5.5}), (3.5 + 4 + 4.5 + 5 + 5.5) / 5);
  // Tie between the first and last bin: lowest wins.
  EXPECT_DOUBLE_EQ(binned_mode({0, 0.5, 1, 1.5}), 0.25);
  EXPECT_DOUBLE_EQ(binned_mode({2, 2, 2}), 2.0);
}

TEST(Estimate, PosteriorEstimateUsesSummaries) {
  const auto rows = station_rows();
  ChainResult r = gibbs_fit(rows, priors(), short_config());
  const PosteriorEstimate m = posterior_estimate(r, EstimateKind::mean);
  EXPECT_EQ(m.bias.ac, r.mean[r.layout.ac()]);
  EXPECT_EQ(m.bias.sigma0, r.mean[r.layout.sigma0()]);
  const PosteriorEstimate md = posterior_estimate(r, EstimateKind::mode);
  EXPECT_EQ(md.bias.zetaS[1], r.mode[r.layout.zetaS(1)]);
}

}  // namespace
}  // namespace aqbias
