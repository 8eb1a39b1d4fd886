#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <vector>

#include "aqbias/collocation.hpp"
#include "aqbias/error.hpp"
#include "aqbias/manifest.hpp"
#include "aqbias/validation.hpp"
#include "support.hpp"

namespace aqbias {
namespace {

TEST(Scores, HandCases) {
  const std::vector<double> z{1.0, 2.0, 3.0, 4.0};
  const ScoreReport perfect = scores(z, z);
  EXPECT_DOUBLE_EQ(perfect.ev, 100.0);
  EXPECT_DOUBLE_EQ(perfect.mae, 0.0);
  EXPECT_DOUBLE_EQ(perfect.rmse, 0.0);
  EXPECT_EQ(perfect.n, 4u);

  const std::vector<double> mean(4, 2.5);
  EXPECT_NEAR(scores(mean, z).ev, 0.0, 1e-12);

  // Residuals {3, -4}: MAE 3.5, RMSE sqrt(12.5), SSres = 25, SStot = 0.5.
  const ScoreReport r = scores(std::vector<double>{4.0, -2.0}, std::vector<double>{1.0, 2.0});
  EXPECT_DOUBLE_EQ(r.mae, 3.5);
  EXPECT_DOUBLE_EQ(r.rmse, std::sqrt(12.5));
  EXPECT_DOUBLE_EQ(r.ev, 100.0 * (1.0 - 25.0 / 0.5));
}

TEST(Scores, RmseNeverBelowMae) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::exponential_distribution<double> e(0.5);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t len = 2 + rep % 40;
    std::vector<double> p(len), z(len);
    for (std::size_t i = 0; i < len; ++i) {
      z[i] = n(rng) * 10.0;
      p[i] = z[i] + (rep % 2 ? n(rng) : e(rng));
    }
    const ScoreReport s = scores(p, z);
    ASSERT_GE(s.rmse, s.mae * (1.0 - 1e-12));
    ASSERT_LE(s.ev, 100.0);
  }
}

TEST(Scores, Refusals) {
  EXPECT_THROW(scores(std::vector<double>{1.0}, std::vector<double>{1.0}), DataError);
  EXPECT_THROW(scores(std::vector<double>{1.0, 2.0}, std::vector<double>{3.0, 3.0}), DataError);
  EXPECT_THROW(scores(std::vector<double>{1.0, 2.0}, std::vector<double>{3.0}), ConfigError);
}

TEST(Split, SizesAndDeterminism) {
  std::vector<std::uint8_t> eligible(200, 0);
  for (std::size_t t = 0; t < 176; ++t) eligible[t + t / 8] = 1;
  const TrainTestSplit a = split_train_test(eligible, 0.7, 42);
  EXPECT_EQ(a.train.size(), 123u);
  EXPECT_EQ(a.test.size(), 53u);
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());
  for (auto t : all) EXPECT_TRUE(eligible[t]);
  const TrainTestSplit b = split_train_test(eligible, 0.7, 42);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(split_train_test(eligible, 0.7, 43).train, a.train);
  EXPECT_THROW(split_train_test(eligible, 1.0, 42), DataError);
  EXPECT_THROW(split_train_test(eligible, 0.0, 42), ConfigError);
  EXPECT_THROW(split_train_test(std::vector<std::uint8_t>(9, 1), 0.5, 1), DataError);
}

class NoiselessCampaign : public ::testing::Test {
 protected:
  void SetUp() override {
    SynthSpec s = test::small_spec(40, 13);
    s.bias.sigma0 = 1e-9;
    spec_ = s;
    camp_ = generate(s);
    for (std::size_t t = 0; t < camp_.observations.n_hours(); ++t) hours_.push_back(t);
  }

  SynthSpec spec_;
  SynthCampaign camp_;
  std::vector<std::size_t> hours_;
};

TEST_F(NoiselessCampaign, LooWithTrueParametersIsExact) {
  LooOptions opt;
  opt.fixed = spec_.bias;
  opt.eval_hours = hours_;
  const LooResult r = loo_station_cv(camp_.observations, opt);
  ASSERT_EQ(r.stations.size(), spec_.n_stations);
  EXPECT_LT(r.corrected_pooled.rmse, 1e-6);
  EXPECT_GT(r.raw_pooled.rmse, 1.0);
  for (const auto& s : r.corrected) EXPECT_NEAR(s.ev, 100.0, 1e-6);
}

TEST_F(NoiselessCampaign, CorrectAtDeviceInvertsModel) {
  const auto& obs = camp_.observations;
  for (std::size_t d = 0; d < obs.devices.size(); ++d) {
    const DeviceSeriesScore s = correct_at_device(obs, d, hours_, spec_.bias);
    EXPECT_EQ(s.hours.size(), hours_.size());
    for (std::size_t i = 0; i < s.hours.size(); ++i)
      EXPECT_NEAR(s.corrected[i], camp_.device_latent[d][s.hours[i]], 1e-8);
  }
}

TEST_F(NoiselessCampaign, DiurnalProfileAveragesByHour) {
  const auto& obs = camp_.observations;
  std::vector<std::vector<double>> corrected(obs.devices.size());
  for (std::size_t d = 0; d < obs.devices.size(); ++d) corrected[d] = camp_.device_latent[d];
  std::vector<std::uint8_t> scope(obs.n_hours(), 1);
  const auto rows = diurnal_profile(obs, corrected, scope);
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) {
    std::size_t d = 0;
    while (obs.devices[d].id != r.device) ++d;
    EXPECT_EQ(obs.devices[d].kind, DeviceKind::station);
    double m = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < obs.n_hours(); ++t)
      if (hour_of_day(obs.hours[t]) == r.hour_of_day) {
        m += obs.devices[d].m[t];
        ++n;
      }
    EXPECT_EQ(r.n, n);
    EXPECT_NEAR(r.raw, m / static_cast<double>(n), 1e-9);
    EXPECT_NEAR(r.corrected, r.measured, 1e-6);
  }
  EXPECT_THROW(diurnal_profile(obs, corrected, std::vector<std::uint8_t>(obs.n_hours(), 0)),
               DataError);
}

TEST_F(NoiselessCampaign, GlsNeedsMoreStationsThanSpatialTerms) {
  FitOptions opt;
  opt.method = FitMethod::gls;
  opt.mode = FitMode::S;
  EXPECT_THROW(fit_observations(camp_.observations, hours_, opt), DataError);
}

TEST(Fit, GlsStationMode) {
  SynthSpec s = test::small_spec(40, 3);
  s.geometry = SynthSpec::defaults().geometry;
  s.n_stations = 6;
  s.station_sites = {StationSite::traffic, StationSite::park,    StationSite::open,
                     StationSite::traffic, StationSite::park, StationSite::any};
  const SynthCampaign c = generate(s);
  std::vector<std::size_t> hours(c.observations.n_hours());
  for (std::size_t t = 0; t < hours.size(); ++t) hours[t] = t;
  FitOptions opt;
  opt.method = FitMethod::gls;
  EXPECT_THROW(fit_observations(c.observations, hours, opt), ConfigError);
  opt.mode = FitMode::S;
  const FitResult r = fit_observations(c.observations, hours, opt);
  EXPECT_GT(r.station_rows, 0u);
  EXPECT_EQ(r.sensor_rows, 0u);
  EXPECT_GT(r.dropped_rows, 0u);
  EXPECT_TRUE(r.gls.has_value());
}

TEST(Collocation, TableSeedsListedSensors) {
  test::TempDir dir("coloc");
  const auto channels = rouen_channels();
  {
    std::ofstream out(dir.file("c.csv"));
    out << "sensor,beta,alpha,gamma.T,gamma.RH,gamma.Ox,gamma.CO,gamma.NO,sigma,note\n"
        << "ASE4,27100,-2.5,-2.0,-1.3,0.2,-0.04,-0.07,28,x\n";
  }
  const CollocationTable t = read_collocation_csv(dir.file("c.csv"), channels);
  ASSERT_EQ(t.sensors.size(), 1u);
  EXPECT_EQ(t.sensors[0].gamma, (std::vector<double>{-0.07, -0.04, 0.2, -1.3, -2.0}));

  const ParameterLayout L(CovariateLayout::rouen(), channels, {"ASE4", "ASE9"});
  const auto priors = default_priors(CovariateLayout::rouen(), channels).expand(L);
  const auto theta = init_from_collocation(L, priors, t);
  const auto means = prior_means(priors);
  EXPECT_EQ(theta[L.alpha(0)], -2.5);
  EXPECT_EQ(theta[L.beta(0)], 27100.0);
  EXPECT_EQ(theta[L.sigma(0)], 28.0);
  EXPECT_EQ(theta[L.gamma(0, 3)], -1.3);
  EXPECT_EQ(theta[L.alpha(1)], means[L.alpha(1)]);
  EXPECT_EQ(theta[L.gamma(1, 0)], means[L.gamma(1, 0)]);
  EXPECT_EQ(theta[L.ac()], means[L.ac()]);

  EXPECT_EQ(init_from_collocation(L, priors, CollocationTable{channels, {}}), means);
  {
    std::ofstream out(dir.file("bad.csv"));
    out << "sensor,beta,alpha,sigma\nASE4,1,-1,2\n";
  }
  EXPECT_THROW(read_collocation_csv(dir.file("bad.csv"), channels), FormatError);
}

TEST(Manifest, GitBlobHashes) {
  EXPECT_EQ(git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  test::TempDir dir("manifest");
  std::ofstream(dir.file("h.txt")) << "hello\n";
  EXPECT_EQ(git_blob_sha1_file(dir.file("h.txt")), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Manifest, WritesOutputHashes) {
  test::TempDir dir("manifest_run");
  std::ofstream(dir.file("a.txt")) << "hello\n";
  RunManifest m;
  m.command = "fit";
  m.seed = 7;
  m.output_dir = dir.path().string();
  m.add_input(dir.file("a.txt"));
  m.write();
  ASSERT_EQ(m.outputs.size(), 1u);
  EXPECT_EQ(m.outputs[0].first, "a.txt");
  EXPECT_EQ(m.inputs[0].second, "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "manifest.json"));
}

}  // namespace
}  // namespace aqbias
