#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aqbias/campaign.hpp"
#include "aqbias/collocation.hpp"
#include "aqbias/csv.hpp"
#include "aqbias/diagnostics.hpp"
#include "aqbias/error.hpp"
#include "aqbias/io.hpp"
#include "aqbias/manifest.hpp"
#include "aqbias/params_io.hpp"
#include "aqbias/synth.hpp"
#include "aqbias/validation.hpp"

namespace fs = std::filesystem;
using namespace aqbias;

namespace {

struct SamplerFlags {
  std::uint64_t seed = SamplerConfig{}.seed;
  std::size_t chains = SamplerConfig{}.n_chains;
  std::size_t adapt = SamplerConfig{}.n_adapt;
  std::size_t burn = SamplerConfig{}.n_burn;
  std::size_t keep = SamplerConfig{}.n_keep;
  double target = SamplerConfig{}.target_accept;
  double guard = kDefaultGuard;
  std::string likelihood = "measurement";
  std::string sampler = "gibbs";
  std::string priors;
  std::string init = "prior-means";
  std::string estimate = "mean";

  void attach(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--chains", chains, "Number of chains");
    cmd->add_option("--adapt", adapt, "Adaptation iterations per chain");
    cmd->add_option("--burn", burn, "Burn-in iterations per chain");
    cmd->add_option("--keep", keep, "Retained draws per chain");
    cmd->add_option("--target-accept", target, "Adaptation target acceptance rate");
    cmd->add_option("--guard", guard, "Singularity guard on |1 + Lc|");
    cmd->add_option("--likelihood", likelihood, "measurement | model | model_literal");
    cmd->add_option("--sampler", sampler, "gibbs | gls");
    cmd->add_option("--priors", priors, "Prior specification file (JSON)");
    cmd->add_option("--init", init, "prior-means or a collocation CSV");
    cmd->add_option("--estimate", estimate, "mean | mode");
  }

  FitOptions options(const ObservationSet& obs, FitMode mode, RunManifest& manifest) const {
    FitOptions o;
    o.mode = mode;
    o.method = parse_fit_method(sampler);
    o.sampler.seed = seed;
    o.sampler.n_chains = chains;
    o.sampler.n_adapt = adapt;
    o.sampler.n_burn = burn;
    o.sampler.n_keep = keep;
    o.sampler.target_accept = target;
    o.sampler.guard = guard;
    o.sampler.likelihood = parse_likelihood_form(likelihood);
    o.sampler.validate();
    o.gls.guard = guard;
    if (estimate == "mean") {
      o.estimate = EstimateKind::mean;
    } else if (estimate == "mode") {
      o.estimate = EstimateKind::mode;
    } else {
      throw ConfigError("estimate must be mean or mode");
    }
    if (!priors.empty()) {
      o.priors = PriorSpec::from_json(read_json_file(priors));
      manifest.add_input(priors);
    }
    if (init != "prior-means") {
      o.collocation = read_collocation_csv(init, obs.channel_names);
      manifest.add_input(init);
    }
    return o;
  }
};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void note(const std::string& msg) { std::cerr << msg << '\n'; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed: " + path.string());
}

void hash_campaign_inputs(const CampaignConfig& cfg, const Assembly* a, RunManifest& m,
                          const std::string& config_path) {
  m.config_path = config_path;
  m.add_input(config_path);
  for (const auto& s : cfg.spatial) m.add_input(cfg.resolve(s.path));
  if (!cfg.temporal_path.empty()) m.add_input(cfg.resolve(cfg.temporal_path));
  std::vector<DeviceEntry> devs = cfg.devices;
  std::sort(devs.begin(), devs.end(), [](auto& x, auto& y) { return x.id < y.id; });
  for (const auto& d : devs) m.add_input(cfg.resolve(d.path));
  if (a)
    for (const auto& p : a->grids.paths) m.add_input(p);
}

std::vector<std::size_t> indices_of(const std::vector<std::uint8_t>& mask) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t]) out.push_back(t);
  return out;
}

std::vector<std::uint8_t> hour_scope(const ObservationSet& obs, const CampaignConfig& cfg,
                                     const std::string& hours) {
  if (hours == "all") return std::vector<std::uint8_t>(obs.n_hours(), 1);
  if (hours == "traffic") return traffic_hours_filter(obs.hours, cfg.window);
  throw ConfigError("hours must be all or traffic");
}

std::string summary_csv(const ChainResult& r) {
  std::string out = "parameter,mean,sd,mode,rhat,ess,acceptance\n";
  for (std::size_t p = 0; p < r.n_params(); ++p) {
    double acc = 0.0;
    for (const auto& a : r.acceptance) acc += a[p];
    acc /= static_cast<double>(r.acceptance.size());
    out += r.layout.names()[p] + ',' + csv::format_double(r.mean[p]) + ',' +
           csv::format_double(r.sd[p]) + ',' + csv::format_double(r.mode[p]) + ',' +
           csv::format_double(r.rhat.empty() ? kNaN : r.rhat[p]) + ',' +
           csv::format_double(r.ess.empty() ? kNaN : r.ess[p]) + ',' +
           csv::format_double(acc) + '\n';
  }
  return out;
}

int cmd_fit(const std::string& config_path, const std::string& mode_text, const std::string& hours,
            const std::string& out_dir, const SamplerFlags& flags, RunManifest& manifest) {
  const CampaignConfig cfg = read_campaign_config(config_path);
  const Assembly a = assemble(cfg);
  hash_campaign_inputs(cfg, &a, manifest, config_path);
  const ObservationSet& obs = a.observations;
  const FitMode mode = parse_fit_mode(mode_text);
  const FitOptions opt = flags.options(obs, mode, manifest);
  const auto fit_hours = indices_of(hour_scope(obs, cfg, hours));
  note("fit: " + std::to_string(fit_hours.size()) + " hours, mode " + to_string(mode) +
       ", estimator " + to_string(opt.method));

  const FitResult fit = fit_observations(obs, fit_hours, opt);
  note("fit: " + std::to_string(fit.station_rows) + " station rows, " +
       std::to_string(fit.sensor_rows) + " sensor rows, " + std::to_string(fit.dropped_rows) +
       " sensor rows dropped by mode");

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  ParameterFile pf;
  pf.layout = obs.layout;
  pf.channels = obs.channel_names;
  pf.bias = fit.bias;
  pf.sensors = fit.sensors;
  pf.estimate = opt.method == FitMethod::gls ? "gls" : flags.estimate;
  write_parameter_file(pf, (dir / "params.json").string());

  if (fit.chains) {
    write_draws_csv(*fit.chains, (dir / "draws.csv").string());
    write_text(dir / "summary.csv", summary_csv(*fit.chains));
    const DiagnosticsReport d = diagnostics(*fit.chains);
    write_text(dir / "diagnostics.txt", d.table());
    if (!d.warning.empty()) note("warning: " + d.warning);
    if (!d.flagged.empty())
      note("warning: " + std::to_string(d.flagged.size()) + " parameters have R-hat above " +
           std::to_string(kRhatThreshold));
  }
  if (fit.gls) {
    nlohmann::json j;
    j["columns"] = fit.gls->columns;
    j["coefficients"] = fit.gls->coefficients;
    j["first_pass"] = fit.gls->first_pass;
    j["iterations"] = fit.gls->iterations;
    j["converged"] = fit.gls->converged;
    write_json_file(j, (dir / "gls.json").string());
  }
  return 0;
}

int cmd_correct(const std::string& config_path, const std::string& params_path,
                const std::string& hours, const std::string& out_dir, double guard,
                const std::string& encoding_text, const std::string& outside_text,
                RunManifest& manifest) {
  const CampaignConfig cfg = read_campaign_config(config_path);
  hash_campaign_inputs(cfg, nullptr, manifest, config_path);
  const ParameterFile pf = read_parameter_file(params_path);
  manifest.add_input(params_path);
  if (!(pf.layout == cfg.layout()))
    throw ConfigError("parameter file covariates do not match the campaign configuration");
  pf.bias.validate(cfg.layout().k(), cfg.layout().l());
  const GridEncoding encoding = parse_grid_encoding(encoding_text);
  OutsideTraffic outside = cfg.outside_traffic;
  if (outside_text == "warn") outside = OutsideTraffic::warn;
  else if (outside_text == "refuse") outside = OutsideTraffic::refuse;
  else if (!outside_text.empty()) throw ConfigError("outside-traffic must be warn or refuse");
  if (hours != "all" && hours != "traffic") throw ConfigError("hours must be all or traffic");

  const GridIndex grids = list_grids(cfg);
  if (grids.hours.empty()) throw DataError("no model grids match " + cfg.grid_glob);
  std::vector<std::size_t> scope;
  std::size_t outside_count = 0;
  for (std::size_t t = 0; t < grids.hours.size(); ++t) {
    const bool in_window = cfg.window.contains(grids.hours[t]);
    if (hours == "traffic" && !in_window) continue;
    if (!in_window) ++outside_count;
    scope.push_back(t);
  }
  if (outside_count > 0) {
    const std::string msg = std::to_string(outside_count) +
                            " grids lie outside the traffic window, where the bias model was not fitted";
    if (outside == OutsideTraffic::refuse) throw ConfigError("refusing to correct: " + msg);
    note("warning: " + msg);
  }

  std::map<Hour, std::vector<double>> xt_of;
  const std::size_t l = cfg.temporal.size();
  if (l > 0) {
    const TemporalTable tt = read_temporal_csv(cfg.resolve(cfg.temporal_path), cfg.temporal);
    for (std::size_t r = 0; r < tt.hours.size(); ++r)
      xt_of[tt.hours[r]].assign(tt.values.begin() + static_cast<std::ptrdiff_t>(r * l),
                                tt.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * l));
  }

  const fs::path dir(out_dir);
  fs::create_directories(dir / "corrected");
  std::optional<CovariateStack> stack;
  std::string log = "timestamp,file,clamped,nodata\n";
  std::size_t total_clamped = 0;
  for (std::size_t t : scope) {
    manifest.add_input(grids.paths[t]);
    const ConcentrationGrid raw = read_grid(grids.paths[t]);
    if (!stack) stack = load_covariates(cfg, raw.geometry);
    std::vector<double> xt;
    if (l > 0) {
      const auto it = xt_of.find(grids.hours[t]);
      if (it == xt_of.end()) throw DataError("no temporal covariates for " + format_hour(grids.hours[t]));
      xt = it->second;
    }
    ConcentrationGrid corrected;
    try {
      corrected = correct_grid(raw, *stack, xt, pf.bias, guard);
    } catch (const SingularCorrectionError& e) {
      throw SingularCorrectionError(format_hour(grids.hours[t]) + ": " + e.what());
    }
    const std::string name = fs::path(grids.paths[t]).filename().string();
    write_grid(corrected, (dir / "corrected" / name).string(), encoding);
    total_clamped += corrected.clamped;
    log += format_hour(grids.hours[t]) + ",corrected/" + name + ',' +
           std::to_string(corrected.clamped) + ',' + std::to_string(corrected.nodata_count()) + '\n';
  }
  write_text(dir / "corrections.csv", log);
  note("correct: " + std::to_string(scope.size()) + " grids, " + std::to_string(total_clamped) +
       " cells clamped to zero");
  return 0;
}

int cmd_validate(const std::string& config_path, const std::string& protocol,
                 const std::string& mode_text, double fraction, std::uint64_t split_seed,
                 const std::string& fit_hours_text, const std::string& out_dir,
                 const SamplerFlags& flags, RunManifest& manifest) {
  const CampaignConfig cfg = read_campaign_config(config_path);
  const Assembly a = assemble(cfg);
  hash_campaign_inputs(cfg, &a, manifest, config_path);
  const ObservationSet& obs = a.observations;
  std::vector<FitMode> modes;
  if (mode_text == "both") {
    modes = {FitMode::S, FitMode::S_LCS};
  } else {
    modes = {parse_fit_mode(mode_text)};
  }
  const auto eligible = traffic_hours_filter(obs.hours, cfg.window);
  const TrainTestSplit split = split_train_test(eligible, fraction, split_seed);
  note("validate: " + std::to_string(split.train.size()) + " training and " +
       std::to_string(split.test.size()) + " test hours");

  std::vector<std::size_t> station_idx;
  for (std::size_t d = 0; d < obs.devices.size(); ++d)
    if (obs.devices[d].kind == DeviceKind::station) station_idx.push_back(d);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  std::vector<ScoreReport> all, pooled;
  std::vector<std::vector<double>> best_corrected;

  if (protocol == "split") {
    auto pool = [&](const std::vector<std::size_t>& hours, const BiasParameters* p,
                    const std::string& scope, const std::string& label,
                    std::vector<std::vector<double>>* keep) {
      std::vector<double> meas, pred;
      for (std::size_t d : station_idx) {
        const BiasParameters zero = BiasParameters::zeros(obs.layout.k(), obs.layout.l());
        const auto s = correct_at_device(obs, d, hours, p ? *p : zero, flags.guard);
        const auto& v = p ? s.corrected : s.raw;
        if (s.measured.size() >= 2) {
          ScoreReport r = scores(v, s.measured);
          r.scope = scope;
          r.model = label;
          r.device = obs.devices[d].id;
          all.push_back(r);
        }
        meas.insert(meas.end(), s.measured.begin(), s.measured.end());
        pred.insert(pred.end(), v.begin(), v.end());
        if (keep)
          for (std::size_t i = 0; i < s.hours.size(); ++i) (*keep)[d][s.hours[i]] = v[i];
      }
      ScoreReport r = scores(pred, meas);
      r.scope = scope;
      r.model = label;
      pooled.push_back(r);
    };
    pool(split.train, nullptr, "training", "raw", nullptr);
    pool(split.test, nullptr, "test", "raw", nullptr);
    for (FitMode mode : modes) {
      const FitOptions opt = flags.options(obs, mode, manifest);
      const FitResult fit = fit_observations(obs, split.train, opt);
      std::vector<std::vector<double>> corrected(obs.devices.size(),
                                                 std::vector<double>(obs.n_hours(), kNaN));
      pool(split.train, &fit.bias, "training", to_string(mode), nullptr);
      pool(split.test, &fit.bias, "test", to_string(mode), &corrected);
      best_corrected = std::move(corrected);
      ParameterFile pf{obs.layout, obs.channel_names, fit.bias, fit.sensors,
                       opt.method == FitMethod::gls ? "gls" : flags.estimate};
      write_parameter_file(pf, (dir / (std::string("params_") + (mode == FitMode::S ? "S" : "S_LCS") + ".json")).string());
    }
    std::vector<std::uint8_t> test_mask(obs.n_hours(), 0);
    for (std::size_t t : split.test) test_mask[t] = 1;
    write_text(dir / "diurnal.csv", diurnal_csv(diurnal_profile(obs, best_corrected, test_mask)));
  } else if (protocol == "loo") {
    bool raw_done = false;
    for (FitMode mode : modes) {
      LooOptions lo;
      lo.fit = flags.options(obs, mode, manifest);
      if (fit_hours_text == "train") lo.fit_hours = split.train;
      else if (fit_hours_text == "all") lo.fit_hours = indices_of(eligible);
      else throw ConfigError("fit-hours must be train or all");
      lo.eval_hours = indices_of(eligible);
      const LooResult r = loo_station_cv(obs, lo);
      if (!raw_done) {
        all.insert(all.end(), r.raw.begin(), r.raw.end());
        pooled.push_back(r.raw_pooled);
        raw_done = true;
      }
      all.insert(all.end(), r.corrected.begin(), r.corrected.end());
      pooled.push_back(r.corrected_pooled);
    }
  } else {
    throw ConfigError("protocol must be split or loo");
  }

  std::vector<ScoreReport> reports = all;
  reports.insert(reports.end(), pooled.begin(), pooled.end());
  write_text(dir / "scores.csv", scores_csv(reports));
  const std::string table = summary_table(pooled);
  write_text(dir / "summary.txt", table);
  std::cerr << table;
  return 0;
}

int cmd_simulate(const std::string& spec_path, std::optional<std::uint64_t> seed, bool all_hours,
                 const std::string& out_dir, RunManifest& manifest) {
  SynthSpec spec = SynthSpec::defaults();
  if (!spec_path.empty()) {
    spec = SynthSpec::from_json(read_json_file(spec_path));
    manifest.add_input(spec_path);
    manifest.config_path = spec_path;
  }
  if (seed) spec.seed = *seed;
  if (all_hours) spec.traffic_only = false;
  spec.validate();
  const SynthCampaign c = generate(spec);
  write_synthetic_campaign(c, spec, out_dir);
  note("simulate: " + std::to_string(c.observations.n_hours()) + " hours, " +
       std::to_string(c.observations.devices.size()) + " devices written to " + out_dir);
  manifest.seed = spec.seed;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bias correction of air-quality model output with reference stations and low-cost sensors"};
  app.require_subcommand(1);

  std::string config, out, mode = "S+LCS", val_mode = "both", hours = "traffic", params;
  std::string protocol = "loo";
  std::string encoding = "ascii", outside, fit_hours = "train", spec;
  double fraction = 0.7;
  std::uint64_t split_seed = 1;
  std::optional<std::uint64_t> sim_seed;
  bool all_hours = false;
  SamplerFlags fit_flags, val_flags;
  double guard = kDefaultGuard;

  auto* fit = app.add_subcommand("fit", "Estimate bias and sensor calibration parameters");
  fit->add_option("--config", config, "Campaign configuration (JSON)")->required();
  fit->add_option("--mode", mode, "S | S+LCS");
  fit->add_option("--hours", hours, "traffic | all");
  fit->add_option("--out", out, "Run directory")->required();
  fit_flags.attach(fit);

  auto* cor = app.add_subcommand("correct", "Correct model-output grids with fitted parameters");
  cor->add_option("--config", config, "Campaign configuration (JSON)")->required();
  cor->add_option("--params", params, "Parameter file (JSON)")->required();
  cor->add_option("--hours", hours, "traffic | all");
  cor->add_option("--out", out, "Run directory")->required();
  cor->add_option("--guard", guard, "Singularity guard on |1 + Lc|");
  cor->add_option("--encoding", encoding, "ascii | binary");
  cor->add_option("--outside-traffic", outside, "warn | refuse (overrides the config)");

  auto* val = app.add_subcommand("validate", "Score raw and corrected output at the stations");
  val->add_option("--config", config, "Campaign configuration (JSON)")->required();
  val->add_option("--protocol", protocol, "split | loo");
  val->add_option("--mode", val_mode, "S | S+LCS | both");
  val->add_option("--train-fraction", fraction, "Share of eligible hours used for fitting");
  val->add_option("--split-seed", split_seed, "Seed of the train/test split");
  val->add_option("--fit-hours", fit_hours, "train | all (hours the leave-one-out fits use)");
  val->add_option("--out", out, "Run directory")->required();
  val_flags.attach(val);

  auto* sim = app.add_subcommand("simulate", "Write a synthetic campaign");
  sim->add_option("--spec", spec, "Synthetic campaign specification (JSON); defaults otherwise");
  sim->add_option("--seed", sim_seed, "Override the specification seed");
  sim->add_flag("--all-hours", all_hours, "Generate every hour, not only traffic hours");
  sim->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorFamily::config);
  }

  RunManifest manifest;
  manifest.arguments.assign(argv + 1, argv + argc);
  manifest.output_dir = out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    int rc = 0;
    if (*fit) {
      manifest.command = "fit";
      manifest.seed = fit_flags.seed;
      rc = cmd_fit(config, mode, hours, out, fit_flags, manifest);
    } else if (*cor) {
      manifest.command = "correct";
      rc = cmd_correct(config, params, hours, out, guard, encoding, outside, manifest);
    } else if (*val) {
      manifest.command = "validate";
      manifest.seed = val_flags.seed;
      rc = cmd_validate(config, protocol, val_mode, fraction, split_seed, fit_hours, out, val_flags,
                        manifest);
    } else if (*sim) {
      manifest.command = "simulate";
      rc = cmd_simulate(spec, sim_seed, all_hours, out, manifest);
    }
    manifest.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fs::create_directories(out);
    manifest.write();
    return rc;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorFamily::format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
