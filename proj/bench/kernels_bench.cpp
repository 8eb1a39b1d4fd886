#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "aqbias/core.hpp"
#include "aqbias/measurement.hpp"
#include "aqbias/synth.hpp"

namespace {

using namespace aqbias;

struct GridCase {
  SynthSpec spec = SynthSpec::defaults();
  SynthCampaign camp;
  std::vector<double> out;

  explicit GridCase(std::size_t side) {
    spec.geometry = {0.0, 0.0, 10.0, side, side};
    spec.n_hours = 2;
    camp = generate(spec);
    out.resize(camp.model[0].values.size());
  }

  kernels::CorrectionInput input() const {
    kernels::CorrectionInput in;
    in.raw = camp.model[0].values;
    in.xs = &camp.covariates;
    in.xt = {camp.observations.xt_at(0), spec.layout.l()};
    in.p = &spec.bias;
    in.nodata = camp.model[0].nodata;
    return in;
  }
};

template <bool Parallel>
void BM_CorrectCells(benchmark::State& state) {
  GridCase g(static_cast<std::size_t>(state.range(0)));
  const auto in = g.input();
  for (auto _ : state) {
    const auto tally = Parallel ? kernels::correct_cells_omp(in, g.out)
                                : kernels::correct_cells_serial(in, g.out);
    benchmark::DoNotOptimize(tally);
    benchmark::DoNotOptimize(g.out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(g.out.size()));
}

struct LoglikCase {
  SynthSpec spec = SynthSpec::defaults();
  RowTable table;
  std::vector<SensorCalibration> sensors;
  std::vector<kernels::CalibrationView> views;
  std::vector<std::size_t> segs;
  std::vector<double> out;

  explicit LoglikCase(std::size_t hours) {
    spec.n_hours = hours;
    const SynthCampaign camp = generate(spec);
    table = RowTable(build_rows(camp.observations).rows, spec.layout.k(), spec.layout.l(),
                     spec.channels.size());
    for (const auto& seg : table.segments()) {
      kernels::CalibrationView v;
      if (seg.kind == DeviceKind::station) {
        v.sigma = spec.bias.sigma0;
      } else {
        for (const auto& s : spec.sensors)
          if (s.sensor_id == seg.device_id) {
            v = {s.alpha, s.beta, s.gamma.data(), s.sigma};
            break;
          }
      }
      views.push_back(v);
    }
    segs.resize(table.segments().size());
    std::iota(segs.begin(), segs.end(), 0);
    out.resize(segs.size());
  }
};

template <bool Parallel>
void BM_SegmentLoglik(benchmark::State& state) {
  LoglikCase c(static_cast<std::size_t>(state.range(0)));
  kernels::LoglikRequest req;
  req.table = &c.table;
  req.bias = &c.spec.bias;
  req.calibrations = c.views;
  for (auto _ : state) {
    if (Parallel)
      kernels::segment_loglik_omp(req, c.segs, c.out);
    else
      kernels::segment_loglik_serial(req, c.segs, c.out);
    benchmark::DoNotOptimize(c.out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(c.table.size()));
}

}  // namespace

BENCHMARK(BM_CorrectCells<false>)->Name("correct_cells/serial")->Arg(100)->Arg(400);
BENCHMARK(BM_CorrectCells<true>)->Name("correct_cells/omp")->Arg(100)->Arg(400);
BENCHMARK(BM_SegmentLoglik<false>)->Name("segment_loglik/serial")->Arg(176)->Arg(744);
BENCHMARK(BM_SegmentLoglik<true>)->Name("segment_loglik/omp")->Arg(176)->Arg(744);

BENCHMARK_MAIN();
