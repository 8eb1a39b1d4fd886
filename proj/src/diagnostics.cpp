#include "aqbias/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "aqbias/error.hpp"
#include "aqbias/sampler.hpp"

namespace aqbias {

namespace {

std::vector<std::vector<double>> split_halves(
    const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

void require_draws(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw DataError("no chains to diagnose");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw DataError("chains differ in length");
  if (n < 4) throw DataError("need at least 4 draws per chain");
}

struct Moments {
  std::size_t m = 0;  // number of (split) chains
  std::size_t n = 0;  // draws per (split) chain
  std::vector<double> means;
  double w = 0.0;
  double b = 0.0;
  double var_plus = 0.0;
};

Moments moments(const std::vector<std::vector<double>>& split) {
  Moments mo;
  mo.m = split.size();
  mo.n = split.front().size();
  for (const auto& c : split) {
    const double mu = mean_of(c);
    mo.means.push_back(mu);
    mo.w += var_of(c, mu);
  }
  mo.w /= static_cast<double>(mo.m);
  const double grand = mean_of(mo.means);
  double bs = 0.0;
  for (double mu : mo.means) bs += (mu - grand) * (mu - grand);
  mo.b = mo.m > 1 ? static_cast<double>(mo.n) * bs / static_cast<double>(mo.m - 1) : 0.0;
  const double n = static_cast<double>(mo.n);
  mo.var_plus = (n - 1.0) / n * mo.w + mo.b / n;
  return mo;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  require_draws(chains);
  const auto split = split_halves(chains);
  const Moments mo = moments(split);
  if (mo.w == 0.0) {
    const bool same = std::all_of(mo.means.begin(), mo.means.end(),
                                  [&](double v) { return v == mo.means.front(); });
    return same ? 1.0 : std::numeric_limits<double>::infinity();
  }
  return std::sqrt(mo.var_plus / mo.w);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  require_draws(chains);
  const auto split = split_halves(chains);
  const Moments mo = moments(split);
  const std::size_t m = mo.m, n = mo.n;
  const double total = static_cast<double>(m * n);
  if (mo.var_plus == 0.0) return total;

  // Autocovariance at lag t, averaged over chains (biased estimator, 1/n).
  auto acov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& x = split[c];
      const double mu = mo.means[c];
      double a = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) a += (x[i] - mu) * (x[i + lag] - mu);
      s += a / static_cast<double>(n);
    }
    return s / static_cast<double>(m);
  };
  // Within-chain variance with the same 1/n normalisation as acov.
  const double w_biased = acov(0);
  auto rho = [&](std::size_t lag) {
    return 1.0 - (mo.w - acov(lag)) / mo.var_plus;
  };
  (void)w_biased;

  // Geyer: sum pairs while positive, forcing a monotone sequence.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double mcse_mean(const std::vector<std::vector<double>>& chains) {
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
  const double sd = std::sqrt(var_of(all, mean_of(all)));
  return sd / std::sqrt(effective_sample_size(chains));
}

std::vector<std::vector<double>> chains_of(const ChainResult& chains,
                                           std::size_t param) {
  std::vector<std::vector<double>> out(chains.n_chains());
  for (std::size_t c = 0; c < chains.n_chains(); ++c) {
    out[c].reserve(chains.n_keep);
    for (std::size_t i = 0; i < chains.n_keep; ++i)
      out[c].push_back(chains.draw(c, i, param));
  }
  return out;
}

DiagnosticsReport diagnostics(const ChainResult& chains, double rhat_threshold) {
  DiagnosticsReport r;
  r.names = chains.layout.names();
  r.within_chain_only = chains.n_chains() < 2;
  if (r.within_chain_only)
    r.warning = "single chain: R-hat compares the two halves of one chain only";
  for (std::size_t p = 0; p < chains.n_params(); ++p) {
    const auto per_chain = chains_of(chains, p);
    r.rhat.push_back(split_rhat(per_chain));
    r.ess.push_back(effective_sample_size(per_chain));
    double acc = 0.0;
    for (const auto& a : chains.acceptance) acc += a[p];
    r.acceptance.push_back(chains.acceptance.empty()
                               ? 0.0
                               : acc / static_cast<double>(chains.acceptance.size()));
    if (!(r.rhat.back() <= rhat_threshold)) r.flagged.push_back(r.names[p]);
  }
  return r;
}

std::string DiagnosticsReport::table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-28s %8s %10s %8s\n", "parameter", "rhat",
                "ess", "accept");
  os << line;
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::snprintf(line, sizeof line, "%-28s %8.4f %10.1f %8.3f%s\n",
                  names[i].c_str(), rhat[i], ess[i], acceptance[i],
                  rhat[i] > kRhatThreshold ? "  *" : "");
    os << line;
  }
  if (!warning.empty()) os << "warning: " << warning << "\n";
  return os.str();
}

}  // namespace aqbias
