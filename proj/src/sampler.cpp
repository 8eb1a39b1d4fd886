#include "aqbias/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Dense>
#include <omp.h>

#include "aqbias/diagnostics.hpp"
#include "aqbias/error.hpp"
#include "aqbias/gls.hpp"

namespace aqbias {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_count(std::size_t v, const char* name) {
  if (v == 0) throw ConfigError(std::string("sampler ") + name + " must be positive");
}

// How a working coordinate maps onto its natural parameter.
enum class Coord { linear, log_magnitude, anchor };

// Anchor coordinate w with natural value w - sum(coef[i] * theta[dep[i]]).
struct Anchor {
  std::vector<std::size_t> dep;
  std::vector<double> coef;
};

struct Model {
  ParameterLayout layout;
  std::vector<Prior> priors;
  RowTable table;
  std::vector<Coord> coord;
  std::vector<double> sign;
  std::vector<Anchor> anchor;  // one per parameter (empty unless anchor)
  // Which anchors read parameter i (to refresh them after an update).
  std::vector<std::vector<std::size_t>> anchored_by;
  // Segments whose likelihood depends on parameter i.
  std::vector<std::vector<std::size_t>> segments_of;
  std::vector<std::size_t> sensor_segment;  // per sensor j
  // Parameters moved by the joint scale update: ac (through 1 + ac),
  // zetaS, zetaT and every alpha.
  std::vector<std::size_t> scaled;
  std::vector<double> initial_scale;
  // Basis of the (ac, zetaS) directions that keep Lc fixed at every
  // station, as full bias-length vectors.
  std::vector<std::vector<double>> station_null;
  LikelihoodForm form = LikelihoodForm::measurement;
  double guard = kDefaultGuard;
};

Model build_model(const std::vector<RegressionRow>& rows, const PriorSpec& priors,
                  const SamplerConfig& cfg) {
  Model md;
  md.layout = layout_for_rows(rows, priors.covariates, priors.channels);
  const ParameterLayout& L = md.layout;
  md.priors = priors.expand(L);
  md.table = RowTable(rows, L.k(), L.l(), L.q());
  md.form = cfg.likelihood;
  md.guard = cfg.guard;

  const std::size_t np = L.size();
  md.coord.assign(np, Coord::linear);
  md.sign.assign(np, 1.0);
  md.anchor.assign(np, {});
  md.anchored_by.assign(np, {});
  md.segments_of.assign(np, {});
  md.initial_scale.assign(np, 0.1);
  for (std::size_t i = 0; i < np; ++i) {
    const Prior& p = md.priors[i];
    md.sign[i] = p.sign();
    if (p.constrained()) {
      md.coord[i] = Coord::log_magnitude;
    } else {
      md.initial_scale[i] = 0.1 * p.p2;
    }
  }

  // Column means used to centre the intercept-like coordinates.
  const RowTable& t = md.table;
  const std::size_t n = t.size();
  std::vector<double> xs_bar(L.k(), 0.0), xt_bar(L.l(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < L.k(); ++i) xs_bar[i] += t.xs(r)[i];
    for (std::size_t i = 0; i < L.l(); ++i) xt_bar[i] += t.xt(r)[i];
  }
  for (double& v : xs_bar) v /= static_cast<double>(n);
  for (double& v : xt_bar) v /= static_cast<double>(n);

  auto make_anchor = [&](std::size_t i, Anchor a) {
    // A constrained intercept keeps its support through prior rejection.
    md.coord[i] = Coord::anchor;
    md.initial_scale[i] =
        0.1 * std::sqrt(md.priors[i].variance());
    for (std::size_t d : a.dep) md.anchored_by[d].push_back(i);
    md.anchor[i] = std::move(a);
  };
  {
    Anchor a;
    for (std::size_t i = 0; i < L.l(); ++i) {
      a.dep.push_back(L.thetaT(i));
      a.coef.push_back(xt_bar[i]);
    }
    make_anchor(L.a0(), std::move(a));
  }
  {
    Anchor a;
    for (std::size_t i = 0; i < L.k(); ++i) {
      a.dep.push_back(L.zetaS(i));
      a.coef.push_back(xs_bar[i]);
    }
    for (std::size_t i = 0; i < L.l(); ++i) {
      a.dep.push_back(L.zetaT(i));
      a.coef.push_back(xt_bar[i]);
    }
    make_anchor(L.ac(), std::move(a));
  }

  std::vector<std::size_t> all, stations;
  std::map<std::string, std::size_t> seg_of_id;
  for (std::size_t s = 0; s < t.segments().size(); ++s) {
    all.push_back(s);
    const auto& seg = t.segments()[s];
    if (seg.kind == DeviceKind::station) stations.push_back(s);
    seg_of_id[seg.device_id] = s;
  }
  if (stations.empty())
    throw DataError("the sampler needs at least one station row to anchor the concentration scale");

  {
    // Station design [1, xs], columns scaled to unit range.
    const auto ns = static_cast<Eigen::Index>(stations.size());
    const auto nc = static_cast<Eigen::Index>(L.k() + 1);
    Eigen::MatrixXd X(ns, nc);
    for (Eigen::Index r = 0; r < ns; ++r) {
      const std::size_t row = t.segments()[stations[static_cast<std::size_t>(r)]].begin;
      X(r, 0) = 1.0;
      for (std::size_t i = 0; i < L.k(); ++i) X(r, static_cast<Eigen::Index>(i + 1)) = t.xs(row)[i];
    }
    Eigen::VectorXd col_scale(nc);
    for (Eigen::Index c = 0; c < nc; ++c) {
      const double m = X.col(c).cwiseAbs().maxCoeff();
      col_scale[c] = m > 0.0 ? m : 1.0;
      X.col(c) /= col_scale[c];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv[i] > 1e-8 * sv[0]) ++rank;
    for (Eigen::Index c = rank; c < nc; ++c) {
      const Eigen::VectorXd v = svd.matrixV().col(c).cwiseQuotient(col_scale);
      std::vector<double> dir(L.bias_size(), 0.0);
      dir[L.ac()] = v[0];
      for (std::size_t i = 0; i < L.k(); ++i) dir[L.zetaS(i)] = v[static_cast<Eigen::Index>(i + 1)];
      const double norm = v.cwiseProduct(col_scale).norm();
      for (double& x : dir) x /= norm;
      md.station_null.push_back(std::move(dir));
    }
  }

  for (std::size_t i = 0; i < L.bias_size(); ++i) md.segments_of[i] = all;
  md.segments_of[L.sigma0()] = stations;

  for (std::size_t j = 0; j < L.n_sensors(); ++j) {
    const std::size_t s = seg_of_id.at(L.sensor_ids()[j]);
    md.sensor_segment.push_back(s);
    const auto& seg = t.segments()[s];
    double m_bar = 0.0;
    std::vector<double> y_bar(L.q(), 0.0);
    for (std::size_t r = seg.begin; r < seg.end; ++r) {
      m_bar += t.m(r);
      for (std::size_t c = 0; c < L.q(); ++c) y_bar[c] += t.y(r)[c];
    }
    const double cnt = static_cast<double>(seg.end - seg.begin);
    Anchor a;
    a.dep.push_back(L.alpha(j));
    a.coef.push_back(m_bar / cnt);
    for (std::size_t c = 0; c < L.q(); ++c) {
      a.dep.push_back(L.gamma(j, c));
      a.coef.push_back(y_bar[c] / cnt);
    }
    make_anchor(L.beta(j), std::move(a));
    for (std::size_t i = L.sensor_base(j); i < L.sensor_base(j) + L.sensor_size(); ++i)
      md.segments_of[i] = {s};
  }
  md.scaled.push_back(L.ac());
  for (std::size_t i = 0; i < L.k(); ++i) md.scaled.push_back(L.zetaS(i));
  for (std::size_t i = 0; i < L.l(); ++i) md.scaled.push_back(L.zetaT(i));
  for (std::size_t j = 0; j < L.n_sensors(); ++j) md.scaled.push_back(L.alpha(j));
  return md;
}

// Mutable state of one chain.
class Chain {
 public:
  Chain(const Model& md, std::uint64_t seed, std::size_t index)
      : md_(md) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index)};
    rng_.seed(seq);
    const std::size_t np = md.layout.size();
    w_.assign(np, 0.0);
    theta_.assign(np, 0.0);
    log_scale_.resize(np);
    for (std::size_t i = 0; i < np; ++i) log_scale_[i] = std::log(md.initial_scale[i]);
    comp_log_scale_ = log_scale_;
    accepted_.assign(np, 0);
    tried_.assign(np, 0);
    seg_ll_.assign(md.table.segments().size(), 0.0);
    bias_ = BiasParameters::zeros(md.layout.k(), md.layout.l());
    views_.resize(md.table.segments().size());
    for (std::size_t i = 0; i < md.layout.bias_size(); ++i)
      if (i != md.layout.sigma0()) block_index_.push_back(i);
    null_log_scale_.assign(md.station_null.size(), std::log(0.1));
  }

  // Starting points of later chains are spread by at most a few percent of
  // the start, so wide priors cannot throw a chain into a far-off basin.
  double jitter_sd(std::size_t i, double v) const {
    if (md_.coord[i] == Coord::log_magnitude) return md_.initial_scale[i];
    return std::min(md_.initial_scale[i], 0.05 * (std::abs(v) + 0.01));
  }

  void initialize(const std::vector<double>& natural, bool jitter) {
    const std::size_t np = md_.layout.size();
    if (natural.size() != np)
      throw ConfigError("initial vector has " + std::to_string(natural.size()) +
                        " entries, layout has " + std::to_string(np));
    for (std::size_t i = 0; i < np; ++i)
      if (!std::isfinite(md_.priors[i].logpdf(natural[i])))
        throw ConfigError("initial value of " + md_.layout.names()[i] +
                          " lies outside its prior support");
    // Non-anchor coordinates first, anchors read them.
    for (std::size_t i = 0; i < np; ++i) {
      if (md_.coord[i] == Coord::anchor) continue;
      double v = natural[i];
      w_[i] = md_.coord[i] == Coord::log_magnitude ? std::log(md_.sign[i] * v) : v;
      if (jitter) w_[i] += std::normal_distribution<double>(0.0, jitter_sd(i, v))(rng_);
      theta_[i] = natural_of(i);
    }
    for (std::size_t i = 0; i < np; ++i) {
      if (md_.coord[i] != Coord::anchor) continue;
      const Anchor& a = md_.anchor[i];
      double shift = 0.0;
      for (std::size_t d = 0; d < a.dep.size(); ++d) shift += a.coef[d] * theta_[a.dep[d]];
      w_[i] = natural[i] + shift;
      if (jitter) w_[i] += std::normal_distribution<double>(0.0, jitter_sd(i, natural[i]))(rng_);
      theta_[i] = natural_of(i);
    }
    lp_ = log_prior(theta_, md_.priors) + log_jacobian();
    sync_views();
    std::vector<std::size_t> all(seg_ll_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    eval_segments(all, seg_ll_);
  }

  // One full sweep. During adaptation the proposal scale of each
  // coordinate follows a Robbins-Monro recursion.
  void sweep(std::size_t iter, bool adapt, double target) {
    const std::size_t np = md_.layout.size();
    for (std::size_t i = 0; i < np; ++i) {
      const double accept_prob = update(i);
      if (adapt) {
        const double step = std::pow(static_cast<double>(iter + 1), -0.6);
        log_scale_[i] += step * (accept_prob - target);
      }
    }
  }

  // Joint move along the direction that leaves every sensor row unchanged:
  // 1 + Lc and all alphas are multiplied by the same factor, so only the
  // station rows and the priors decide. Scalar updates cannot traverse
  // this ridge.
  void scale_move(std::size_t iter, bool adapt, double target) {
    const double u = std::exp(ridge_log_scale_) * std::normal_distribution<double>(0.0, 1.0)(rng_);
    const double lambda = std::exp(u);
    const std::size_t ac = md_.layout.ac();
    std::vector<double> prop = theta_;
    for (std::size_t i : md_.scaled)
      prop[i] = i == ac ? lambda * (1.0 + theta_[i]) - 1.0 : lambda * theta_[i];

    double accept_prob = 0.0;
    const double lp_new = log_prior(prop, md_.priors);
    if (std::isfinite(lp_new)) {
      const double lp_old = log_prior(theta_, md_.priors);
      double old_ll = 0.0;
      for (double v : seg_ll_) old_ll += v;
      std::swap(theta_, prop);
      sync_views();
      std::vector<std::size_t> all(seg_ll_.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      eval_segments(all, scratch_);
      double new_ll = 0.0;
      for (double v : scratch_) new_ll += v;
      bool accept = false;
      if (std::isfinite(new_ll)) {
        const double delta = (new_ll + lp_new + static_cast<double>(md_.scaled.size()) * u) -
                             (old_ll + lp_old);
        accept_prob = !std::isfinite(old_ll) ? 1.0 : delta >= 0.0 ? 1.0 : std::exp(delta);
        accept = accept_prob >= 1.0 ||
                 std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < accept_prob;
      }
      if (accept) {
        seg_ll_ = scratch_;
        rebuild_working();
      } else {
        std::swap(theta_, prop);
        sync_views();
      }
    }
    if (adapt) {
      const double step = std::pow(static_cast<double>(iter + 1), -0.6);
      ridge_log_scale_ += step * (accept_prob - target);
    }
  }

  // Bias coordinate i moves as in a scalar update while each sensor's
  // (alpha, beta) follows so that alpha * C_hat keeps its mean and spread
  // at that sensor. In working coordinates the map is triangular with a
  // unit diagonal, so the acceptance ratio is the plain target ratio.
  void compensated_move(std::size_t i, std::size_t iter, bool adapt, double target) {
    const ParameterLayout& L = md_.layout;
    saved_w_ = w_;
    saved_theta_ = theta_;
    const double saved_lp = lp_;
    chat_stats(mean_old_, sd_old_);

    w_[i] += std::exp(comp_log_scale_[i]) * std::normal_distribution<double>(0.0, 1.0)(rng_);
    theta_[i] = natural_of(i);
    for (std::size_t a : md_.anchored_by[i]) theta_[a] = natural_of(a);

    double accept_prob = 0.0;
    bool accept = false;
    if (std::isfinite(log_prior(theta_, md_.priors))) {
      sync_views();
      if (chat_stats(mean_new_, sd_new_)) {
        for (std::size_t j = 0; j < L.n_sensors(); ++j) {
          const double a_old = theta_[L.alpha(j)];
          const double a_new = a_old * sd_old_[j] / sd_new_[j];
          theta_[L.alpha(j)] = a_new;
          theta_[L.beta(j)] += a_old * mean_old_[j] - a_new * mean_new_[j];
        }
        rebuild_working();
        if (std::isfinite(lp_)) {
          sync_views();
          std::vector<std::size_t> all(seg_ll_.size());
          std::iota(all.begin(), all.end(), std::size_t{0});
          eval_segments(all, scratch_);
          double new_ll = 0.0, old_ll = 0.0;
          for (double v : scratch_) new_ll += v;
          for (double v : seg_ll_) old_ll += v;
          if (std::isfinite(new_ll)) {
            const double delta = (new_ll + lp_) - (old_ll + saved_lp);
            accept_prob = !std::isfinite(old_ll) ? 1.0 : delta >= 0.0 ? 1.0 : std::exp(delta);
            accept = accept_prob >= 1.0 ||
                     std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < accept_prob;
          }
        }
      }
    }
    if (accept) {
      seg_ll_ = scratch_;
    } else {
      w_ = saved_w_;
      theta_ = saved_theta_;
      lp_ = saved_lp;
      sync_views();
    }
    if (adapt) {
      const double step = std::pow(static_cast<double>(iter + 1), -0.6);
      comp_log_scale_[i] += step * (accept_prob - target);
    }
  }

  // Random walk on every bias coordinate but sigma0 at once, in natural
  // units, with the covariance learned during adaptation.
  void block_move(std::size_t iter, bool adapt) {
    const std::size_t d = block_index_.size();
    if (adapt) learn_block(iter);
    if (!block_ready_) return;
    Eigen::VectorXd z(static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < d; ++r)
      z[static_cast<Eigen::Index>(r)] = std::normal_distribution<double>(0.0, 1.0)(rng_);
    const Eigen::VectorXd step = std::exp(block_log_scale_) * (block_chol_ * z);
    delta_.assign(md_.layout.bias_size(), 0.0);
    for (std::size_t r = 0; r < d; ++r) delta_[block_index_[r]] = step[static_cast<Eigen::Index>(r)];
    const double accept_prob = shift_bias(delta_);
    if (adapt) {
      const double rate = std::pow(static_cast<double>(iter + 1), -0.6);
      block_log_scale_ += rate * (accept_prob - kBlockTarget);
    }
  }

  // Moves along the (ac, zetaS) directions that leave 1 + Lc unchanged at
  // every station. Only sensors and priors see them.
  void null_move(std::size_t iter, bool adapt, double target) {
    for (std::size_t r = 0; r < md_.station_null.size(); ++r) {
      const double u =
          std::exp(null_log_scale_[r]) * std::normal_distribution<double>(0.0, 1.0)(rng_);
      delta_ = md_.station_null[r];
      for (double& v : delta_) v *= u;
      const double accept_prob = shift_bias(delta_);
      if (adapt) {
        const double rate = std::pow(static_cast<double>(iter + 1), -0.6);
        null_log_scale_[r] += rate * (accept_prob - target);
      }
    }
  }

  // Metropolis step for theta_bias + delta (natural units, symmetric).
  // Each sensor's (alpha, beta) follows as in compensated_move; in natural
  // units that map has Jacobian prod_j |alpha_j' / alpha_j|.
  double shift_bias(const std::vector<double>& delta) {
    const ParameterLayout& L = md_.layout;
    saved_w_ = w_;
    saved_theta_ = theta_;
    const double saved_lp = lp_;
    const double old_prior = log_prior(theta_, md_.priors);
    const bool compensate = L.n_sensors() > 0;
    if (compensate && !chat_stats(mean_old_, sd_old_)) return 0.0;
    for (std::size_t i = 0; i < delta.size(); ++i) theta_[i] += delta[i];

    double accept_prob = 0.0;
    bool accept = false;
    double log_jac = 0.0;
    bool valid = std::isfinite(log_prior(theta_, md_.priors));
    if (valid) {
      sync_views();
      if (compensate) {
        valid = chat_stats(mean_new_, sd_new_);
        for (std::size_t j = 0; valid && j < L.n_sensors(); ++j) {
          const double a_old = theta_[L.alpha(j)];
          const double a_new = a_old * sd_old_[j] / sd_new_[j];
          theta_[L.alpha(j)] = a_new;
          theta_[L.beta(j)] += a_old * mean_old_[j] - a_new * mean_new_[j];
          log_jac += std::log(sd_old_[j] / sd_new_[j]);
        }
      }
    }
    const double new_prior = valid ? log_prior(theta_, md_.priors) : kNegInf;
    if (valid && std::isfinite(new_prior)) {
      sync_views();
      std::vector<std::size_t> all(seg_ll_.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      eval_segments(all, scratch_);
      double new_ll = 0.0, old_ll = 0.0;
      for (double v : scratch_) new_ll += v;
      for (double v : seg_ll_) old_ll += v;
      if (std::isfinite(new_ll)) {
        const double d = (new_ll + new_prior + log_jac) - (old_ll + old_prior);
        accept_prob = !std::isfinite(old_ll) ? 1.0 : d >= 0.0 ? 1.0 : std::exp(d);
        accept = accept_prob >= 1.0 ||
                 std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < accept_prob;
      }
    }
    if (accept) {
      seg_ll_ = scratch_;
      rebuild_working();
    } else {
      w_ = saved_w_;
      theta_ = saved_theta_;
      lp_ = saved_lp;
      sync_views();
    }
    return accept_prob;
  }

  // Running mean and covariance of the block coordinates; the Cholesky
  // factor is refreshed periodically once enough draws are in.
  void learn_block(std::size_t iter) {
    const std::size_t d = block_index_.size();
    if (block_mean_.size() == 0) {
      block_mean_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
      block_m2_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    }
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < d; ++r) x[static_cast<Eigen::Index>(r)] = theta_[block_index_[r]];
    ++block_n_;
    const Eigen::VectorXd dx = x - block_mean_;
    block_mean_ += dx / static_cast<double>(block_n_);
    block_m2_ += dx * (x - block_mean_).transpose();
    if (block_n_ < kBlockWarmup || (iter + 1) % kBlockRefresh != 0) return;
    Eigen::MatrixXd cov = block_m2_ / static_cast<double>(block_n_ - 1);
    const double ridge = 1e-10 + 1e-8 * cov.diagonal().maxCoeff();
    cov.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return;
    block_chol_ = llt.matrixL();
    if (!block_ready_) block_log_scale_ = std::log(2.38 / std::sqrt(static_cast<double>(d)));
    block_ready_ = true;
  }

  // Bias coordinates that shift C_hat (everything but sigma0).
  void compensated_sweep(std::size_t iter, bool adapt, double target) {
    if (md_.layout.n_sensors() == 0) return;
    for (std::size_t i = 0; i < md_.layout.bias_size(); ++i)
      if (i != md_.layout.sigma0()) compensated_move(i, iter, adapt, target);
  }

  void reset_counts() {
    std::fill(accepted_.begin(), accepted_.end(), 0);
    std::fill(tried_.begin(), tried_.end(), 0);
  }

  const std::vector<double>& theta() const { return theta_; }
  double acceptance(std::size_t i) const {
    return tried_[i] ? static_cast<double>(accepted_[i]) / static_cast<double>(tried_[i]) : 0.0;
  }
  std::size_t accepted(std::size_t i) const { return accepted_[i]; }
  double scale(std::size_t i) const { return std::exp(log_scale_[i]); }

 private:
  double natural_of(std::size_t i) const {
    switch (md_.coord[i]) {
      case Coord::linear: return w_[i];
      case Coord::log_magnitude: return md_.sign[i] * std::exp(w_[i]);
      case Coord::anchor: {
        const Anchor& a = md_.anchor[i];
        double shift = 0.0;
        for (std::size_t d = 0; d < a.dep.size(); ++d) shift += a.coef[d] * theta_[a.dep[d]];
        return w_[i] - shift;
      }
    }
    return 0.0;
  }

  // Mean and sd of C_hat = (m - L0) / (1 + Lc) over each sensor's rows,
  // under the current bias view. False if a row is singular.
  bool chat_stats(std::vector<double>& mean, std::vector<double>& sd) const {
    const ParameterLayout& L = md_.layout;
    const RowTable& t = md_.table;
    mean.assign(L.n_sensors(), 0.0);
    sd.assign(L.n_sensors(), 0.0);
    for (std::size_t j = 0; j < L.n_sensors(); ++j) {
      const auto& seg = t.segments()[md_.sensor_segment[j]];
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t r = seg.begin; r < seg.end; ++r) {
        const std::span<const double> xs(t.xs(r), L.k()), xt(t.xt(r), L.l());
        const double s = 1.0 + eval_lc(bias_, xs, xt);
        if (!(std::abs(s) > md_.guard)) return false;
        const double c = (t.m(r) - eval_l0(bias_, xt)) / s;
        s1 += c;
        s2 += c * c;
      }
      const double n = static_cast<double>(seg.end - seg.begin);
      mean[j] = s1 / n;
      sd[j] = std::sqrt(std::max(s2 / n - mean[j] * mean[j], 0.0));
      if (!(sd[j] > 0.0)) return false;
    }
    return true;
  }

  // Working coordinates from the current natural values.
  void rebuild_working() {
    for (std::size_t i = 0; i < w_.size(); ++i) {
      switch (md_.coord[i]) {
        case Coord::linear: w_[i] = theta_[i]; break;
        case Coord::log_magnitude: w_[i] = std::log(md_.sign[i] * theta_[i]); break;
        case Coord::anchor: {
          const Anchor& a = md_.anchor[i];
          double shift = 0.0;
          for (std::size_t d = 0; d < a.dep.size(); ++d) shift += a.coef[d] * theta_[a.dep[d]];
          w_[i] = theta_[i] + shift;
          break;
        }
      }
    }
    lp_ = log_prior(theta_, md_.priors) + log_jacobian();
  }

  double log_jacobian() const {
    double s = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i)
      if (md_.coord[i] == Coord::log_magnitude) s += w_[i];
    return s;
  }

  void sync_views() {
    const ParameterLayout& L = md_.layout;
    bias_.a0 = theta_[L.a0()];
    bias_.ac = theta_[L.ac()];
    for (std::size_t i = 0; i < L.l(); ++i) {
      bias_.thetaT[i] = theta_[L.thetaT(i)];
      bias_.zetaT[i] = theta_[L.zetaT(i)];
    }
    for (std::size_t i = 0; i < L.k(); ++i) bias_.zetaS[i] = theta_[L.zetaS(i)];
    bias_.sigma0 = theta_[L.sigma0()];
    for (auto& v : views_) v = kernels::CalibrationView{1.0, 0.0, nullptr, bias_.sigma0};
    for (std::size_t j = 0; j < L.n_sensors(); ++j) {
      auto& v = views_[md_.sensor_segment[j]];
      v.alpha = theta_[L.alpha(j)];
      v.beta = theta_[L.beta(j)];
      v.gamma = theta_.data() + L.gamma(j, 0);
      v.sigma = theta_[L.sigma(j)];
    }
  }

  void eval_segments(const std::vector<std::size_t>& segs, std::vector<double>& out) {
    kernels::LoglikRequest req;
    req.table = &md_.table;
    req.bias = &bias_;
    req.calibrations = views_;
    req.form = md_.form;
    req.guard = md_.guard;
    out.resize(segs.size());
    kernels::segment_loglik_omp(req, segs, out);
  }

  double update(std::size_t i) {
    ++tried_[i];
    const double old_w = w_[i];
    const double prop = old_w + std::exp(log_scale_[i]) *
                                    std::normal_distribution<double>(0.0, 1.0)(rng_);

    // Parameters whose natural value moves with coordinate i.
    touched_.clear();
    touched_.push_back(i);
    for (std::size_t a : md_.anchored_by[i]) touched_.push_back(a);
    saved_.clear();
    for (std::size_t p : touched_) saved_.push_back(theta_[p]);

    w_[i] = prop;
    for (std::size_t p : touched_) theta_[p] = natural_of(p);

    const double lp_new = log_prior(theta_, md_.priors) + log_jacobian();
    const auto& segs = md_.segments_of[i];
    double old_ll = 0.0;
    for (std::size_t s : segs) old_ll += seg_ll_[s];

    double accept_prob = 0.0;
    bool accept = false;
    if (lp_new != kNegInf && std::isfinite(lp_new)) {
      sync_views();
      eval_segments(segs, scratch_);
      double new_ll = 0.0;
      for (double v : scratch_) new_ll += v;
      if (std::isfinite(new_ll)) {
        if (!std::isfinite(old_ll) || !std::isfinite(lp_)) {
          // Escaping an invalid state: any finite proposal wins.
          accept_prob = 1.0;
          accept = true;
        } else {
          const double delta = (new_ll + lp_new) - (old_ll + lp_);
          accept_prob = delta >= 0.0 ? 1.0 : std::exp(delta);
          accept = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < accept_prob;
        }
      }
    }

    if (accept) {
      ++accepted_[i];
      lp_ = lp_new;
      for (std::size_t s = 0; s < segs.size(); ++s) seg_ll_[segs[s]] = scratch_[s];
    } else {
      w_[i] = old_w;
      for (std::size_t p = 0; p < touched_.size(); ++p) theta_[touched_[p]] = saved_[p];
      sync_views();
    }
    return accept_prob;
  }

  const Model& md_;
  std::mt19937_64 rng_;
  std::vector<double> w_, theta_, log_scale_;
  std::vector<std::size_t> accepted_, tried_;
  std::vector<double> seg_ll_, scratch_;
  double lp_ = 0.0;
  double ridge_log_scale_ = std::log(0.01);
  std::vector<double> comp_log_scale_;
  std::vector<double> saved_w_, saved_theta_;
  std::vector<double> mean_old_, sd_old_, mean_new_, sd_new_;
  static constexpr std::size_t kBlockWarmup = 500;
  static constexpr std::size_t kBlockRefresh = 100;
  static constexpr double kBlockTarget = 0.234;
  std::vector<std::size_t> block_index_;
  Eigen::VectorXd block_mean_;
  Eigen::MatrixXd block_m2_, block_chol_;
  std::size_t block_n_ = 0;
  double block_log_scale_ = 0.0;
  bool block_ready_ = false;
  std::vector<double> null_log_scale_, delta_;
  BiasParameters bias_;
  std::vector<kernels::CalibrationView> views_;
  std::vector<std::size_t> touched_;
  std::vector<double> saved_;
};

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

void SamplerConfig::validate() const {
  require_count(n_adapt, "n_adapt");
  require_count(n_burn, "n_burn");
  require_count(n_keep, "n_keep");
  require_count(n_chains, "n_chains");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw ConfigError("sampler target_accept must lie in (0, 1)");
  if (!(guard > 0.0)) throw ConfigError("sampler guard must be positive");
}

nlohmann::json SamplerConfig::to_json() const {
  return {{"n_adapt", n_adapt},   {"n_burn", n_burn},
          {"n_keep", n_keep},     {"n_chains", n_chains},
          {"seed", seed},         {"target_accept", target_accept},
          {"guard", guard},       {"likelihood", to_string(likelihood)}};
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j) {
  try {
    SamplerConfig c;
    c.n_adapt = j.value("n_adapt", c.n_adapt);
    c.n_burn = j.value("n_burn", c.n_burn);
    c.n_keep = j.value("n_keep", c.n_keep);
    c.n_chains = j.value("n_chains", c.n_chains);
    c.seed = j.value("seed", c.seed);
    c.target_accept = j.value("target_accept", c.target_accept);
    c.guard = j.value("guard", c.guard);
    if (j.contains("likelihood"))
      c.likelihood = parse_likelihood_form(j.at("likelihood").get<std::string>());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed sampler config: ") + e.what());
  }
}

ParameterLayout layout_for_rows(const std::vector<RegressionRow>& rows,
                                const CovariateLayout& covariates,
                                const std::vector<std::string>& channels) {
  std::set<std::string> sensors;
  for (const auto& r : rows) {
    if (r.xs.size() != covariates.k() || r.xt.size() != covariates.l())
      throw ConfigError("row of " + r.device_id + " does not match the covariate layout");
    if (r.kind == DeviceKind::sensor) {
      if (r.y.size() != channels.size())
        throw ConfigError("row of " + r.device_id + " has " + std::to_string(r.y.size()) +
                          " channels, expected " + std::to_string(channels.size()));
      sensors.insert(r.device_id);
    }
  }
  return ParameterLayout(covariates, channels, {sensors.begin(), sensors.end()});
}

std::vector<double> default_start(const std::vector<RegressionRow>& rows, const PriorSpec& priors,
                                  double guard) {
  const ParameterLayout L = layout_for_rows(rows, priors.covariates, priors.channels);
  const std::vector<Prior> expanded = priors.expand(L);
  std::vector<double> start = prior_means(expanded);

  std::vector<RegressionRow> stations;
  for (const auto& r : rows)
    if (r.kind == DeviceKind::station) stations.push_back(r);
  if (stations.empty()) return start;
  GlsResult g;
  try {
    GlsOptions opt;
    opt.guard = guard;
    g = gls_fit(stations, priors.covariates, opt);
  } catch (const DataError&) {
    return start;
  }
  PosteriorEstimate est = unpack_parameters(L, start);
  est.bias = g.params;
  std::vector<double> theta = pack_parameters(L, est);
  for (std::size_t i = 0; i < L.bias_size(); ++i) {
    const Prior& p = expanded[i];
    if (!p.in_support(theta[i])) theta[i] = p.sign() * 0.01 * std::abs(p.mean());
  }
  const BiasParameters b = unpack_parameters(L, theta).bias;
  for (const auto& r : rows)
    if (!(std::abs(1.0 + eval_lc(b, r.xs, r.xt)) > guard)) return start;
  return theta;
}

ChainResult gibbs_fit(const std::vector<RegressionRow>& rows, const PriorSpec& priors,
                      const SamplerConfig& cfg,
                      const std::optional<std::vector<double>>& init) {
  cfg.validate();
  if (rows.empty()) throw DataError("no regression rows to fit");
  const Model md = build_model(rows, priors, cfg);
  const std::size_t np = md.layout.size();
  const std::vector<double> start = init ? *init : default_start(rows, priors, cfg.guard);

  ChainResult res;
  res.layout = md.layout;
  res.n_keep = cfg.n_keep;
  res.draws.assign(cfg.n_chains, {});
  res.acceptance.assign(cfg.n_chains, {});
  res.proposal_scales.assign(cfg.n_chains, {});

  std::vector<std::exception_ptr> errors(cfg.n_chains);
  const auto n_chains = static_cast<std::ptrdiff_t>(cfg.n_chains);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t ci = 0; ci < n_chains; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    try {
      Chain chain(md, cfg.seed, c);
      chain.initialize(start, c > 0);
      for (std::size_t it = 0; it < cfg.n_adapt; ++it) {
        chain.sweep(it, true, cfg.target_accept);
        chain.compensated_sweep(it, true, cfg.target_accept);
        chain.scale_move(it, true, cfg.target_accept);
        chain.block_move(it, true);
        chain.null_move(it, true, cfg.target_accept);
      }
      chain.reset_counts();
      for (std::size_t it = 0; it < cfg.n_burn; ++it) {
        chain.sweep(it, false, cfg.target_accept);
        chain.compensated_sweep(it, false, cfg.target_accept);
        chain.scale_move(it, false, cfg.target_accept);
        chain.block_move(it, false);
        chain.null_move(it, false, cfg.target_accept);
      }
      auto& out = res.draws[c];
      out.resize(cfg.n_keep * np);
      for (std::size_t it = 0; it < cfg.n_keep; ++it) {
        chain.sweep(it, false, cfg.target_accept);
        chain.compensated_sweep(it, false, cfg.target_accept);
        chain.scale_move(it, false, cfg.target_accept);
        chain.block_move(it, false);
        chain.null_move(it, false, cfg.target_accept);
        std::copy(chain.theta().begin(), chain.theta().end(),
                  out.begin() + static_cast<std::ptrdiff_t>(it * np));
      }
      for (std::size_t i = 0; i < np; ++i) {
        if (chain.accepted(i) == 0)
          throw SamplerError("chain " + std::to_string(c) + ": parameter " +
                             md.layout.names()[i] +
                             " accepted no proposal after adaptation");
        res.acceptance[c].push_back(chain.acceptance(i));
        res.proposal_scales[c].push_back(chain.scale(i));
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  res.summarize();
  return res;
}

std::vector<double> ChainResult::pooled(std::size_t param) const {
  std::vector<double> out;
  out.reserve(n_chains() * n_keep);
  for (std::size_t c = 0; c < n_chains(); ++c)
    for (std::size_t i = 0; i < n_keep; ++i) out.push_back(draw(c, i, param));
  return out;
}

void ChainResult::summarize() {
  const std::size_t np = n_params();
  mean.assign(np, 0.0);
  sd.assign(np, 0.0);
  mode.assign(np, 0.0);
  rhat.assign(np, std::numeric_limits<double>::quiet_NaN());
  ess.assign(np, std::numeric_limits<double>::quiet_NaN());
  if (n_chains() == 0 || n_keep == 0) return;
  for (std::size_t p = 0; p < np; ++p) {
    const auto all = pooled(p);
    mean[p] = mean_of(all);
    if (all.size() > 1) {
      double s = 0.0;
      for (double v : all) s += (v - mean[p]) * (v - mean[p]);
      sd[p] = std::sqrt(s / static_cast<double>(all.size() - 1));
    }
    mode[p] = binned_mode(all);
    if (n_keep >= 4) {
      const auto per_chain = chains_of(*this, p);
      rhat[p] = split_rhat(per_chain);
      ess[p] = effective_sample_size(per_chain);
    }
  }
}

PosteriorEstimate unpack_parameters(const ParameterLayout& L,
                                    const std::vector<double>& theta) {
  if (theta.size() != L.size())
    throw ConfigError("parameter vector has " + std::to_string(theta.size()) +
                      " entries, layout has " + std::to_string(L.size()));
  PosteriorEstimate e;
  e.bias = BiasParameters::zeros(L.k(), L.l());
  e.bias.a0 = theta[L.a0()];
  e.bias.ac = theta[L.ac()];
  for (std::size_t i = 0; i < L.l(); ++i) {
    e.bias.thetaT[i] = theta[L.thetaT(i)];
    e.bias.zetaT[i] = theta[L.zetaT(i)];
  }
  for (std::size_t i = 0; i < L.k(); ++i) e.bias.zetaS[i] = theta[L.zetaS(i)];
  e.bias.sigma0 = theta[L.sigma0()];
  for (std::size_t j = 0; j < L.n_sensors(); ++j) {
    SensorCalibration s;
    s.sensor_id = L.sensor_ids()[j];
    s.beta = theta[L.beta(j)];
    s.alpha = theta[L.alpha(j)];
    for (std::size_t c = 0; c < L.q(); ++c) s.gamma.push_back(theta[L.gamma(j, c)]);
    s.sigma = theta[L.sigma(j)];
    e.sensors.push_back(std::move(s));
  }
  return e;
}

std::vector<double> pack_parameters(const ParameterLayout& L,
                                    const PosteriorEstimate& est) {
  est.bias.validate(L.k(), L.l());
  std::vector<double> theta(L.size(), 0.0);
  theta[L.a0()] = est.bias.a0;
  theta[L.ac()] = est.bias.ac;
  for (std::size_t i = 0; i < L.l(); ++i) {
    theta[L.thetaT(i)] = est.bias.thetaT[i];
    theta[L.zetaT(i)] = est.bias.zetaT[i];
  }
  for (std::size_t i = 0; i < L.k(); ++i) theta[L.zetaS(i)] = est.bias.zetaS[i];
  theta[L.sigma0()] = est.bias.sigma0;
  for (std::size_t j = 0; j < L.n_sensors(); ++j) {
    const auto& id = L.sensor_ids()[j];
    auto it = std::find_if(est.sensors.begin(), est.sensors.end(),
                           [&](const SensorCalibration& s) { return s.sensor_id == id; });
    if (it == est.sensors.end()) throw ConfigError("no calibration for sensor " + id);
    if (it->gamma.size() != L.q())
      throw ConfigError("sensor " + id + ": gamma has the wrong length");
    theta[L.beta(j)] = it->beta;
    theta[L.alpha(j)] = it->alpha;
    for (std::size_t c = 0; c < L.q(); ++c) theta[L.gamma(j, c)] = it->gamma[c];
    theta[L.sigma(j)] = it->sigma;
  }
  return theta;
}

double binned_mode(const std::vector<double>& draws) {
  if (draws.empty()) throw DataError("no draws");
  const auto [lo_it, hi_it] = std::minmax_element(draws.begin(), draws.end());
  const double lo = *lo_it, hi = *hi_it;
  if (lo == hi) return lo;
  const std::size_t bins =
      static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(draws.size()))));
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> count(bins, 0);
  std::vector<double> sum(bins, 0.0);
  for (double v : draws) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    b = std::min(b, bins - 1);
    ++count[b];
    sum[b] += v;
  }
  const auto best = static_cast<std::size_t>(
      std::max_element(count.begin(), count.end()) - count.begin());
  return sum[best] / static_cast<double>(count[best]);
}

PosteriorEstimate posterior_estimate(const ChainResult& chains, EstimateKind kind) {
  if (chains.n_chains() == 0 || chains.n_keep == 0)
    throw DataError("posterior estimate needs at least one draw");
  std::vector<double> theta(chains.n_params());
  for (std::size_t p = 0; p < chains.n_params(); ++p) {
    const auto all = chains.pooled(p);
    theta[p] = kind == EstimateKind::mean ? mean_of(all) : binned_mode(all);
  }
  return unpack_parameters(chains.layout, theta);
}

}  // namespace aqbias
