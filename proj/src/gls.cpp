#include "aqbias/gls.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "aqbias/error.hpp"

namespace aqbias {

namespace {

struct Design {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> names;
};

Design build_design(const std::vector<RegressionRow>& rows,
                    const CovariateLayout& layout,
                    const std::optional<BiasParameters>& fixed) {
  const std::size_t n = rows.size(), k = layout.k(), l = layout.l();
  Design d;
  d.names.push_back("intercept");
  for (const auto& t : layout.temporal) d.names.push_back(t);
  if (!fixed) {
    d.names.push_back("z");
    for (const auto& s : layout.spatial) d.names.push_back("z*" + s);
    for (const auto& t : layout.temporal) d.names.push_back("z*" + t);
  }
  const auto p = static_cast<Eigen::Index>(d.names.size());
  d.x.resize(static_cast<Eigen::Index>(n), p);
  d.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = rows[r];
    const auto i = static_cast<Eigen::Index>(r);
    Eigen::Index c = 0;
    d.x(i, c++) = 1.0;
    for (std::size_t t = 0; t < l; ++t) d.x(i, c++) = row.xt[t];
    if (fixed) {
      const double s = 1.0 + eval_lc(*fixed, row.xs, row.xt);
      d.y(i) = row.m - row.z * s;
    } else {
      d.x(i, c++) = row.z;
      for (std::size_t s = 0; s < k; ++s) d.x(i, c++) = row.z * row.xs[s];
      for (std::size_t t = 0; t < l; ++t) d.x(i, c++) = row.z * row.xt[t];
      d.y(i) = row.m;
    }
  }
  return d;
}

void check_rank(const Design& d, double tol) {
  Eigen::MatrixXd xn = d.x;
  for (Eigen::Index c = 0; c < xn.cols(); ++c) {
    const double norm = xn.col(c).norm();
    if (norm == 0.0) throw DataError("design column '" + d.names[static_cast<std::size_t>(c)] + "' is identically zero");
    xn.col(c) /= norm;
  }
  const Eigen::MatrixXd gram = xn.transpose() * xn;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const Eigen::VectorXd ev = es.eigenvalues();  // ascending
  if (ev(0) > tol * ev(ev.size() - 1)) return;

  const Eigen::VectorXd null = es.eigenvectors().col(0);
  std::ostringstream os;
  os << "rank-deficient design (relative eigenvalue " << ev(0) / ev(ev.size() - 1)
     << "); collinear columns:";
  for (Eigen::Index c = 0; c < null.size(); ++c)
    if (std::abs(null(c)) > 0.1) os << ' ' << d.names[static_cast<std::size_t>(c)];
  throw DataError(os.str());
}

Eigen::VectorXd weighted_solve(const Design& d, const Eigen::VectorXd& w) {
  const Eigen::VectorXd sw = w.array().sqrt();
  const Eigen::MatrixXd xw = d.x.array().colwise() * sw.array();
  const Eigen::VectorXd yw = d.y.array() * sw.array();
  return xw.colPivHouseholderQr().solve(yw);
}

BiasParameters to_params(const Eigen::VectorXd& b, const CovariateLayout& layout,
                         const std::optional<BiasParameters>& fixed) {
  const std::size_t k = layout.k(), l = layout.l();
  BiasParameters p = fixed ? *fixed : BiasParameters::zeros(k, l);
  Eigen::Index c = 0;
  p.a0 = b(c++);
  for (std::size_t t = 0; t < l; ++t) p.thetaT[t] = b(c++);
  if (!fixed) {
    p.ac = b(c++) - 1.0;
    for (std::size_t s = 0; s < k; ++s) p.zetaS[s] = b(c++);
    for (std::size_t t = 0; t < l; ++t) p.zetaT[t] = b(c++);
  }
  return p;
}

}  // namespace

GlsResult gls_fit(const std::vector<RegressionRow>& rows,
                  const CovariateLayout& layout, const GlsOptions& opt) {
  for (const auto& r : rows) {
    if (r.kind != DeviceKind::station)
      throw ConfigError("GLS uses station rows only; found sensor " + r.device_id);
    if (r.xs.size() != layout.k() || r.xt.size() != layout.l())
      throw ConfigError("row of " + r.device_id + " does not match the covariate layout");
  }
  if (opt.fixed_multiplicative) opt.fixed_multiplicative->validate(layout.k(), layout.l());

  const Design d = build_design(rows, layout, opt.fixed_multiplicative);
  const auto n = d.x.rows(), p = d.x.cols();
  if (n <= p)
    throw DataError("GLS needs more than " + std::to_string(p) + " station rows, got " +
                    std::to_string(n));
  check_rank(d, opt.rank_tolerance);

  GlsResult res;
  res.columns = d.names;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd b;
  BiasParameters cur;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    res.weights_history.emplace_back(w.data(), w.data() + n);
    const Eigen::VectorXd nb = weighted_solve(d, w);
    if (it == 0) res.first_pass.assign(nb.data(), nb.data() + p);
    res.iterations = it + 1;
    const bool done = it > 0 && (nb - b).norm() <= opt.tolerance * b.norm();
    b = nb;
    cur = to_params(b, layout, opt.fixed_multiplicative);
    if (done) {
      res.converged = true;
      break;
    }
    // With a fixed multiplicative part the weights never change.
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& row = rows[static_cast<std::size_t>(r)];
      const double s = 1.0 + eval_lc(cur, row.xs, row.xt);
      if (!(std::abs(s) > opt.guard))
        throw DataError("GLS weight undefined: |1 + Lc| <= guard at " + row.device_id +
                        " " + format_hour(row.hour));
      w(r) = 1.0 / (s * s);
    }
  }

  const Eigen::VectorXd resid = d.y - d.x * b;
  const double ss = (resid.array().square() * w.array()).sum();
  cur.sigma0 = std::sqrt(ss / static_cast<double>(n - p));
  res.coefficients.assign(b.data(), b.data() + p);
  res.params = cur;
  return res;
}

}  // namespace aqbias
