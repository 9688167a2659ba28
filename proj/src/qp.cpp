#include "insp/qp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace insp::qp {

namespace {

// Largest alpha in (0, 1] keeping v + alpha * dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

}  // namespace

Result solve(const Problem& p, const Options& opts) {
  const Eigen::Index n = p.Q.rows();
  const Eigen::Index m = p.A.rows();
  if (p.Q.cols() != n || p.c.size() != n || p.A.cols() != n || p.b.size() != m) {
    throw std::invalid_argument("qp::solve: inconsistent problem dimensions");
  }
  Result r;
  r.x = Eigen::VectorXd::Zero(n);
  r.s = (p.b - p.A * r.x).cwiseMax(1.0);
  r.z = Eigen::VectorXd::Ones(m);

  const double scale = 1.0 + std::max(p.c.lpNorm<Eigen::Infinity>(), p.b.size() ? p.b.lpNorm<Eigen::Infinity>() : 0.0);
  for (int it = 0; it < opts.max_iterations; ++it) {
    const Eigen::VectorXd rd = p.Q * r.x + p.c + p.A.transpose() * r.z;
    const Eigen::VectorXd rp = p.A * r.x + r.s - p.b;
    const double mu = m ? r.s.dot(r.z) / static_cast<double>(m) : 0.0;
    r.kkt_residual = std::max({rd.lpNorm<Eigen::Infinity>(), m ? rp.lpNorm<Eigen::Infinity>() : 0.0, mu});
    r.iterations = it;
    if (r.kkt_residual <= opts.tolerance * scale) {
      r.converged = true;
      break;
    }

    const Eigen::VectorXd w = r.z.cwiseQuotient(r.s);
    Eigen::MatrixXd K = p.Q + p.A.transpose() * w.asDiagonal() * p.A;
    const Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) break;

    auto direction = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dx, Eigen::VectorXd& ds, Eigen::VectorXd& dz) {
      const Eigen::VectorXd sinv_rc = rc.cwiseQuotient(r.s);
      dx = llt.solve(-rd - p.A.transpose() * (w.cwiseProduct(rp) - sinv_rc));
      dz = w.cwiseProduct(p.A * dx + rp) - sinv_rc;
      ds = -(rc + r.s.cwiseProduct(dz)).cwiseQuotient(r.z);
    };

    Eigen::VectorXd dx, ds, dz;
    const Eigen::VectorXd sz = r.s.cwiseProduct(r.z);
    direction(sz, dx, ds, dz);
    const double a_aff = std::min(max_step(r.s, ds), max_step(r.z, dz));
    const double mu_aff = m ? (r.s + a_aff * ds).dot(r.z + a_aff * dz) / static_cast<double>(m) : 0.0;
    const double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3.0) : 0.0;

    const Eigen::VectorXd rc = sz + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(m, sigma * mu);
    direction(rc, dx, ds, dz);
    const double a = std::min(1.0, 0.995 * std::min(max_step(r.s, ds), max_step(r.z, dz)));
    r.x += a * dx;
    r.s += a * ds;
    r.z += a * dz;
    r.iterations = it + 1;
  }
  if (!r.converged) {
    const Eigen::VectorXd rd = p.Q * r.x + p.c + p.A.transpose() * r.z;
    const Eigen::VectorXd rp = p.A * r.x + r.s - p.b;
    const double mu = m ? r.s.dot(r.z) / static_cast<double>(m) : 0.0;
    r.kkt_residual = std::max({rd.lpNorm<Eigen::Infinity>(), m ? rp.lpNorm<Eigen::Infinity>() : 0.0, mu});
    r.converged = r.kkt_residual <= opts.tolerance * scale;
  }
  r.objective = 0.5 * r.x.dot(p.Q * r.x) + p.c.dot(r.x);
  return r;
}

}  // namespace insp::qp
