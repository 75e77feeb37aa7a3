#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>

namespace gpia {

struct CgResult {
  Eigen::VectorXd x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Conjugate gradient for A x = b with A symmetric positive definite, given
/// only as a product `apply(p) -> A p`. Starts from x = 0 and stops when
/// ||r|| / ||b|| <= tol. b = 0 returns x = 0 after zero iterations.
template <typename Apply>
CgResult conjugate_gradient(Apply&& apply, const Eigen::VectorXd& b, std::size_t max_iters,
                            double tol) {
  CgResult out;
  out.x = Eigen::VectorXd::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }
  // The recurrence residual drifts from b - A x at tight tolerances, so a
  // converged recurrence is confirmed against the true residual and restarted
  // from it when they disagree.
  Eigen::VectorXd r = b;
  out.relative_residual = 1.0;
  for (int restart = 0; restart < 4 && out.iterations < max_iters; ++restart) {
    Eigen::VectorXd p = r;
    double rr = r.squaredNorm();
    bool recurrence_converged = false;
    while (out.iterations < max_iters) {
      const Eigen::VectorXd ap = apply(p);
      const double pap = p.dot(ap);
      if (!(pap > 0.0)) break;  // lost positive definiteness (or breakdown)
      const double alpha = rr / pap;
      out.x += alpha * p;
      r -= alpha * ap;
      ++out.iterations;
      const double rr_next = r.squaredNorm();
      if (std::sqrt(rr_next) / bnorm <= tol) {
        recurrence_converged = true;
        break;
      }
      p = r + (rr_next / rr) * p;
      rr = rr_next;
    }
    r = b - apply(out.x);
    out.relative_residual = r.norm() / bnorm;
    out.converged = out.relative_residual <= tol;
    if (out.converged || !recurrence_converged) break;
  }
  return out;
}

}  // namespace gpia
