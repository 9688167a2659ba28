#pragma once

#include <Eigen/Dense>

namespace insp::qp {

/// min 1/2 x'Qx + c'x  subject to  A x <= b.  Q must be positive definite.
struct Problem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

struct Options {
  int max_iterations = 80;
  double tolerance = 1e-9;
};

struct Result {
  Eigen::VectorXd x;
  Eigen::VectorXd z;  // inequality multipliers
  Eigen::VectorXd s;  // slacks, b - A x
  bool converged = false;
  int iterations = 0;
  double kkt_residual = 0.0;  // max of dual, primal and complementarity residuals
  double objective = 0.0;
};

/// Dense Mehrotra predictor-corrector interior-point method.
Result solve(const Problem& p, const Options& opts = {});

}  // namespace insp::qp
