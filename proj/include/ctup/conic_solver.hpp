#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <vector>

namespace ctup::conic {

/// Cone layout for the slack vector s in
///   minimize c'x  s.t.  A x = b,  G x + s = h,  s in K,
/// with K = R+^nonneg x SOC(q_1) x ... x PSD(p_1) x ...
/// PSD blocks are stored in scaled-packed (svec) form: the upper triangle
/// column-wise with off-diagonal entries multiplied by sqrt(2), so that the
/// Euclidean inner product of two svecs equals the matrix inner product.
struct ConeDims {
  int nonneg{0};
  std::vector<int> soc;
  std::vector<int> psd;

  int total_rows() const;
  /// Sum of cone degrees: nonneg + #soc + sum(psd dims).
  int degree() const;
};

enum class SolveStatus { Optimal, Inaccurate, Infeasible, Unbounded, SolverError };

const char* to_string(SolveStatus s);

struct SolverSettings {
  double tol_gap{1e-10};
  double tol_feas{1e-10};
  int max_iter{200};
  /// Newton-system refinement steps per solve.
  int refinement{3};
  /// Per-iteration trace on stderr.
  bool verbose{false};
  /// Constant added to c'x when reporting costs and testing the relative
  /// gap (used when the caller eliminated variables and folded their
  /// contribution into a constant).
  double objective_offset{0.0};
};

struct ConeSolution {
  SolveStatus status{SolveStatus::SolverError};
  Eigen::VectorXd x;  // present iff status is Optimal or Inaccurate
  Eigen::VectorXd s;
  Eigen::VectorXd z;
  Eigen::VectorXd y;
  double objective{0.0};
  int iterations{0};
  double primal_residual{0.0};
  double dual_residual{0.0};
  double gap{0.0};
  std::string message;
};

/// Primal-dual interior-point method (Mehrotra predictor-corrector with
/// Nesterov-Todd scaling) for the cone LP above. Deterministic: identical
/// inputs produce identical outputs.
ConeSolution solve_cone_lp(const Eigen::VectorXd& c,
                           const Eigen::SparseMatrix<double>& A,
                           const Eigen::VectorXd& b,
                           const Eigen::SparseMatrix<double>& G,
                           const Eigen::VectorXd& h, const ConeDims& dims,
                           const SolverSettings& settings = {});

/// svec/smat helpers shared with tests.
Eigen::VectorXd svec(const Eigen::MatrixXd& S);
Eigen::MatrixXd smat(const Eigen::VectorXd& v, int n);

}  // namespace ctup::conic
