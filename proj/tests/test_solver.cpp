#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "ctup/conic_solver.hpp"

using namespace ctup::conic;

namespace {

Eigen::SparseMatrix<double> dense_to_sparse(const Eigen::MatrixXd& M) {
  return M.sparseView();
}

}  // namespace

TEST_CASE("svec/smat round trip preserves inner products") {
  Eigen::MatrixXd S(3, 3);
  S << 2, 1, 0.5, 1, 3, -1, 0.5, -1, 4;
  Eigen::MatrixXd T(3, 3);
  T << 1, -2, 0, -2, 5, 1, 0, 1, 2;
  CHECK(svec(S).dot(svec(T)) ==
        doctest::Approx((S * T).trace()).epsilon(1e-12));
  CHECK((smat(svec(S), 3) - S).norm() == doctest::Approx(0.0));
}

TEST_CASE("pure LP") {
  // min -x1 - x2 s.t. x1 + x2 <= 1, x >= 0  -> optimum -1
  Eigen::VectorXd c(2);
  c << -1, -1;
  Eigen::MatrixXd Gd(3, 2);
  Gd << 1, 1, -1, 0, 0, -1;
  Eigen::VectorXd h(3);
  h << 1, 0, 0;
  ConeDims dims;
  dims.nonneg = 3;
  Eigen::SparseMatrix<double> A(0, 2);
  Eigen::VectorXd b(0);
  auto sol = solve_cone_lp(c, A, b, dense_to_sparse(Gd), h, dims);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(sol.x(0) + sol.x(1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("LP with equality") {
  // min x1 + 2 x2 s.t. x1 + x2 = 1, x >= 0 -> x = (1,0), optimum 1
  Eigen::VectorXd c(2);
  c << 1, 2;
  Eigen::MatrixXd Ad(1, 2);
  Ad << 1, 1;
  Eigen::VectorXd b(1);
  b << 1;
  Eigen::MatrixXd Gd = -Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(2);
  ConeDims dims;
  dims.nonneg = 2;
  auto sol = solve_cone_lp(c, dense_to_sparse(Ad), b, dense_to_sparse(Gd), h, dims);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.x(1) == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("SOC projection problem") {
  // min t s.t. ||(x - p)|| <= t with x free 2-vector fixed by equalities is
  // trivial; instead: min t s.t. ||(3,4)|| <= t  -> t* = 5.
  // Variables: t. G row0 = -t (scalar), rows 1,2 constants.
  Eigen::VectorXd c(1);
  c << 1;
  Eigen::MatrixXd Gd(3, 1);
  Gd << -1, 0, 0;
  Eigen::VectorXd h(3);
  h << 0, 3, 4;
  ConeDims dims;
  dims.soc = {3};
  Eigen::SparseMatrix<double> A(0, 1);
  Eigen::VectorXd b(0);
  auto sol = solve_cone_lp(c, A, b, dense_to_sparse(Gd), h, dims);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("SOC least-norm with equalities") {
  // min t  s.t. ||x|| <= t, x1 + x2 = 2  -> x = (1,1), t = sqrt(2)
  Eigen::VectorXd c(3);
  c << 1, 0, 0;  // vars (t, x1, x2)
  Eigen::MatrixXd Ad(1, 3);
  Ad << 0, 1, 1;
  Eigen::VectorXd b(1);
  b << 2;
  Eigen::MatrixXd Gd(3, 3);
  Gd << -1, 0, 0, 0, -1, 0, 0, 0, -1;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(3);
  ConeDims dims;
  dims.soc = {3};
  auto sol = solve_cone_lp(c, dense_to_sparse(Ad), b, dense_to_sparse(Gd), h, dims);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
  CHECK(sol.x(1) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("SDP: max eigenvalue via dual form") {
  // min t s.t. t I - M >= 0 gives t* = lambda_max(M)
  Eigen::MatrixXd M(3, 3);
  M << 2, 1, 0, 1, 3, 1, 0, 1, 2;
  const double lmax =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues().maxCoeff();

  Eigen::VectorXd c(1);
  c << 1;
  // s = svec(t I - M): G column = -svec(I), h = -svec(M)
  Eigen::VectorXd svI = svec(Eigen::MatrixXd::Identity(3, 3));
  Eigen::MatrixXd Gd = -svI;
  Eigen::VectorXd h = -svec(M);
  ConeDims dims;
  dims.psd = {3};
  Eigen::SparseMatrix<double> A(0, 1);
  Eigen::VectorXd b(0);
  auto sol = solve_cone_lp(c, A, b, dense_to_sparse(Gd), h, dims);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(lmax).epsilon(1e-6));
}

TEST_CASE("SDP: nearest scalar multiple mix with LP rows") {
  // min x s.t. x >= 0 and svec(x*I2 - diag(1,2)) >= 0 -> x* = 2
  Eigen::VectorXd c(1);
  c << 1;
  Eigen::MatrixXd D = Eigen::Vector2d(1, 2).asDiagonal();
  Eigen::MatrixXd Gd(4, 1);
  Gd(0, 0) = -1.0;
  Gd.block(1, 0, 3, 1) = -svec(Eigen::MatrixXd::Identity(2, 2));
  Eigen::VectorXd h(4);
  h(0) = 0.0;
  h.segment(1, 3) = -svec(D);
  ConeDims dims;
  dims.nonneg = 1;
  dims.psd = {2};
  Eigen::SparseMatrix<double> A(0, 1);
  Eigen::VectorXd b(0);
  auto sol = solve_cone_lp(c, A, b, dense_to_sparse(Gd), h, dims);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("primal infeasibility detected") {
  // x >= 1 and x <= 0
  Eigen::VectorXd c(1);
  c << 0;
  Eigen::MatrixXd Gd(2, 1);
  Gd << -1, 1;
  Eigen::VectorXd h(2);
  h << -1, 0;
  ConeDims dims;
  dims.nonneg = 2;
  Eigen::SparseMatrix<double> A(0, 1);
  Eigen::VectorXd b(0);
  auto sol = solve_cone_lp(c, A, b, dense_to_sparse(Gd), h, dims);
  CHECK(sol.status == SolveStatus::Infeasible);
}

TEST_CASE("unboundedness detected") {
  // min -x s.t. x >= 0
  Eigen::VectorXd c(1);
  c << -1;
  Eigen::MatrixXd Gd(1, 1);
  Gd << -1;
  Eigen::VectorXd h(1);
  h << 0;
  ConeDims dims;
  dims.nonneg = 1;
  Eigen::SparseMatrix<double> A(0, 1);
  Eigen::VectorXd b(0);
  auto sol = solve_cone_lp(c, A, b, dense_to_sparse(Gd), h, dims);
  CHECK(sol.status == SolveStatus::Unbounded);
}

TEST_CASE("deterministic across repeated runs") {
  Eigen::VectorXd c(3);
  c << 1, 0, 0;
  Eigen::MatrixXd Ad(1, 3);
  Ad << 0, 1, 1;
  Eigen::VectorXd b(1);
  b << 2;
  Eigen::MatrixXd Gd = -Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(3);
  ConeDims dims;
  dims.soc = {3};
  auto s1 = solve_cone_lp(c, dense_to_sparse(Ad), b, dense_to_sparse(Gd), h, dims);
  auto s2 = solve_cone_lp(c, dense_to_sparse(Ad), b, dense_to_sparse(Gd), h, dims);
  REQUIRE(s1.status == SolveStatus::Optimal);
  CHECK(s1.x == s2.x);
  CHECK(s1.iterations == s2.iterations);
}
