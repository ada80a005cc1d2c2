#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctup/conic_solver.hpp"

namespace ctup::conic {

/// Named decision variables of the lifted localization programs.
/// K is the symmetric lifting matrix; only its upper triangle is stored
/// (entry (i,j), i <= j, is one scalar variable holding the matrix value).
struct Symbol {
  enum class Kind { Mu, K, U, Lambda, Omega, Xi, Epsilon, G, R };
  Kind kind{Kind::Mu};
  int i{0};
  int j{0};

  auto operator<=>(const Symbol&) const = default;
};

std::string to_string(const Symbol& s);

class VarSpace {
 public:
  /// Allocates the variable set shared by the CTUP programs: mu of length
  /// `mu_dim`, the packed K, one u and one xi per link, one lambda per
  /// anchor, omega, and the scenario extras.
  static VarSpace for_localization(int mu_dim, int n_links, int n_anchors,
                                   bool with_epsilon, int n_g, int n_r);

  int n_scalar() const { return n_; }
  int mu_dim() const { return mu_dim_; }
  int n_links() const { return n_links_; }
  int n_anchors() const { return n_anchors_; }

  int index(const Symbol& s) const;  // throws on unknown symbol
  bool contains(const Symbol& s) const;

  int mu(int k) const { return index({Symbol::Kind::Mu, k, 0}); }
  int kmat(int i, int j) const {
    return index({Symbol::Kind::K, std::min(i, j), std::max(i, j)});
  }
  int u(int link) const { return index({Symbol::Kind::U, link, 0}); }
  int lambda(int a) const { return index({Symbol::Kind::Lambda, a, 0}); }
  int omega() const { return index({Symbol::Kind::Omega, 0, 0}); }
  int xi(int link) const { return index({Symbol::Kind::Xi, link, 0}); }
  int epsilon() const { return index({Symbol::Kind::Epsilon, 0, 0}); }
  int g(int j) const { return index({Symbol::Kind::G, j, 0}); }
  int r(int j) const { return index({Symbol::Kind::R, j, 0}); }

  const std::map<Symbol, int>& symbols() const { return map_; }

 private:
  int add(const Symbol& s);
  std::map<Symbol, int> map_;
  int n_{0};
  int mu_dim_{0}, n_links_{0}, n_anchors_{0};
};

/// Sparse affine functional c0 + sum coeff_k * x_{idx_k}.
struct LinExpr {
  std::vector<std::pair<int, double>> terms;
  double constant{0.0};

  LinExpr& add(int idx, double coeff) {
    if (coeff != 0.0) terms.emplace_back(idx, coeff);
    return *this;
  }
  double eval(const Eigen::VectorXd& x) const;
};

/// ||rows(x)|| <= scalar(x).
struct SocConstraint {
  std::vector<LinExpr> rows;
  LinExpr scalar;
};

/// Affine symmetric-matrix map required PSD; entries keyed by (row, col)
/// with row <= col.
struct PsdConstraint {
  int dim{0};
  std::map<std::pair<int, int>, LinExpr> entries;
};

struct ConicProgram {
  int n_vars{0};
  LinExpr objective;
  std::vector<std::pair<LinExpr, double>> eq_constraints;  // expr == rhs
  std::vector<SocConstraint> soc_constraints;
  std::vector<PsdConstraint> psd_constraints;

  void validate() const;  // finite coefficients, in-range indices
  /// JSON document for golden-file tests (objective, constraints, sizes).
  std::string dump_json() const;
};

/// Directed link in the lifted program: target `tgt` transmitting, received
/// by anchor `other` (other_is_target = false) or target `other`.
struct LiftedLink {
  int tgt{0};
  int other{0};
  bool other_is_target{false};
};

/// [1 mu'; mu K] >= 0, dimension mu_dim + 1.
PsdConstraint build_schur_block(const VarSpace& vs);

/// One equality per directed link tying u_l to the K-entries that encode the
/// squared distance between the endpoints.
std::vector<std::pair<LinExpr, double>> build_sq_distance_links(
    const VarSpace& vs, const std::vector<LiftedLink>& links, int n_targets);

/// One equality per anchor tying lambda_i to the lifted ||s_i - s_breve||^2.
std::vector<std::pair<LinExpr, double>> build_anchor_penalty(
    const VarSpace& vs, const std::vector<Eigen::Vector2d>& anchor_fixes,
    int n_targets);

/// ||[2 xi', omega - 1]|| <= omega + 1, the rotated-cone epigraph of
/// sum xi^2 <= omega.
SocConstraint build_epigraph_soc(const VarSpace& vs);

/// Diagonal PSD block with entries (xi_l - r_l) and (-xi_l + r_l) forcing
/// xi_l = r_l at any feasible point.
PsdConstraint build_residual_lmi(const VarSpace& vs,
                                 const std::vector<LinExpr>& residuals);

/// Equality encoding of the same constraint (the default form).
std::vector<std::pair<LinExpr, double>> build_residual_equalities(
    const VarSpace& vs, const std::vector<LinExpr>& residuals);

struct SolveDiagnostics {
  int eliminated_equalities{0};
  double coeff_dynamic_range{0.0};
  bool conditioning_warning{false};
};

struct SolveResult {
  SolveStatus status{SolveStatus::SolverError};
  Eigen::VectorXd primal;  // full VarSpace vector (substituted vars recovered)
  double objective_value{0.0};
  int iterations{0};
  double primal_residual{0.0};
  double dual_residual{0.0};
  double gap{0.0};
  std::string message;
  SolveDiagnostics diagnostics;
};

/// Lowers the program to standard cone-LP form and runs the interior-point
/// backend. Equalities that define auxiliary scalars are substituted out
/// beforehand and their values recovered in `primal`.
SolveResult solve(const ConicProgram& program, const SolverSettings& settings = {});

}  // namespace ctup::conic
