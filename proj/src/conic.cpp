#include "ctup/conic.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>
#include <stdexcept>

namespace ctup::conic {

std::string to_string(const Symbol& s) {
  using K = Symbol::Kind;
  switch (s.kind) {
    case K::Mu: return "mu[" + std::to_string(s.i) + "]";
    case K::K: return "K[" + std::to_string(s.i) + "," + std::to_string(s.j) + "]";
    case K::U: return "u[" + std::to_string(s.i) + "]";
    case K::Lambda: return "lambda[" + std::to_string(s.i) + "]";
    case K::Omega: return "omega";
    case K::Xi: return "xi[" + std::to_string(s.i) + "]";
    case K::Epsilon: return "epsilon";
    case K::G: return "g[" + std::to_string(s.i) + "]";
    case K::R: return "r[" + std::to_string(s.i) + "]";
  }
  return "?";
}

int VarSpace::add(const Symbol& s) {
  auto [it, inserted] = map_.emplace(s, n_);
  if (inserted) ++n_;
  return it->second;
}

VarSpace VarSpace::for_localization(int mu_dim, int n_links, int n_anchors,
                                    bool with_epsilon, int n_g, int n_r) {
  VarSpace vs;
  vs.mu_dim_ = mu_dim;
  vs.n_links_ = n_links;
  vs.n_anchors_ = n_anchors;
  for (int k = 0; k < mu_dim; ++k) vs.add({Symbol::Kind::Mu, k, 0});
  for (int j = 0; j < mu_dim; ++j)
    for (int i = 0; i <= j; ++i) vs.add({Symbol::Kind::K, i, j});
  for (int l = 0; l < n_links; ++l) vs.add({Symbol::Kind::U, l, 0});
  for (int a = 0; a < n_anchors; ++a) vs.add({Symbol::Kind::Lambda, a, 0});
  vs.add({Symbol::Kind::Omega, 0, 0});
  for (int l = 0; l < n_links; ++l) vs.add({Symbol::Kind::Xi, l, 0});
  if (with_epsilon) vs.add({Symbol::Kind::Epsilon, 0, 0});
  for (int j = 0; j < n_g; ++j) vs.add({Symbol::Kind::G, j, 0});
  for (int j = 0; j < n_r; ++j) vs.add({Symbol::Kind::R, j, 0});
  return vs;
}

int VarSpace::index(const Symbol& s) const {
  auto it = map_.find(s);
  if (it == map_.end())
    throw std::out_of_range("VarSpace: unknown symbol " + to_string(s));
  return it->second;
}

bool VarSpace::contains(const Symbol& s) const { return map_.count(s) > 0; }

double LinExpr::eval(const Eigen::VectorXd& x) const {
  double v = constant;
  for (const auto& [i, c] : terms) v += c * x(i);
  return v;
}

void ConicProgram::validate() const {
  auto check = [&](const LinExpr& e, const char* where) {
    if (!std::isfinite(e.constant))
      throw std::invalid_argument(std::string("ConicProgram: non-finite constant in ") + where);
    for (const auto& [i, c] : e.terms) {
      if (i < 0 || i >= n_vars)
        throw std::invalid_argument(std::string("ConicProgram: index out of range in ") + where);
      if (!std::isfinite(c))
        throw std::invalid_argument(std::string("ConicProgram: non-finite coefficient in ") + where);
    }
  };
  check(objective, "objective");
  for (const auto& [e, rhs] : eq_constraints) {
    check(e, "equality");
    if (!std::isfinite(rhs))
      throw std::invalid_argument("ConicProgram: non-finite rhs");
  }
  for (const auto& s : soc_constraints) {
    for (const auto& r : s.rows) check(r, "soc");
    check(s.scalar, "soc");
  }
  for (const auto& p : psd_constraints) {
    if (p.dim <= 0) throw std::invalid_argument("ConicProgram: psd dim <= 0");
    for (const auto& [rc, e] : p.entries) {
      if (rc.first > rc.second || rc.second >= p.dim)
        throw std::invalid_argument("ConicProgram: psd entry out of range");
      check(e, "psd");
    }
  }
}

std::string ConicProgram::dump_json() const {
  nlohmann::json j;
  auto expr = [](const LinExpr& e) {
    nlohmann::json o;
    o["constant"] = e.constant;
    for (const auto& [i, c] : e.terms) o["terms"].push_back({i, c});
    return o;
  };
  j["n_vars"] = n_vars;
  j["objective"] = expr(objective);
  for (const auto& [e, rhs] : eq_constraints)
    j["eq"].push_back({{"expr", expr(e)}, {"rhs", rhs}});
  for (const auto& s : soc_constraints) {
    nlohmann::json o;
    for (const auto& r : s.rows) o["rows"].push_back(expr(r));
    o["scalar"] = expr(s.scalar);
    j["soc"].push_back(o);
  }
  for (const auto& p : psd_constraints) {
    nlohmann::json o;
    o["dim"] = p.dim;
    for (const auto& [rc, e] : p.entries)
      o["entries"].push_back({{"row", rc.first}, {"col", rc.second}, {"expr", expr(e)}});
    j["psd"].push_back(o);
  }
  return j.dump(2);
}

PsdConstraint build_schur_block(const VarSpace& vs) {
  const int d = vs.mu_dim();
  if (d <= 0) throw std::invalid_argument("build_schur_block: empty mu");
  PsdConstraint psd;
  psd.dim = d + 1;
  psd.entries[{0, 0}].constant = 1.0;
  for (int k = 0; k < d; ++k) psd.entries[{0, 1 + k}].add(vs.mu(k), 1.0);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i <= j; ++i)
      psd.entries[{1 + i, 1 + j}].add(vs.kmat(i, j), 1.0);
  return psd;
}

namespace {

// mu-row offset of a node: targets first, then anchors.
int node_offset(int idx, bool is_target, int n_targets) {
  return is_target ? 2 * idx : 2 * n_targets + 2 * idx;
}

// Adds the K-entries of ||x_a - x_b||^2 (a, b are mu-row offsets of the two
// 2-D points) to `e` with sign `sgn`.
void add_sq_dist(LinExpr& e, const VarSpace& vs, int a, int b, double sgn) {
  for (int c = 0; c < 2; ++c) {
    e.add(vs.kmat(a + c, a + c), sgn);
    e.add(vs.kmat(b + c, b + c), sgn);
    e.add(vs.kmat(a + c, b + c), -2.0 * sgn);
  }
}

}  // namespace

std::vector<std::pair<LinExpr, double>> build_sq_distance_links(
    const VarSpace& vs, const std::vector<LiftedLink>& links, int n_targets) {
  std::vector<std::pair<LinExpr, double>> eqs;
  eqs.reserve(links.size());
  for (size_t l = 0; l < links.size(); ++l) {
    const auto& lk = links[l];
    LinExpr e;
    e.add(vs.u(static_cast<int>(l)), 1.0);
    const int a = node_offset(lk.tgt, true, n_targets);
    const int b = node_offset(lk.other, lk.other_is_target, n_targets);
    add_sq_dist(e, vs, a, b, -1.0);
    eqs.emplace_back(std::move(e), 0.0);
  }
  return eqs;
}

std::vector<std::pair<LinExpr, double>> build_anchor_penalty(
    const VarSpace& vs, const std::vector<Eigen::Vector2d>& anchor_fixes,
    int n_targets) {
  if (anchor_fixes.empty())
    throw std::invalid_argument("build_anchor_penalty: no anchor fixes");
  std::vector<std::pair<LinExpr, double>> eqs;
  for (size_t i = 0; i < anchor_fixes.size(); ++i) {
    const int b = node_offset(static_cast<int>(i), false, n_targets);
    LinExpr e;
    e.add(vs.lambda(static_cast<int>(i)), 1.0);
    for (int c = 0; c < 2; ++c) {
      e.add(vs.kmat(b + c, b + c), -1.0);
      e.add(vs.mu(b + c), 2.0 * anchor_fixes[i](c));
    }
    eqs.emplace_back(std::move(e), anchor_fixes[i].squaredNorm());
  }
  return eqs;
}

SocConstraint build_epigraph_soc(const VarSpace& vs) {
  SocConstraint soc;
  for (int l = 0; l < vs.n_links(); ++l) {
    LinExpr r;
    r.add(vs.xi(l), 2.0);
    soc.rows.push_back(std::move(r));
  }
  LinExpr last;
  last.add(vs.omega(), 1.0);
  last.constant = -1.0;
  soc.rows.push_back(std::move(last));
  soc.scalar.add(vs.omega(), 1.0);
  soc.scalar.constant = 1.0;
  return soc;
}

PsdConstraint build_residual_lmi(const VarSpace& vs,
                                 const std::vector<LinExpr>& residuals) {
  PsdConstraint psd;
  psd.dim = 2 * static_cast<int>(residuals.size());
  for (size_t l = 0; l < residuals.size(); ++l) {
    LinExpr pos;
    pos.add(vs.xi(static_cast<int>(l)), 1.0);
    pos.constant = -residuals[l].constant;
    for (const auto& [i, c] : residuals[l].terms) pos.add(i, -c);
    LinExpr neg;
    neg.add(vs.xi(static_cast<int>(l)), -1.0);
    neg.constant = residuals[l].constant;
    for (const auto& [i, c] : residuals[l].terms) neg.add(i, c);
    psd.entries[{2 * (int)l, 2 * (int)l}] = std::move(pos);
    psd.entries[{2 * (int)l + 1, 2 * (int)l + 1}] = std::move(neg);
  }
  return psd;
}

std::vector<std::pair<LinExpr, double>> build_residual_equalities(
    const VarSpace& vs, const std::vector<LinExpr>& residuals) {
  std::vector<std::pair<LinExpr, double>> eqs;
  for (size_t l = 0; l < residuals.size(); ++l) {
    LinExpr e;
    e.add(vs.xi(static_cast<int>(l)), 1.0);
    for (const auto& [i, c] : residuals[l].terms) e.add(i, -c);
    eqs.emplace_back(std::move(e), residuals[l].constant);
  }
  return eqs;
}

// ---------------------------------------------------------------------------
// Lowering to the cone-LP backend.

namespace {

using SparseExpr = std::map<int, double>;

SparseExpr to_sparse(const LinExpr& e) {
  SparseExpr m;
  for (const auto& [i, c] : e.terms) {
    m[i] += c;
    if (m[i] == 0.0) m.erase(i);
  }
  return m;
}

struct Substitution {
  SparseExpr expr;
  double constant{0.0};
};

// Applies `subs` to (expr, constant) in place.
void apply_subs(const std::map<int, Substitution>& subs, SparseExpr& e,
                double& constant) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = e.begin(); it != e.end();) {
      auto s = subs.find(it->first);
      if (s == subs.end()) {
        ++it;
        continue;
      }
      const double coeff = it->second;
      it = e.erase(it);
      constant += coeff * s->second.constant;
      for (const auto& [vi, vc] : s->second.expr) {
        e[vi] += coeff * vc;
        if (e[vi] == 0.0) e.erase(vi);
      }
      changed = true;
      break;  // iterator invalidated; restart scan
    }
  }
}

struct Lowered {
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double> A, G;
  Eigen::VectorXd b, h;
  ConeDims dims;
  std::vector<int> keep;               // reduced index -> original index
  std::map<int, Substitution> subs;    // original index -> expr over originals
  double obj_offset{0.0};
  double coeff_max{0.0}, coeff_min{0.0};
  Eigen::VectorXd col_scale;           // x_original = col_scale .* x_solved
  double cost_scale{1.0};
};

// Ruiz-style equilibration: iteratively scales rows (per equality row, per
// cone block) and variable columns toward unit inf-norm, then normalizes the
// cost vector. Keeps badly scaled inputs (e.g. delta^-2 penalty weights with
// tiny delta) from derailing the interior-point method.
void equilibrate(Lowered& low) {
  const int n = static_cast<int>(low.c.size());
  const int p = static_cast<int>(low.b.size());
  const int m = static_cast<int>(low.h.size());
  low.col_scale = Eigen::VectorXd::Ones(n);

  // row -> cone block id; each block gets one scalar
  std::vector<int> block_of(m);
  std::vector<int> block_rows;
  {
    int row = 0, blk = 0;
    for (int i = 0; i < low.dims.nonneg; ++i) {
      block_of[row++] = blk++;
      block_rows.push_back(1);
    }
    for (int q : low.dims.soc) {
      for (int i = 0; i < q; ++i) block_of[row++] = blk;
      ++blk;
      block_rows.push_back(q);
    }
    for (int d : low.dims.psd) {
      const int len = d * (d + 1) / 2;
      for (int i = 0; i < len; ++i) block_of[row++] = blk;
      ++blk;
      block_rows.push_back(len);
    }
  }
  const int n_blocks = static_cast<int>(block_rows.size());

  for (int pass = 0; pass < 8; ++pass) {
    Eigen::VectorXd rA = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd rG = Eigen::VectorXd::Zero(n_blocks);
    Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(low.A, j); it; ++it) {
        const double a = std::abs(it.value());
        rA(it.row()) = std::max(rA(it.row()), a);
        col(j) = std::max(col(j), a);
      }
      for (Eigen::SparseMatrix<double>::InnerIterator it(low.G, j); it; ++it) {
        const double a = std::abs(it.value());
        rG(block_of[it.row()]) = std::max(rG(block_of[it.row()]), a);
        col(j) = std::max(col(j), a);
      }
    }
    auto factor = [](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 1.0; };
    Eigen::VectorXd fa = rA.unaryExpr(factor), fg = rG.unaryExpr(factor),
                    fc = col.unaryExpr(factor);
    for (int j = 0; j < n; ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(low.A, j); it; ++it)
        it.valueRef() *= fa(it.row()) * fc(j);
      for (Eigen::SparseMatrix<double>::InnerIterator it(low.G, j); it; ++it)
        it.valueRef() *= fg(block_of[it.row()]) * fc(j);
      low.c(j) *= fc(j);
      low.col_scale(j) *= fc(j);
    }
    low.b = low.b.cwiseProduct(fa);
    for (int i = 0; i < m; ++i) low.h(i) *= fg(block_of[i]);
  }
  const double cmax = low.c.cwiseAbs().maxCoeff();
  if (cmax > 0.0) {
    low.cost_scale = cmax;
    low.c /= cmax;
  }
}

bool is_diagonal_block(const PsdConstraint& p) {
  for (const auto& [rc, e] : p.entries)
    if (rc.first != rc.second) return false;
  return true;
}

Lowered lower(const ConicProgram& prog) {
  Lowered low;
  // variables pinned by PSD (non-diagonal) blocks cannot be eliminated
  std::set<int> pinned;
  for (const auto& p : prog.psd_constraints) {
    if (is_diagonal_block(p)) continue;
    for (const auto& [rc, e] : p.entries)
      for (const auto& [i, c] : e.terms) pinned.insert(i);
  }

  std::vector<std::pair<SparseExpr, double>> kept_eqs;
  for (const auto& [e, rhs] : prog.eq_constraints) {
    SparseExpr lin = to_sparse(e);
    double cst = e.constant - rhs;  // lin + cst == 0
    apply_subs(low.subs, lin, cst);
    // pick the eliminable variable with the largest coefficient
    int pivot = -1;
    double best = 0.0;
    for (const auto& [i, c] : lin) {
      if (pinned.count(i)) continue;
      if (std::abs(c) > best) {
        best = std::abs(c);
        pivot = i;
      }
    }
    if (pivot < 0) {
      if (!lin.empty() || cst != 0.0) kept_eqs.emplace_back(lin, -cst);
      continue;
    }
    const double pc = lin.at(pivot);
    Substitution sub;
    sub.constant = -cst / pc;
    for (const auto& [i, c] : lin)
      if (i != pivot) sub.expr[i] = -c / pc;
    // keep earlier substitutions free of the new pivot
    for (auto& [v, s] : low.subs) {
      auto it = s.expr.find(pivot);
      if (it == s.expr.end()) continue;
      const double coeff = it->second;
      s.expr.erase(it);
      s.constant += coeff * sub.constant;
      for (const auto& [vi, vc] : sub.expr) {
        s.expr[vi] += coeff * vc;
        if (s.expr[vi] == 0.0) s.expr.erase(vi);
      }
    }
    low.subs[pivot] = std::move(sub);
  }

  // compact remaining variables
  std::vector<int> new_index(prog.n_vars, -1);
  for (int i = 0; i < prog.n_vars; ++i) {
    if (low.subs.count(i)) continue;
    new_index[i] = static_cast<int>(low.keep.size());
    low.keep.push_back(i);
  }
  const int n = static_cast<int>(low.keep.size());

  auto reduce = [&](const LinExpr& e) {
    SparseExpr lin = to_sparse(e);
    double cst = e.constant;
    apply_subs(low.subs, lin, cst);
    return std::make_pair(lin, cst);
  };
  auto track_range = [&](double c) {
    const double a = std::abs(c);
    if (a == 0.0) return;
    low.coeff_max = std::max(low.coeff_max, a);
    low.coeff_min = (low.coeff_min == 0.0) ? a : std::min(low.coeff_min, a);
  };

  // objective
  low.c = Eigen::VectorXd::Zero(n);
  {
    auto [lin, cst] = reduce(prog.objective);
    low.obj_offset = cst;
    for (const auto& [i, v] : lin) {
      low.c(new_index[i]) += v;
      track_range(v);
    }
  }

  // equalities kept
  std::vector<Eigen::Triplet<double>> ta, tg;
  low.b.resize(static_cast<int>(kept_eqs.size()));
  for (size_t r = 0; r < kept_eqs.size(); ++r) {
    for (const auto& [i, v] : kept_eqs[r].first) {
      ta.emplace_back(static_cast<int>(r), new_index[i], v);
      track_range(v);
    }
    low.b(static_cast<int>(r)) = kept_eqs[r].second;
  }
  low.A.resize(static_cast<int>(kept_eqs.size()), n);
  low.A.setFromTriplets(ta.begin(), ta.end());

  // cone rows: nonneg (diagonal PSD blocks) first, then SOC, then PSD
  std::vector<double> hvals;
  int row = 0;
  auto emit_ineq_row = [&](const SparseExpr& lin, double cst) {
    // lin + cst >= 0  ->  -lin x + s = cst
    for (const auto& [i, v] : lin) {
      tg.emplace_back(row, new_index[i], -v);
      track_range(v);
    }
    hvals.push_back(cst);
    ++row;
  };
  for (const auto& p : prog.psd_constraints) {
    if (!is_diagonal_block(p)) continue;
    for (const auto& [rc, e] : p.entries) {
      auto [lin, cst] = reduce(e);
      emit_ineq_row(lin, cst);
      ++low.dims.nonneg;
    }
  }
  for (const auto& s : prog.soc_constraints) {
    auto [slin, scst] = reduce(s.scalar);
    emit_ineq_row(slin, scst);
    for (const auto& r : s.rows) {
      auto [lin, cst] = reduce(r);
      emit_ineq_row(lin, cst);
    }
    low.dims.soc.push_back(static_cast<int>(s.rows.size()) + 1);
  }
  constexpr double kSqrt2 = 1.4142135623730951;
  for (const auto& p : prog.psd_constraints) {
    if (is_diagonal_block(p)) continue;
    for (int col = 0; col < p.dim; ++col)
      for (int rr = 0; rr <= col; ++rr) {
        const double scale = (rr == col) ? 1.0 : kSqrt2;
        auto it = p.entries.find({rr, col});
        if (it == p.entries.end()) {
          hvals.push_back(0.0);
          ++row;
          continue;
        }
        auto [lin, cst] = reduce(it->second);
        for (const auto& [i, v] : lin) {
          tg.emplace_back(row, new_index[i], -scale * v);
          track_range(v);
        }
        hvals.push_back(scale * cst);
        ++row;
      }
    low.dims.psd.push_back(p.dim);
  }
  low.G.resize(row, n);
  low.G.setFromTriplets(tg.begin(), tg.end());
  low.h = Eigen::Map<Eigen::VectorXd>(hvals.data(), row);
  equilibrate(low);
  return low;
}

}  // namespace

SolveResult solve(const ConicProgram& program, const SolverSettings& settings) {
  program.validate();
  SolveResult res;
  Lowered low = lower(program);
  res.diagnostics.eliminated_equalities = static_cast<int>(low.subs.size());
  if (low.coeff_min > 0.0)
    res.diagnostics.coeff_dynamic_range = low.coeff_max / low.coeff_min;
  res.diagnostics.conditioning_warning = res.diagnostics.coeff_dynamic_range > 1e8;

  SolverSettings inner = settings;
  inner.objective_offset = low.obj_offset / low.cost_scale;
  ConeSolution sol =
      solve_cone_lp(low.c, low.A, low.b, low.G, low.h, low.dims, inner);
  res.status = sol.status;
  res.iterations = sol.iterations;
  res.primal_residual = sol.primal_residual;
  res.dual_residual = sol.dual_residual;
  res.gap = sol.gap;
  res.message = sol.message;
  if (sol.status == SolveStatus::Optimal || sol.status == SolveStatus::Inaccurate) {
    res.primal.resize(program.n_vars);
    for (size_t k = 0; k < low.keep.size(); ++k)
      res.primal(low.keep[k]) =
          low.col_scale(static_cast<int>(k)) * sol.x(static_cast<int>(k));
    for (const auto& [v, sub] : low.subs) {
      double val = sub.constant;
      for (const auto& [i, c] : sub.expr) val += c * res.primal(i);
      res.primal(v) = val;
    }
    res.objective_value = program.objective.eval(res.primal);
  }
  return res;
}

}  // namespace ctup::conic
