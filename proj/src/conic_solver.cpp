#include "ctup/conic_solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace ctup::conic {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = 1.4142135623730951;
}  // namespace

int ConeDims::total_rows() const {
  int m = nonneg;
  for (int q : soc) m += q;
  for (int d : psd) m += d * (d + 1) / 2;
  return m;
}

int ConeDims::degree() const {
  int deg = nonneg + static_cast<int>(soc.size());
  for (int d : psd) deg += d;
  return deg;
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Inaccurate: return "Inaccurate";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::SolverError: return "SolverError";
  }
  return "?";
}

Eigen::VectorXd svec(const Eigen::MatrixXd& S) {
  const int n = static_cast<int>(S.rows());
  Eigen::VectorXd v(n * (n + 1) / 2);
  int k = 0;
  for (int c = 0; c < n; ++c)
    for (int r = 0; r <= c; ++r)
      v(k++) = (r == c) ? S(r, c) : kSqrt2 * S(r, c);
  return v;
}

Eigen::MatrixXd smat(const Eigen::VectorXd& v, int n) {
  Eigen::MatrixXd S(n, n);
  int k = 0;
  for (int c = 0; c < n; ++c)
    for (int r = 0; r <= c; ++r) {
      const double x = (r == c) ? v(k) : v(k) / kSqrt2;
      S(r, c) = x;
      S(c, r) = x;
      ++k;
    }
  return S;
}

namespace {

// All interior-point arithmetic runs in extended precision: the noiseless
// instances this solver sees have optima on the boundary of every cone (no
// strict complementarity), and double-precision KKT solves floor the dual
// residual around 1e-8.  long double buys ~3 extra digits.
using Real = double;
using RVec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using RMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using RSparse = Eigen::SparseMatrix<Real>;
constexpr Real kRInf = std::numeric_limits<Real>::infinity();
constexpr Real kRSqrt2 = 1.41421356237309504880168872420969808L;

RVec rsvec(const RMat& S) {
  const int n = static_cast<int>(S.rows());
  RVec v(n * (n + 1) / 2);
  int k = 0;
  for (int c = 0; c < n; ++c)
    for (int r = 0; r <= c; ++r)
      v(k++) = (r == c) ? S(r, c) : kRSqrt2 * S(r, c);
  return v;
}

RMat rsmat(const RVec& v, int n) {
  RMat S(n, n);
  int k = 0;
  for (int c = 0; c < n; ++c)
    for (int r = 0; r <= c; ++r) {
      const Real x = (r == c) ? v(k) : v(k) / kRSqrt2;
      S(r, c) = x;
      S(c, r) = x;
      ++k;
    }
  return S;
}

struct BlockLayout {
  int nn_off{0}, nn_len{0};
  std::vector<int> soc_off, soc_len;
  std::vector<int> psd_off, psd_dim, psd_len;
};

BlockLayout make_layout(const ConeDims& dims) {
  BlockLayout L;
  int off = 0;
  L.nn_off = off;
  L.nn_len = dims.nonneg;
  off += dims.nonneg;
  for (int q : dims.soc) {
    L.soc_off.push_back(off);
    L.soc_len.push_back(q);
    off += q;
  }
  for (int d : dims.psd) {
    L.psd_off.push_back(off);
    L.psd_dim.push_back(d);
    L.psd_len.push_back(d * (d + 1) / 2);
    off += d * (d + 1) / 2;
  }
  return L;
}

// Nesterov-Todd scaling state.
struct Scaling {
  RVec w_nn;  // W = diag(w) on the nonneg block
  struct Soc {
    Real eta{1.0};
    RVec wbar;  // unit hyperbolic vector
  };
  std::vector<Soc> soc;
  struct Psd {
    RMat r;      // W(Z) = r' Z r
    RMat ri;     // r^{-1}
    RVec sigma;  // NT eigenvalues, lambda = diag(sigma)
  };
  std::vector<Psd> psd;
  RVec lambda;  // scaled point, cone space
};

enum class WMode { W, WT, Winv, WinvT };

// J v for a second-order-cone vector.
RVec socJ(const RVec& v) {
  RVec r = -v;
  r(0) = v(0);
  return r;
}

void apply_w(const BlockLayout& L, const Scaling& sc, const RVec& in,
             RVec& out, WMode mode) {
  out.resize(in.size());
  const bool inv = (mode == WMode::Winv || mode == WMode::WinvT);
  if (L.nn_len > 0) {
    if (inv)
      out.segment(L.nn_off, L.nn_len) =
          in.segment(L.nn_off, L.nn_len).cwiseQuotient(sc.w_nn);
    else
      out.segment(L.nn_off, L.nn_len) =
          in.segment(L.nn_off, L.nn_len).cwiseProduct(sc.w_nn);
  }
  for (size_t k = 0; k < L.soc_off.size(); ++k) {
    const auto v = in.segment(L.soc_off[k], L.soc_len[k]);
    const auto& s = sc.soc[k];
    RVec w = s.wbar;
    if (inv) w = socJ(w);
    const Real scale = inv ? 1.0 / s.eta : s.eta;
    RVec r = 2.0 * w * (w.dot(v)) - socJ(v);
    out.segment(L.soc_off[k], L.soc_len[k]) = scale * r;
  }
  for (size_t k = 0; k < L.psd_off.size(); ++k) {
    const int d = L.psd_dim[k];
    const RMat M = rsmat(in.segment(L.psd_off[k], L.psd_len[k]), d);
    const auto& p = sc.psd[k];
    RMat R;
    switch (mode) {
      case WMode::W: R = p.r.transpose() * M * p.r; break;
      case WMode::WT: R = p.r * M * p.r.transpose(); break;
      case WMode::Winv: R = p.ri.transpose() * M * p.ri; break;
      case WMode::WinvT: R = p.ri * M * p.ri.transpose(); break;
    }
    out.segment(L.psd_off[k], L.psd_len[k]) = rsvec(R);
  }
}

// Jordan product u o v.
void jprod(const BlockLayout& L, const RVec& u,
           const RVec& v, RVec& out) {
  out.resize(u.size());
  if (L.nn_len > 0)
    out.segment(L.nn_off, L.nn_len) =
        u.segment(L.nn_off, L.nn_len).cwiseProduct(v.segment(L.nn_off, L.nn_len));
  for (size_t k = 0; k < L.soc_off.size(); ++k) {
    const auto a = u.segment(L.soc_off[k], L.soc_len[k]);
    const auto b = v.segment(L.soc_off[k], L.soc_len[k]);
    RVec r(L.soc_len[k]);
    r(0) = a.dot(b);
    r.tail(L.soc_len[k] - 1) =
        a(0) * b.tail(L.soc_len[k] - 1) + b(0) * a.tail(L.soc_len[k] - 1);
    out.segment(L.soc_off[k], L.soc_len[k]) = r;
  }
  for (size_t k = 0; k < L.psd_off.size(); ++k) {
    const int d = L.psd_dim[k];
    const RMat U = rsmat(u.segment(L.psd_off[k], L.psd_len[k]), d);
    const RMat V = rsmat(v.segment(L.psd_off[k], L.psd_len[k]), d);
    RMat P = 0.5 * (U * V + V * U);
    out.segment(L.psd_off[k], L.psd_len[k]) = rsvec(P);
  }
}

// Solve lambda o x = v for x, where lambda is the scaled point (diagonal in
// the PSD blocks by the NT construction).
void jsolve_lambda(const BlockLayout& L, const Scaling& sc,
                   const RVec& v, RVec& out) {
  out.resize(v.size());
  if (L.nn_len > 0)
    out.segment(L.nn_off, L.nn_len) =
        v.segment(L.nn_off, L.nn_len)
            .cwiseQuotient(sc.lambda.segment(L.nn_off, L.nn_len));
  for (size_t k = 0; k < L.soc_off.size(); ++k) {
    const int q = L.soc_len[k];
    const auto lam = sc.lambda.segment(L.soc_off[k], q);
    const auto b = v.segment(L.soc_off[k], q);
    const Real a0 = lam(0);
    const RVec a1 = lam.tail(q - 1);
    const Real det = a0 * a0 - a1.squaredNorm();
    const Real x0 = (a0 * b(0) - a1.dot(b.tail(q - 1))) / det;
    RVec x1 = (b.tail(q - 1) - x0 * a1) / a0;
    out(L.soc_off[k]) = x0;
    out.segment(L.soc_off[k] + 1, q - 1) = x1;
  }
  for (size_t k = 0; k < L.psd_off.size(); ++k) {
    const int d = L.psd_dim[k];
    const auto& sig = sc.psd[k].sigma;
    RMat V = rsmat(v.segment(L.psd_off[k], L.psd_len[k]), d);
    for (int c = 0; c < d; ++c)
      for (int r = 0; r < d; ++r) V(r, c) = 2.0 * V(r, c) / (sig(r) + sig(c));
    out.segment(L.psd_off[k], L.psd_len[k]) = rsvec(V);
  }
}

// Identity element of the cone algebra.
RVec cone_identity(const BlockLayout& L, int m) {
  RVec e = RVec::Zero(m);
  e.segment(L.nn_off, L.nn_len).setOnes();
  for (size_t k = 0; k < L.soc_off.size(); ++k) e(L.soc_off[k]) = 1.0;
  for (size_t k = 0; k < L.psd_off.size(); ++k) {
    int idx = L.psd_off[k];
    for (int c = 0; c < L.psd_dim[k]; ++c) {
      e(idx + c) = 1.0;  // diagonal position within column c
      idx += c + 1;
    }
  }
  return e;
}

// Smallest cone-eigenvalue of v.
Real min_eig(const BlockLayout& L, const RVec& v) {
  Real m = kRInf;
  if (L.nn_len > 0) m = std::min(m, v.segment(L.nn_off, L.nn_len).minCoeff());
  for (size_t k = 0; k < L.soc_off.size(); ++k) {
    const auto b = v.segment(L.soc_off[k], L.soc_len[k]);
    m = std::min(m, b(0) - b.tail(L.soc_len[k] - 1).norm());
  }
  for (size_t k = 0; k < L.psd_off.size(); ++k) {
    const RMat M = rsmat(v.segment(L.psd_off[k], L.psd_len[k]), L.psd_dim[k]);
    Eigen::SelfAdjointEigenSolver<RMat> es(M, Eigen::EigenvaluesOnly);
    m = std::min(m, es.eigenvalues().minCoeff());
  }
  return m;
}

// sup { t >= 0 : lambda + t u in K }, lambda strictly interior.
Real max_step(const BlockLayout& L, const Scaling& sc,
                const RVec& u) {
  Real tmax = kRInf;
  for (int i = 0; i < L.nn_len; ++i) {
    const Real ui = u(L.nn_off + i);
    if (ui < 0.0) tmax = std::min(tmax, -sc.lambda(L.nn_off + i) / ui);
  }
  for (size_t k = 0; k < L.soc_off.size(); ++k) {
    const int q = L.soc_len[k];
    const auto lam = sc.lambda.segment(L.soc_off[k], q);
    const auto uu = u.segment(L.soc_off[k], q);
    const Real a = uu(0) * uu(0) - uu.tail(q - 1).squaredNorm();
    const Real b = 2.0 * (lam(0) * uu(0) - lam.tail(q - 1).dot(uu.tail(q - 1)));
    const Real c = lam(0) * lam(0) - lam.tail(q - 1).squaredNorm();
    // smallest positive root of a t^2 + b t + c = 0 (c > 0 at an interior point)
    Real root = kRInf;
    if (std::abs(a) < 1e-300) {
      if (b < 0.0) root = -c / b;
    } else {
      const Real disc = b * b - 4.0 * a * c;
      if (disc >= 0.0) {
        const Real sq = std::sqrt(disc);
        const Real qq = -0.5 * (b + (b >= 0 ? sq : -sq));
        Real r1 = qq / a;
        Real r2 = (qq != 0.0) ? c / qq : kRInf;
        if (r1 > 0.0) root = std::min(root, r1);
        if (r2 > 0.0) root = std::min(root, r2);
      }
    }
    tmax = std::min(tmax, root);
  }
  for (size_t k = 0; k < L.psd_off.size(); ++k) {
    const int d = L.psd_dim[k];
    const auto& sig = sc.psd[k].sigma;
    RMat M = rsmat(u.segment(L.psd_off[k], L.psd_len[k]), d);
    const RVec is = sig.cwiseSqrt().cwiseInverse();
    M = is.asDiagonal() * M * is.asDiagonal();
    Eigen::SelfAdjointEigenSolver<RMat> es(M, Eigen::EigenvaluesOnly);
    const Real m = es.eigenvalues().minCoeff();
    if (m < 0.0) tmax = std::min(tmax, -1.0 / m);
  }
  return tmax;
}

bool compute_scaling(const BlockLayout& L, const RVec& s,
                     const RVec& z, Scaling& sc) {
  sc.lambda.resize(s.size());
  if (L.nn_len > 0) {
    const auto sb = s.segment(L.nn_off, L.nn_len);
    const auto zb = z.segment(L.nn_off, L.nn_len);
    if (sb.minCoeff() <= 0.0 || zb.minCoeff() <= 0.0) return false;
    sc.w_nn = (sb.cwiseQuotient(zb)).cwiseSqrt();
    sc.lambda.segment(L.nn_off, L.nn_len) = (sb.cwiseProduct(zb)).cwiseSqrt();
  }
  sc.soc.assign(L.soc_off.size(), {});
  for (size_t k = 0; k < L.soc_off.size(); ++k) {
    const int q = L.soc_len[k];
    const auto sb = s.segment(L.soc_off[k], q);
    const auto zb = z.segment(L.soc_off[k], q);
    const Real sres = sb(0) * sb(0) - sb.tail(q - 1).squaredNorm();
    const Real zres = zb(0) * zb(0) - zb.tail(q - 1).squaredNorm();
    if (sres <= 0.0 || zres <= 0.0 || sb(0) <= 0.0 || zb(0) <= 0.0) return false;
    const Real snorm = std::sqrt(sres), znorm = std::sqrt(zres);
    const RVec sbar = sb / snorm, zbar = zb / znorm;
    const Real gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
    RVec wbar = (sbar + socJ(zbar)) / (2.0 * gamma);
    // Householder vector = Jordan square root of the scaling point
    RVec v = wbar;
    v(0) += 1.0;
    v /= std::sqrt(2.0 * (wbar(0) + 1.0));
    auto& blk = sc.soc[k];
    blk.eta = std::sqrt(snorm / znorm);
    blk.wbar = v;
    // lambda = W z
    RVec lam = blk.eta * (2.0 * v * v.dot(zb) - socJ(zb));
    sc.lambda.segment(L.soc_off[k], q) = lam;
  }
  sc.psd.assign(L.psd_off.size(), {});
  for (size_t k = 0; k < L.psd_off.size(); ++k) {
    const int d = L.psd_dim[k];
    const RMat S = rsmat(s.segment(L.psd_off[k], L.psd_len[k]), d);
    const RMat Z = rsmat(z.segment(L.psd_off[k], L.psd_len[k]), d);
    Eigen::LLT<RMat> lls(S), llz(Z);
    if (lls.info() != Eigen::Success || llz.info() != Eigen::Success) return false;
    const RMat Ls = lls.matrixL();
    const RMat Lz = llz.matrixL();
    Eigen::JacobiSVD<RMat> svd(Lz.transpose() * Ls,
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    const RVec sig = svd.singularValues();
    if (sig.minCoeff() <= 0.0) return false;
    auto& blk = sc.psd[k];
    const RVec isq = sig.cwiseSqrt().cwiseInverse();
    blk.r = Ls * svd.matrixV() * isq.asDiagonal();
    // r^{-1} = diag(sqrt(sig)) V' Ls^{-1}
    RMat LsInvTV =
        Ls.transpose().triangularView<Eigen::Upper>().solve(svd.matrixV());
    blk.ri = sig.cwiseSqrt().asDiagonal() * LsInvTV.transpose();
    blk.sigma = sig;
    RMat Lam = RMat::Zero(d, d);
    Lam.diagonal() = sig;
    sc.lambda.segment(L.psd_off[k], L.psd_len[k]) = rsvec(Lam);
  }
  return true;
}

// Identity scaling, used for initialization.
void identity_scaling(const BlockLayout& L, int m, Scaling& sc) {
  sc.w_nn = RVec::Ones(L.nn_len);
  sc.soc.assign(L.soc_off.size(), {});
  for (size_t k = 0; k < L.soc_off.size(); ++k) {
    sc.soc[k].eta = 1.0;
    sc.soc[k].wbar = RVec::Zero(L.soc_len[k]);
    sc.soc[k].wbar(0) = 1.0;
  }
  sc.psd.assign(L.psd_off.size(), {});
  for (size_t k = 0; k < L.psd_off.size(); ++k) {
    sc.psd[k].r = RMat::Identity(L.psd_dim[k], L.psd_dim[k]);
    sc.psd[k].ri = sc.psd[k].r;
    sc.psd[k].sigma = RVec::Ones(L.psd_dim[k]);
  }
  sc.lambda = cone_identity(L, m);
}

// W^{-T} applied to a sparse column of G, exploiting entry sparsity in the
// PSD blocks (each entry expands to an outer product of two rows of r^{-1}).
void scale_column(const BlockLayout& L, const Scaling& sc,
                  const RSparse& G, int col,
                  RVec& out) {
  out.setZero();
  struct PsdEntry {
    int block, idx;
    Real val;
  };
  std::vector<PsdEntry> psd_entries;
  for (RSparse::InnerIterator it(G, col); it; ++it) {
    const int r = static_cast<int>(it.row());
    if (r < L.nn_off + L.nn_len) {
      out(r) = it.value() / sc.w_nn(r - L.nn_off);
      continue;
    }
    bool handled = false;
    for (size_t k = 0; k < L.soc_off.size(); ++k) {
      if (r >= L.soc_off[k] && r < L.soc_off[k] + L.soc_len[k]) {
        out(r) = it.value();  // scaled as a block below
        handled = true;
        break;
      }
    }
    if (handled) continue;
    for (size_t k = 0; k < L.psd_off.size(); ++k) {
      if (r >= L.psd_off[k] && r < L.psd_off[k] + L.psd_len[k]) {
        psd_entries.push_back({static_cast<int>(k), r - L.psd_off[k], it.value()});
        break;
      }
    }
  }
  for (size_t k = 0; k < L.soc_off.size(); ++k) {
    auto blk = out.segment(L.soc_off[k], L.soc_len[k]);
    if (blk.isZero(0.0)) continue;
    const auto& s = sc.soc[k];
    const RVec jw = socJ(s.wbar);
    RVec v = blk;
    blk = (1.0 / s.eta) * (2.0 * jw * jw.dot(v) - socJ(v));
  }
  if (psd_entries.empty()) return;
  // group by block
  for (size_t k = 0; k < L.psd_off.size(); ++k) {
    const int d = L.psd_dim[k];
    const auto& ri = sc.psd[k].ri;
    RMat R;  // lazily allocated accumulator
    bool any = false;
    for (const auto& e : psd_entries) {
      if (e.block != static_cast<int>(k)) continue;
      if (!any) {
        R = RMat::Zero(d, d);
        any = true;
      }
      // svec index -> (row a <= col b) within this block
      int c = 0, rem = e.idx;
      while (rem > c) {
        rem -= c + 1;
        ++c;
      }
      const int a = rem, b = c;
      // W^{-T}(M) = ri M ri'
      if (a == b) {
        R += e.val * ri.col(a) * ri.col(a).transpose();
      } else {
        const Real v = e.val / kRSqrt2;
        R += v * (ri.col(a) * ri.col(b).transpose() +
                  ri.col(b) * ri.col(a).transpose());
      }
    }
    if (any) out.segment(L.psd_off[k], L.psd_len[k]) = rsvec(R);
  }
}

struct KktSolver {
  const RSparse* A;
  const RSparse* G;
  const BlockLayout* L;
  const Scaling* sc;
  int n, p, m;
  RMat Gt;      // W^{-T} G, dense m x n
  RVec Dcol;    // Jacobi column scaling of the reduced KKT matrix
  RVec Erow;    // row scaling for the equality block
  Eigen::PartialPivLU<RMat> lu;

  bool factor() {
    Gt.resize(m, n);
    RVec col(m);
    for (int j = 0; j < n; ++j) {
      scale_column(*L, *sc, *G, j, col);
      Gt.col(j) = col;
    }
    // Jacobi scaling: the columns of W^{-T}G spread over many orders of
    // magnitude near convergence; without it the normal-equations matrix is
    // numerically singular and iterative refinement stops contracting.
    Dcol.resize(n);
    for (int j = 0; j < n; ++j) {
      Real nrm = Gt.col(j).squaredNorm();
      if (p > 0)
        for (RSparse::InnerIterator it(*A, j); it; ++it)
          nrm += it.value() * it.value();
      Dcol(j) = nrm > 0.0 ? Real(1.0) / std::sqrt(std::sqrt(nrm)) : Real(1.0);
      Dcol(j) *= Dcol(j);  // 1/sqrt(nrm) computed stably for extreme nrm
    }
    RMat K = RMat::Zero(n + p, n + p);
    K.topLeftCorner(n, n).noalias() = Gt.transpose() * Gt;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) K(i, j) *= Dcol(i) * Dcol(j);
    const Real reg = 1e-14 * (1.0 + K.topLeftCorner(n, n).diagonal().maxCoeff());
    K.topLeftCorner(n, n).diagonal().array() += reg;
    Erow = RVec::Ones(p);
    if (p > 0) {
      RVec rown = RVec::Zero(p);
      for (int j = 0; j < n; ++j)
        for (RSparse::InnerIterator it(*A, j); it; ++it) {
          const Real v = it.value() * Dcol(j);
          rown(it.row()) += v * v;
        }
      for (int r = 0; r < p; ++r)
        Erow(r) = rown(r) > 0.0 ? Real(1.0) / std::sqrt(rown(r)) : Real(1.0);
      for (int j = 0; j < n; ++j)
        for (RSparse::InnerIterator it(*A, j); it; ++it) {
          const Real v = Erow(it.row()) * it.value() * Dcol(j);
          K(n + it.row(), j) = v;
          K(j, n + it.row()) = v;
        }
      K.bottomRightCorner(p, p).diagonal().array() -= reg;
    }
    lu.compute(K);
    return K.allFinite();
  }

  // Solve the scaled Newton system; bs is given in the scaled (lambda) space.
  void solve(const RVec& bx, const RVec& by,
             const RVec& bz, const RVec& bs,
             RVec& dx, RVec& dy, RVec& dz,
             RVec& ds, int refinement) const {
    solve_once(bx, by, bz, bs, dx, dy, dz, ds);
    for (int it = 0; it < refinement; ++it) {
      // residuals of the unscaled KKT equations
      RVec rx = bx;
      if (p > 0) rx -= A->transpose() * dy;
      rx -= G->transpose() * dz;
      RVec ry;
      if (p > 0)
        ry = by - (*A) * dx;
      else
        ry.resize(0);
      RVec rz = bz - (*G) * dx - ds;
      RVec wds, wdz, comp;
      apply_w(*L, *sc, ds, wds, WMode::WinvT);
      apply_w(*L, *sc, dz, wdz, WMode::W);
      jprod(*L, sc->lambda, wds + wdz, comp);
      RVec rs = bs - comp;
      if (std::getenv("KKT_DEBUG"))
        std::fprintf(stderr, "        kkt ref %d: rx %.3e ry %.3e rz %.3e rs %.3e\n",
                     it, (double)rx.norm(), (double)(p > 0 ? ry.norm() : 0.0),
                     (double)rz.norm(), (double)rs.norm());
      RVec cx, cy, cz, cs;
      solve_once(rx, ry, rz, rs, cx, cy, cz, cs);
      dx += cx;
      if (p > 0) dy += cy;
      dz += cz;
      ds += cs;
    }
  }

  void solve_once(const RVec& bx, const RVec& by,
                  const RVec& bz, const RVec& bs,
                  RVec& dx, RVec& dy, RVec& dz,
                  RVec& ds) const {
    RVec lbs, wlbs, bz2, u;
    jsolve_lambda(*L, *sc, bs, lbs);
    apply_w(*L, *sc, lbs, wlbs, WMode::WT);
    bz2 = bz - wlbs;
    apply_w(*L, *sc, bz2, u, WMode::WinvT);
    RVec rhs(n + p);
    rhs.head(n) = (bx + Gt.transpose() * u).cwiseProduct(Dcol);
    if (p > 0) rhs.tail(p) = by.cwiseProduct(Erow);
    RVec sol = lu.solve(rhs);
    dx = sol.head(n).cwiseProduct(Dcol);
    if (p > 0)
      dy = sol.tail(p).cwiseProduct(Erow);
    else
      dy.resize(0);
    RVec gtdx = Gt * dx;
    apply_w(*L, *sc, gtdx - u, dz, WMode::Winv);
    ds = bz - (*G) * dx;
  }
};

}  // namespace

ConeSolution solve_cone_lp(const Eigen::VectorXd& c_in,
                           const Eigen::SparseMatrix<double>& A_in,
                           const Eigen::VectorXd& b_in,
                           const Eigen::SparseMatrix<double>& G_in,
                           const Eigen::VectorXd& h_in, const ConeDims& dims,
                           const SolverSettings& settings) {
  const int n = static_cast<int>(c_in.size());
  const int p = static_cast<int>(b_in.size());
  const int m = static_cast<int>(h_in.size());
  ConeSolution out;
  if (G_in.rows() != m || G_in.cols() != n || A_in.rows() != p ||
      (p > 0 && A_in.cols() != n) || dims.total_rows() != m || m == 0) {
    out.message = "inconsistent problem dimensions";
    return out;
  }
  const RVec c = c_in.cast<Real>(), b = b_in.cast<Real>(), h = h_in.cast<Real>();
  const RSparse A = A_in.cast<Real>(), G = G_in.cast<Real>();
  const BlockLayout L = make_layout(dims);
  const Real deg = static_cast<Real>(dims.degree());

  KktSolver kkt;
  kkt.A = &A;
  kkt.G = &G;
  kkt.L = &L;
  kkt.n = n;
  kkt.p = p;
  kkt.m = m;

  // --- initialization: solve with the identity scaling ---
  Scaling sc;
  identity_scaling(L, m, sc);
  kkt.sc = &sc;
  if (!kkt.factor()) {
    out.message = "initial KKT factorization failed";
    return out;
  }
  // Homogeneous self-dual embedding (the cvxopt-conelp construction): track
  // (x, y, z, s, tau, kappa) and read the candidate solution off x/tau.  The
  // embedding keeps the dual residual shrinking in lockstep with the gap even
  // when the dual optimum is unattained, which happens routinely on noiseless
  // localization instances whose primal optimum touches every cone boundary.
  RVec x, y, s, z;
  Real tau = 1.0, kappa = 1.0;
  {
    RVec bs0 = RVec::Zero(m);
    RVec dz0, ds0;
    kkt.solve(-c, b, h, bs0, x, y, dz0, ds0, settings.refinement);
    s = ds0;      // h - G x
    z = -dz0;     // dual start: negate the multiplier from the LS solve
    const Real ts = -min_eig(L, s);
    const RVec e = cone_identity(L, m);
    if (ts >= -1e-8) s += (1.0 + ts) * e;
    const Real tz = -min_eig(L, z);
    if (tz >= -1e-8) z += (1.0 + tz) * e;
  }

  const Real resx0 = std::max<Real>(1.0, c.norm());
  const Real resy0 = std::max<Real>(1.0, b.norm());
  const Real resz0 = std::max<Real>(1.0, h.norm());

  Real best_score = kRInf;
  RVec best_x, best_s, best_z, best_y;

  for (int iter = 0; iter <= settings.max_iter; ++iter) {
    // de-homogenized iterate and stopping metrics; residual norms are
    // measured relative to the magnitude of the terms that form them, so a
    // huge but consistent dual iterate does not keep dres above tolerance
    const RVec xh = x / tau, sh = s / tau, zh = z / tau;
    const RVec yh = (p > 0) ? RVec(y / tau) : RVec();
    const RVec gtz = G.transpose() * zh;
    RVec rxh = c + gtz;
    Real dscale = std::max({resx0, gtz.norm(), zh.norm()});
    if (p > 0) {
      const RVec aty = A.transpose() * yh;
      rxh += aty;
      dscale = std::max(dscale, aty.norm());
    }
    const RVec gx = G * xh;
    RVec rzh = h - gx - sh;
    const Real pcost = c.dot(xh) + settings.objective_offset;
    const Real dcost = -b.dot(yh) - h.dot(zh) + settings.objective_offset;
    const Real gap = sh.dot(zh);
    Real relgap = kRInf;
    if (pcost < 0.0)
      relgap = gap / (-pcost);
    else if (dcost > 0.0)
      relgap = gap / dcost;
    const Real pres = std::max(
        p > 0 ? (b - A * xh).norm() / std::max(resy0, (A * xh).norm()) : 0.0,
        rzh.norm() / std::max({resz0, gx.norm(), sh.norm()}));
    const Real dres = rxh.norm() / dscale;

    if (settings.verbose)
      std::fprintf(stderr,
                   "it %3d  pcost % .6e  dcost % .6e  gap %.3e  pres %.3e  "
                   "dres %.3e  tau %.3e  kappa %.3e\n",
                   iter, static_cast<double>(pcost), static_cast<double>(dcost),
                   static_cast<double>(gap), static_cast<double>(pres),
                   static_cast<double>(dres), static_cast<double>(tau),
                   static_cast<double>(kappa));
    out.iterations = iter;
    out.primal_residual = pres;
    out.dual_residual = dres;
    out.gap = gap;
    out.objective = pcost;
    const Real score = std::max({pres, dres, std::min(gap, relgap)});
    if (score < best_score) {
      best_score = score;
      best_x = xh;
      best_s = sh;
      best_z = zh;
      best_y = yh;
    }

    if (pres <= settings.tol_feas && dres <= settings.tol_feas &&
        (gap <= settings.tol_gap || relgap <= settings.tol_gap)) {
      out.status = SolveStatus::Optimal;
      out.x = xh.cast<double>();
      out.s = sh.cast<double>();
      out.z = zh.cast<double>();
      out.y = yh.cast<double>();
      return out;
    }
    // infeasibility certificates (scale-invariant in the homogeneous vars)
    {
      const Real hz_by = h.dot(z) + (p > 0 ? b.dot(y) : 0.0);
      if (hz_by < 0.0) {
        RVec cert = G.transpose() * z;
        if (p > 0) cert += A.transpose() * y;
        if (cert.norm() / (-hz_by) <= settings.tol_feas &&
            min_eig(L, z) >= -1e-8 * std::max<Real>(1.0, z.norm())) {
          out.status = SolveStatus::Infeasible;
          out.message = "primal infeasibility certificate found";
          return out;
        }
      }
      const Real cx = c.dot(x);
      if (cx < 0.0) {
        const Real viol =
            std::max((p > 0 ? (A * x).norm() : 0.0), (G * x + s).norm());
        if (viol / (-cx) <= settings.tol_feas &&
            min_eig(L, s) >= -1e-8 * std::max<Real>(1.0, s.norm())) {
          out.status = SolveStatus::Unbounded;
          out.message = "dual infeasibility certificate found";
          return out;
        }
      }
    }
    if (iter == settings.max_iter) break;
    if (tau <= 1e-14 * std::max<Real>(1.0, kappa)) {
      out.message = "tau collapsed without an infeasibility certificate";
      break;
    }

    if (!compute_scaling(L, s, z, sc)) {
      out.message = "scaling breakdown (iterate left the cone)";
      break;
    }
    if (!kkt.factor()) {
      out.message = "KKT factorization failed";
      break;
    }
    const Real mu = (s.dot(z) + tau * kappa) / (deg + 1.0);

    // homogeneous residuals
    RVec rx = G.transpose() * z + c * tau;
    if (p > 0) rx += A.transpose() * y;
    RVec ry = (p > 0) ? RVec(A * x - b * tau) : RVec();
    RVec rz = G * x + s - h * tau;
    const Real rtau = kappa + c.dot(x) + (p > 0 ? b.dot(y) : 0.0) + h.dot(z);

    // tau-elimination triple: depends only on the current scaling
    RVec t1x, t1y, t1z, t1s;
    kkt.solve(-c, b, h, RVec::Zero(m), t1x, t1y, t1z, t1s,
              settings.refinement);
    const Real den = c.dot(t1x) + (p > 0 ? b.dot(t1y) : 0.0) + h.dot(t1z) -
                     kappa / tau;

    RVec lamsq;
    jprod(L, sc.lambda, sc.lambda, lamsq);
    const RVec e = cone_identity(L, m);

    // assembles a direction for given (eta, bs, bkappa)
    RVec dx, dy, dz, ds;
    Real dtau = 0.0, dkappa = 0.0;
    auto direction = [&](Real eta, const RVec& bsv, Real bkappa) {
      RVec u0x, u0y, u0z, u0s;
      kkt.solve(-eta * rx, p > 0 ? RVec(-eta * ry) : RVec(), -eta * rz, bsv,
                u0x, u0y, u0z, u0s, settings.refinement);
      const Real num = -eta * rtau - c.dot(u0x) -
                       (p > 0 ? b.dot(u0y) : 0.0) - h.dot(u0z) - bkappa / tau;
      dtau = num / den;
      dx = u0x + dtau * t1x;
      if (p > 0) dy = u0y + dtau * t1y;
      dz = u0z + dtau * t1z;
      ds = u0s + dtau * t1s;
      dkappa = (bkappa - kappa * dtau) / tau;
    };
    // maximum cone-feasible step for the current direction
    RVec up, ud;
    auto max_alpha = [&]() {
      apply_w(L, sc, ds, up, WMode::WinvT);
      apply_w(L, sc, dz, ud, WMode::W);
      Real a = std::min(max_step(L, sc, up), max_step(L, sc, ud));
      if (dtau < 0.0) a = std::min(a, -tau / dtau);
      if (dkappa < 0.0) a = std::min(a, -kappa / dkappa);
      return a;
    };

    // affine (predictor) direction
    direction(1.0, -lamsq, -tau * kappa);
    const Real alpha_aff = std::min<Real>(1.0, max_alpha());
    const Real sigma = std::pow(1.0 - alpha_aff, 3.0);
    const Real dtau_aff = dtau, dkappa_aff = dkappa;

    // combined (corrector) direction
    RVec corr;
    jprod(L, up, ud, corr);
    RVec bs = -lamsq - corr + sigma * mu * e;
    direction(1.0 - sigma, bs,
              sigma * mu - tau * kappa - dtau_aff * dkappa_aff);
    const Real step = std::min<Real>(1.0, 0.99 * max_alpha());
    if (!std::isfinite(step) || step <= 1e-12) {
      out.message = "step length collapsed";
      break;
    }
    x += step * dx;
    if (p > 0) y += step * dy;
    s += step * ds;
    z += step * dz;
    tau += step * dtau;
    kappa += step * dkappa;
    if (settings.verbose)
      std::fprintf(stderr,
                   "      alpha_aff %.3e sigma %.3e step %.3e mineig(s) %.3e "
                   "mineig(z) %.3e\n",
                   static_cast<double>(alpha_aff), static_cast<double>(sigma),
                   static_cast<double>(step), static_cast<double>(min_eig(L, s)),
                   static_cast<double>(min_eig(L, z)));
    if (!x.allFinite() || !s.allFinite() || !z.allFinite() ||
        !std::isfinite(tau) || !std::isfinite(kappa)) {
      out.message = "iterate diverged";
      break;
    }
  }

  // did not hit the strict tolerances; report the best-effort point
  if (best_score <= 1e-5) {
    out.status = SolveStatus::Inaccurate;
    out.x = best_x.cast<double>();
    out.s = best_s.cast<double>();
    out.z = best_z.cast<double>();
    out.y = best_y.cast<double>();
  } else {
    out.status = SolveStatus::SolverError;
    if (out.message.empty()) out.message = "maximum iterations reached";
  }
  return out;
}

}  // namespace ctup::conic
