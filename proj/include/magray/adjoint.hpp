#pragma once

#include <Eigen/SparseCore>
#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>

#include "magray/calculus.hpp"
#include "magray/transport.hpp"

namespace magray {

// C^n-valued function of inflow coordinates (s, phi) on a boundary circle.
using InflowFn = std::function<CVec(double, double)>;

// Spectral interpolant of grid data on the unit inflow boundary.
inline InflowFn inflow_fn(const BoundaryFn& h) {
  auto data = std::make_shared<const BoundaryFn>(h);
  auto I = std::make_shared<const InflowInterpolator>(h.grid);
  return [data, I](double s, double phi) { return I->eval(*data, s, phi); };
}

struct Point2 {
  double x = 0, y = 0;
};

enum class AdjointPart { full, order0, order1 };

// (I^0)^* h as a function and (I^1)^* h as the 1-form wx dx + wy dy, at a list of base points.
struct AdjointResult {
  int n = 1;
  std::vector<Point2> points;
  std::vector<CVec> f, wx, wy;
  std::string provenance;
};

// Backward traces over base points x fiber angles; applies h -> U h_psi.
// With an extension radius the data lives on the larger circle and is transported inward.
class AdjointEvaluator {
 public:
  AdjointEvaluator(const Scene& scene, std::vector<Point2> points, int ntheta, const TableOptions& opt)
      : n_(scene.rank()), ntheta_(ntheta), points_(std::move(points)), extended_(opt.extension_radius > 1.0) {
    std::vector<PhasePoint> pts;
    pts.reserve(points_.size() * static_cast<std::size_t>(ntheta));
    for (const Point2& p : points_) {
      esig_.push_back(std::exp(scene.sigma(p.x, p.y)));
      for (int l = 0; l < ntheta; ++l) pts.push_back({p.x, p.y, theta(l)});
    }
    table_ = BackTraceTable(scene, std::move(pts), opt);
  }

  int rank() const { return n_; }
  int ntheta() const { return ntheta_; }
  int size() const { return static_cast<int>(points_.size()); }
  bool extended() const { return extended_; }
  double theta(int l) const { return kTwoPi * l / ntheta_; }
  const std::vector<Point2>& points() const { return points_; }
  const BackTrace& trace(int i, int l) const { return table_.row(i * ntheta_ + l); }
  double exp_sigma(int i) const { return esig_[static_cast<std::size_t>(i)]; }

  // U h_psi at (point i, theta_l), stored at i * ntheta + l.
  std::vector<CVec> fiber(const InflowFn& h) const {
    std::vector<CVec> out(static_cast<std::size_t>(table_.size()));
    parallel_for(table_.size(), [&](int k) {
      const BackTrace& r = table_.row(k);
      out[static_cast<std::size_t>(k)] = extended_ ? CVec(r.U_ext * h(r.s_ext, r.phi_ext)) : CVec(r.U * h(r.s, r.phi));
    });
    return out;
  }

  // Fiber integrals: 2 pi (U h_psi)_0 and e^sigma int (cos, sin) U h_psi dtheta.
  AdjointResult transform(const InflowFn& h, AdjointPart part = AdjointPart::full) const {
    const std::vector<CVec> F = fiber(h);
    AdjointResult r = empty("fiber quadrature, " + std::to_string(ntheta_) + " angles");
    const double dth = kTwoPi / ntheta_;
    for (int i = 0; i < size(); ++i) {
      const auto s = static_cast<std::size_t>(i);
      CVec f0 = CVec::Zero(n_), cx = CVec::Zero(n_), cy = CVec::Zero(n_);
      for (int l = 0; l < ntheta_; ++l) {
        const CVec& v = F[s * static_cast<std::size_t>(ntheta_) + static_cast<std::size_t>(l)];
        f0 += v;
        cx += std::cos(theta(l)) * v;
        cy += std::sin(theta(l)) * v;
      }
      if (part != AdjointPart::order1) r.f[s] = dth * f0;
      if (part != AdjointPart::order0) {
        r.wx[s] = esig_[s] * dth * cx;
        r.wy[s] = esig_[s] * dth * cy;
      }
    }
    return r;
  }

  // Order-1 part from the fiber modes: a_{+-1} = pi (U h_psi)_{+-1}, w = e^sigma (a_1 + a_{-1}, i (a_1 - a_{-1})).
  AdjointResult order1_modes(const InflowFn& h) const {
    const std::vector<CVec> F = fiber(h);
    AdjointResult r = empty("fiber modes +-1 by FFT");
    FiberFFT fft(ntheta_);
    std::vector<cd> in(static_cast<std::size_t>(ntheta_)), md(static_cast<std::size_t>(ntheta_));
    for (int i = 0; i < size(); ++i) {
      const auto s = static_cast<std::size_t>(i);
      r.wx[s] = r.wy[s] = CVec::Zero(n_);
      for (int c = 0; c < n_; ++c) {
        for (int l = 0; l < ntheta_; ++l) in[static_cast<std::size_t>(l)] = F[s * static_cast<std::size_t>(ntheta_) + static_cast<std::size_t>(l)](c);
        fft.forward(in.data(), md.data());
        const cd a1 = kPi * md[1], am1 = kPi * md[static_cast<std::size_t>(ntheta_ - 1)];
        r.wx[s](c) = esig_[s] * (a1 + am1);
        r.wy[s](c) = esig_[s] * kI * (a1 - am1);
      }
    }
    return r;
  }

 private:
  AdjointResult empty(std::string provenance) const {
    AdjointResult r;
    r.n = n_;
    r.points = points_;
    r.f.assign(points_.size(), CVec::Zero(n_));
    r.wx.assign(points_.size(), CVec::Zero(n_));
    r.wy.assign(points_.size(), CVec::Zero(n_));
    r.provenance = std::move(provenance) + (extended_ ? ", extended traces" : "");
    return r;
  }

  int n_, ntheta_;
  std::vector<Point2> points_;
  std::vector<double> esig_;
  bool extended_;
  BackTraceTable table_;
};

inline std::vector<Point2> node_points(const SpatialGrid& g, const std::vector<int>& nodes) {
  std::vector<Point2> p;
  for (int k : nodes) p.push_back({g.x(k), g.y(k)});
  return p;
}

// Adjoint of boundary data h on the disk nodes of a grid at the given base points.
inline AdjointResult adjoint_transform(const Scene& scene, const BoundaryFn& h, std::vector<Point2> points, int ntheta,
                                       AdjointPart part = AdjointPart::full, const TableOptions& opt = {}) {
  TableOptions o = opt;
  o.extension_radius = 0;
  AdjointEvaluator ev(scene, std::move(points), ntheta, o);
  return ev.transform(inflow_fn(h), part);
}

// Full adjoint U h_psi as a fiber grid function; ghost nodes by extrapolation.
inline FiberGridFn adjoint_transform_full(const Scene& scene, const BoundaryFn& h, std::shared_ptr<const SpatialGrid> grid,
                                          int ntheta, const TableOptions& opt = {}) {
  TableOptions o = opt;
  o.extension_radius = 0;
  const auto& nodes = grid->disk_nodes();
  AdjointEvaluator ev(scene, node_points(*grid, nodes), ntheta, o);
  const std::vector<CVec> F = ev.fiber(inflow_fn(h));
  FiberGridFn u(grid, ntheta, h.n);
  for (std::size_t a = 0; a < nodes.size(); ++a)
    for (int l = 0; l < ntheta; ++l)
      for (int c = 0; c < h.n; ++c) u.at(nodes[a], l, c) = F[a * static_cast<std::size_t>(ntheta) + static_cast<std::size_t>(l)](c);
  GhostExtrapolator(grid).fill_strided(&u.at(0, 0), ntheta * h.n, ntheta * h.n);
  return u;
}

// Adjoints as grid fields: f with n components and the 1-form with 2n components (x then y).
struct GridAdjoint {
  GridField f, omega;
};

inline GridAdjoint to_grid(const AdjointResult& r, std::shared_ptr<const SpatialGrid> grid, const std::vector<int>& nodes) {
  GridAdjoint g{GridField(grid, r.n), GridField(grid, 2 * r.n)};
  for (std::size_t a = 0; a < nodes.size(); ++a)
    for (int c = 0; c < r.n; ++c) {
      g.f.at(nodes[a], c) = r.f[a](c);
      g.omega.at(nodes[a], c) = r.wx[a](c);
      g.omega.at(nodes[a], r.n + c) = r.wy[a](c);
    }
  return g;
}

// Nodes at which extended adjoints are evaluated: everything the finite differences and the bicubic
// stencils of disk points can reach.
inline std::vector<int> extension_nodes(const SpatialGrid& g, double radius) {
  std::vector<int> nodes;
  const double rmax = std::min(1.0 + 6.0 * g.h(), radius - 0.05);
  for (int k = 0; k < g.size(); ++k)
    if (std::hypot(g.x(k), g.y(k)) <= rmax) nodes.push_back(k);
  return nodes;
}

// <I^k u, h>_mu against <u, (I^k)^* h> with independent quadratures on both sides.
struct PairingResult {
  cd forward = 0, adjoint = 0;
  double scale = 0;
  double relative() const { return std::abs(forward - adjoint) / std::max(scale, 1e-300); }
};

class PairingBench {
 public:
  PairingBench(const Scene& scene, const BoundaryGrid& g, const DiskQuadrature& quad, int ntheta, const TableOptions& opt = {})
      : scene_(scene), rays_(scene, g, opt), quad_(quad), eval_(scene, points(quad), ntheta, no_extension(opt)) {}

  const ForwardRayTable& rays() const { return rays_; }
  const AdjointEvaluator& evaluator() const { return eval_; }

  PairingResult order0(const Field& f, const BoundaryFn& h) const {
    BoundaryFn If = ray_transform(rays_, f.rank(), [&](double x, double y, double) { return f(x, y); });
    const AdjointResult a = eval_.transform(inflow_fn(h), AdjointPart::order0);
    PairingResult r;
    r.forward = mu_inner(scene_, If, h);
    double nf = 0;
    for (int q = 0; q < quad_.size(); ++q) {
      const auto k = static_cast<std::size_t>(q);
      const double w = quad_.w[k] * area_density(scene_, quad_.x[k], quad_.y[k]);
      const CVec v = f(quad_.x[k], quad_.y[k]);
      r.adjoint += w * v.dot(a.f[k]);
      nf += w * v.squaredNorm();
    }
    // Eigen's dot conjugates the first argument.
    r.adjoint = std::conj(r.adjoint);
    r.scale = std::sqrt(nf) * mu_norm(scene_, h);
    return r;
  }

  PairingResult order1(const FormField& w, const BoundaryFn& h) const {
    BoundaryFn Iw = ray_transform(rays_, w.x.rank(), [&](double x, double y, double th) {
      return CVec(std::exp(-scene_.sigma(x, y)) * (std::cos(th) * w.x(x, y) + std::sin(th) * w.y(x, y)));
    });
    const AdjointResult a = eval_.transform(inflow_fn(h), AdjointPart::order1);
    PairingResult r;
    r.forward = mu_inner(scene_, Iw, h);
    double nw = 0;
    for (int q = 0; q < quad_.size(); ++q) {
      const auto k = static_cast<std::size_t>(q);
      const CVec vx = w.x(quad_.x[k], quad_.y[k]), vy = w.y(quad_.x[k], quad_.y[k]);
      r.adjoint += quad_.w[k] * (a.wx[k].dot(vx) + a.wy[k].dot(vy));
      nw += quad_.w[k] * (vx.squaredNorm() + vy.squaredNorm());
    }
    r.scale = std::sqrt(nw) * mu_norm(scene_, h);
    return r;
  }

 private:
  static std::vector<Point2> points(const DiskQuadrature& q) {
    std::vector<Point2> p;
    for (int i = 0; i < q.size(); ++i) p.push_back({q.x[static_cast<std::size_t>(i)], q.y[static_cast<std::size_t>(i)]});
    return p;
  }
  static TableOptions no_extension(TableOptions o) {
    o.extension_radius = 0;
    return o;
  }

  const Scene& scene_;
  ForwardRayTable rays_;
  DiskQuadrature quad_;
  AdjointEvaluator eval_;
};

// ---------------------------------------------------------------------------------------------
// Conjugate gradients on the normal equations (CGLS form) with a residual history.

struct CgOptions {
  int max_iterations = 500;
  double tol = 1e-3;    // relative residual |b - Ax| / |b|
  double stall = 1e-9;  // stop when |A^* r| falls below this fraction of |A^* b|
};

struct CgResult {
  Eigen::VectorXcd x;
  std::vector<double> history;  // relative residual after each iteration
  int iterations = 0;
  double residual = 0;
  bool converged = false;
};

template <class Apply, class ApplyAdjoint>
CgResult cgne(Apply&& A, ApplyAdjoint&& At, const Eigen::VectorXcd& b, Eigen::Index cols, const CgOptions& opt = {}) {
  CgResult out;
  out.x = Eigen::VectorXcd::Zero(cols);
  const double nb = b.norm();
  if (nb == 0.0) {
    out.converged = true;
    return out;
  }
  Eigen::VectorXcd r = b, s = At(r), p = s;
  double gamma = s.squaredNorm();
  const double g0 = std::sqrt(gamma);
  out.residual = 1.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (gamma == 0.0) break;
    const Eigen::VectorXcd q = A(p);
    const double alpha = gamma / q.squaredNorm();
    out.x += alpha * p;
    r -= alpha * q;
    s = At(r);
    const double gnew = s.squaredNorm();
    out.iterations = it + 1;
    out.residual = r.norm() / nb;
    out.history.push_back(out.residual);
    if (out.residual < opt.tol) {
      out.converged = true;
      break;
    }
    if (std::sqrt(gnew) < opt.stall * g0) break;
    p = s + (gnew / gamma) * p;
    gamma = gnew;
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Boundary data generated on a larger circle |x| = R and transported inward.

// Inflow values on the unit circle, w = U_R W, for data W on the circle of radius R.
class ExtensionMap {
 public:
  ExtensionMap(const Scene& scene, const BoundaryGrid& g, double radius, const TableOptions& opt = {}) : grid_(g), n_(scene.rank()) {
    std::vector<PhasePoint> pts;
    for (int j = 0; j < g.ns; ++j)
      for (int k = 0; k < g.nphi; ++k) pts.push_back(inflow_point(g.s[static_cast<std::size_t>(j)], g.phi[static_cast<std::size_t>(k)]));
    TableOptions o = opt;
    o.extension_radius = radius;
    table_ = BackTraceTable(scene, std::move(pts), o);
  }

  BoundaryFn operator()(const InflowFn& W) const {
    BoundaryFn w(grid_, n_);
    parallel_for(grid_.size(), [&](int i) {
      const BackTrace& r = table_.row(i);
      w.set(i, r.U_ext * W(r.s_ext, r.phi_ext));
    });
    return w;
  }

 private:
  BoundaryGrid grid_;
  int n_;
  BackTraceTable table_;
};

// Basis e^{i k s} P_j(phi / half_width) e_c on the outer inflow boundary, |k| <= kmax, j <= jmax.
// Only the fan of directions that reach the unit disk matters, so half_width is usually below pi/2.
struct OuterBasis {
  int n = 1, kmax = 8, jmax = 10;
  double half_width = kPi / 2;

  int modes() const { return (2 * kmax + 1) * (jmax + 1); }
  int size() const { return modes() * n; }
  // Column of (mode b, component c).
  int column(int b, int c) const { return b * n + c; }

  void values(double s, double phi, std::vector<cd>& out) const {
    out.resize(static_cast<std::size_t>(modes()));
    const double t = std::clamp(phi / half_width, -1.0, 1.0);
    std::vector<double> P(static_cast<std::size_t>(jmax + 1));
    P[0] = 1.0;
    if (jmax > 0) P[1] = t;
    for (int j = 2; j <= jmax; ++j) P[static_cast<std::size_t>(j)] = ((2 * j - 1) * t * P[static_cast<std::size_t>(j - 1)] - (j - 1) * P[static_cast<std::size_t>(j - 2)]) / j;
    int b = 0;
    for (int k = -kmax; k <= kmax; ++k) {
      const cd e = std::polar(1.0, k * s);
      for (int j = 0; j <= jmax; ++j) out[static_cast<std::size_t>(b++)] = e * P[static_cast<std::size_t>(j)];
    }
  }

  InflowFn function(const Eigen::VectorXcd& coef) const {
    OuterBasis basis = *this;
    return [basis, coef](double s, double phi) {
      thread_local std::vector<cd> v;
      basis.values(s, phi, v);
      CVec out = CVec::Zero(basis.n);
      for (int b = 0; b < basis.modes(); ++b)
        for (int c = 0; c < basis.n; ++c) out(c) += coef(basis.column(b, c)) * v[static_cast<std::size_t>(b)];
      return out;
    };
  }
};

struct PairSolverOptions {
  int kmax = 8, jmax = 10;
  int nr = 16, na = 32;  // least-squares points in the disk
  int ntheta = 64;
  double radius = 1.5;
  double dt = 1e-2;
  double factor = 1.0;  // compatibility d_A^* omega = factor * Phi f
  // Right preconditioner L^{-H} from M^H M + (reg |M|)^2 = L L^H; 0 keeps only the unit column scaling.
  double regularization = 1e-4;
  CgOptions cg;
};

struct PairReport {
  double compatibility = 0;  // relative |d_A^* omega - factor Phi f|
  double residual = 0;       // final relative least-squares residual
  int iterations = 0;
  bool stalled = false;
  std::vector<double> history;
};

struct PairSolution {
  Eigen::VectorXcd coef;  // outer-circle coefficients of w
  InflowFn outer;         // W on the circle of radius R
  PairReport report;
};

// Least-squares solution of (I^0)^* w = f, (I^1)^* w = omega over boundary data w generated on a
// larger circle. The linear map on the coefficients is assembled densely; CGNE solves it.
class AdjointPairSolver {
 public:
  AdjointPairSolver(const Scene& scene, const PairSolverOptions& opt = {})
      : scene_(scene), opt_(opt), quad_(opt.nr, opt.na), basis_{scene.rank(), opt.kmax, opt.jmax} {
    const int n = scene.rank(), Q = quad_.size(), C = basis_.size();
    std::vector<Point2> pts;
    for (int q = 0; q < Q; ++q) pts.push_back({quad_.x[static_cast<std::size_t>(q)], quad_.y[static_cast<std::size_t>(q)]});
    TableOptions to;
    to.dt = opt.dt;
    to.extension_radius = opt.radius;
    AdjointEvaluator ev(scene, pts, opt.ntheta, to);
    // Fit the Legendre variable to the directions actually traced back to the outer circle.
    double fan = 0;
    for (int q = 0; q < Q; ++q)
      for (int l = 0; l < opt.ntheta; ++l) fan = std::max(fan, std::abs(ev.trace(q, l).phi_ext));
    basis_.half_width = std::min(kPi / 2, 1.02 * fan + 1e-3);
    M_ = Eigen::MatrixXcd::Zero(3 * n * Q, C);
    const double dth = kTwoPi / opt.ntheta;
    parallel_for(Q, [&](int q) {
      const auto k = static_cast<std::size_t>(q);
      const double wf = std::sqrt(quad_.w[k] * area_density(scene, quad_.x[k], quad_.y[k])), ww = std::sqrt(quad_.w[k]);
      const double es = ev.exp_sigma(q);
      std::vector<cd> v;
      for (int l = 0; l < opt.ntheta; ++l) {
        const BackTrace& r = ev.trace(q, l);
        basis_.values(r.s_ext, r.phi_ext, v);
        const double th = ev.theta(l), c0 = dth * wf, cx = dth * ww * es * std::cos(th), cy = dth * ww * es * std::sin(th);
        for (int b = 0; b < basis_.modes(); ++b)
          for (int c = 0; c < n; ++c) {
            const int col = basis_.column(b, c);
            for (int rr = 0; rr < n; ++rr) {
              const cd u = r.U_ext(rr, c) * v[static_cast<std::size_t>(b)];
              M_(row(q, 0, rr), col) += c0 * u;
              M_(row(q, 1, rr), col) += cx * u;
              M_(row(q, 2, rr), col) += cy * u;
            }
          }
      }
    });
    // Unit column scaling as a diagonal preconditioner.
    scale_ = Eigen::VectorXd::Ones(C);
    for (int c = 0; c < C; ++c) {
      const double nc = M_.col(c).norm();
      if (nc > 0) {
        scale_(c) = 1.0 / nc;
        M_.col(c) *= scale_(c);
      }
    }
    if (opt.regularization > 0) {
      Eigen::MatrixXcd G = M_.adjoint() * M_;
      const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(G, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
      G.diagonal().array() += opt.regularization * opt.regularization * top;
      L_ = G.llt().matrixL();
    }
  }

  const OuterBasis& basis() const { return basis_; }
  const DiskQuadrature& quadrature() const { return quad_; }
  const PairSolverOptions& options() const { return opt_; }
  const Eigen::MatrixXcd& matrix() const { return M_; }  // weighted rows, unit-scaled columns

  // Weighted right-hand side for targets f and omega.
  Eigen::VectorXcd rhs(const Field& f, const FormField& omega) const {
    const int n = scene_.rank();
    Eigen::VectorXcd b(M_.rows());
    for (int q = 0; q < quad_.size(); ++q) {
      const auto k = static_cast<std::size_t>(q);
      const double x = quad_.x[k], y = quad_.y[k];
      const double wf = std::sqrt(quad_.w[k] * area_density(scene_, x, y)), ww = std::sqrt(quad_.w[k]);
      const CVec fv = f(x, y), ox = omega.x(x, y), oy = omega.y(x, y);
      for (int r = 0; r < n; ++r) {
        b(row(q, 0, r)) = wf * fv(r);
        b(row(q, 1, r)) = ww * ox(r);
        b(row(q, 2, r)) = ww * oy(r);
      }
    }
    return b;
  }

  // Compatibility defect |d_A^* omega - factor Phi f| relative to |d_A^* omega| + |Phi f| + |f| + |omega|
  // over the least-squares points, so that vanishing data on both sides does not read as incompatible.
  double compatibility(const Field& f, const FormField& omega) const {
    double num = 0, den = 0;
    CMat ax, ay, phi;
    for (int q = 0; q < quad_.size(); ++q) {
      const auto k = static_cast<std::size_t>(q);
      const double x = quad_.x[k], y = quad_.y[k], w = quad_.w[k] * area_density(scene_, x, y);
      scene_.attenuation().eval(x, y, ax, ay, phi);
      const CVec lhs = d_A_star(scene_, omega, x, y), rhs = opt_.factor * (phi * f(x, y));
      const CVec fv = f(x, y);
      num += w * (lhs - rhs).squaredNorm();
      den += w * (std::max(lhs.squaredNorm(), rhs.squaredNorm()) + fv.squaredNorm()) +
             quad_.w[k] * (omega.x(x, y).squaredNorm() + omega.y(x, y).squaredNorm());
    }
    return den == 0.0 ? 0.0 : std::sqrt(num / den);
  }

  PairSolution solve(const Field& f, const FormField& omega) const {
    const Eigen::VectorXcd b = rhs(f, omega);
    const bool pre = L_.size() > 0;
    auto lower = [&](const Eigen::VectorXcd& y) -> Eigen::VectorXcd { return L_.triangularView<Eigen::Lower>().solve(y); };
    auto upper = [&](const Eigen::VectorXcd& y) -> Eigen::VectorXcd { return L_.adjoint().triangularView<Eigen::Upper>().solve(y); };
    CgResult cg = cgne([&](const Eigen::VectorXcd& x) -> Eigen::VectorXcd { return M_ * (pre ? upper(x) : x); },
                       [&](const Eigen::VectorXcd& r) -> Eigen::VectorXcd {
                         Eigen::VectorXcd g = M_.adjoint() * r;
                         return pre ? lower(g) : g;
                       },
                       b, M_.cols(), opt_.cg);
    PairSolution s;
    s.coef = (pre ? upper(cg.x) : cg.x).cwiseProduct(scale_.cast<cd>());
    s.outer = basis_.function(s.coef);
    s.report.compatibility = compatibility(f, omega);
    s.report.residual = cg.residual;
    s.report.iterations = cg.iterations;
    s.report.stalled = !cg.converged;
    s.report.history = std::move(cg.history);
    return s;
  }

 private:
  int row(int q, int block, int r) const { return (3 * q + block) * scene_.rank() + r; }

  const Scene& scene_;
  PairSolverOptions opt_;
  DiskQuadrature quad_;
  OuterBasis basis_;
  Eigen::MatrixXcd M_, L_;
  Eigen::VectorXd scale_;
};

// One-shot solve; w is returned on the unit inflow grid g.
struct AdjointPairResult {
  BoundaryFn w;
  PairSolution solution;
};

inline AdjointPairResult solve_adjoint_pair(const Scene& scene, const Field& f, const FormField& omega, const BoundaryGrid& g,
                                            const PairSolverOptions& opt = {}) {
  AdjointPairSolver solver(scene, opt);
  AdjointPairResult r;
  r.solution = solver.solve(f, omega);
  TableOptions to;
  to.dt = opt.dt;
  r.w = ExtensionMap(scene, g, opt.radius, to)(r.solution.outer);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Normal-operator symbol probes.

enum class Block { b00, b01, b10, b11 };

inline const char* block_name(Block b) {
  switch (b) {
    case Block::b00: return "00";
    case Block::b01: return "01";
    case Block::b10: return "10";
    default: return "11";
  }
}

struct ProbeOptions {
  int ns = 128, nphi = 64;
  double radius = 0.5;  // bump support
  int power = 4;        // bump (1 - r^2/radius^2)^power
  int component = 0;
};

// Quadratic-form amplitudes <N_ab u_b, u_a> / (|u_a| |u_b|) for u_0 = b e^{i kappa.x} e_c and the 1-form
// u_1 = u_0 e^sigma (dx + i dy) / sqrt 2, whose fiber function is u_0 e^{i theta} / sqrt 2 and |u_1| = |u_0|.
struct ProbeRecord {
  std::array<double, 2> kappa{};
  double a00 = 0, a01 = 0, a10 = 0, a11 = 0;
  double amplitude(Block b) const {
    switch (b) {
      case Block::b00: return a00;
      case Block::b01: return a01;
      case Block::b10: return a10;
      default: return a11;
    }
  }
};

inline double probe_bump(double x, double y, const ProbeOptions& o) {
  const double t = 1.0 - (x * x + y * y) / (o.radius * o.radius);
  return t > 0 ? std::pow(t, o.power) : 0.0;
}

inline ProbeRecord normal_probe(const Scene& scene, std::array<double, 2> kappa, const ProbeOptions& opt = {}) {
  const double kk = std::hypot(kappa[0], kappa[1]);
  const double limit = kPi * scene.grid().nx / 4.0;
  if (kk > limit)
    throw FrequencyUnresolvable("normal_probe: |kappa| = " + std::to_string(kk) + " exceeds pi N_x / 4 = " + std::to_string(limit));
  const int n = scene.rank(), c = opt.component;
  const double step = std::min(1e-2, 0.25 / std::max(kk, 1.0));
  const BoundaryGrid g(opt.ns, opt.nphi);
  std::vector<CVec> I0(static_cast<std::size_t>(g.size())), I1(static_cast<std::size_t>(g.size()));
  TraceOptions to = trace_options(scene);
  to.dt = 1e-2;
  const double isq2 = 1.0 / std::sqrt(2.0);
  parallel_for(g.size(), [&](int idx) {
    FlowIntegrator flow(scene);
    const PhasePoint p = inflow_point(g.s[static_cast<std::size_t>(idx / g.nphi)], g.phi[static_cast<std::size_t>(idx % g.nphi)]);
    const double tau = flow.trace(p, to).time;
    const int K = 2 * std::max(1, static_cast<int>(std::ceil(tau / (2 * step))));
    const auto w = simpson_weights(K, tau / K);
    CVec a0 = CVec::Zero(n), a1 = CVec::Zero(n);
    flow.uniform(p, tau, K, true, [&](int i, double, const FlowState& st) {
      const double b = probe_bump(st.x, st.y, opt);
      if (b == 0.0) return;
      const cd f = w[static_cast<std::size_t>(i)] * b * std::polar(1.0, kappa[0] * st.x + kappa[1] * st.y);
      // U^{-1} e_c is the conjugate of row c of U.
      const CVec u = st.U.row(c).adjoint() * f;
      a0 += u;
      a1 += u * std::polar(isq2, st.theta);
    });
    I0[static_cast<std::size_t>(idx)] = a0;
    I1[static_cast<std::size_t>(idx)] = a1;
  });
  const auto mu = g.mu_weights(scene);
  cd b00 = 0, b11 = 0, b01 = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    b00 += mu[i] * I0[i].squaredNorm();
    b11 += mu[i] * I1[i].squaredNorm();
    b01 += mu[i] * I0[i].dot(I1[i]);
  }
  // |u_0|^2 = int b^2 e^{2 sigma}.
  const DiskQuadrature q(48, 96);
  double nrm = 0;
  for (int i = 0; i < q.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double x = opt.radius * q.x[k], y = opt.radius * q.y[k];
    nrm += opt.radius * opt.radius * q.w[k] * std::pow(probe_bump(x, y, opt), 2) * area_density(scene, x, y);
  }
  ProbeRecord r;
  r.kappa = kappa;
  r.a00 = std::abs(b00) / nrm;
  r.a11 = std::abs(b11) / nrm;
  r.a01 = std::abs(b01) / nrm;
  r.a10 = std::abs(std::conj(b01)) / nrm;
  return r;
}

// Probes at kappa and 2 kappa: decay of block 00, the 11/00 ratio, and the relative off-diagonal size.
struct SymbolStudy {
  ProbeRecord low, high;
  double decay() const { return low.a00 / high.a00; }
  double diagonal_ratio() const { return high.a11 / high.a00; }
  double offdiag_low() const { return std::max(low.a01, low.a10) / low.a00; }
  double offdiag_high() const { return std::max(high.a01, high.a10) / high.a00; }
};

inline SymbolStudy symbol_study(const Scene& scene, std::array<double, 2> kappa, const ProbeOptions& opt = {}) {
  return {normal_probe(scene, kappa, opt), normal_probe(scene, {2 * kappa[0], 2 * kappa[1]}, opt)};
}

// ---------------------------------------------------------------------------------------------
// Discrete order-0 transform of bicubic grid functions and inversion of its normal operator.

class GridRayMatrix {
 public:
  GridRayMatrix(const Scene& scene, std::shared_ptr<const SpatialGrid> grid, const BoundaryGrid& g, double step = 1e-2)
      : grid_(std::move(grid)), bgrid_(g) {
    if (scene.rank() != 1) throw RankMismatch("GridRayMatrix: scalar scenes only");
    const SpatialGrid& G = *grid_;
    std::vector<std::unordered_map<int, cd>> rows(static_cast<std::size_t>(g.size()));
    TraceOptions to = trace_options(scene);
    to.dt = 1e-2;
    parallel_for(g.size(), [&](int idx) {
      FlowIntegrator flow(scene);
      const PhasePoint p = inflow_point(g.s[static_cast<std::size_t>(idx / g.nphi)], g.phi[static_cast<std::size_t>(idx % g.nphi)]);
      const double tau = flow.trace(p, to).time;
      const int K = 2 * std::max(1, static_cast<int>(std::ceil(tau / (2 * step))));
      const auto w = simpson_weights(K, tau / K);
      auto& row = rows[static_cast<std::size_t>(idx)];
      std::array<int, 16> id;
      std::array<double, 16> cw;
      flow.uniform(p, tau, K, true, [&](int i, double, const FlowState& st) {
        G.stencil(st.x, st.y, id, cw);
        const cd u = w[static_cast<std::size_t>(i)] * std::conj(st.U(0, 0));
        for (int a = 0; a < 16; ++a) row[id[static_cast<std::size_t>(a)]] += u * cw[static_cast<std::size_t>(a)];
      });
    });
    std::vector<int> col_of(static_cast<std::size_t>(G.size()), -1);
    std::vector<Eigen::Triplet<cd>> trip;
    const auto mu = g.mu_weights(scene);
    for (int r = 0; r < g.size(); ++r)
      for (auto& [node, v] : rows[static_cast<std::size_t>(r)]) {
        int& col = col_of[static_cast<std::size_t>(node)];
        if (col < 0) {
          col = static_cast<int>(nodes_.size());
          nodes_.push_back(node);
        }
        trip.emplace_back(r, col, std::sqrt(mu[static_cast<std::size_t>(r)]) * v);
      }
    A_.resize(g.size(), static_cast<Eigen::Index>(nodes_.size()));
    A_.setFromTriplets(trip.begin(), trip.end());
    sqrt_mu_ = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size())).cwiseSqrt();
  }

  const Eigen::SparseMatrix<cd>& matrix() const { return A_; }
  const std::vector<int>& nodes() const { return nodes_; }  // grid node of each column

  Eigen::VectorXcd values(const GridField& f) const {
    Eigen::VectorXcd x(static_cast<Eigen::Index>(nodes_.size()));
    for (std::size_t i = 0; i < nodes_.size(); ++i) x(static_cast<Eigen::Index>(i)) = f.at(nodes_[i]);
    return x;
  }
  BoundaryFn apply(const GridField& f) const {
    const Eigen::VectorXcd y = A_ * values(f);
    BoundaryFn out(bgrid_, 1);
    for (int i = 0; i < bgrid_.size(); ++i) out.at(i) = y(i) / sqrt_mu_(i);
    return out;
  }

  struct Inversion {
    GridField f;
    CgResult cg;
  };

  // CGNE on the mu-weighted system, i.e. CG on the normal operator N^{00}.
  Inversion invert(const BoundaryFn& data, const CgOptions& opt) const {
    Eigen::VectorXcd b(bgrid_.size());
    for (int i = 0; i < bgrid_.size(); ++i) b(i) = sqrt_mu_(i) * data.at(i);
    Inversion r{GridField(grid_, 1), cgne([&](const Eigen::VectorXcd& x) -> Eigen::VectorXcd { return A_ * x; },
                                          [&](const Eigen::VectorXcd& y) -> Eigen::VectorXcd { return A_.adjoint() * y; }, b,
                                          A_.cols(), opt)};
    for (std::size_t i = 0; i < nodes_.size(); ++i) r.f.at(nodes_[i]) = r.cg.x(static_cast<Eigen::Index>(i));
    return r;
  }

 private:
  std::shared_ptr<const SpatialGrid> grid_;
  BoundaryGrid bgrid_;
  std::vector<int> nodes_;
  Eigen::SparseMatrix<cd> A_;
  Eigen::VectorXd sqrt_mu_;
};

}  // namespace magray
