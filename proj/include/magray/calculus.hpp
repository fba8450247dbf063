#pragma once

#include <functional>
#include <memory>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "magray/harmonics.hpp"
#include "magray/quadrature.hpp"

namespace magray {

// C^n-valued function on the disk with first derivatives.
class Field {
 public:
  using Eval = std::function<void(double, double, CVec&, CVec&, CVec&)>;

  Field() = default;
  Field(int n, Eval e) : n_(n), eval_(std::move(e)) {}

  static Field zero(int n) {
    return Field(n, [n](double, double, CVec& v, CVec& dx, CVec& dy) {
      v = dx = dy = CVec::Zero(n);
    });
  }
  static Field from_exprs(const std::vector<Expr>& f) {
    struct C {
      CompiledExpr v, dx, dy;
    };
    auto c = std::make_shared<std::vector<C>>();
    for (const Expr& e : f) c->push_back({CompiledExpr(e), CompiledExpr(e.dx()), CompiledExpr(e.dy())});
    const int n = static_cast<int>(f.size());
    return Field(n, [c, n](double x, double y, CVec& v, CVec& dx, CVec& dy) {
      v.resize(n);
      dx.resize(n);
      dy.resize(n);
      for (int i = 0; i < n; ++i) {
        const C& e = (*c)[static_cast<std::size_t>(i)];
        v(i) = e.v(x, y);
        dx(i) = e.dx(x, y);
        dy(i) = e.dy(x, y);
      }
    });
  }

  int rank() const { return n_; }
  explicit operator bool() const { return static_cast<bool>(eval_); }
  void eval(double x, double y, CVec& v, CVec& dx, CVec& dy) const { eval_(x, y, v, dx, dy); }
  CVec operator()(double x, double y) const {
    CVec v, a, b;
    eval_(x, y, v, a, b);
    return v;
  }

 private:
  int n_ = 1;
  Eval eval_;
};

// 1-form x dx + y dy with C^n components.
struct FormField {
  Field x, y;
  int rank() const { return x.rank(); }
  static FormField from_exprs(const OneFormExpr& a) { return {Field::from_exprs(a.x), Field::from_exprs(a.y)}; }
  static FormField zero(int n) { return {Field::zero(n), Field::zero(n)}; }
};

// ---------------------------------------------------------------------------------------------
// Pointwise calculus from fields with derivatives. Conventions: *dx = dy, *dy = -dx, *1 = e^{2 sigma} dx^dy.

// *d_A a = (-(a_y + A_y a), a_x + A_x a).
inline void star_d_A_function(const Scene& scene, const Field& a, double x, double y, CVec& bx, CVec& by) {
  CMat ax, ay, phi;
  scene.attenuation().eval(x, y, ax, ay, phi);
  CVec v, dx, dy;
  a.eval(x, y, v, dx, dy);
  bx = -(dy + ay * v);
  by = dx + ax * v;
}

// d_A p = (p_x + A_x p, p_y + A_y p).
inline void d_A_function(const Scene& scene, const Field& p, double x, double y, CVec& bx, CVec& by) {
  CMat ax, ay, phi;
  scene.attenuation().eval(x, y, ax, ay, phi);
  CVec v, dx, dy;
  p.eval(x, y, v, dx, dy);
  bx = dx + ax * v;
  by = dy + ay * v;
}

// *d_A b = e^{-2 sigma}(d_x b_y - d_y b_x + A_x b_y - A_y b_x).
inline CVec star_d_A_form(const Scene& scene, const FormField& b, double x, double y) {
  CMat ax, ay, phi;
  scene.attenuation().eval(x, y, ax, ay, phi);
  CVec bx, bxx, bxy, by, byx, byy;
  b.x.eval(x, y, bx, bxx, bxy);
  b.y.eval(x, y, by, byx, byy);
  return std::exp(-2 * scene.sigma(x, y)) * (byx - bxy + ax * by - ay * bx);
}

// d_A^* b = -*d_A* b = -e^{-2 sigma}(d_x b_x + A_x b_x + d_y b_y + A_y b_y).
inline CVec d_A_star(const Scene& scene, const FormField& b, double x, double y) {
  CMat ax, ay, phi;
  scene.attenuation().eval(x, y, ax, ay, phi);
  CVec bx, bxx, bxy, by, byx, byy;
  b.x.eval(x, y, bx, bxx, bxy);
  b.y.eval(x, y, by, byx, byy);
  return -std::exp(-2 * scene.sigma(x, y)) * (bxx + ax * bx + byy + ay * by);
}

// ---------------------------------------------------------------------------------------------
// Symbolic calculus for expression-valued attenuations.

inline const ExprAttenuation& expr_attenuation(const Scene& s) {
  auto* e = dynamic_cast<const ExprAttenuation*>(&s.attenuation());
  if (!e) throw InvalidScene("symbolic form calculus needs an expression-valued attenuation");
  return *e;
}

inline std::vector<Expr> matrix_times(const MatrixExpr& m, const std::vector<Expr>& v) {
  const int n = static_cast<int>(v.size());
  std::vector<Expr> out(v.size(), Expr(0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Expr& a = m[static_cast<std::size_t>(i * n + j)];
      if (!a.is_number(0.0)) out[static_cast<std::size_t>(i)] += a * v[static_cast<std::size_t>(j)];
    }
  return out;
}

namespace detail {
template <class F>
std::vector<Expr> zip(const std::vector<Expr>& a, const std::vector<Expr>& b, F&& f) {
  std::vector<Expr> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(f(a[i], b[i]));
  return out;
}
inline std::vector<Expr> map(const std::vector<Expr>& a, const std::function<Expr(const Expr&)>& f) {
  std::vector<Expr> out;
  for (const Expr& e : a) out.push_back(f(e));
  return out;
}
inline std::vector<Expr> add(const std::vector<Expr>& a, const std::vector<Expr>& b) {
  return zip(a, b, [](const Expr& p, const Expr& q) { return p + q; });
}
inline std::vector<Expr> sub(const std::vector<Expr>& a, const std::vector<Expr>& b) {
  return zip(a, b, [](const Expr& p, const Expr& q) { return p - q; });
}
}  // namespace detail

inline OneFormExpr d_A(const Scene& scene, const std::vector<Expr>& f) {
  const ExprAttenuation& A = expr_attenuation(scene);
  return {detail::add(detail::map(f, [](const Expr& e) { return e.dx(); }), matrix_times(A.ax(), f)),
          detail::add(detail::map(f, [](const Expr& e) { return e.dy(); }), matrix_times(A.ay(), f))};
}

inline OneFormExpr hodge_star(const OneFormExpr& a) {
  return {detail::map(a.y, [](const Expr& e) { return -e; }), a.x};
}

inline OneFormExpr star_d_A(const Scene& scene, const std::vector<Expr>& a) { return hodge_star(d_A(scene, a)); }

// Function *d_A b.
inline std::vector<Expr> star_d_A(const Scene& scene, const OneFormExpr& b) {
  const ExprAttenuation& A = expr_attenuation(scene);
  const Expr w = exp_minus_sigma(scene, 2);
  std::vector<Expr> curl = detail::sub(detail::map(b.y, [](const Expr& e) { return e.dx(); }),
                                       detail::map(b.x, [](const Expr& e) { return e.dy(); }));
  curl = detail::add(curl, detail::sub(matrix_times(A.ax(), b.y), matrix_times(A.ay(), b.x)));
  return detail::map(curl, [&](const Expr& e) { return w * e; });
}

inline std::vector<Expr> d_A_star(const Scene& scene, const OneFormExpr& b) {
  const ExprAttenuation& A = expr_attenuation(scene);
  const Expr w = -exp_minus_sigma(scene, 2);
  std::vector<Expr> div = detail::add(detail::map(b.x, [](const Expr& e) { return e.dx(); }),
                                      detail::map(b.y, [](const Expr& e) { return e.dy(); }));
  div = detail::add(div, detail::add(matrix_times(A.ax(), b.x), matrix_times(A.ay(), b.y)));
  return detail::map(div, [&](const Expr& e) { return w * e; });
}

inline std::vector<Expr> phi_times(const Scene& scene, const std::vector<Expr>& f) {
  return matrix_times(expr_attenuation(scene).phi(), f);
}

// ---------------------------------------------------------------------------------------------
// Grid calculus with fourth-order differences. Grid 1-forms carry 2n components: x part, then y part.

namespace detail {
inline CVec node_vec(const GridField& f, int node, int offset, int n) {
  CVec v(n);
  for (int c = 0; c < n; ++c) v(c) = f.at(node, offset + c);
  return v;
}
inline void set_vec(GridField& f, int node, int offset, const CVec& v) {
  for (int c = 0; c < v.size(); ++c) f.at(node, offset + c) = v(c);
}
}  // namespace detail

inline GridField d_A_function(const SceneSamples& ss, const GridField& f) {
  const int n = f.n;
  const GridField dx = diff_x(f), dy = diff_y(f);
  GridField out(f.grid, 2 * n);
  for (int node = 0; node < f.grid->size(); ++node) {
    const auto s = static_cast<std::size_t>(node);
    const CVec v = detail::node_vec(f, node, 0, n);
    detail::set_vec(out, node, 0, detail::node_vec(dx, node, 0, n) + ss.ax[s] * v);
    detail::set_vec(out, node, n, detail::node_vec(dy, node, 0, n) + ss.ay[s] * v);
  }
  return out;
}

// dx^dy coefficient of d_A b.
inline GridField d_A_form(const SceneSamples& ss, const GridField& b) {
  const int n = b.n / 2;
  const GridField dx = diff_x(b), dy = diff_y(b);
  GridField out(b.grid, n);
  for (int node = 0; node < b.grid->size(); ++node) {
    const auto s = static_cast<std::size_t>(node);
    const CVec bx = detail::node_vec(b, node, 0, n), by = detail::node_vec(b, node, n, n);
    detail::set_vec(out, node, 0,
                    detail::node_vec(dx, node, n, n) - detail::node_vec(dy, node, 0, n) + ss.ax[s] * by - ss.ay[s] * bx);
  }
  return out;
}

inline GridField star_d_A_function(const SceneSamples& ss, const GridField& a) {
  const int n = a.n;
  GridField d = d_A_function(ss, a), out(a.grid, 2 * n);
  for (int node = 0; node < a.grid->size(); ++node)
    for (int c = 0; c < n; ++c) {
      out.at(node, c) = -d.at(node, n + c);
      out.at(node, n + c) = d.at(node, c);
    }
  return out;
}

inline GridField star_d_A_form(const SceneSamples& ss, const GridField& b) {
  GridField out = d_A_form(ss, b);
  for (int node = 0; node < b.grid->size(); ++node)
    for (int c = 0; c < out.n; ++c) out.at(node, c) *= std::exp(-2 * ss.metric[static_cast<std::size_t>(node)].sigma);
  return out;
}

inline GridField d_A_star_form(const SceneSamples& ss, const GridField& b) {
  const int n = b.n / 2;
  const GridField dx = diff_x(b), dy = diff_y(b);
  GridField out(b.grid, n);
  for (int node = 0; node < b.grid->size(); ++node) {
    const auto s = static_cast<std::size_t>(node);
    const CVec bx = detail::node_vec(b, node, 0, n), by = detail::node_vec(b, node, n, n);
    const CVec div = detail::node_vec(dx, node, 0, n) + detail::node_vec(dy, node, n, n) + ss.ax[s] * bx + ss.ay[s] * by;
    detail::set_vec(out, node, 0, -std::exp(-2 * ss.metric[s].sigma) * div);
  }
  return out;
}

inline GridField sample_form(std::shared_ptr<const SpatialGrid> g, const OneFormExpr& a) {
  const int n = a.rank();
  std::vector<CompiledExpr> c;
  for (const Expr& e : a.x) c.emplace_back(e);
  for (const Expr& e : a.y) c.emplace_back(e);
  return GridField::sample(g, 2 * n, [&](double x, double y) {
    CVec v(2 * n);
    for (int k = 0; k < 2 * n; ++k) v(k) = c[static_cast<std::size_t>(k)](x, y);
    return v;
  });
}
inline GridField sample_function(std::shared_ptr<const SpatialGrid> g, const std::vector<Expr>& f) {
  std::vector<CompiledExpr> c(f.begin(), f.end());
  return GridField::sample(g, static_cast<int>(f.size()), [&](double x, double y) {
    CVec v(static_cast<int>(c.size()));
    for (std::size_t k = 0; k < c.size(); ++k) v(static_cast<int>(k)) = c[k](x, y);
    return v;
  });
}

struct IdentityResidual {
  double sup_residual = 0, sup_reference = 0;
  double relative() const { return sup_residual / std::max(sup_reference, 1e-300); }
};

// d_A(d_A f) against F_A f on the disk nodes.
inline IdentityResidual curvature_identity(const Scene& scene, const std::vector<Expr>& f, std::shared_ptr<const SpatialGrid> g) {
  SceneSamples ss(scene, g);
  const GridField F = sample_function(g, f);
  const GridField dd = d_A_form(ss, d_A_function(ss, F));
  const int n = F.n;
  IdentityResidual r;
  for (int node : g->disk_nodes()) {
    const CVec rhs = scene.attenuation().curvature(g->x(node), g->y(node)) * detail::node_vec(F, node, 0, n);
    r.sup_reference = std::max(r.sup_reference, rhs.cwiseAbs().maxCoeff());
    r.sup_residual = std::max(r.sup_residual, (detail::node_vec(dd, node, 0, n) - rhs).cwiseAbs().maxCoeff());
  }
  return r;
}

// *d_A alpha = 2i(mu_- alpha_1 - mu_+ alpha_{-1}): forms calculus on the left, fiber operators on the right.
inline IdentityResidual star_dA_mode_identity(const Scene& scene, const OneFormExpr& alpha, std::shared_ptr<const SpatialGrid> g,
                                              int ntheta = 16) {
  SceneSamples ss(scene, g);
  const GridField lhs = star_d_A_form(ss, sample_form(g, alpha));
  const FiberGridFn u = FiberGridFn::sample(g, ntheta, CompiledModes(one_form_modes(scene, alpha)));
  const GKOperators gp = gk_operators(ss, fiber_project(u, 1)), gm = gk_operators(ss, fiber_project(u, -1));
  const int n = alpha.rank();
  IdentityResidual r;
  for (int node : g->disk_nodes())
    for (int c = 0; c < n; ++c) {
      const cd rhs = cd(0, 2) * (gp.mu_minus.mode(node, 0, c) - gm.mu_plus.mode(node, 0, c));
      r.sup_reference = std::max(r.sup_reference, std::abs(lhs.at(node, c)));
      r.sup_residual = std::max(r.sup_residual, std::abs(lhs.at(node, c) - rhs));
    }
  return r;
}

// f_m(x, v) = f_{i1..im} v^{i1}..v^{im} on the grid.
inline FiberGridFn tensor_to_fn(const Scene& scene, const TensorExpr& f, std::shared_ptr<const SpatialGrid> g, int ntheta) {
  if (f.order > ntheta / 2 - 2)
    throw BandLimitExceeded("tensor order " + std::to_string(f.order) + " exceeds band " + std::to_string(ntheta / 2 - 2));
  return FiberGridFn::sample(std::move(g), ntheta, CompiledModes(tensor_modes(scene, f)));
}

// ---------------------------------------------------------------------------------------------
// Twist by h = e^{i theta}: A_h = -i sigma_y dx + i sigma_x dy and Phi_lambda = -i lambda, so that
// -h^{-1} G h = A_h + Phi_lambda. The twisted pair is (A - m A_h, Phi - m Phi_lambda).

inline cd h_power(double theta, int m) { return std::polar(1.0, m * theta); }

class TwistedAttenuation : public Attenuation {
 public:
  TwistedAttenuation(const Scene& scene, int m) : scene_(scene), m_(m) {}
  int rank() const override { return scene_.rank(); }
  bool is_zero() const override { return m_ == 0 && scene_.attenuation().is_zero(); }
  void eval(double x, double y, CMat& ax, CMat& ay, CMat& phi) const override {
    scene_.attenuation().eval(x, y, ax, ay, phi);
    const MetricSample s = scene_.metric(x, y);
    const CMat I = CMat::Identity(rank(), rank());
    ax += cd(0, m_ * s.sy) * I;
    ay -= cd(0, m_ * s.sx) * I;
    phi += cd(0, m_ * s.lambda) * I;
  }

 private:
  Scene scene_;
  int m_;
};

// Scene carrying the twisted pair; symbolic when the base attenuation is.
inline Scene twisted_scene(const Scene& scene, int m) {
  if (auto* e = dynamic_cast<const ExprAttenuation*>(&scene.attenuation())) {
    const int n = scene.rank();
    MatrixExpr ax = e->ax(), ay = e->ay(), phi = e->phi();
    const Expr im = Expr(static_cast<double>(m)) * Expr::imag();
    const Expr sx = scene.sigma_expr().dx(), sy = scene.sigma_expr().dy();
    for (int i = 0; i < n; ++i) {
      const auto d = static_cast<std::size_t>(i * n + i);
      if (!sy.is_number(0.0)) ax[d] += im * sy;
      if (!sx.is_number(0.0)) ay[d] -= im * sx;
      if (!scene.lambda_expr().is_number(0.0)) phi[d] += im * scene.lambda_expr();
    }
    return scene.with_attenuation(std::make_shared<ExprAttenuation>(n, ax, ay, phi));
  }
  return scene.with_attenuation(std::make_shared<TwistedAttenuation>(scene, m));
}

// sup |-h^{-1} G h - (A_h + Phi_lambda)| over random phase points.
inline double twist_identity_residual(const Scene& scene, int samples = 1000, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1), t(0, kTwoPi);
  double worst = 0;
  for (int i = 0; i < samples;) {
    const double x = u(rng), y = u(rng), th = t(rng);
    if (x * x + y * y > 1) continue;
    ++i;
    const MetricSample m = scene.metric(x, y);
    const Frame f = frame_fields(m, th);
    const cd lhs = cd(0, -1) * f.G.theta;  // G h = i h G^theta
    const double e = std::exp(-m.sigma);
    const cd rhs = e * (std::cos(th) * cd(0, -m.sy) + std::sin(th) * cd(0, m.sx)) + cd(0, -m.lambda);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

// ---------------------------------------------------------------------------------------------
// Spectral polynomial spaces on the disk. Chebyshev products T_i(x) T_j(y), i + j <= degree, orthonormalized
// in L^2(M, dVol) on a polar quadrature.

class PolySpace {
 public:
  PolySpace(const Scene& scene, int degree, int nr = 0, int na = 0)
      : degree_(degree), quad_(nr > 0 ? nr : degree + 10, na > 0 ? na : 2 * degree + 32) {
    for (int i = 0; i <= degree; ++i)
      for (int j = 0; i + j <= degree; ++j) ij_.push_back({i, j});
    const int Q = quad_.size(), B = size();
    area_.resize(static_cast<std::size_t>(Q));
    Eigen::MatrixXd raw(Q, B), rx(Q, B), ry(Q, B);
    Eigen::RowVectorXd v, dx, dy;
    for (int q = 0; q < Q; ++q) {
      const auto s = static_cast<std::size_t>(q);
      area_[s] = quad_.w[s] * std::exp(2 * scene.sigma(quad_.x[s], quad_.y[s]));
      eval_raw(quad_.x[s], quad_.y[s], v, dx, dy);
      raw.row(q) = std::sqrt(area_[s]) * v;
      rx.row(q) = dx;
      ry.row(q) = dy;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    const Eigen::MatrixXd R = qr.matrixQR().topRows(B).triangularView<Eigen::Upper>();
    T_ = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(B, B));
    V_ = Eigen::MatrixXd(Q, B);
    for (int q = 0; q < Q; ++q) V_.row(q) = raw.row(q) / std::sqrt(area_[static_cast<std::size_t>(q)]);
    V_ = V_ * T_;
    Dx_ = rx * T_;
    Dy_ = ry * T_;
  }

  int degree() const { return degree_; }
  int size() const { return static_cast<int>(ij_.size()); }
  const DiskQuadrature& quadrature() const { return quad_; }
  // Quadrature weight times e^{2 sigma} at each node.
  const std::vector<double>& area_weights() const { return area_; }
  const Eigen::MatrixXd& values() const { return V_; }
  const Eigen::MatrixXd& dx() const { return Dx_; }
  const Eigen::MatrixXd& dy() const { return Dy_; }

  void eval(double x, double y, Eigen::RowVectorXd& v, Eigen::RowVectorXd& dx, Eigen::RowVectorXd& dy) const {
    eval_raw(x, y, v, dx, dy);
    v = v * T_;
    dx = dx * T_;
    dy = dy * T_;
  }

 private:
  // T_k and T_k' by the three-term recurrences for T and U.
  void cheb(double t, std::vector<double>& T, std::vector<double>& dT) const {
    const auto d = static_cast<std::size_t>(degree_ + 1);
    T.assign(d, 0.0);
    dT.assign(d, 0.0);
    std::vector<double> U(d, 0.0);
    T[0] = 1;
    U[0] = 1;
    if (degree_ >= 1) {
      T[1] = t;
      U[1] = 2 * t;
    }
    for (std::size_t k = 2; k < d; ++k) {
      T[k] = 2 * t * T[k - 1] - T[k - 2];
      U[k] = 2 * t * U[k - 1] - U[k - 2];
    }
    for (std::size_t k = 1; k < d; ++k) dT[k] = static_cast<double>(k) * U[k - 1];
  }
  void eval_raw(double x, double y, Eigen::RowVectorXd& v, Eigen::RowVectorXd& dx, Eigen::RowVectorXd& dy) const {
    std::vector<double> tx, dtx, ty, dty;
    cheb(x, tx, dtx);
    cheb(y, ty, dty);
    v.resize(size());
    dx.resize(size());
    dy.resize(size());
    for (int b = 0; b < size(); ++b) {
      const auto [i, j] = ij_[static_cast<std::size_t>(b)];
      v(b) = tx[static_cast<std::size_t>(i)] * ty[static_cast<std::size_t>(j)];
      dx(b) = dtx[static_cast<std::size_t>(i)] * ty[static_cast<std::size_t>(j)];
      dy(b) = tx[static_cast<std::size_t>(i)] * dty[static_cast<std::size_t>(j)];
    }
  }

  int degree_;
  DiskQuadrature quad_;
  std::vector<std::pair<int, int>> ij_;
  std::vector<double> area_;
  Eigen::MatrixXd T_, V_, Dx_, Dy_;
};

// Polynomial C^n-valued function; with `dirichlet` the polynomial is multiplied by (1 - r^2).
struct PolyField {
  std::shared_ptr<const PolySpace> space;
  Eigen::MatrixXcd coef;  // basis x components
  bool dirichlet = false;

  int rank() const { return static_cast<int>(coef.cols()); }
  void eval(double x, double y, CVec& v, CVec& dx, CVec& dy) const {
    Eigen::RowVectorXd b, bx, by;
    space->eval(x, y, b, bx, by);
    Eigen::RowVectorXcd q = b.cast<cd>() * coef, qx = bx.cast<cd>() * coef, qy = by.cast<cd>() * coef;
    if (dirichlet) {
      const double w = 1 - x * x - y * y;
      qx = w * qx - 2 * x * q;
      qy = w * qy - 2 * y * q;
      q *= w;
    }
    v = q.transpose();
    dx = qx.transpose();
    dy = qy.transpose();
  }
  Field field() const {
    PolyField self = *this;
    return Field(rank(), [self](double x, double y, CVec& v, CVec& a, CVec& b) { self.eval(x, y, v, a, b); });
  }
};

// Values at the quadrature nodes of a space.
struct QuadSamples {
  std::vector<CVec> v, dx, dy;
};
inline QuadSamples sample_on(const PolySpace& sp, const Field& f) {
  const DiskQuadrature& Q = sp.quadrature();
  QuadSamples s;
  s.v.resize(static_cast<std::size_t>(Q.size()));
  s.dx.resize(s.v.size());
  s.dy.resize(s.v.size());
  for (int q = 0; q < Q.size(); ++q) {
    const auto k = static_cast<std::size_t>(q);
    f.eval(Q.x[k], Q.y[k], s.v[k], s.dx[k], s.dy[k]);
  }
  return s;
}

// L^2(M) norms on the quadrature of a space: functions against dVol, 1-forms with the metric (conformally invariant).
inline double function_norm(const PolySpace& sp, const Field& f) {
  const DiskQuadrature& Q = sp.quadrature();
  double acc = 0;
  for (int q = 0; q < Q.size(); ++q) {
    const auto k = static_cast<std::size_t>(q);
    acc += sp.area_weights()[k] * f(Q.x[k], Q.y[k]).squaredNorm();
  }
  return std::sqrt(acc);
}
inline double form_norm(const PolySpace& sp, const FormField& a) {
  const DiskQuadrature& Q = sp.quadrature();
  double acc = 0;
  for (int q = 0; q < Q.size(); ++q) {
    const auto k = static_cast<std::size_t>(q);
    acc += Q.w[k] * (a.x(Q.x[k], Q.y[k]).squaredNorm() + a.y(Q.x[k], Q.y[k]).squaredNorm());
  }
  return std::sqrt(acc);
}

struct HarmonicBasis {
  std::shared_ptr<const PolySpace> space;
  std::vector<FormField> forms;
  std::vector<Eigen::MatrixXcd> coef_x, coef_y;  // basis x n per element
  std::vector<double> d_residual, dstar_residual, trace_residual;
  std::vector<double> singular_values;  // ascending tail of the spectrum
  int dimension() const { return static_cast<int>(forms.size()); }
};

namespace detail {

// Minimum-norm least squares; pivots below rel * (largest pivot) count as rank deficiency.
inline Eigen::VectorXcd min_norm_solve(const Eigen::MatrixXcd& M, const Eigen::VectorXcd& rhs, double rel = 1e-10) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod;
  cod.setThreshold(rel);
  cod.compute(M);
  return cod.solve(rhs);
}
// Dense least-squares blocks: every row is a weighted C^n component at a quadrature node.
struct Assembler {
  int n, B;
  Eigen::MatrixXcd M;
  Eigen::VectorXcd rhs;
  Assembler(int rows, int cols, int n_, int B_) : n(n_), B(B_), M(Eigen::MatrixXcd::Zero(rows, cols)), rhs(Eigen::VectorXcd::Zero(rows)) {}
  // Adds coefficient `a` for unknown (block, basis b, component c) into row `r`.
  void add(int r, int block, int b, int c, cd a) { M(r, (block * B + b) * n + c) += a; }
};

inline PolyField unpack(std::shared_ptr<const PolySpace> sp, const Eigen::VectorXcd& x, int block, int n, bool dirichlet) {
  const int B = sp->size();
  PolyField p{sp, Eigen::MatrixXcd(B, n), dirichlet};
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < n; ++c) p.coef(b, c) = x((block * B + b) * n + c);
  return p;
}

inline FormField difference(const FormField& a, const std::vector<FormField>& minus) {
  FormField out;
  for (int comp = 0; comp < 2; ++comp) {
    auto pick = [comp](const FormField& f) { return comp == 0 ? f.x : f.y; };
    Field base = pick(a);
    std::vector<Field> sub;
    for (const FormField& m : minus) sub.push_back(pick(m));
    Field f(a.rank(), [base, sub](double x, double y, CVec& v, CVec& dx, CVec& dy) {
      base.eval(x, y, v, dx, dy);
      CVec w, wx, wy;
      for (const Field& s : sub) {
        s.eval(x, y, w, wx, wy);
        v -= w;
        dx -= wx;
        dy -= wy;
      }
    });
    (comp == 0 ? out.x : out.y) = f;
  }
  return out;
}
}  // namespace detail

struct HarmonicOptions {
  int degree = 12;
  double threshold = 1e-8;  // relative to the largest singular value
  double gap = 10.0;
};

// A-harmonic 1-forms: d_A eta = 0, d_A^* eta = 0, tangential trace zero; numerical nullspace by SVD.
inline HarmonicBasis harmonic_forms(const Scene& scene, const HarmonicOptions& opt = {}) {
  auto sp = std::make_shared<const PolySpace>(scene, opt.degree);
  const int n = scene.rank(), B = sp->size(), Q = sp->quadrature().size();
  const int nb = 4 * opt.degree + 16;
  detail::Assembler as(2 * n * Q + n * nb, 2 * B * n, n, B);
  const DiskQuadrature& quad = sp->quadrature();
  CMat ax, ay, phi;
  for (int q = 0; q < Q; ++q) {
    const auto k = static_cast<std::size_t>(q);
    const double x = quad.x[k], y = quad.y[k], e2 = std::exp(-2 * scene.sigma(x, y));
    const double w = std::sqrt(sp->area_weights()[k]);
    scene.attenuation().eval(x, y, ax, ay, phi);
    for (int r = 0; r < n; ++r) {
      const int rc = q * 2 * n + r, rd = rc + n;
      for (int b = 0; b < B; ++b) {
        const double V = sp->values()(q, b), Dx = sp->dx()(q, b), Dy = sp->dy()(q, b);
        for (int c = 0; c < n; ++c) {
          const double del = r == c ? 1.0 : 0.0;
          // *d_A eta
          as.add(rc, 0, b, c, w * e2 * (-del * Dy - ay(r, c) * V));
          as.add(rc, 1, b, c, w * e2 * (del * Dx + ax(r, c) * V));
          // d_A^* eta
          as.add(rd, 0, b, c, -w * e2 * (del * Dx + ax(r, c) * V));
          as.add(rd, 1, b, c, -w * e2 * (del * Dy + ay(r, c) * V));
        }
      }
    }
  }
  Eigen::RowVectorXd v, vx, vy;
  for (int j = 0; j < nb; ++j) {
    const double s = kTwoPi * j / nb, w = std::sqrt(kTwoPi / nb);
    sp->eval(std::cos(s), std::sin(s), v, vx, vy);
    for (int r = 0; r < n; ++r)
      for (int b = 0; b < B; ++b) {
        as.add(2 * n * Q + j * n + r, 0, b, r, -w * std::sin(s) * v(b));
        as.add(2 * n * Q + j * n + r, 1, b, r, w * std::cos(s) * v(b));
      }
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(as.M, Eigen::ComputeThinV);
  const Eigen::VectorXd& S = svd.singularValues();
  const double smax = S(0), thr = opt.threshold * smax;
  int dim = 0;
  while (dim < S.size() && S(S.size() - 1 - dim) < thr) ++dim;
  HarmonicBasis hb;
  hb.space = sp;
  for (int i = std::max<int>(0, static_cast<int>(S.size()) - dim - 4); i < S.size(); ++i) hb.singular_values.push_back(S(i));
  std::reverse(hb.singular_values.begin(), hb.singular_values.end());
  const double below = dim > 0 ? S(S.size() - dim) : 0.0, above = S(S.size() - 1 - dim);
  if (above < opt.gap * thr || (dim > 0 && above < opt.gap * below))
    throw ResolutionTooCoarse("harmonic forms: singular value gap at the threshold is below " + std::to_string(opt.gap));
  for (int i = 0; i < dim; ++i) {
    const Eigen::VectorXcd x = svd.matrixV().col(S.size() - 1 - i);
    PolyField px = detail::unpack(sp, x, 0, n, false), py = detail::unpack(sp, x, 1, n, false);
    FormField eta{px.field(), py.field()};
    // Discrete L^2 residuals of the three conditions, per unit norm.
    const Eigen::VectorXcd res = as.M * x;
    double rd = 0, rs = 0;
    for (int q = 0; q < Q; ++q) {
      rd += res.segment(q * 2 * n, n).squaredNorm();
      rs += res.segment(q * 2 * n + n, n).squaredNorm();
    }
    const double rt = res.segment(2 * n * Q, n * nb).norm();
    hb.forms.push_back(eta);
    hb.coef_x.push_back(px.coef);
    hb.coef_y.push_back(py.coef);
    hb.d_residual.push_back(std::sqrt(rd));
    hb.dstar_residual.push_back(std::sqrt(rs));
    hb.trace_residual.push_back(rt);
  }
  return hb;
}

struct DecompositionOptions {
  int degree = 14;
  double tol = 1e-4;  // SolverStalled above this relative reconstruction residual
};

struct Decomposition {
  PolyField p, a;
  FormField eta;               // component in the harmonic space
  double residual = 0;         // |d_A p + *d_A a + eta - alpha| / |alpha|
};

// alpha = d_A p + *d_A a + eta with p|dM = 0, by spectral least squares; eta is the projection of the
// least-squares defect onto the supplied harmonic basis.
inline Decomposition decompose_one_form(const Scene& scene, const FormField& alpha, const HarmonicBasis* harmonic = nullptr,
                                        const DecompositionOptions& opt = {}) {
  auto sp = std::make_shared<const PolySpace>(scene, opt.degree);
  const int n = scene.rank(), B = sp->size(), Q = sp->quadrature().size();
  const DiskQuadrature& quad = sp->quadrature();
  detail::Assembler as(2 * n * Q, 2 * B * n, n, B);
  CMat ax, ay, phi;
  for (int q = 0; q < Q; ++q) {
    const auto k = static_cast<std::size_t>(q);
    const double x = quad.x[k], y = quad.y[k], w = std::sqrt(quad.w[k]), r2 = 1 - x * x - y * y;
    scene.attenuation().eval(x, y, ax, ay, phi);
    const CVec tx = alpha.x(x, y), ty = alpha.y(x, y);
    for (int r = 0; r < n; ++r) {
      const int rx = q * 2 * n + r, ry = rx + n;
      as.rhs(rx) = w * tx(r);
      as.rhs(ry) = w * ty(r);
      for (int b = 0; b < B; ++b) {
        const double V = sp->values()(q, b), Dx = sp->dx()(q, b), Dy = sp->dy()(q, b);
        const double P = r2 * V, Px = r2 * Dx - 2 * x * V, Py = r2 * Dy - 2 * y * V;
        for (int c = 0; c < n; ++c) {
          const double del = r == c ? 1.0 : 0.0;
          as.add(rx, 0, b, c, w * (del * Px + ax(r, c) * P));
          as.add(ry, 0, b, c, w * (del * Py + ay(r, c) * P));
          as.add(rx, 1, b, c, -w * (del * Dy + ay(r, c) * V));
          as.add(ry, 1, b, c, w * (del * Dx + ax(r, c) * V));
        }
      }
    }
  }
  const Eigen::VectorXcd x = detail::min_norm_solve(as.M, as.rhs);
  Decomposition d;
  d.p = detail::unpack(sp, x, 0, n, true);
  d.a = detail::unpack(sp, x, 1, n, false);
  // Defect alpha - d_A p - *d_A a at the quadrature nodes, then its harmonic projection.
  const Eigen::VectorXcd defect = as.rhs - as.M * x;
  Eigen::VectorXcd eta_vals = Eigen::VectorXcd::Zero(defect.size());
  d.eta = FormField::zero(n);
  if (harmonic && harmonic->dimension() > 0) {
    std::vector<Eigen::VectorXcd> basis;
    for (const FormField& h : harmonic->forms) {
      Eigen::VectorXcd hv(defect.size());
      for (int q = 0; q < Q; ++q) {
        const auto k = static_cast<std::size_t>(q);
        const double w = std::sqrt(quad.w[k]);
        hv.segment(q * 2 * n, n) = w * h.x(quad.x[k], quad.y[k]);
        hv.segment(q * 2 * n + n, n) = w * h.y(quad.x[k], quad.y[k]);
      }
      basis.push_back(hv);
    }
    Eigen::MatrixXcd H(defect.size(), static_cast<Eigen::Index>(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) H.col(static_cast<Eigen::Index>(i)) = basis[i];
    const Eigen::VectorXcd c = H.colPivHouseholderQr().solve(defect);
    eta_vals = H * c;
    std::vector<FormField> forms = harmonic->forms;
    std::vector<cd> coeffs(c.data(), c.data() + c.size());
    for (int comp = 0; comp < 2; ++comp) {
      Field f(n, [forms, coeffs, comp, n](double X, double Y, CVec& v, CVec& vx, CVec& vy) {
        v = vx = vy = CVec::Zero(n);
        CVec a, ax_, ay_;
        for (std::size_t i = 0; i < forms.size(); ++i) {
          (comp == 0 ? forms[i].x : forms[i].y).eval(X, Y, a, ax_, ay_);
          v += coeffs[i] * a;
          vx += coeffs[i] * ax_;
          vy += coeffs[i] * ay_;
        }
      });
      (comp == 0 ? d.eta.x : d.eta.y) = f;
    }
  }
  d.residual = (defect - eta_vals).norm() / std::max(as.rhs.norm(), 1e-300);
  if (d.residual > opt.tol)
    throw SolverStalled("decompose_one_form: relative residual " + std::to_string(d.residual) + " above " + std::to_string(opt.tol));
  return d;
}

struct BetaOptions {
  int degree = 14;
  double factor = 1.0;  // d_A^* beta = factor * Phi a; 1 matches the adjoint normalization
  double tol = 1e-4;
  double floor = 0;  // lower bound on the residual denominators, so noise-level data is judged absolutely
};

struct BetaSolution {
  PolyField bx, by;
  FormField beta;
  double curl_residual = 0, div_residual = 0;  // relative L^2 residuals of the two constraints
};

// Minimum-norm beta with *d_A beta = f and d_A^* beta = factor * Phi a.
inline BetaSolution solve_beta(const Scene& scene, const Field& f, const Field& a, const BetaOptions& opt = {}) {
  auto sp = std::make_shared<const PolySpace>(scene, opt.degree);
  const int n = scene.rank(), B = sp->size(), Q = sp->quadrature().size();
  const DiskQuadrature& quad = sp->quadrature();
  detail::Assembler as(2 * n * Q, 2 * B * n, n, B);
  CMat ax, ay, phi;
  for (int q = 0; q < Q; ++q) {
    const auto k = static_cast<std::size_t>(q);
    const double x = quad.x[k], y = quad.y[k], w = std::sqrt(sp->area_weights()[k]), e2 = std::exp(-2 * scene.sigma(x, y));
    scene.attenuation().eval(x, y, ax, ay, phi);
    const CVec fv = f(x, y), pa = opt.factor * (phi * a(x, y));
    for (int r = 0; r < n; ++r) {
      const int rc = q * 2 * n + r, rd = rc + n;
      as.rhs(rc) = w * fv(r);
      as.rhs(rd) = w * pa(r);
      for (int b = 0; b < B; ++b) {
        const double V = sp->values()(q, b), Dx = sp->dx()(q, b), Dy = sp->dy()(q, b);
        for (int c = 0; c < n; ++c) {
          const double del = r == c ? 1.0 : 0.0;
          as.add(rc, 0, b, c, w * e2 * (-del * Dy - ay(r, c) * V));
          as.add(rc, 1, b, c, w * e2 * (del * Dx + ax(r, c) * V));
          as.add(rd, 0, b, c, -w * e2 * (del * Dx + ax(r, c) * V));
          as.add(rd, 1, b, c, -w * e2 * (del * Dy + ay(r, c) * V));
        }
      }
    }
  }
  const Eigen::VectorXcd x = detail::min_norm_solve(as.M, as.rhs);
  BetaSolution s;
  s.bx = detail::unpack(sp, x, 0, n, false);
  s.by = detail::unpack(sp, x, 1, n, false);
  s.beta = {s.bx.field(), s.by.field()};
  const Eigen::VectorXcd res = as.M * x - as.rhs;
  double rc = 0, rd = 0, nc = 0, nd = 0;
  for (int q = 0; q < Q; ++q) {
    rc += res.segment(q * 2 * n, n).squaredNorm();
    rd += res.segment(q * 2 * n + n, n).squaredNorm();
    nc += as.rhs.segment(q * 2 * n, n).squaredNorm();
    nd += as.rhs.segment(q * 2 * n + n, n).squaredNorm();
  }
  const double fl = std::max(opt.floor * opt.floor, 1e-300);
  s.curl_residual = std::sqrt(rc / std::max(nc, fl));
  s.div_residual = std::sqrt(rd / std::max(nd, fl));
  if (nc == 0) s.curl_residual = std::sqrt(rc);
  if (nd == 0) s.div_residual = std::sqrt(rd);
  if (std::max(s.curl_residual, s.div_residual) > opt.tol)
    throw SolverStalled("solve_beta: constraint residual " + std::to_string(std::max(s.curl_residual, s.div_residual)) +
                        " above " + std::to_string(opt.tol));
  return s;
}

}  // namespace magray
