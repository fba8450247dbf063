#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "magray/error.hpp"
#include "magray/expr.hpp"
#include "magray/types.hpp"

namespace magray {

struct GridParams {
  int nx = 64;
  int ntheta = 64;
  int ns = 64;
  int nphi = 32;
};

struct OdeParams {
  double dt = 1e-3;
  double tol = 1e-12;
  double tmax = 20.0;
};

// Unitary connection A = Ax dx + Ay dy and Higgs field Phi, both skew-Hermitian n x n.
class Attenuation {
 public:
  virtual ~Attenuation() = default;
  virtual int rank() const = 0;
  virtual void eval(double x, double y, CMat& ax, CMat& ay, CMat& phi) const = 0;
  virtual bool is_zero() const { return false; }

  // Coefficient of dx^dy in F_A = dA + A^A. Fourth-order differences unless overridden.
  virtual CMat curvature(double x, double y) const {
    const double h = 1e-3;
    const int n = rank();
    CMat ax(n, n), ay(n, n), phi(n, n), t1(n, n), t2(n, n);
    auto d = [&](bool along_x) {
      CMat acc = CMat::Zero(n, n);
      const double c[4] = {1.0 / 12, -8.0 / 12, 8.0 / 12, -1.0 / 12};
      const double o[4] = {-2, -1, 1, 2};
      for (int k = 0; k < 4; ++k) {
        double px = along_x ? x + o[k] * h : x, py = along_x ? y : y + o[k] * h;
        eval(px, py, t1, t2, phi);
        acc += c[k] * (along_x ? t2 : t1);
      }
      return CMat(acc / h);
    };
    CMat dyax = d(false), dxay = d(true);
    eval(x, y, ax, ay, phi);
    return dxay - dyax + ax * ay - ay * ax;
  }
};

using MatrixExpr = std::vector<Expr>;  // row-major n x n

class ExprAttenuation : public Attenuation {
 public:
  ExprAttenuation(int n, MatrixExpr ax, MatrixExpr ay, MatrixExpr phi)
      : n_(n), ax_(std::move(ax)), ay_(std::move(ay)), phi_(std::move(phi)) {
    auto check = [&](const MatrixExpr& m, const char* name) {
      if (static_cast<int>(m.size()) != n * n)
        throw RankMismatch(std::string(name) + " has " + std::to_string(m.size()) + " entries, expected " +
                           std::to_string(n * n));
    };
    check(ax_, "Ax");
    check(ay_, "Ay");
    check(phi_, "Phi");
    zero_ = true;
    for (auto* m : {&ax_, &ay_, &phi_}) {
      std::vector<CompiledExpr> c;
      for (const Expr& e : *m) {
        c.emplace_back(e);
        zero_ = zero_ && c.back().is_zero();
      }
      compiled_.push_back(std::move(c));
    }
    // Symbolic curvature dAy/dx - dAx/dy + [Ax, Ay].
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        Expr f = ay_[i * n + j].dx() - ax_[i * n + j].dy();
        for (int k = 0; k < n; ++k) f = f + ax_[i * n + k] * ay_[k * n + j] - ay_[i * n + k] * ax_[k * n + j];
        curv_.emplace_back(f);
      }
  }

  static std::shared_ptr<ExprAttenuation> zero(int n) {
    MatrixExpr z(static_cast<std::size_t>(n * n), Expr(0.0));
    return std::make_shared<ExprAttenuation>(n, z, z, z);
  }

  int rank() const override { return n_; }
  bool is_zero() const override { return zero_; }

  void eval(double x, double y, CMat& ax, CMat& ay, CMat& phi) const override {
    ax.resize(n_, n_);
    ay.resize(n_, n_);
    phi.resize(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        const int k = i * n_ + j;
        ax(i, j) = compiled_[0][k](x, y);
        ay(i, j) = compiled_[1][k](x, y);
        phi(i, j) = compiled_[2][k](x, y);
      }
  }

  CMat curvature(double x, double y) const override {
    CMat f(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) f(i, j) = curv_[i * n_ + j](x, y);
    return f;
  }

  const MatrixExpr& ax() const { return ax_; }
  const MatrixExpr& ay() const { return ay_; }
  const MatrixExpr& phi() const { return phi_; }

 private:
  int n_;
  MatrixExpr ax_, ay_, phi_;
  std::vector<std::vector<CompiledExpr>> compiled_;
  std::vector<CompiledExpr> curv_;
  bool zero_ = false;
};

struct MetricSample {
  double sigma, sx, sy, lambda;
};

// Conformal metric e^{2 sigma}(dx^2 + dy^2) on the unit disk, magnetic field lambda, and a pair (A, Phi).
class Scene {
 public:
  Scene() : Scene(1, Expr(0.0), Expr(0.0), ExprAttenuation::zero(1)) {}

  Scene(int n, Expr sigma, Expr lambda, std::shared_ptr<const Attenuation> att, GridParams grid = {},
        OdeParams ode = {})
      : n_(n), sigma_(std::move(sigma)), lambda_(std::move(lambda)), att_(std::move(att)), grid_(grid), ode_(ode) {
    if (n_ < 1 || n_ > kMaxRank)
      throw RankMismatch("bundle rank n = " + std::to_string(n_) + " outside [1, " + std::to_string(kMaxRank) + "]");
    if (!att_ || att_->rank() != n_)
      throw RankMismatch("attenuation rank does not match n = " + std::to_string(n_));
    c_sigma_ = CompiledExpr(sigma_);
    c_sx_ = CompiledExpr(sigma_.dx());
    c_sy_ = CompiledExpr(sigma_.dy());
    c_lambda_ = CompiledExpr(lambda_);
    validate();
  }

  int rank() const { return n_; }
  const Expr& sigma_expr() const { return sigma_; }
  const Expr& lambda_expr() const { return lambda_; }
  const Attenuation& attenuation() const { return *att_; }
  std::shared_ptr<const Attenuation> attenuation_ptr() const { return att_; }
  const GridParams& grid() const { return grid_; }
  const OdeParams& ode() const { return ode_; }

  bool flat() const { return c_sigma_.is_zero(); }
  bool magnetic() const { return !c_lambda_.is_zero(); }
  bool unattenuated() const { return att_->is_zero(); }

  MetricSample metric(double x, double y) const {
    return {c_sigma_.real(x, y), c_sx_.real(x, y), c_sy_.real(x, y), c_lambda_.real(x, y)};
  }
  double sigma(double x, double y) const { return c_sigma_.real(x, y); }
  double lambda(double x, double y) const { return c_lambda_.real(x, y); }

  Scene with_attenuation(std::shared_ptr<const Attenuation> att) const {
    return Scene(n_, sigma_, lambda_, std::move(att), grid_, ode_);
  }
  Scene with_grid(GridParams g) const {
    Scene s = *this;
    s.grid_ = g;
    s.check_grid();
    return s;
  }
  Scene with_ode(OdeParams o) const {
    Scene s = *this;
    s.ode_ = o;
    return s;
  }

 private:
  void check_grid() const {
    if (grid_.ntheta < 8 || grid_.ntheta % 2 != 0)
      throw InvalidScene("ntheta must be even and >= 8, got " + std::to_string(grid_.ntheta));
    if (grid_.nx < 8) throw InvalidScene("nx must be >= 8");
    if (grid_.ns < 8 || grid_.nphi < 4) throw InvalidScene("boundary grid too small");
  }

  // Probes a 17 x 17 lattice of the closed disk.
  void validate() const {
    check_grid();
    if (ode_.dt <= 0 || ode_.tol <= 0 || ode_.tmax <= 0) throw InvalidScene("ode parameters must be positive");
    const double tol = 1e-12;
    CMat ax, ay, phi;
    for (int i = 0; i < 17; ++i)
      for (int j = 0; j < 17; ++j) {
        const double x = -1.0 + i / 8.0, y = -1.0 + j / 8.0;
        if (x * x + y * y > 1.0 + 1e-14) continue;
        for (auto* c : {&c_sigma_, &c_lambda_, &c_sx_, &c_sy_}) {
          cd v = (*c)(x, y);
          if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw InvalidScene("non-finite value of " + c->source().to_string() + " at (" + std::to_string(x) + ", " +
                               std::to_string(y) + ")");
          if (std::abs(v.imag()) > tol) throw InvalidScene("sigma and lambda must be real-valued");
        }
        att_->eval(x, y, ax, ay, phi);
        const char* names[3] = {"Ax", "Ay", "Phi"};
        const CMat* mats[3] = {&ax, &ay, &phi};
        for (int m = 0; m < 3; ++m) {
          const CMat& M = *mats[m];
          if (!M.allFinite())
            throw InvalidScene(std::string("non-finite entry in ") + names[m] + " at (" + std::to_string(x) + ", " +
                               std::to_string(y) + ")");
          for (int r = 0; r < n_; ++r)
            for (int c = 0; c < n_; ++c) {
              double dev = std::abs(M(r, c) + std::conj(M(c, r)));
              if (dev > tol)
                throw SkewHermitianViolation(std::string(names[m]) + "[" + std::to_string(r) + "][" +
                                                 std::to_string(c) + "]",
                                             x, y, dev);
            }
        }
      }
  }

  int n_;
  Expr sigma_, lambda_;
  std::shared_ptr<const Attenuation> att_;
  GridParams grid_;
  OdeParams ode_;
  CompiledExpr c_sigma_, c_sx_, c_sy_, c_lambda_;
};

namespace detail {

inline MatrixExpr parse_matrix(const nlohmann::json& j, int n, const char* name) {
  MatrixExpr m(static_cast<std::size_t>(n * n), Expr(0.0));
  if (j.is_null()) return m;
  if (j.is_string() || j.is_number()) {
    if (n != 1) throw RankMismatch(std::string(name) + " given as a scalar but n = " + std::to_string(n));
    m[0] = j.is_string() ? parse_expression(j.get<std::string>()) : Expr(j.get<double>());
    return m;
  }
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw RankMismatch(std::string(name) + " must be an n x n array with n = " + std::to_string(n));
  for (int r = 0; r < n; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<int>(row.size()) != n)
      throw RankMismatch(std::string(name) + " row " + std::to_string(r) + " must have " + std::to_string(n) +
                         " entries");
    for (int c = 0; c < n; ++c) {
      const auto& e = row[static_cast<std::size_t>(c)];
      m[r * n + c] = e.is_string() ? parse_expression(e.get<std::string>()) : Expr(e.get<double>());
    }
  }
  return m;
}

inline Expr parse_scalar(const nlohmann::json& j) {
  if (j.is_null()) return Expr(0.0);
  if (j.is_number()) return Expr(j.get<double>());
  return parse_expression(j.get<std::string>());
}

inline nlohmann::json matrix_to_json(const MatrixExpr& m, int n) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < n; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < n; ++c) row.push_back(m[r * n + c].to_string());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

inline Scene scene_from_json(const nlohmann::json& j) {
  const int n = j.value("n", 1);
  if (n < 1 || n > kMaxRank) throw RankMismatch("n = " + std::to_string(n) + " is not supported");
  GridParams g;
  if (j.contains("grid")) {
    const auto& jg = j["grid"];
    g.nx = jg.value("nx", g.nx);
    g.ntheta = jg.value("ntheta", g.ntheta);
    g.ns = jg.value("ns", g.ns);
    g.nphi = jg.value("nphi", g.nphi);
  }
  OdeParams o;
  if (j.contains("ode")) {
    const auto& jo = j["ode"];
    o.dt = jo.value("dt", o.dt);
    o.tol = jo.value("tol", o.tol);
    o.tmax = jo.value("tmax", o.tmax);
  }
  auto get = [&](const char* k) { return j.contains(k) ? j[k] : nlohmann::json(); };
  auto att = std::make_shared<ExprAttenuation>(n, detail::parse_matrix(get("Ax"), n, "Ax"),
                                               detail::parse_matrix(get("Ay"), n, "Ay"),
                                               detail::parse_matrix(get("Phi"), n, "Phi"));
  return Scene(n, detail::parse_scalar(get("sigma")), detail::parse_scalar(get("lambda")), att, g, o);
}

inline Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scene file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidScene("malformed JSON in " + path + ": " + e.what());
  }
  return scene_from_json(j);
}

inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json j;
  j["n"] = s.rank();
  j["sigma"] = s.sigma_expr().to_string();
  j["lambda"] = s.lambda_expr().to_string();
  if (auto* ea = dynamic_cast<const ExprAttenuation*>(&s.attenuation())) {
    j["Ax"] = detail::matrix_to_json(ea->ax(), s.rank());
    j["Ay"] = detail::matrix_to_json(ea->ay(), s.rank());
    j["Phi"] = detail::matrix_to_json(ea->phi(), s.rank());
  }
  j["grid"] = {{"nx", s.grid().nx}, {"ntheta", s.grid().ntheta}, {"ns", s.grid().ns}, {"nphi", s.grid().nphi}};
  j["ode"] = {{"dt", s.ode().dt}, {"tol", s.ode().tol}, {"tmax", s.ode().tmax}};
  return j;
}

// Convenience constructor from DSL strings (row-major matrices).
inline Scene make_scene(int n, const std::string& sigma, const std::string& lambda, const std::vector<std::string>& ax,
                        const std::vector<std::string>& ay, const std::vector<std::string>& phi, GridParams g = {},
                        OdeParams o = {}) {
  auto conv = [&](const std::vector<std::string>& v) {
    MatrixExpr m(static_cast<std::size_t>(n * n), Expr(0.0));
    if (v.empty()) return m;
    if (static_cast<int>(v.size()) != n * n) throw RankMismatch("matrix needs n*n entries");
    for (std::size_t k = 0; k < v.size(); ++k) m[k] = parse_expression(v[k]);
    return m;
  };
  return Scene(n, parse_expression(sigma), parse_expression(lambda),
               std::make_shared<ExprAttenuation>(n, conv(ax), conv(ay), conv(phi)), g, o);
}

}  // namespace magray
