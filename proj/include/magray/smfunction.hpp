#pragma once

#include <map>
#include <random>
#include <vector>

#include "magray/geometry.hpp"

namespace magray {

// Analytic function on SM: u(x, y, theta) = sum_k c_k(x, y) e^{i k theta} with C^n-valued coefficients.
struct ModeExpansion {
  int n = 1;
  std::map<int, std::vector<Expr>> modes;

  ModeExpansion() = default;
  explicit ModeExpansion(int rank) : n(rank) {}

  int max_degree() const {
    int d = 0;
    for (auto& [k, c] : modes) d = std::max(d, std::abs(k));
    return d;
  }
  std::vector<Expr>& coeff(int k) {
    auto& c = modes[k];
    if (c.empty()) c.assign(static_cast<std::size_t>(n), Expr(0.0));
    return c;
  }
  ModeExpansion mode(int k) const {
    ModeExpansion m(n);
    if (auto it = modes.find(k); it != modes.end()) m.modes[k] = it->second;
    return m;
  }
  ModeExpansion operator+(const ModeExpansion& o) const {
    ModeExpansion r = *this;
    for (auto& [k, c] : o.modes) {
      auto& d = r.coeff(k);
      for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = d[static_cast<std::size_t>(i)] + c[static_cast<std::size_t>(i)];
    }
    return r;
  }
  ModeExpansion scaled(const Expr& s) const {
    ModeExpansion r(n);
    for (auto& [k, c] : modes)
      for (int i = 0; i < n; ++i) r.coeff(k)[static_cast<std::size_t>(i)] = s * c[static_cast<std::size_t>(i)];
    return r;
  }
  // Multiplication by e^{i m theta}.
  ModeExpansion shifted(int m) const {
    ModeExpansion r(n);
    for (auto& [k, c] : modes) r.modes[k + m] = c;
    return r;
  }
};

// Analytic 1-form alpha_x dx + alpha_y dy with C^n components.
struct OneFormExpr {
  std::vector<Expr> x, y;
  int rank() const { return static_cast<int>(x.size()); }
};

// Symmetric m-tensor: comps[j] is the component with m - j indices x and j indices y.
struct TensorExpr {
  int order = 0;
  std::vector<std::vector<Expr>> comps;
  int rank() const { return comps.empty() ? 0 : static_cast<int>(comps[0].size()); }
};

inline Expr exp_minus_sigma(const Scene& scene, int power = 1) {
  if (scene.sigma_expr().is_number(0.0) || power == 0) return Expr(1.0);
  return exp(Expr(-static_cast<double>(power)) * scene.sigma_expr());
}

// Fourier coefficients of cos^a(theta) sin^b(theta), exact up to rounding.
inline std::map<int, cd> trig_monomial_modes(int a, int b) {
  std::map<int, cd> cur{{0, 1.0}};
  auto mul = [&](cd cp, cd cm) {
    std::map<int, cd> nxt;
    for (auto& [k, c] : cur) {
      nxt[k + 1] += c * cp;
      nxt[k - 1] += c * cm;
    }
    cur = nxt;
  };
  for (int i = 0; i < a; ++i) mul(0.5, 0.5);
  for (int i = 0; i < b; ++i) mul(cd(0, -0.5), cd(0, 0.5));
  std::map<int, cd> out;
  for (auto& [k, c] : cur)
    if (std::abs(c) > 1e-15) out[k] = c;
  return out;
}

inline Expr complex_constant(cd c) {
  if (c.imag() == 0.0) return Expr(c.real());
  if (c.real() == 0.0) return Expr(c.imag()) * Expr::imag();
  return Expr(c.real()) + Expr(c.imag()) * Expr::imag();
}

// f(x, v) = f_{i1..im} v^{i1}..v^{im} as a mode expansion.
inline ModeExpansion tensor_modes(const Scene& scene, const TensorExpr& f) {
  const int m = f.order, n = f.rank();
  ModeExpansion u(n);
  const Expr scale = exp_minus_sigma(scene, m);
  double binom = 1.0;
  for (int j = 0; j <= m; ++j) {
    if (j > 0) binom = binom * (m - j + 1) / j;
    for (auto& [k, c] : trig_monomial_modes(m - j, j)) {
      auto& dst = u.coeff(k);
      for (int i = 0; i < n; ++i)
        dst[static_cast<std::size_t>(i)] = dst[static_cast<std::size_t>(i)] +
                                           complex_constant(c * binom) * f.comps[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    }
  }
  return u.scaled(scale);
}

inline ModeExpansion function_modes(const std::vector<Expr>& f) {
  ModeExpansion u(static_cast<int>(f.size()));
  u.modes[0] = f;
  return u;
}

// alpha(x, v) = e^{-sigma}(alpha_x cos + alpha_y sin).
inline ModeExpansion one_form_modes(const Scene& scene, const OneFormExpr& a) {
  const int n = a.rank();
  ModeExpansion u(n);
  const Expr s = exp_minus_sigma(scene) * Expr(0.5);
  const Expr I = Expr::imag();
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    u.coeff(1)[k] = s * (a.x[k] - I * a.y[k]);
    u.coeff(-1)[k] = s * (a.x[k] + I * a.y[k]);
  }
  return u;
}

// Compiled evaluation of a mode expansion with exact first derivatives.
class CompiledModes {
 public:
  CompiledModes() = default;
  explicit CompiledModes(const ModeExpansion& u) : n_(u.n) {
    for (auto& [k, c] : u.modes) {
      Term t;
      t.k = k;
      for (const Expr& e : c) {
        t.f.emplace_back(e);
        t.fx.emplace_back(e.dx());
        t.fy.emplace_back(e.dy());
      }
      terms_.push_back(std::move(t));
    }
  }

  int rank() const { return n_; }
  int max_degree() const {
    int d = 0;
    for (auto& t : terms_) d = std::max(d, std::abs(t.k));
    return d;
  }

  CVec operator()(double x, double y, double theta) const {
    CVec out = CVec::Zero(n_);
    for (const Term& t : terms_) {
      const cd e = std::polar(1.0, t.k * theta);
      for (int i = 0; i < n_; ++i) out(i) += t.f[static_cast<std::size_t>(i)](x, y) * e;
    }
    return out;
  }

  // Fiber mode k at (x, y).
  CVec coefficient(int k, double x, double y) const {
    CVec out = CVec::Zero(n_);
    for (const Term& t : terms_)
      if (t.k == k)
        for (int i = 0; i < n_; ++i) out(i) += t.f[static_cast<std::size_t>(i)](x, y);
    return out;
  }

  // a d/dx + b d/dy applied to fiber mode k.
  CVec coefficient_derivative(int k, double a, double b, double x, double y) const {
    CVec out = CVec::Zero(n_);
    for (const Term& t : terms_)
      if (t.k == k)
        for (int i = 0; i < n_; ++i) {
          const auto s = static_cast<std::size_t>(i);
          out(i) += a * t.fx[s](x, y) + b * t.fy[s](x, y);
        }
    return out;
  }

  // Derivative along a vector field a d/dx + b d/dy + c d/dtheta.
  CVec apply(const TangentVector& v, double x, double y, double theta) const {
    CVec out = CVec::Zero(n_);
    for (const Term& t : terms_) {
      const cd e = std::polar(1.0, t.k * theta);
      for (int i = 0; i < n_; ++i) {
        const auto s = static_cast<std::size_t>(i);
        out(i) += (v.x * t.fx[s](x, y) + v.y * t.fy[s](x, y) + v.theta * cd(0, t.k) * t.f[s](x, y)) * e;
      }
    }
    return out;
  }

  // Mode coefficients and their first derivatives frozen at one point, for repeated fiber evaluation.
  struct Jet {
    int n = 1;
    std::vector<int> k;
    std::vector<CVec> f, fx, fy;

    CVec operator()(double theta) const {
      CVec out = CVec::Zero(n);
      for (std::size_t i = 0; i < k.size(); ++i) out += f[i] * std::polar(1.0, k[i] * theta);
      return out;
    }
    CVec apply(const TangentVector& v, double theta) const {
      CVec out = CVec::Zero(n);
      for (std::size_t i = 0; i < k.size(); ++i)
        out += (v.x * fx[i] + v.y * fy[i] + (v.theta * cd(0, k[i])) * f[i]) * std::polar(1.0, k[i] * theta);
      return out;
    }
    CVec coefficient(int m) const {
      CVec out = CVec::Zero(n);
      for (std::size_t i = 0; i < k.size(); ++i)
        if (k[i] == m) out += f[i];
      return out;
    }
    CVec coefficient_derivative(int m, double a, double b) const {
      CVec out = CVec::Zero(n);
      for (std::size_t i = 0; i < k.size(); ++i)
        if (k[i] == m) out += a * fx[i] + b * fy[i];
      return out;
    }
  };

  Jet jet(double x, double y) const {
    Jet j;
    j.n = n_;
    for (const Term& t : terms_) {
      j.k.push_back(t.k);
      CVec f(n_), fx(n_), fy(n_);
      for (int i = 0; i < n_; ++i) {
        const auto s = static_cast<std::size_t>(i);
        f(i) = t.f[s](x, y);
        fx(i) = t.fx[s](x, y);
        fy(i) = t.fy[s](x, y);
      }
      j.f.push_back(f);
      j.fx.push_back(fx);
      j.fy.push_back(fy);
    }
    return j;
  }

 private:
  struct Term {
    int k;
    std::vector<CompiledExpr> f, fx, fy;
  };
  int n_ = 1;
  std::vector<Term> terms_;
};

// Random smooth test data built from the DSL so that exact derivatives are available.
class RandomFields {
 public:
  explicit RandomFields(std::uint64_t seed) : rng_(seed) {}

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }

  // Smooth complex scalar of moderate frequency on the closed disk.
  Expr scalar(double amplitude = 1.0, double freq = 1.5) {
    const Expr x = Expr::x(), y = Expr::y(), I = Expr::imag();
    Expr e = Expr(0.0);
    for (int t = 0; t < 2; ++t) {
      Expr phase = Expr(uniform(-freq, freq)) * x + Expr(uniform(-freq, freq)) * y + Expr(uniform(0, kTwoPi));
      Expr env = exp(Expr(uniform(-0.5, 0.5)) * x + Expr(uniform(-0.5, 0.5)) * y);
      e = e + (Expr(uniform(-amplitude, amplitude)) + Expr(uniform(-amplitude, amplitude)) * I) * env * sin(phase);
    }
    e = e + Expr(uniform(-amplitude, amplitude)) * x * y + Expr(uniform(-amplitude, amplitude)) * I * x * x;
    return e;
  }
  std::vector<Expr> vector(int n, double amplitude = 1.0) {
    std::vector<Expr> v;
    for (int i = 0; i < n; ++i) v.push_back(scalar(amplitude));
    return v;
  }
  ModeExpansion modes(int n, int degree, double amplitude = 1.0) {
    ModeExpansion u(n);
    for (int k = -degree; k <= degree; ++k) u.modes[k] = vector(n, amplitude / (1 + std::abs(k)));
    return u;
  }
  OneFormExpr one_form(int n, double amplitude = 1.0) { return {vector(n, amplitude), vector(n, amplitude)}; }
  TensorExpr tensor(int n, int order, double amplitude = 1.0) {
    TensorExpr t;
    t.order = order;
    for (int j = 0; j <= order; ++j) t.comps.push_back(vector(n, amplitude));
    return t;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace magray
