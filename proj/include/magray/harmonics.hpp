#pragma once

#include <memory>
#include <vector>

#include "magray/fft.hpp"
#include "magray/grid.hpp"
#include "magray/parallel.hpp"
#include "magray/smfunction.hpp"

namespace magray {

// Scene data at every node of a spatial grid.
struct SceneSamples {
  std::shared_ptr<const SpatialGrid> grid;
  std::vector<MetricSample> metric;
  std::vector<CMat> ax, ay, phi;

  SceneSamples(const Scene& scene, std::shared_ptr<const SpatialGrid> g) : grid(std::move(g)) {
    const int N = grid->size();
    metric.resize(static_cast<std::size_t>(N));
    ax.resize(static_cast<std::size_t>(N));
    ay.resize(static_cast<std::size_t>(N));
    phi.resize(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
      const auto s = static_cast<std::size_t>(k);
      metric[s] = scene.metric(grid->x(k), grid->y(k));
      scene.attenuation().eval(grid->x(k), grid->y(k), ax[s], ay[s], phi[s]);
    }
  }
};

// Samples of a C^n-valued function on the grid nodes times ntheta uniform fiber angles.
class FiberGridFn {
 public:
  FiberGridFn() = default;
  FiberGridFn(std::shared_ptr<const SpatialGrid> g, int ntheta, int n)
      : ntheta_(ntheta), n_(n), data_(std::move(g), ntheta * n) {}

  template <class F>
  static FiberGridFn sample(std::shared_ptr<const SpatialGrid> g, int ntheta, int n, F&& f) {
    FiberGridFn u(g, ntheta, n);
    for (int k = 0; k < g->size(); ++k)
      for (int l = 0; l < ntheta; ++l) {
        CVec v = f(g->x(k), g->y(k), u.theta(l));
        for (int c = 0; c < n; ++c) u.at(k, l, c) = v(c);
      }
    return u;
  }
  static FiberGridFn sample(std::shared_ptr<const SpatialGrid> g, int ntheta, const CompiledModes& m) {
    FiberGridFn u(g, ntheta, m.rank());
    parallel_for(g->size(), [&](int k) {
      const CompiledModes::Jet j = m.jet(g->x(k), g->y(k));
      for (int l = 0; l < ntheta; ++l) {
        const CVec v = j(u.theta(l));
        for (int c = 0; c < m.rank(); ++c) u.at(k, l, c) = v(c);
      }
    });
    return u;
  }

  const std::shared_ptr<const SpatialGrid>& grid() const { return data_.grid; }
  int ntheta() const { return ntheta_; }
  int rank() const { return n_; }
  double theta(int l) const { return kTwoPi * l / ntheta_; }

  cd& at(int node, int l, int c = 0) {
    cache_.reset();
    return data_.v[static_cast<std::size_t>((node * ntheta_ + l) * n_ + c)];
  }
  const cd& at(int node, int l, int c = 0) const {
    return data_.v[static_cast<std::size_t>((node * ntheta_ + l) * n_ + c)];
  }
  GridField& data() {
    cache_.reset();
    return data_;
  }
  const GridField& data() const { return data_; }

  // Fiber Fourier coefficients, [node][slot][component], slot j <-> frequency FiberFFT::freq(j).
  const std::vector<cd>& modes() const {
    if (!cache_) {
      auto m = std::make_shared<std::vector<cd>>(data_.v.size());
      FiberFFT fft(ntheta_);
      std::vector<cd> in(static_cast<std::size_t>(ntheta_)), out(static_cast<std::size_t>(ntheta_));
      for (int k = 0; k < grid()->size(); ++k)
        for (int c = 0; c < n_; ++c) {
          for (int l = 0; l < ntheta_; ++l) in[static_cast<std::size_t>(l)] = at(k, l, c);
          fft.forward(in.data(), out.data());
          for (int j = 0; j < ntheta_; ++j) (*m)[static_cast<std::size_t>((k * ntheta_ + j) * n_ + c)] = out[static_cast<std::size_t>(j)];
        }
      cache_ = m;
    }
    return *cache_;
  }
  cd mode(int node, int k, int c = 0) const {
    if (k >= ntheta_ / 2 || k < -ntheta_ / 2) return 0.0;
    return modes()[static_cast<std::size_t>((node * ntheta_ + FiberFFT::slot(k, ntheta_)) * n_ + c)];
  }

  // Builds a function from per-node coefficients given by coeff(node, k, c).
  template <class F>
  static FiberGridFn from_modes(std::shared_ptr<const SpatialGrid> g, int ntheta, int n, F&& coeff) {
    FiberGridFn u(g, ntheta, n);
    FiberFFT fft(ntheta);
    std::vector<cd> in(static_cast<std::size_t>(ntheta)), out(static_cast<std::size_t>(ntheta));
    for (int k = 0; k < g->size(); ++k)
      for (int c = 0; c < n; ++c) {
        for (int j = 0; j < ntheta; ++j) in[static_cast<std::size_t>(j)] = coeff(k, FiberFFT::freq(j, ntheta), c);
        fft.inverse(in.data(), out.data());
        for (int l = 0; l < ntheta; ++l) u.at(k, l, c) = out[static_cast<std::size_t>(l)];
      }
    return u;
  }

  FiberGridFn& operator+=(const FiberGridFn& o) {
    data() += o.data();
    return *this;
  }
  FiberGridFn& operator-=(const FiberGridFn& o) {
    auto& v = data().v;
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= o.data().v[k];
    return *this;
  }
  FiberGridFn& operator*=(cd s) {
    data() *= s;
    return *this;
  }

  // Largest |k| whose coefficient exceeds tol times the largest coefficient, over the given nodes.
  int band(const std::vector<int>& nodes, double tol = 1e-12) const {
    const auto& m = modes();
    double peak = 0;
    for (cd v : m) peak = std::max(peak, std::abs(v));
    int b = 0;
    for (int node : nodes)
      for (int j = 0; j < ntheta_; ++j)
        for (int c = 0; c < n_; ++c)
          if (std::abs(m[static_cast<std::size_t>((node * ntheta_ + j) * n_ + c)]) > tol * peak)
            b = std::max(b, std::abs(FiberFFT::freq(j, ntheta_)));
    return b;
  }

 private:
  int ntheta_ = 0, n_ = 1;
  GridField data_;
  mutable std::shared_ptr<const std::vector<cd>> cache_;
};

// Applies the Fourier multiplier m(k) along every fiber.
template <class M>
inline FiberGridFn fiber_multiplier(const FiberGridFn& u, M&& mult) {
  const auto& md = u.modes();
  const int N = u.ntheta(), n = u.rank();
  return FiberGridFn::from_modes(u.grid(), N, n, [&](int node, int k, int c) {
    return mult(k) * md[static_cast<std::size_t>((node * N + FiberFFT::slot(k, N)) * n + c)];
  });
}

inline FiberGridFn fiber_project(const FiberGridFn& u, int k0) {
  return fiber_multiplier(u, [k0](int k) { return cd(k == k0 ? 1.0 : 0.0); });
}

// Fiberwise Hilbert transform: multiplier -i sgn(k), with sgn(0) = 0.
inline FiberGridFn hilbert(const FiberGridFn& u) {
  return fiber_multiplier(u, [](int k) { return k > 0 ? cd(0, -1) : (k < 0 ? cd(0, 1) : cd(0)); });
}

inline FiberGridFn dtheta(const FiberGridFn& u) {
  const int N = u.ntheta();
  return fiber_multiplier(u, [N](int k) { return k == -N / 2 ? cd(0) : cd(0, k); });
}

// Fiber average u_0 as a grid field.
inline GridField fiber_coefficient(const FiberGridFn& u, int k) {
  GridField g(u.grid(), u.rank());
  for (int node = 0; node < u.grid()->size(); ++node)
    for (int c = 0; c < u.rank(); ++c) g.at(node, c) = u.mode(node, k, c);
  return g;
}

inline void require_band(const FiberGridFn& u, int limit, const char* what) {
  const int b = u.band(u.grid()->disk_nodes(), 1e-10);
  if (b > limit)
    throw BandLimitExceeded(std::string(what) + ": fiber band " + std::to_string(b) + " exceeds " + std::to_string(limit));
}

enum class FrameField { X, Xperp };

// Applies X or Xperp using fourth-order differences in space and exact differentiation in theta.
inline FiberGridFn apply_frame(const SceneSamples& ss, const FiberGridFn& u, FrameField which) {
  const GridField dx = diff_x(u.data()), dy = diff_y(u.data());
  const FiberGridFn dt = dtheta(u);
  FiberGridFn out(u.grid(), u.ntheta(), u.rank());
  const int N = u.ntheta(), n = u.rank();
  for (int node = 0; node < u.grid()->size(); ++node) {
    const MetricSample& m = ss.metric[static_cast<std::size_t>(node)];
    for (int l = 0; l < N; ++l) {
      const Frame f = frame_fields(m, u.theta(l));
      const TangentVector& v = which == FrameField::X ? f.X : f.Xperp;
      for (int c = 0; c < n; ++c) {
        const auto s = static_cast<std::size_t>(node * N * n + l * n + c);
        out.data().v[s] = v.x * dx.v[s] + v.y * dy.v[s] + v.theta * dt.data().v[s];
      }
    }
  }
  return out;
}

// Multiplication by a_weight * A(x, v) + phi_weight * Phi, or by *A when star is set.
inline FiberGridFn multiply_matrix(const SceneSamples& ss, const FiberGridFn& u, double a_weight, double phi_weight,
                                   bool star = false) {
  FiberGridFn out(u.grid(), u.ntheta(), u.rank());
  const int N = u.ntheta(), n = u.rank();
  CVec in(n);
  for (int node = 0; node < u.grid()->size(); ++node) {
    const auto s = static_cast<std::size_t>(node);
    const double e = std::exp(-ss.metric[s].sigma);
    for (int l = 0; l < N; ++l) {
      const double c = std::cos(u.theta(l)), sn = std::sin(u.theta(l));
      CMat M = star ? CMat(e * (ss.ax[s] * sn - ss.ay[s] * c)) : CMat(e * (ss.ax[s] * c + ss.ay[s] * sn));
      M *= a_weight;
      if (phi_weight != 0.0) M += phi_weight * ss.phi[s];
      for (int k = 0; k < n; ++k) in(k) = u.at(node, l, k);
      CVec r = M * in;
      for (int k = 0; k < n; ++k) out.at(node, l, k) = r(k);
    }
  }
  return out;
}

// (G + A + Phi) u.
inline FiberGridFn apply_generator(const SceneSamples& ss, const FiberGridFn& u) {
  require_band(u, u.ntheta() / 2 - 2, "apply_generator");
  FiberGridFn out = apply_frame(ss, u, FrameField::X);
  const FiberGridFn dt = dtheta(u);
  const int N = u.ntheta(), n = u.rank();
  for (int node = 0; node < u.grid()->size(); ++node) {
    const double lam = ss.metric[static_cast<std::size_t>(node)].lambda;
    for (int l = 0; l < N; ++l)
      for (int c = 0; c < n; ++c) out.at(node, l, c) += lam * dt.at(node, l, c);
  }
  out += multiply_matrix(ss, u, 1.0, 1.0);
  return out;
}

struct GKOperators {
  FiberGridFn eta_plus, eta_minus, mu_plus, mu_minus;
};

// eta_pm = (X +- i Xperp)/2 and mu_pm = eta_pm + A_{pm 1}.
inline GKOperators gk_operators(const SceneSamples& ss, const FiberGridFn& u) {
  require_band(u, u.ntheta() / 2 - 2, "gk_operators");
  const FiberGridFn X = apply_frame(ss, u, FrameField::X), Xp = apply_frame(ss, u, FrameField::Xperp);
  GKOperators g{FiberGridFn(u.grid(), u.ntheta(), u.rank()), FiberGridFn(u.grid(), u.ntheta(), u.rank()), {}, {}};
  for (std::size_t s = 0; s < X.data().v.size(); ++s) {
    g.eta_plus.data().v[s] = 0.5 * (X.data().v[s] + cd(0, 1) * Xp.data().v[s]);
    g.eta_minus.data().v[s] = 0.5 * (X.data().v[s] - cd(0, 1) * Xp.data().v[s]);
  }
  // A = A_1 + A_{-1} with A_{+1} = e^{-sigma}(Ax - i Ay) e^{i theta}/2.
  const int N = u.ntheta(), n = u.rank();
  FiberGridFn a_plus(u.grid(), N, n), a_minus(u.grid(), N, n);
  CVec in(n);
  for (int node = 0; node < u.grid()->size(); ++node) {
    const auto s = static_cast<std::size_t>(node);
    const double e = std::exp(-ss.metric[s].sigma);
    const CMat P = 0.5 * e * (ss.ax[s] - cd(0, 1) * ss.ay[s]), Mn = 0.5 * e * (ss.ax[s] + cd(0, 1) * ss.ay[s]);
    for (int l = 0; l < N; ++l) {
      for (int k = 0; k < n; ++k) in(k) = u.at(node, l, k);
      const cd ep = std::polar(1.0, u.theta(l));
      CVec rp = ep * (P * in), rm = std::conj(ep) * (Mn * in);
      for (int k = 0; k < n; ++k) {
        a_plus.at(node, l, k) = rp(k);
        a_minus.at(node, l, k) = rm(k);
      }
    }
  }
  g.mu_plus = g.eta_plus;
  g.mu_plus += a_plus;
  g.mu_minus = g.eta_minus;
  g.mu_minus += a_minus;
  return g;
}

struct CommutatorResult {
  double sup_residual = 0;
  double sup_rhs = 0;
};

// [H, G + A + Phi] u against (Xperp + *A) u_0 + ((Xperp + *A) u)_0 on the disk nodes.
// The left side uses grid differences; the right side is evaluated exactly from the analytic input.
inline CommutatorResult commutator_residual(const Scene& scene, const CompiledModes& u,
                                            std::shared_ptr<const SpatialGrid> grid, int ntheta) {
  SceneSamples ss(scene, grid);
  const FiberGridFn U = FiberGridFn::sample(grid, ntheta, u);
  FiberGridFn lhs = hilbert(apply_generator(ss, U));
  lhs -= apply_generator(ss, hilbert(U));
  const int n = u.rank();
  CommutatorResult r;
  std::vector<CVec> xu(static_cast<std::size_t>(ntheta));
  const auto& nodes = grid->disk_nodes();
  std::vector<double> res(nodes.size()), top(nodes.size());
  parallel_for(static_cast<int>(nodes.size()), [&](int a) {
    const int node = nodes[static_cast<std::size_t>(a)];
    const double x = grid->x(node), y = grid->y(node);
    const MetricSample m = scene.metric(x, y);
    CMat ax, ay, phi;
    scene.attenuation().eval(x, y, ax, ay, phi);
    const CompiledModes::Jet j = u.jet(x, y);
    const double e = std::exp(-m.sigma);
    // ((Xperp + *A) u)_0 by exact fiber averaging.
    CVec avg = CVec::Zero(n);
    for (int l = 0; l < ntheta; ++l) {
      const double t = kTwoPi * l / ntheta;
      const CMat starA = e * (-ay * std::cos(t) + ax * std::sin(t));
      avg += j.apply(frame_fields(m, t).Xperp, t) + starA * j(t);
    }
    avg /= static_cast<double>(ntheta);
    const CVec u0 = j.coefficient(0);
    double rr = 0, rt = 0;
    for (int l = 0; l < ntheta; ++l) {
      const double t = kTwoPi * l / ntheta;
      const Frame f = frame_fields(m, t);
      const CMat starA = e * (-ay * std::cos(t) + ax * std::sin(t));
      // Xperp sees only the spatial part of the fiber-constant u_0.
      const CVec xp0 = j.coefficient_derivative(0, f.Xperp.x, f.Xperp.y);
      CVec rhs = xp0 + starA * u0 + avg;
      for (int c = 0; c < n; ++c) {
        rr = std::max(rr, std::abs(lhs.at(node, l, c) - rhs(c)));
        rt = std::max(rt, std::abs(rhs(c)));
      }
    }
    res[static_cast<std::size_t>(a)] = rr;
    top[static_cast<std::size_t>(a)] = rt;
  });
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    r.sup_residual = std::max(r.sup_residual, res[a]);
    r.sup_rhs = std::max(r.sup_rhs, top[a]);
  }
  return r;
}

}  // namespace magray
