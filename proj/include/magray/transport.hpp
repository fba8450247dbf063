#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "magray/flow.hpp"
#include "magray/harmonics.hpp"
#include "magray/parallel.hpp"

namespace magray {

// C^n-valued function on the inflow grid (s_j, phi_k).
struct BoundaryFn {
  BoundaryGrid grid;
  int n = 1;
  std::vector<cd> v;

  BoundaryFn() = default;
  BoundaryFn(BoundaryGrid g, int comps) : grid(std::move(g)), n(comps), v(static_cast<std::size_t>(grid.size() * comps)) {}

  cd& at(int idx, int c = 0) { return v[static_cast<std::size_t>(idx * n + c)]; }
  const cd& at(int idx, int c = 0) const { return v[static_cast<std::size_t>(idx * n + c)]; }
  CVec value(int idx) const {
    CVec r(n);
    for (int c = 0; c < n; ++c) r(c) = at(idx, c);
    return r;
  }
  void set(int idx, const CVec& val) {
    for (int c = 0; c < n; ++c) at(idx, c) = val(c);
  }

  template <class F>
  static BoundaryFn sample(const BoundaryGrid& g, int n, F&& f) {
    BoundaryFn b(g, n);
    for (int j = 0; j < g.ns; ++j)
      for (int k = 0; k < g.nphi; ++k) b.set(g.index(j, k), f(g.s[static_cast<std::size_t>(j)], g.phi[static_cast<std::size_t>(k)]));
    return b;
  }

  BoundaryFn& operator+=(const BoundaryFn& o) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
    return *this;
  }
  BoundaryFn& operator-=(const BoundaryFn& o) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
    return *this;
  }
  BoundaryFn& operator*=(cd s) {
    for (cd& a : v) a *= s;
    return *this;
  }
};

// <a, b>_mu = sum a . conj(b) mu.
inline cd mu_inner(const Scene& scene, const BoundaryFn& a, const BoundaryFn& b) {
  const auto w = a.grid.mu_weights(scene);
  cd s = 0;
  for (int i = 0; i < a.grid.size(); ++i)
    for (int c = 0; c < a.n; ++c) s += w[static_cast<std::size_t>(i)] * a.at(i, c) * std::conj(b.at(i, c));
  return s;
}
inline double mu_norm(const Scene& scene, const BoundaryFn& a) { return std::sqrt(std::abs(mu_inner(scene, a, a))); }

// Trigonometric interpolation weights for n equispaced periodic nodes x_j = x0 + 2 pi j / n (n even).
inline void trig_weights(double x, double x0, int n, double* w) {
  for (int j = 0; j < n; ++j) {
    const double d = wrap_angle(x - x0 - kTwoPi * j / n);
    if (std::abs(d) < 1e-14) {
      for (int i = 0; i < n; ++i) w[i] = 0;
      w[j] = 1;
      return;
    }
    w[j] = std::sin(0.5 * n * d) / (n * std::tan(0.5 * d));
  }
}

// Global interpolation on the inflow grid: trigonometric in s, barycentric polynomial in phi.
class InflowInterpolator {
 public:
  explicit InflowInterpolator(const BoundaryGrid& g) : g_(g), bary_(static_cast<std::size_t>(g.nphi)) {
    for (int k = 0; k < g.nphi; ++k) {
      double p = 1;
      for (int j = 0; j < g.nphi; ++j)
        if (j != k) p *= (g.phi[static_cast<std::size_t>(k)] - g.phi[static_cast<std::size_t>(j)]);
      bary_[static_cast<std::size_t>(k)] = 1.0 / p;
    }
  }

  void weights(double s, double phi, std::vector<double>& ws, std::vector<double>& wp) const {
    ws.resize(static_cast<std::size_t>(g_.ns));
    wp.resize(static_cast<std::size_t>(g_.nphi));
    trig_weights(s, 0.0, g_.ns, ws.data());
    double den = 0;
    for (int k = 0; k < g_.nphi; ++k) {
      const double d = phi - g_.phi[static_cast<std::size_t>(k)];
      if (d == 0.0) {
        std::fill(wp.begin(), wp.end(), 0.0);
        wp[static_cast<std::size_t>(k)] = 1.0;
        return;
      }
      wp[static_cast<std::size_t>(k)] = bary_[static_cast<std::size_t>(k)] / d;
      den += wp[static_cast<std::size_t>(k)];
    }
    for (double& w : wp) w /= den;
  }

  CVec eval(const BoundaryFn& f, double s, double phi) const {
    thread_local std::vector<double> ws, wp;
    weights(s, phi, ws, wp);
    CVec out = CVec::Zero(f.n);
    for (int j = 0; j < g_.ns; ++j) {
      const double a = ws[static_cast<std::size_t>(j)];
      if (a == 0.0) continue;
      for (int k = 0; k < g_.nphi; ++k) {
        const double b = a * wp[static_cast<std::size_t>(k)];
        for (int c = 0; c < f.n; ++c) out(c) += b * f.at(g_.index(j, k), c);
      }
    }
    return out;
  }

  const BoundaryGrid& grid() const { return g_; }

 private:
  BoundaryGrid g_;
  std::vector<double> bary_;
};

struct TableOptions {
  double dt = 1e-2;             // RK4 step for table construction
  double sample_step = 1e-2;    // target spacing of quadrature samples along rays
  double extension_radius = 0;  // > 1: continue back-traces to this circle
};

inline TableOptions table_options(const Scene& scene) {
  TableOptions o;
  o.dt = std::max(scene.ode().dt, 1e-2);
  return o;
}

// Backward traces from phase points to the inflow boundary, with the transport solution U at the point
// (U = Id on the inflow boundary). With an extension radius the trace continues to the larger circle.
struct BackTrace {
  double s = 0, phi = 0, tau = 0;
  CMat U;
  double s_ext = 0, phi_ext = 0;
  CMat U_ext;
};

class BackTraceTable {
 public:
  BackTraceTable() = default;
  BackTraceTable(const Scene& scene, std::vector<PhasePoint> points, const TableOptions& opt)
      : points_(std::move(points)), rows_(points_.size()), extended_(opt.extension_radius > 1.0) {
    TraceOptions o = trace_options(scene);
    o.dt = opt.dt;
    o.transport = true;
    o.backward = true;
    parallel_for(static_cast<int>(points_.size()), [&](int i) {
      FlowIntegrator flow(scene);
      BackTrace& r = rows_[static_cast<std::size_t>(i)];
      PhasePoint p = points_[static_cast<std::size_t>(i)];
      const double rr = std::hypot(p.x, p.y);
      // Extended traces from points on or outside the unit circle go directly to the outer circle.
      if (extended_ && rr >= 1.0 - 1e-12) {
        TraceOptions oe = o;
        oe.radius = opt.extension_radius;
        TraceEnd e2 = flow.trace(p, oe);
        auto c2 = inflow_coords(e2.state.point());
        r.s_ext = c2[0];
        r.phi_ext = c2[1];
        r.U_ext = e2.state.U.adjoint();
        r.U = CMat::Identity(scene.rank(), scene.rank());
        return;
      }
      // Nodes marginally outside the circle start from the radial projection.
      if (rr > 1.0) {
        p.x /= rr;
        p.y /= rr;
      }
      TraceEnd e = flow.trace(p, o);
      auto c = inflow_coords(e.state.point());
      r.s = c[0];
      r.phi = c[1];
      r.tau = e.time;
      r.U = e.state.U.adjoint();
      if (extended_) {
        TraceOptions oe = o;
        oe.radius = opt.extension_radius;
        TraceEnd e2 = flow.trace(e.state.point(), oe);
        auto c2 = inflow_coords(e2.state.point());
        r.s_ext = c2[0];
        r.phi_ext = c2[1];
        r.U_ext = (e2.state.U * e.state.U).adjoint();
      }
    });
  }

  int size() const { return static_cast<int>(rows_.size()); }
  bool extended() const { return extended_; }
  const PhasePoint& point(int i) const { return points_[static_cast<std::size_t>(i)]; }
  const BackTrace& row(int i) const { return rows_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<PhasePoint> points_;
  std::vector<BackTrace> rows_;
  bool extended_ = false;
};

// Phase points (node, theta_l) for the given nodes, node-major.
inline std::vector<PhasePoint> fiber_points(const SpatialGrid& g, const std::vector<int>& nodes, int ntheta) {
  std::vector<PhasePoint> pts;
  pts.reserve(nodes.size() * static_cast<std::size_t>(ntheta));
  for (int node : nodes)
    for (int l = 0; l < ntheta; ++l) pts.push_back({g.x(node), g.y(node), kTwoPi * l / ntheta});
  return pts;
}

// Forward rays from the inflow grid sampled at K + 1 equispaced times with Simpson weights.
struct RaySamples {
  double tau = 0;
  std::vector<double> x, y, theta, w;
  std::vector<CMat> Uinv;
  double exit_s = 0, exit_psi = 0;  // exit point, full-fiber angle from the inward normal
  CMat C;                           // U at the exit
};

class ForwardRayTable {
 public:
  ForwardRayTable() = default;
  ForwardRayTable(const Scene& scene, const BoundaryGrid& g, const TableOptions& opt) : grid_(g), rays_(static_cast<std::size_t>(g.size())) {
    TraceOptions o = trace_options(scene);
    o.dt = opt.dt;
    parallel_for(g.size(), [&](int idx) {
      FlowIntegrator flow(scene);
      const int j = idx / g.nphi, k = idx % g.nphi;
      const PhasePoint p = inflow_point(g.s[static_cast<std::size_t>(j)], g.phi[static_cast<std::size_t>(k)]);
      RaySamples& r = rays_[static_cast<std::size_t>(idx)];
      r.tau = flow.trace(p, o).time;
      int K = 2 * std::max(1, static_cast<int>(std::ceil(r.tau / (2 * opt.sample_step))));
      const auto w = simpson_weights(K, r.tau / K);
      FlowState end = flow.uniform(p, r.tau, K, true, [&](int i, double, const FlowState& st) {
        r.x.push_back(st.x);
        r.y.push_back(st.y);
        r.theta.push_back(st.theta);
        r.w.push_back(w[static_cast<std::size_t>(i)]);
        r.Uinv.push_back(st.U.adjoint());
      });
      unitarize(end.U);
      r.C = end.U;
      auto c = inflow_coords(end.point());
      r.exit_s = c[0];
      r.exit_psi = c[1];
    });
  }

  const BoundaryGrid& grid() const { return grid_; }
  const RaySamples& ray(int idx) const { return rays_[static_cast<std::size_t>(idx)]; }
  int size() const { return static_cast<int>(rays_.size()); }
  std::size_t samples() const {
    std::size_t s = 0;
    for (auto& r : rays_) s += r.x.size();
    return s;
  }

 private:
  BoundaryGrid grid_;
  std::vector<RaySamples> rays_;
};

// I f = int_0^tau U^{-1} f dt for f given pointwise on SM.
template <class F>
BoundaryFn ray_transform(const ForwardRayTable& t, int n, F&& f) {
  BoundaryFn out(t.grid(), n);
  parallel_for(t.size(), [&](int idx) {
    const RaySamples& r = t.ray(idx);
    CVec acc = CVec::Zero(n);
    for (std::size_t i = 0; i < r.x.size(); ++i) acc += r.w[i] * (r.Uinv[i] * f(r.x[i], r.y[i], r.theta[i]));
    out.set(idx, acc);
  });
  return out;
}

inline BoundaryFn ray_transform(const ForwardRayTable& t, const CompiledModes& f) {
  return ray_transform(t, f.rank(), [&](double x, double y, double th) { return f(x, y, th); });
}

// Transform of a grid function on SM: bicubic interpolation of each fiber mode and exact fiber evaluation.
// Ghost nodes of u must hold valid data.
inline BoundaryFn ray_transform(const ForwardRayTable& t, const FiberGridFn& u) {
  const int band = u.band(u.grid()->disk_nodes(), 1e-14);
  if (band > u.ntheta() / 2 - 1)
    throw BandLimitExceeded("ray_transform: fiber band " + std::to_string(band) + " exceeds " + std::to_string(u.ntheta() / 2 - 1));
  const int n = u.rank(), N = u.ntheta();
  const SpatialGrid& g = *u.grid();
  GridField modes(u.grid(), (2 * band + 1) * n);
  for (int node = 0; node < g.size(); ++node)
    for (int k = -band; k <= band; ++k)
      for (int c = 0; c < n; ++c) modes.at(node, (k + band) * n + c) = u.mode(node, k, c);
  (void)N;
  return ray_transform(t, n, [&](double x, double y, double th) {
    const Eigen::VectorXcd m = modes.interpolate(x, y);
    CVec r = CVec::Zero(n);
    for (int k = -band; k <= band; ++k) {
      const cd e = std::polar(1.0, k * th);
      for (int c = 0; c < n; ++c) r(c) += m((k + band) * n + c) * e;
    }
    return r;
  });
}

// Order-0 transform of a grid function and order-1 transform of a grid 1-form (components x then y).
inline BoundaryFn ray_transform_function(const ForwardRayTable& t, const GridField& f) {
  return ray_transform(t, f.n, [&](double x, double y, double) { return CVec(f.interpolate(x, y)); });
}
inline BoundaryFn ray_transform_one_form(const Scene& scene, const ForwardRayTable& t, const GridField& a) {
  const int n = a.n / 2;
  return ray_transform(t, n, [&](double x, double y, double th) {
    const Eigen::VectorXcd v = a.interpolate(x, y);
    const double e = std::exp(-scene.sigma(x, y));
    return CVec(e * (std::cos(th) * v.head(n) + std::sin(th) * v.tail(n)));
  });
}

// Transport solution along a ray from an arbitrary start (U = Id at the start).
struct TransportSolution {
  std::vector<double> t;
  std::vector<CMat> U;
  double max_drift = 0;
};

inline TransportSolution solve_transport(const Scene& scene, const PhasePoint& p, int direction = 1) {
  FlowIntegrator flow(scene);
  TraceOptions o = trace_options(scene);
  o.transport = true;
  o.backward = direction < 0;
  TransportSolution sol;
  TraceEnd e = flow.trace(p, o, [&](double t, const FlowState& s) {
    sol.t.push_back(t);
    sol.U.push_back(s.U);
  });
  sol.max_drift = e.drift;
  return sol;
}

// Scattering data C on the outflow grid (s', phi') with phi' from the outward normal.
struct ScatteringData {
  BoundaryGrid grid;
  int n = 1;
  std::vector<CMat> C;
  std::vector<double> entry_s, entry_phi;
};

inline ScatteringData scattering_data(const Scene& scene, const BoundaryGrid& g, double dt = 0) {
  ScatteringData d{g, scene.rank(), std::vector<CMat>(static_cast<std::size_t>(g.size())),
                   std::vector<double>(static_cast<std::size_t>(g.size())), std::vector<double>(static_cast<std::size_t>(g.size()))};
  TraceOptions o = trace_options(scene);
  if (dt > 0) o.dt = dt;
  o.transport = true;
  o.backward = true;
  parallel_for(g.size(), [&](int idx) {
    FlowIntegrator flow(scene);
    const int j = idx / g.nphi, k = idx % g.nphi;
    TraceEnd e = flow.trace(outflow_point(g.s[static_cast<std::size_t>(j)], g.phi[static_cast<std::size_t>(k)]), o);
    CMat V = e.state.U;
    unitarize(V);
    d.C[static_cast<std::size_t>(idx)] = V.adjoint();
    auto c = inflow_coords(e.state.point());
    d.entry_s[static_cast<std::size_t>(idx)] = c[0];
    d.entry_phi[static_cast<std::size_t>(idx)] = c[1];
  });
  return d;
}

// Values on the full boundary fibers (s_j, psi_l).
struct FiberBoundaryFn {
  FiberBoundaryGrid grid;
  int n = 1;
  std::vector<cd> v;

  FiberBoundaryFn() = default;
  FiberBoundaryFn(FiberBoundaryGrid g, int comps) : grid(std::move(g)), n(comps), v(static_cast<std::size_t>(grid.size() * comps)) {}
  cd& at(int idx, int c = 0) { return v[static_cast<std::size_t>(idx * n + c)]; }
  const cd& at(int idx, int c = 0) const { return v[static_cast<std::size_t>(idx * n + c)]; }
  void set(int idx, const CVec& val) {
    for (int c = 0; c < n; ++c) at(idx, c) = val(c);
  }

  // Trigonometric interpolation in both s and psi.
  CVec eval(double s, double psi) const {
    thread_local std::vector<double> ws, wp;
    ws.resize(static_cast<std::size_t>(grid.ns));
    wp.resize(static_cast<std::size_t>(grid.npsi));
    trig_weights(s, 0.0, grid.ns, ws.data());
    trig_weights(psi, grid.psi[0], grid.npsi, wp.data());
    CVec out = CVec::Zero(n);
    for (int j = 0; j < grid.ns; ++j) {
      const double a = ws[static_cast<std::size_t>(j)];
      if (a == 0.0) continue;
      for (int l = 0; l < grid.npsi; ++l) {
        const double b = a * wp[static_cast<std::size_t>(l)];
        for (int c = 0; c < n; ++c) out(c) += b * at(grid.index(j, l), c);
      }
    }
    return out;
  }
};

// Fiberwise Hilbert transform over every boundary point.
inline FiberBoundaryFn hilbert(const FiberBoundaryFn& a) {
  FiberBoundaryFn out(a.grid, a.n);
  const int N = a.grid.npsi;
  FiberFFT fft(N);
  std::vector<cd> in(static_cast<std::size_t>(N)), md(static_cast<std::size_t>(N));
  // psi_l = -pi + (l + 1/2) 2 pi / N; the mode phase e^{i k psi_0} cancels in the multiplier.
  for (int j = 0; j < a.grid.ns; ++j)
    for (int c = 0; c < a.n; ++c) {
      for (int l = 0; l < N; ++l) in[static_cast<std::size_t>(l)] = a.at(a.grid.index(j, l), c);
      fft.forward(in.data(), md.data());
      for (int q = 0; q < N; ++q) {
        const int k = FiberFFT::freq(q, N);
        md[static_cast<std::size_t>(q)] *= k > 0 ? cd(0, -1) : (k < 0 && k != -N / 2 ? cd(0, 1) : cd(0));
      }
      fft.inverse(md.data(), in.data());
      for (int l = 0; l < N; ++l) out.at(a.grid.index(j, l), c) = in[static_cast<std::size_t>(l)];
    }
  return out;
}

// The operators Q, B, P determined by the scattering relation and scattering data.
class BoundaryOperators {
 public:
  BoundaryOperators(const Scene& scene, const BoundaryGrid& g, int npsi, const TableOptions& opt)
      : scene_(scene), rays_(scene, g, opt), interp_(g), fiber_(g.ns, npsi) {
    std::vector<PhasePoint> pts;
    for (int j = 0; j < fiber_.ns; ++j)
      for (int l = 0; l < fiber_.npsi; ++l)
        if (!fiber_.inflow(l)) pts.push_back(fiber_.point(j, l));
    TableOptions o = opt;
    o.extension_radius = 0;
    outflow_ = BackTraceTable(scene, std::move(pts), o);
  }

  const ForwardRayTable& rays() const { return rays_; }
  const FiberBoundaryGrid& fiber_grid() const { return fiber_; }
  const InflowInterpolator& interpolator() const { return interp_; }

  // Qw = w on the inflow part and C (w o S^{-1}) on the outflow part.
  FiberBoundaryFn Q(const BoundaryFn& w) const {
    FiberBoundaryFn q(fiber_, w.n);
    int o = 0;
    for (int j = 0; j < fiber_.ns; ++j)
      for (int l = 0; l < fiber_.npsi; ++l) {
        const int idx = fiber_.index(j, l);
        if (fiber_.inflow(l)) {
          q.set(idx, interp_.eval(w, fiber_.s[static_cast<std::size_t>(j)], fiber_.psi[static_cast<std::size_t>(l)]));
        } else {
          const BackTrace& r = outflow_.row(o++);
          q.set(idx, r.U * interp_.eval(w, r.s, r.phi));
        }
      }
    return q;
  }

  // B a = (C^{-1} a) o S - a on the inflow grid, for a given pointwise on the boundary fibers.
  template <class F>
  BoundaryFn B(int n, F&& a) const {
    BoundaryFn out(rays_.grid(), n);
    const BoundaryGrid& g = rays_.grid();
    parallel_for(g.size(), [&](int idx) {
      const RaySamples& r = rays_.ray(idx);
      const int j = idx / g.nphi, k = idx % g.nphi;
      CVec v = r.C.adjoint() * a(r.exit_s, r.exit_psi) - a(g.s[static_cast<std::size_t>(j)], g.phi[static_cast<std::size_t>(k)]);
      out.set(idx, v);
    });
    return out;
  }
  BoundaryFn B(const FiberBoundaryFn& a) const {
    return B(a.n, [&](double s, double psi) { return a.eval(s, psi); });
  }

  BoundaryFn P(const BoundaryFn& w) const { return B(hilbert(Q(w))); }

 private:
  const Scene& scene_;
  ForwardRayTable rays_;
  InflowInterpolator interp_;
  FiberBoundaryGrid fiber_;
  BackTraceTable outflow_;
};

// w_psi (first integral), w_sharp = U w_psi on the grid nodes, and Qw on the boundary fibers.
struct Extension {
  FiberGridFn w_psi, w_sharp;
  FiberBoundaryFn Qw;
};

inline Extension extend_boundary(const Scene& scene, const BoundaryFn& w, std::shared_ptr<const SpatialGrid> grid, int ntheta,
                                 const BoundaryOperators& ops, const TableOptions& opt) {
  const auto& nodes = grid->disk_nodes();
  BackTraceTable table(scene, fiber_points(*grid, nodes, ntheta), opt);
  Extension e{FiberGridFn(grid, ntheta, w.n), FiberGridFn(grid, ntheta, w.n), ops.Q(w)};
  const InflowInterpolator& I = ops.interpolator();
  parallel_for(static_cast<int>(nodes.size()), [&](int a) {
    for (int l = 0; l < ntheta; ++l) {
      const BackTrace& r = table.row(a * ntheta + l);
      const CVec wp = I.eval(w, r.s, r.phi), ws = r.U * wp;
      for (int c = 0; c < w.n; ++c) {
        e.w_psi.at(nodes[static_cast<std::size_t>(a)], l, c) = wp(c);
        e.w_sharp.at(nodes[static_cast<std::size_t>(a)], l, c) = ws(c);
      }
    }
  });
  return e;
}

// (G + A + Phi) a evaluated exactly from an analytic mode expansion.
inline CVec apply_generator(const Scene& scene, const CompiledModes& a, double x, double y, double theta) {
  const MetricSample m = scene.metric(x, y);
  const Frame f = frame_fields(m, theta);
  CMat ax, ay, phi;
  scene.attenuation().eval(x, y, ax, ay, phi);
  const double e = std::exp(-m.sigma);
  const CMat M = e * (std::cos(theta) * ax + std::sin(theta) * ay) + phi;
  return a.apply(f.G, x, y, theta) + M * a(x, y, theta);
}

struct KernelIdentityResult {
  double sup_residual = 0, l2_residual = 0;  // |I((G+A+Phi)a) - B(a|boundary)|
  double sup_lhs = 0, l2_rhs = 0;
};

// I((G + A + Phi) a) against B(a restricted to the boundary).
inline KernelIdentityResult kernel_transform_identity(const Scene& scene, const BoundaryOperators& ops, const CompiledModes& a) {
  BoundaryFn lhs = ray_transform(ops.rays(), a.rank(), [&](double x, double y, double th) { return apply_generator(scene, a, x, y, th); });
  BoundaryFn rhs = ops.B(a.rank(), [&](double s, double psi) {
    const PhasePoint p = inflow_point(s, psi);
    return a(p.x, p.y, p.theta);
  });
  KernelIdentityResult r;
  for (std::size_t i = 0; i < lhs.v.size(); ++i) r.sup_lhs = std::max(r.sup_lhs, std::abs(lhs.v[i]));
  r.l2_rhs = mu_norm(scene, rhs);
  BoundaryFn d = lhs;
  d -= rhs;
  for (cd v : d.v) r.sup_residual = std::max(r.sup_residual, std::abs(v));
  r.l2_residual = mu_norm(scene, d);
  return r;
}

// Gauge transform of an attenuation by G = exp(psi_1 S_1) exp(psi_2 S_2), with psi_i = c_i b(x, y) for the
// bump b = (1 - r^2/r0^2)^6 inside r0 < 1, so that G = Id near the boundary:
// A' = G^{-1} dG + G^{-1} A G, Phi' = G^{-1} Phi G.
class GaugedAttenuation : public Attenuation {
 public:
  GaugedAttenuation(std::shared_ptr<const Attenuation> base, CMat s1, CMat s2, double c1, double c2, double r0 = 0.8)
      : base_(std::move(base)), s1_(std::move(s1)), s2_(std::move(s2)), c1_(c1), c2_(c2), r0_(r0) {}

  int rank() const override { return base_->rank(); }
  bool is_zero() const override { return false; }

  CMat gauge(double x, double y) const {
    double b, bx, by;
    bump(x, y, b, bx, by);
    return expm(s1_, c1_ * b) * expm(s2_, c2_ * b);
  }

  void eval(double x, double y, CMat& ax, CMat& ay, CMat& phi) const override {
    double b, bx, by;
    bump(x, y, b, bx, by);
    const CMat E1 = expm(s1_, c1_ * b), E2 = expm(s2_, c2_ * b);
    const CMat G = E1 * E2, Gi = G.adjoint();
    const CMat R = E2.adjoint() * s1_ * E2;
    base_->eval(x, y, ax, ay, phi);
    ax = Gi * ax * G + R * (c1_ * bx) + s2_ * (c2_ * bx);
    ay = Gi * ay * G + R * (c1_ * by) + s2_ * (c2_ * by);
    phi = Gi * phi * G;
  }

 private:
  void bump(double x, double y, double& b, double& bx, double& by) const {
    const double q = 1.0 - (x * x + y * y) / (r0_ * r0_);
    if (q <= 0) {
      b = bx = by = 0;
      return;
    }
    b = std::pow(q, 6);
    const double d = 6 * std::pow(q, 5) * (-2.0 / (r0_ * r0_));
    bx = d * x;
    by = d * y;
  }
  // exp(t S) for skew-Hermitian S through the Hermitian matrix iS.
  static CMat expm(const CMat& S, double t) {
    Eigen::SelfAdjointEigenSolver<CMat> es(cd(0, 1) * S);
    CVec d = (cd(0, -1) * t * es.eigenvalues().cast<cd>()).array().exp();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
  }

  std::shared_ptr<const Attenuation> base_;
  CMat s1_, s2_;
  double c1_, c2_, r0_;
};

}  // namespace magray
