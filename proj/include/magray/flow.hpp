#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "magray/geometry.hpp"
#include "magray/quadrature.hpp"

namespace magray {

// Replaces U by the unitary factor of its polar decomposition; returns |U*U - I| before projection.
inline double unitarize(CMat& u) {
  const int n = static_cast<int>(u.rows());
  if (n == 1) {
    const double a = std::abs(u(0, 0));
    u(0, 0) /= a;
    return std::abs(a * a - 1.0);
  }
  const double drift = (u.adjoint() * u - CMat::Identity(n, n)).cwiseAbs().maxCoeff();
  Eigen::JacobiSVD<CMat> svd(u, Eigen::ComputeFullU | Eigen::ComputeFullV);
  u = svd.matrixU() * svd.matrixV().adjoint();
  return drift;
}

inline double unitarity_defect(const CMat& u) {
  return (u.adjoint() * u - CMat::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff();
}

struct FlowState {
  double x = 0, y = 0, theta = 0;
  CMat U;
  PhasePoint point() const { return {x, y, theta}; }
};

struct TraceOptions {
  double dt = 1e-3;
  double radius = 1.0;
  bool transport = false;
  bool backward = false;
  double tmax = 20.0;
  double tol = 1e-12;
};

struct TraceEnd {
  FlowState state;
  double time = 0;        // elapsed |t| until the boundary circle of the given radius
  double drift = 0;       // largest unitarity defect seen before re-projection
  int steps = 0;
};

// RK4 integrator for the magnetic flow, optionally coupled to the transport equation
// dU/dt = -(A(gamma') + Phi) U.
class FlowIntegrator {
 public:
  explicit FlowIntegrator(const Scene& scene) : scene_(scene), att_(scene.attenuation()), n_(scene.rank()) {
    attenuated_ = !att_.is_zero();
  }

  const Scene& scene() const { return scene_; }
  bool attenuated() const { return attenuated_; }

  FlowState start(const PhasePoint& p) const {
    FlowState s{p.x, p.y, p.theta, CMat::Identity(n_, n_)};
    return s;
  }

  // One RK4 step of (signed) size h.
  void step(FlowState& st, double h, bool transport) const {
    transport = transport && attenuated_;
    Deriv k1 = deriv(st.x, st.y, st.theta);
    CMat K1, K2, K3, K4;
    if (transport) K1 = -(gen(st.x, st.y, k1) * st.U);
    Deriv k2 = deriv(st.x + 0.5 * h * k1.x, st.y + 0.5 * h * k1.y, st.theta + 0.5 * h * k1.t);
    if (transport) K2 = -(gen(st.x + 0.5 * h * k1.x, st.y + 0.5 * h * k1.y, k2) * (st.U + 0.5 * h * K1));
    Deriv k3 = deriv(st.x + 0.5 * h * k2.x, st.y + 0.5 * h * k2.y, st.theta + 0.5 * h * k2.t);
    if (transport) K3 = -(gen(st.x + 0.5 * h * k2.x, st.y + 0.5 * h * k2.y, k3) * (st.U + 0.5 * h * K2));
    Deriv k4 = deriv(st.x + h * k3.x, st.y + h * k3.y, st.theta + h * k3.t);
    if (transport) K4 = -(gen(st.x + h * k3.x, st.y + h * k3.y, k4) * (st.U + h * K3));
    st.x += h / 6.0 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
    st.y += h / 6.0 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y);
    st.theta += h / 6.0 * (k1.t + 2 * k2.t + 2 * k3.t + k4.t);
    if (transport) st.U += h / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4);
  }

  // A(gamma') + Phi at a point for the given unit direction theta.
  CMat generator(double x, double y, double theta) const {
    return gen(x, y, deriv(x, y, theta));
  }

  // Integrates until the radius is crossed; visit(t, state) is called at every accepted node.
  template <class Visit>
  TraceEnd trace(const PhasePoint& p, const TraceOptions& o, Visit&& visit) const {
    FlowState st = start(p);
    const double sgn = o.backward ? -1.0 : 1.0;
    const double r2max = o.radius * o.radius;
    TraceEnd end;
    double t = 0;
    visit(0.0, st);
    // A start on the circle that immediately leaves has zero length.
    if (std::abs(st.x * st.x + st.y * st.y - r2max) < 1e-10) {
      const Deriv d = deriv(st.x, st.y, st.theta);
      const double radial = sgn * (st.x * d.x + st.y * d.y);
      if (radial > 1e-14) {
        end.state = st;
        return end;
      }
    }
    int since = 0;
    while (true) {
      FlowState next = st;
      step(next, sgn * o.dt, o.transport);
      if (next.x * next.x + next.y * next.y > r2max) {
        end.state = locate_exit(st, sgn, o, end);
        end.time = t + end.time;
        end.steps += 1;
        visit(sgn * end.time, end.state);
        return end;
      }
      st = next;
      t += o.dt;
      ++end.steps;
      if (o.transport && attenuated_ && ++since == 64) {
        end.drift = std::max(end.drift, unitarize(st.U));
        since = 0;
      }
      visit(sgn * t, st);
      if (t > o.tmax) throw TrappedRay(p.x, p.y, p.theta, o.tmax);
    }
  }

  TraceEnd trace(const PhasePoint& p, const TraceOptions& o) const {
    return trace(p, o, [](double, const FlowState&) {});
  }

  // Integrates exactly k equal steps covering a signed time t_end.
  template <class Visit>
  FlowState uniform(const PhasePoint& p, double t_end, int k, bool transport, Visit&& visit, double* drift = nullptr) const {
    FlowState st = start(p);
    const double h = t_end / k;
    visit(0, 0.0, st);
    for (int i = 1; i <= k; ++i) {
      step(st, h, transport);
      if (transport && attenuated_ && i % 64 == 0) {
        double d = unitarize(st.U);
        if (drift) *drift = std::max(*drift, d);
      }
      visit(i, i * h, st);
    }
    return st;
  }

 private:
  struct Deriv {
    double x, y, t;
  };

  Deriv deriv(double x, double y, double theta) const {
    const MetricSample m = scene_.metric(x, y);
    const double e = std::exp(-m.sigma), c = std::cos(theta), s = std::sin(theta);
    return {e * c, e * s, e * (-s * m.sx + c * m.sy) + m.lambda};
  }

  CMat gen(double x, double y, const Deriv& d) const {
    att_.eval(x, y, ax_, ay_, phi_);
    return ax_ * d.x + ay_ * d.y + phi_;
  }

  // Bracketed root of |gamma|^2 - R^2 over the step size (Illinois variant of regula falsi).
  FlowState locate_exit(const FlowState& inside, double sgn, const TraceOptions& o, TraceEnd& end) const {
    const double r2 = o.radius * o.radius;
    auto f = [&](double h, FlowState* out) {
      FlowState s = inside;
      step(s, sgn * h, o.transport);
      if (out) *out = s;
      return s.x * s.x + s.y * s.y - r2;
    };
    double a = 0, fa = inside.x * inside.x + inside.y * inside.y - r2;
    double b = o.dt, fb = f(b, nullptr);
    // Starting on the circle: find an interior point before the crossing.
    if (fa >= 0) {
      double h = b;
      bool found = false;
      for (int i = 0; i < 40; ++i) {
        h *= 0.5;
        double fh = f(h, nullptr);
        if (fh < 0) {
          a = h;
          fa = fh;
          found = true;
          break;
        }
      }
      if (!found) {
        end.time = 0;
        return inside;
      }
    }
    FlowState best;
    int side = 0;
    for (int it = 0; it < 200; ++it) {
      double c = (a * fb - b * fa) / (fb - fa);
      if (!(c > a && c < b)) c = 0.5 * (a + b);
      double fc = f(c, &best);
      if (std::abs(fc) <= o.tol || (b - a) < 1e-15) {
        end.time = c;
        return best;
      }
      if (fc < 0) {
        a = c;
        fa = fc;
        if (side == -1) fb *= 0.5;
        side = -1;
      } else {
        b = c;
        fb = fc;
        if (side == 1) fa *= 0.5;
        side = 1;
      }
    }
    end.time = 0.5 * (a + b);
    f(end.time, &best);
    return best;
  }

  const Scene& scene_;
  const Attenuation& att_;
  int n_;
  bool attenuated_ = true;
  mutable CMat ax_, ay_, phi_;
};

inline TraceOptions trace_options(const Scene& scene) {
  TraceOptions o;
  o.dt = scene.ode().dt;
  o.tol = scene.ode().tol;
  o.tmax = scene.ode().tmax;
  return o;
}

struct RaySample {
  std::vector<double> t;
  std::vector<PhasePoint> points;
  double tau = 0;  // signed exit time
};

// Fixed-step trajectory from an arbitrary phase point until it leaves M, forward (+1) or backward (-1).
inline RaySample integrate_ray(const Scene& scene, const PhasePoint& p, int direction = 1) {
  FlowIntegrator flow(scene);
  TraceOptions o = trace_options(scene);
  o.backward = direction < 0;
  RaySample r;
  TraceEnd e = flow.trace(p, o, [&](double t, const FlowState& s) {
    r.t.push_back(t);
    r.points.push_back(s.point());
  });
  r.tau = direction < 0 ? -e.time : e.time;
  return r;
}

inline double exit_time(const Scene& scene, double s, double phi) {
  FlowIntegrator flow(scene);
  return flow.trace(inflow_point(s, phi), trace_options(scene)).time;
}

struct ScatterResult {
  double s_out = 0, phi_out = 0, tau = 0;
};

// Scattering relation on the inflow boundary; the exit angle is measured from the outward normal.
inline ScatterResult scattering_relation(const Scene& scene, double s, double phi) {
  FlowIntegrator flow(scene);
  TraceEnd e = flow.trace(inflow_point(s, phi), trace_options(scene));
  auto c = outflow_coords(e.state.point());
  return {c[0], c[1], e.time};
}

// Inverse of the scattering relation by backward tracing from an outflow point.
inline ScatterResult inverse_scattering(const Scene& scene, double s_out, double phi_out) {
  FlowIntegrator flow(scene);
  TraceOptions o = trace_options(scene);
  o.backward = true;
  TraceEnd e = flow.trace(outflow_point(s_out, phi_out), o);
  auto c = inflow_coords(e.state.point());
  return {c[0], c[1], e.time};
}

struct SimplicityReport {
  double min_margin = 0;
  double margin_s = 0;
  int margin_orientation = 1;
  double max_exit_time = 0;
  bool trapped = false;
  bool simple = false;
  std::string reason;
};

// Convexity margin on the boundary tangent directions and a fan of inflow rays.
inline SimplicityReport simplicity_report(const Scene& scene, int ns = 0, int nfan = 17) {
  if (ns <= 0) ns = scene.grid().ns;
  SimplicityReport rep;
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (int j = 0; j < ns; ++j) {
    const double s = kTwoPi * j / ns;
    for (int o : {1, -1}) {
      const double m = convexity_margin(scene, s, o);
      if (m < rep.min_margin) {
        rep.min_margin = m;
        rep.margin_s = s;
        rep.margin_orientation = o;
      }
    }
  }
  FlowIntegrator flow(scene);
  TraceOptions opt = trace_options(scene);
  opt.dt = std::max(opt.dt, 5e-3);
  for (int j = 0; j < ns && !rep.trapped; ++j) {
    for (int k = 0; k < nfan; ++k) {
      const double phi = -0.5 * kPi + kPi * (k + 0.5) / nfan;
      try {
        rep.max_exit_time = std::max(rep.max_exit_time, flow.trace(inflow_point(kTwoPi * j / ns, phi), opt).time);
      } catch (const TrappedRay&) {
        rep.trapped = true;
        break;
      }
    }
  }
  rep.simple = rep.min_margin > 0 && !rep.trapped;
  if (rep.min_margin <= 0) rep.reason = "boundary is not strictly magnetic convex";
  else if (rep.trapped) rep.reason = "trapped ray";
  return rep;
}

}  // namespace magray
