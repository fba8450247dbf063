#pragma once

#include <cmath>
#include <vector>

#include "magray/geometry.hpp"

namespace magray {

struct GaussRule {
  std::vector<double> nodes, weights;  // on [-1, 1], ascending
};

// Newton iteration on Legendre polynomials.
inline GaussRule gauss_legendre(int n) {
  GaussRule r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5)), pp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * pp * pp);
    r.nodes[static_cast<std::size_t>(i)] = -z;
    r.nodes[static_cast<std::size_t>(n - 1 - i)] = z;
    r.weights[static_cast<std::size_t>(i)] = w;
    r.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return r;
}

// Composite Simpson weights for k (even) equal steps of size h.
inline std::vector<double> simpson_weights(int k, double h) {
  std::vector<double> w(static_cast<std::size_t>(k + 1));
  for (int i = 0; i <= k; ++i) w[static_cast<std::size_t>(i)] = (i == 0 || i == k) ? 1.0 : (i % 2 ? 4.0 : 2.0);
  for (double& v : w) v *= h / 3.0;
  return w;
}

// Tensor grid on the inflow (or outflow) boundary: s uniform, phi at Gauss-Legendre nodes in (-pi/2, pi/2).
struct BoundaryGrid {
  int ns = 64, nphi = 32;
  std::vector<double> s, phi, wphi;

  BoundaryGrid() = default;
  BoundaryGrid(int ns_, int nphi_) : ns(ns_), nphi(nphi_) {
    const GaussRule g = gauss_legendre(nphi);
    for (int j = 0; j < ns; ++j) s.push_back(kTwoPi * j / ns);
    for (int k = 0; k < nphi; ++k) {
      phi.push_back(0.5 * kPi * g.nodes[static_cast<std::size_t>(k)]);
      wphi.push_back(0.5 * kPi * g.weights[static_cast<std::size_t>(k)]);
    }
  }
  explicit BoundaryGrid(const GridParams& g) : BoundaryGrid(g.ns, g.nphi) {}

  int size() const { return ns * nphi; }
  int index(int j, int k) const { return j * nphi + k; }
  double ds() const { return kTwoPi / ns; }
  // Weight of node (j, k) in the mu-measure.
  double mu_weight(const Scene& scene, int j, int k) const {
    return ds() * wphi[static_cast<std::size_t>(k)] * mu_density(scene, s[static_cast<std::size_t>(j)], phi[static_cast<std::size_t>(k)]);
  }
  std::vector<double> mu_weights(const Scene& scene) const {
    std::vector<double> w(static_cast<std::size_t>(size()));
    for (int j = 0; j < ns; ++j)
      for (int k = 0; k < nphi; ++k) w[static_cast<std::size_t>(index(j, k))] = mu_weight(scene, j, k);
    return w;
  }
};

// Full fibers over the boundary: psi measured from the inward normal, offset by half a step so that
// no node is tangent. Nodes with |psi| < pi/2 are inflow.
struct FiberBoundaryGrid {
  int ns = 64, npsi = 64;
  std::vector<double> s, psi;

  FiberBoundaryGrid() = default;
  FiberBoundaryGrid(int ns_, int npsi_) : ns(ns_), npsi(npsi_) {
    for (int j = 0; j < ns; ++j) s.push_back(kTwoPi * j / ns);
    for (int l = 0; l < npsi; ++l) psi.push_back(-kPi + (l + 0.5) * kTwoPi / npsi);
  }
  int size() const { return ns * npsi; }
  int index(int j, int l) const { return j * npsi + l; }
  PhasePoint point(int j, int l) const {
    return inflow_point(s[static_cast<std::size_t>(j)], psi[static_cast<std::size_t>(l)]);
  }
  bool inflow(int l) const { return std::abs(psi[static_cast<std::size_t>(l)]) < 0.5 * kPi; }
};

// Polar product rule on the unit disk: Gauss-Legendre in r (weight r dr), uniform in angle.
struct DiskQuadrature {
  std::vector<double> x, y, w;  // w integrates against dx dy

  DiskQuadrature() = default;
  DiskQuadrature(int nr, int na) {
    const GaussRule g = gauss_legendre(nr);
    for (int i = 0; i < nr; ++i) {
      const double r = 0.5 * (g.nodes[static_cast<std::size_t>(i)] + 1.0);
      const double wr = 0.5 * g.weights[static_cast<std::size_t>(i)] * r;
      for (int a = 0; a < na; ++a) {
        const double t = kTwoPi * (a + 0.5 * (i % 2)) / na;
        x.push_back(r * std::cos(t));
        y.push_back(r * std::sin(t));
        w.push_back(wr * kTwoPi / na);
      }
    }
  }
  int size() const { return static_cast<int>(x.size()); }
};

}  // namespace magray
