#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "magray/types.hpp"

namespace magray {

// Cartesian grid with n nodes per axis spanning [-1, 1] plus pad extra layers on every side.
// Nodes inside the closed unit disk carry data; exterior nodes near the circle hold extrapolated ghosts.
class SpatialGrid {
 public:
  explicit SpatialGrid(int n = 64, int pad = 3) : n_(n), pad_(pad), m_(n + 2 * pad), h_(2.0 / (n - 1)) {
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < m_; ++j) {
        const double x = coord(i), y = coord(j), r = std::hypot(x, y);
        if (r <= 1.0 + 1e-12) disk_.push_back(index(i, j));
        else if (r <= 1.0 + 3.0 * h_ + 1e-12) ghost_.push_back(index(i, j));
      }
  }

  int n() const { return n_; }
  int pad() const { return pad_; }
  int side() const { return m_; }
  int size() const { return m_ * m_; }
  double h() const { return h_; }
  double coord(int i) const { return -1.0 + (i - pad_) * h_; }
  int index(int i, int j) const { return i * m_ + j; }
  int ix(int idx) const { return idx / m_; }
  int iy(int idx) const { return idx % m_; }
  double x(int idx) const { return coord(ix(idx)); }
  double y(int idx) const { return coord(iy(idx)); }
  bool in_disk(int idx) const { return std::hypot(x(idx), y(idx)) <= 1.0 + 1e-12; }
  const std::vector<int>& disk_nodes() const { return disk_; }
  const std::vector<int>& ghost_nodes() const { return ghost_; }

  // Cubic Lagrange weights on the 4 x 4 block around (x, y).
  void stencil(double x, double y, std::array<int, 16>& idx, std::array<double, 16>& w) const {
    int i0, j0;
    std::array<double, 4> wx, wy;
    axis(x, i0, wx);
    axis(y, j0, wy);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        idx[static_cast<std::size_t>(4 * a + b)] = index(i0 + a, j0 + b);
        w[static_cast<std::size_t>(4 * a + b)] = wx[static_cast<std::size_t>(a)] * wy[static_cast<std::size_t>(b)];
      }
  }

 private:
  void axis(double x, int& i0, std::array<double, 4>& w) const {
    const double u = (x - coord(0)) / h_;
    int c = static_cast<int>(std::floor(u));
    c = std::clamp(c, 1, m_ - 3);
    i0 = c - 1;
    const double t = u - c;
    w[0] = -t * (t - 1) * (t - 2) / 6.0;
    w[1] = (t + 1) * (t - 1) * (t - 2) / 2.0;
    w[2] = -(t + 1) * t * (t - 2) / 2.0;
    w[3] = (t + 1) * t * (t - 1) / 6.0;
  }

  int n_, pad_, m_;
  double h_;
  std::vector<int> disk_, ghost_;
};

// Grid data with n components per node, stored node-major.
struct GridField {
  std::shared_ptr<const SpatialGrid> grid;
  int n = 1;
  std::vector<cd> v;

  GridField() = default;
  GridField(std::shared_ptr<const SpatialGrid> g, int comps)
      : grid(std::move(g)), n(comps), v(static_cast<std::size_t>(grid->size() * comps), cd(0.0)) {}

  cd& at(int node, int c = 0) { return v[static_cast<std::size_t>(node * n + c)]; }
  const cd& at(int node, int c = 0) const { return v[static_cast<std::size_t>(node * n + c)]; }

  template <class F>
  static GridField sample(std::shared_ptr<const SpatialGrid> g, int comps, F&& f) {
    GridField out(g, comps);
    for (int k = 0; k < g->size(); ++k) {
      CVec val = f(g->x(k), g->y(k));
      for (int c = 0; c < comps; ++c) out.at(k, c) = val(c);
    }
    return out;
  }

  // Bicubic interpolation of all components; size n is unbounded.
  Eigen::VectorXcd interpolate(double x, double y) const {
    std::array<int, 16> idx;
    std::array<double, 16> w;
    grid->stencil(x, y, idx, w);
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
    for (int s = 0; s < 16; ++s)
      for (int c = 0; c < n; ++c) out(c) += w[static_cast<std::size_t>(s)] * at(idx[static_cast<std::size_t>(s)], c);
    return out;
  }

  GridField& operator+=(const GridField& o) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += o.v[k];
    return *this;
  }
  GridField& operator*=(cd s) {
    for (auto& a : v) a *= s;
    return *this;
  }
};

// Fourth-order first derivative along one axis; one-sided five-point stencils at the padded edges.
inline void derivative_line(const cd* f, std::ptrdiff_t stride, int m, double h, cd* out, std::ptrdiff_t ostride) {
  auto F = [&](int i) { return f[i * stride]; };
  const double s = 1.0 / (12.0 * h);
  for (int i = 0; i < m; ++i) {
    cd d;
    if (i >= 2 && i < m - 2) d = (F(i - 2) - 8.0 * F(i - 1) + 8.0 * F(i + 1) - F(i + 2)) * s;
    else if (i == 0) d = (-25.0 * F(0) + 48.0 * F(1) - 36.0 * F(2) + 16.0 * F(3) - 3.0 * F(4)) * s;
    else if (i == 1) d = (-3.0 * F(0) - 10.0 * F(1) + 18.0 * F(2) - 6.0 * F(3) + F(4)) * s;
    else if (i == m - 2) d = (3.0 * F(m - 1) + 10.0 * F(m - 2) - 18.0 * F(m - 3) + 6.0 * F(m - 4) - F(m - 5)) * s;
    else d = (25.0 * F(m - 1) - 48.0 * F(m - 2) + 36.0 * F(m - 3) - 16.0 * F(m - 4) + 3.0 * F(m - 5)) * s;
    out[i * ostride] = d;
  }
}

inline GridField diff_x(const GridField& f) {
  GridField out(f.grid, f.n);
  const int m = f.grid->side();
  for (int j = 0; j < m; ++j)
    for (int c = 0; c < f.n; ++c)
      derivative_line(&f.v[static_cast<std::size_t>(f.grid->index(0, j) * f.n + c)], static_cast<std::ptrdiff_t>(m) * f.n,
                      m, f.grid->h(), &out.v[static_cast<std::size_t>(f.grid->index(0, j) * f.n + c)],
                      static_cast<std::ptrdiff_t>(m) * f.n);
  return out;
}

inline GridField diff_y(const GridField& f) {
  GridField out(f.grid, f.n);
  const int m = f.grid->side();
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < f.n; ++c)
      derivative_line(&f.v[static_cast<std::size_t>(f.grid->index(i, 0) * f.n + c)], f.n, m, f.grid->h(),
                      &out.v[static_cast<std::size_t>(f.grid->index(i, 0) * f.n + c)], f.n);
  return out;
}

// Fills ghost nodes from disk data by local weighted least-squares polynomial fits.
// The weights depend only on the grid and are computed once.
class GhostExtrapolator {
 public:
  explicit GhostExtrapolator(std::shared_ptr<const SpatialGrid> g, int degree = 5, int points = 80)
      : grid_(std::move(g)) {
    const SpatialGrid& G = *grid_;
    const int m = G.side();
    const double h = G.h();
    for (int gidx : G.ghost_nodes()) {
      const int gi = G.ix(gidx), gj = G.iy(gidx);
      const double gx = G.x(gidx), gy = G.y(gidx);
      std::vector<std::pair<double, int>> cand;
      for (int i = std::max(0, gi - 9); i <= std::min(m - 1, gi + 9); ++i)
        for (int j = std::max(0, gj - 9); j <= std::min(m - 1, gj + 9); ++j) {
          const int k = G.index(i, j);
          if (G.in_disk(k)) cand.push_back({std::hypot(G.x(k) - gx, G.y(k) - gy), k});
        }
      std::sort(cand.begin(), cand.end());
      const int K = std::min<int>(points, static_cast<int>(cand.size()));
      const int P = (degree + 1) * (degree + 2) / 2;
      Eigen::MatrixXd A(K, P);
      Eigen::VectorXd wt(K);
      for (int r = 0; r < K; ++r) {
        const int k = cand[static_cast<std::size_t>(r)].second;
        const double u = (G.x(k) - gx) / h, v = (G.y(k) - gy) / h;
        int c = 0;
        for (int d = 0; d <= degree; ++d)
          for (int a = 0; a <= d; ++a) A(r, c++) = std::pow(u, d - a) * std::pow(v, a);
        wt(r) = 1.0 / (1.0 + 0.1 * cand[static_cast<std::size_t>(r)].first / h);
      }
      Eigen::MatrixXd Aw = wt.asDiagonal() * A;
      // Row 0 of the weighted pseudo-inverse evaluates the fit at the ghost node.
      Eigen::MatrixXd pinv = Aw.completeOrthogonalDecomposition().pseudoInverse();
      Entry e;
      e.ghost = gidx;
      for (int r = 0; r < K; ++r) {
        e.src.push_back(cand[static_cast<std::size_t>(r)].second);
        e.w.push_back(pinv(0, r) * wt(r));
      }
      entries_.push_back(std::move(e));
    }
  }

  void fill(GridField& f) const {
    for (const Entry& e : entries_)
      for (int c = 0; c < f.n; ++c) {
        cd acc = 0;
        for (std::size_t r = 0; r < e.src.size(); ++r) acc += e.w[r] * f.at(e.src[r], c);
        f.at(e.ghost, c) = acc;
      }
  }

  // Same extrapolation applied to an array of scalar values laid out like grid nodes with a stride.
  template <class T>
  void fill_strided(T* data, int stride, int comps) const {
    for (const Entry& e : entries_)
      for (int c = 0; c < comps; ++c) {
        T acc = T(0);
        for (std::size_t r = 0; r < e.src.size(); ++r)
          acc += e.w[r] * data[static_cast<std::size_t>(e.src[r]) * stride + c];
        data[static_cast<std::size_t>(e.ghost) * stride + c] = acc;
      }
  }

  const std::shared_ptr<const SpatialGrid>& grid() const { return grid_; }

 private:
  struct Entry {
    int ghost;
    std::vector<int> src;
    std::vector<double> w;
  };
  std::shared_ptr<const SpatialGrid> grid_;
  std::vector<Entry> entries_;
};

}  // namespace magray
