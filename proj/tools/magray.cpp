// magray command line: tracing, transforms, adjoints, probes and the verification suite.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "magray/harness.hpp"

using namespace magray;
using nlohmann::json;

namespace {

// Exit codes: checks passed, a check failed, infrastructure error.
constexpr int kPass = 0, kFail = 1, kInfra = 2;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("malformed JSON in " + path + ": " + e.what());
  }
}

// Destination stream: a file, or stdout for "" and "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw Error("cannot write " + path);
    }
  }
  std::ostream& operator*() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

std::vector<Expr> expr_list(const json& j, int n, const std::string& what) {
  std::vector<Expr> out;
  if (j.is_string()) out.push_back(parse_expression(j.get<std::string>()));
  else if (j.is_number()) out.push_back(Expr(j.get<double>()));
  else if (j.is_array())
    for (const json& e : j) out.push_back(e.is_number() ? Expr(e.get<double>()) : parse_expression(e.get<std::string>()));
  else throw Error(what + ": expected an expression or a list of expressions");
  if (static_cast<int>(out.size()) != n)
    throw RankMismatch(what + ": " + std::to_string(out.size()) + " components for a rank " + std::to_string(n) + " scene");
  return out;
}

// {"order": m, "components": [c_0, ..., c_m]}; c_j is the component with m - j indices x and j indices y,
// one expression per bundle component. Order 0 also accepts a flat list of n expressions.
TensorExpr read_tensor(const std::string& path, int n, int order = -1) {
  const json j = read_json(path);
  const int m = j.value("order", order < 0 ? 0 : order);
  if (order >= 0 && m != order) throw Error(path + ": field has order " + std::to_string(m) + ", expected " + std::to_string(order));
  if (m < 0) throw Error(path + ": negative order");
  if (!j.contains("components")) throw Error(path + ": missing \"components\"");
  const json& c = j["components"];
  TensorExpr t;
  t.order = m;
  if (m == 0 && c.is_array() && static_cast<int>(c.size()) == n && (c.empty() || !c[0].is_array()) && n > 1) {
    t.comps.push_back(expr_list(c, n, path));
    return t;
  }
  if (!c.is_array() || static_cast<int>(c.size()) != m + 1)
    throw Error(path + ": order " + std::to_string(m) + " needs " + std::to_string(m + 1) + " components");
  for (const json& e : c) t.comps.push_back(expr_list(e, n, path));
  return t;
}

Field read_function(const std::string& path, int n) { return Field::from_exprs(read_tensor(path, n, 0).comps[0]); }

FormField read_form(const std::string& path, int n) {
  const TensorExpr t = read_tensor(path, n, 1);
  return FormField::from_exprs(OneFormExpr{t.comps[0], t.comps[1]});
}

json complex_json(cd z) { return json::array({z.real(), z.imag()}); }

cd complex_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_array() || j.size() != 2) throw Error("complex values are [re, im] pairs");
  return {j[0].get<double>(), j[1].get<double>()};
}

json boundary_json(const BoundaryFn& h) {
  json vals = json::array();
  for (cd z : h.v) vals.push_back(complex_json(z));
  return {{"ns", h.grid.ns}, {"nphi", h.grid.nphi}, {"n", h.n}, {"s", h.grid.s}, {"phi", h.grid.phi}, {"values", vals}};
}

BoundaryFn boundary_from(const json& j) {
  BoundaryFn h(BoundaryGrid(j.at("ns").get<int>(), j.at("nphi").get<int>()), j.value("n", 1));
  const json& v = j.at("values");
  if (v.size() != h.v.size()) throw Error("boundary data: expected " + std::to_string(h.v.size()) + " values");
  for (std::size_t i = 0; i < h.v.size(); ++i) h.v[i] = complex_from(v[i]);
  return h;
}

void boundary_csv(std::ostream& os, const BoundaryFn& h) {
  os << "s,phi,component,re,im\n" << std::setprecision(17);
  for (int j = 0; j < h.grid.ns; ++j)
    for (int k = 0; k < h.grid.nphi; ++k)
      for (int c = 0; c < h.n; ++c) {
        const cd z = h.at(h.grid.index(j, k), c);
        os << h.grid.s[static_cast<std::size_t>(j)] << ',' << h.grid.phi[static_cast<std::size_t>(k)] << ',' << c << ',' << z.real() << ','
           << z.imag() << '\n';
      }
}

json matrix_json(const CMat& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(complex_json(m(r, c)));
    rows.push_back(row);
  }
  return rows;
}

json pair_report_json(const PairReport& r) {
  return {{"compatibility", r.compatibility}, {"residual", r.residual}, {"iterations", r.iterations}, {"stalled", r.stalled}};
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string t; std::getline(ss, t, ',');)
    if (!t.empty()) out.push_back(t);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attenuated magnetic ray transforms on the unit disk"};
  app.require_subcommand(1);
  std::string scene_path, out;
  int ns = 0, nphi = 0;
  auto scene_opts = [&](CLI::App* c) {
    c->add_option("--scene", scene_path, "scene JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--out,-o", out, "output file (default stdout)");
  };
  auto grid_opts = [&](CLI::App* c) {
    c->add_option("--ns", ns, "boundary angles (default from scene)");
    c->add_option("--nphi", nphi, "inflow angles (default from scene)");
  };
  auto grid = [&](const Scene& s) { return BoundaryGrid(ns > 0 ? ns : s.grid().ns, nphi > 0 ? nphi : s.grid().nphi); };

  double s0 = 0, phi0 = 0;
  auto* trace = app.add_subcommand("trace", "trajectory from an inflow point as CSV t,x,y,theta");
  scene_opts(trace);
  trace->add_option("--s", s0, "boundary angle");
  trace->add_option("--phi", phi0, "angle from the inward normal, |phi| < pi/2");

  auto* scatter = app.add_subcommand("scatter", "scattering relation table as CSV s,phi,s_out,phi_out,tau");
  scene_opts(scatter);
  grid_opts(scatter);

  std::string field, format = "csv";
  int order = -1;
  auto* transform = app.add_subcommand("transform", "attenuated transform of a symmetric tensor field");
  scene_opts(transform);
  grid_opts(transform);
  transform->add_option("--field", field, "field JSON")->required()->check(CLI::ExistingFile);
  transform->add_option("--order", order, "tensor order (checked against the file)");
  transform->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  auto* scatterdata = app.add_subcommand("scatterdata", "scattering data C on the outflow grid as JSON");
  scene_opts(scatterdata);
  grid_opts(scatterdata);

  std::string data;
  int nx = 32, ntheta = 64;
  auto* adjoint = app.add_subcommand("adjoint", "(I^0)^* h and (I^1)^* h at disk grid nodes as CSV");
  scene_opts(adjoint);
  adjoint->add_option("--data", data, "boundary data JSON as written by transform --format json")->required()->check(CLI::ExistingFile);
  adjoint->add_option("--nx", nx, "spatial grid size");
  adjoint->add_option("--ntheta", ntheta, "fiber quadrature size");

  double kappa = 16;
  auto* probe = app.add_subcommand("probe-symbol", "normal-operator block amplitudes at kappa and 2 kappa as JSON");
  scene_opts(probe);
  probe->add_option("--kappa", kappa, "probe frequency");

  std::string fpath, wpath, history;
  auto* solve = app.add_subcommand("solve-adjoint", "least-squares w with (I^0)^* w = f, (I^1)^* w = omega");
  scene_opts(solve);
  grid_opts(solve);
  solve->add_option("--f", fpath, "function JSON (order 0)")->required()->check(CLI::ExistingFile);
  solve->add_option("--omega", wpath, "1-form JSON (order 1)")->required()->check(CLI::ExistingFile);
  solve->add_option("--history", history, "residual history CSV");

  std::string checks;
  std::uint64_t seed = SuiteOptions{}.seed;
  auto* verify = app.add_subcommand("verify", "run identity checks; exit 0 pass, 1 failure, 2 infrastructure error");
  scene_opts(verify);
  verify->add_option("--checks", checks, "comma-separated subset of: " + [] {
    std::string s;
    for (const auto& n : check_names()) s += (s.empty() ? "" : ",") + n;
    return s;
  }());
  verify->add_option("--seed", seed, "random seed");

  auto* range = app.add_subcommand("range", "u = I^0 f + I^1 omega against its range representation");
  scene_opts(range);
  range->add_option("--f", fpath, "function JSON (order 0)")->required()->check(CLI::ExistingFile);
  range->add_option("--omega", wpath, "1-form JSON (order 1)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInfra;
  }

  try {
    const Scene scene = load_scene(scene_path);
    const int n = scene.rank();

    if (*trace) {
      const RaySample r = integrate_ray(scene, inflow_point(s0, phi0));
      Output o(out);
      *o << "t,x,y,theta\n" << std::setprecision(17);
      for (std::size_t i = 0; i < r.t.size(); ++i) *o << r.t[i] << ',' << r.points[i].x << ',' << r.points[i].y << ',' << r.points[i].theta << '\n';
      return kPass;
    }
    if (*scatter) {
      const BoundaryGrid g = grid(scene);
      std::vector<ScatterResult> res(static_cast<std::size_t>(g.size()));
      parallel_for(g.size(), [&](int i) {
        res[static_cast<std::size_t>(i)] = scattering_relation(scene, g.s[static_cast<std::size_t>(i / g.nphi)], g.phi[static_cast<std::size_t>(i % g.nphi)]);
      });
      Output o(out);
      *o << "s,phi,s_out,phi_out,tau\n" << std::setprecision(17);
      for (int j = 0; j < g.ns; ++j)
        for (int k = 0; k < g.nphi; ++k) {
          const ScatterResult& r = res[static_cast<std::size_t>(j * g.nphi + k)];
          *o << g.s[static_cast<std::size_t>(j)] << ',' << g.phi[static_cast<std::size_t>(k)] << ',' << r.s_out << ',' << r.phi_out << ',' << r.tau << '\n';
        }
      return kPass;
    }
    if (*transform) {
      const TensorExpr t = read_tensor(field, n, order);
      const ForwardRayTable table(scene, grid(scene), table_options(scene));
      const BoundaryFn h = ray_transform(table, CompiledModes(tensor_modes(scene, t)));
      Output o(out);
      if (format == "json") *o << boundary_json(h).dump(2) << '\n';
      else boundary_csv(*o, h);
      return kPass;
    }
    if (*scatterdata) {
      const ScatteringData d = scattering_data(scene, grid(scene));
      json C = json::array();
      for (const CMat& c : d.C) C.push_back(matrix_json(c));
      Output o(out);
      *o << json{{"ns", d.grid.ns}, {"nphi", d.grid.nphi}, {"n", d.n}, {"s_out", d.grid.s}, {"phi_out", d.grid.phi},
                 {"entry_s", d.entry_s}, {"entry_phi", d.entry_phi}, {"C", C}}
                .dump(2)
         << '\n';
      return kPass;
    }
    if (*adjoint) {
      const BoundaryFn h = boundary_from(read_json(data));
      if (h.n != n) throw RankMismatch("boundary data has " + std::to_string(h.n) + " components, scene rank " + std::to_string(n));
      const SpatialGrid g(nx);
      const AdjointResult r = adjoint_transform(scene, h, node_points(g, g.disk_nodes()), ntheta, AdjointPart::full, table_options(scene));
      Output o(out);
      *o << "x,y,component,f_re,f_im,wx_re,wx_im,wy_re,wy_im\n" << std::setprecision(17);
      for (std::size_t i = 0; i < r.points.size(); ++i)
        for (int c = 0; c < n; ++c)
          *o << r.points[i].x << ',' << r.points[i].y << ',' << c << ',' << r.f[i](c).real() << ',' << r.f[i](c).imag() << ',' << r.wx[i](c).real()
             << ',' << r.wx[i](c).imag() << ',' << r.wy[i](c).real() << ',' << r.wy[i](c).imag() << '\n';
      return kPass;
    }
    if (*probe) {
      const SymbolStudy st = symbol_study(scene, {kappa * std::cos(0.3), kappa * std::sin(0.3)});
      auto rec = [](const ProbeRecord& p) {
        return json{{"kappa", p.kappa}, {"a00", p.a00}, {"a01", p.a01}, {"a10", p.a10}, {"a11", p.a11}};
      };
      Output o(out);
      *o << json{{"low", rec(st.low)},
                 {"high", rec(st.high)},
                 {"decay_00", st.decay()},
                 {"ratio_11_00", st.diagonal_ratio()},
                 {"offdiag_low", st.offdiag_low()},
                 {"offdiag_high", st.offdiag_high()}}
                .dump(2)
         << '\n';
      return kPass;
    }
    if (*solve) {
      const AdjointPairResult r = solve_adjoint_pair(scene, read_function(fpath, n), read_form(wpath, n), grid(scene));
      if (!history.empty()) {
        Output h(history);
        *h << "iteration,residual\n" << std::setprecision(17);
        for (std::size_t i = 0; i < r.solution.report.history.size(); ++i) *h << i << ',' << r.solution.report.history[i] << '\n';
      }
      Output o(out);
      *o << json{{"report", pair_report_json(r.solution.report)}, {"w", boundary_json(r.w)}}.dump(2) << '\n';
      return kPass;
    }
    if (*verify) {
      SuiteOptions so;
      so.seed = seed;
      const SuiteReport rep = run_suite(scene, checks.empty() ? check_names() : split(checks), so);
      for (const CheckResult& c : rep.checks) std::cerr << status_name(c.status) << ' ' << c.name << (c.detail.empty() ? "" : ": " + c.detail) << '\n';
      if (out.empty() || out == "-") std::cout << rep.to_json().dump(2) << '\n';
      else rep.write(out);
      return rep.exit_code() == 0 ? kPass : kFail;
    }
    if (*range) {
      const RangeMembership m = range_membership(scene, read_function(fpath, n), read_form(wpath, n));
      const RangeReport& r = m.report;
      const bool ok = r.residual < 5e-2;
      Output o(out);
      *o << json{{"in_range", ok},
                 {"u_norm", r.u_norm},
                 {"residual", r.residual},
                 {"decomposition_residual", r.decomposition},
                 {"beta_curl_residual", r.beta_curl},
                 {"beta_div_residual", r.beta_div},
                 {"compatibility", r.compatibility},
                 {"pair_residual", r.pair_residual},
                 {"iterations", r.iterations},
                 {"harmonic_dimension", r.harmonic_dimension},
                 {"outer_coefficients", [&] {
                    json c = json::array();
                    for (Eigen::Index i = 0; i < m.outer.size(); ++i) c.push_back(complex_json(m.outer(i)));
                    return c;
                  }()}}
                .dump(2)
         << '\n';
      return ok ? kPass : kFail;
    }
  } catch (const std::exception& e) {
    std::cerr << "magray: " << e.what() << '\n';
    return kInfra;
  }
  return kInfra;
}
