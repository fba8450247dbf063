// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

#include "magray/harness.hpp"

using namespace magray;

namespace {

constexpr std::uint64_t kSeed = 20240601;

Scene zero() { return make_scene(1, "0", "0", {"0"}, {"0"}, {"0"}); }

Scene magnetic() { return make_scene(1, "0.1*(x^2 + y^2)", "0.3 + 0.1*y", {"0"}, {"0"}, {"0"}); }

Scene full1() {
  return make_scene(1, "0.1*(x^2 + y^2)", "0.3 + 0.1*y", {"i*0.3*y"}, {"i*(0.2*x - 0.1)"}, {"i*(0.5 + 0.2*x)"});
}

Scene full2() {
  return make_scene(2, "0.1*(x^2 + y^2) + 0.05*x", "0.3 + 0.1*y", {"i*0.3*y", "0.2*x", "-0.2*x", "0"},
                    {"0", "0.1", "-0.1", "-i*0.2*x*y"}, {"i*0.5", "0", "0", "i*0.2*x"});
}

// Invertible Higgs field with A = 0: the A = 0 path of the reconstruction.
Scene higgs() { return make_scene(1, "0.1*(x^2 + y^2)", "0.2", {"0"}, {"0"}, {"i*(0.5 + 0.2*x)"}); }

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

std::string summary(const CheckResult& r) {
  std::string s;
  for (const Metric& m : r.metrics) {
    if (m.rel == Metric::Rel::info) continue;
    if (!s.empty()) s += ' ';
    s += m.name + '=' + fmt(m.value) + (m.rel == Metric::Rel::below ? "<" : ">") + fmt(m.limit);
  }
  if (!r.detail.empty()) s += (s.empty() ? "" : " ") + std::string("(") + r.detail + ")";
  return s;
}

}  // namespace

int main() {
  const Scene z = zero(), m = magnetic(), f1 = full1(), f2 = full2(), h = higgs();
  const std::vector<std::pair<std::string, std::function<CheckResult()>>> criteria{
      {"unitarity",
       [&] { return combine("unitarity", {{"zero", check_unitarity(z)}, {"magnetic", check_unitarity(m)}, {"full2", check_unitarity(f2)}}); }},
      {"euclidean", [] { return check_euclidean(); }},
      {"fiber", [&] { return combine("fiber", {{"full1", check_fiber(f1, kSeed)}, {"full2", check_fiber(f2, kSeed)}}); }},
      {"commutator",
       [&] {
         return combine("commutator", {{"zero", check_commutator(z, kSeed)},
                                       {"magnetic", check_commutator(m, kSeed)},
                                       {"full2", check_commutator(f2, kSeed)}});
       }},
      {"pairing",
       [&] {
         return combine("pairing", {{"zero", check_pairing(z, kSeed)}, {"magnetic", check_pairing(m, kSeed)}, {"full2", check_pairing(f2, kSeed)}});
       }},
      {"kernel", [&] { return combine("kernel", {{"full1", check_kernel(f1, kSeed)}, {"full2", check_kernel(f2, kSeed)}}); }},
      {"gauge", [&] { return combine("gauge", {{"n1", check_gauge(f1, kSeed)}, {"n2", check_gauge(f2, kSeed)}}); }},
      {"range_identity",
       [&] {
         return combine("range_identity", {{"zero", check_range_identity(z, kSeed)},
                                           {"full1", check_range_identity(f1, kSeed)},
                                           {"full2", check_range_identity(f2, kSeed)}});
       }},
      {"symbol", [&] { return combine("symbol", {{"zero", check_symbol(z)}, {"full1", check_symbol(f1)}}); }},
      {"surjectivity",
       [&] {
         // 5 compatible and 5 incompatible instances in total.
         return combine("surjectivity", {{"zero", check_surjectivity(z, kSeed, 2, 3)},
                                         {"magnetic", check_surjectivity(m, kSeed + 1, 1, 2)},
                                         {"higgs", check_surjectivity(h, kSeed + 2, 2, 0)}});
       }},
      {"transition",
       [&] { return combine("transition", {{"zero", check_transition(z, kSeed)}, {"full1", check_transition(f1, kSeed)}, {"full2", check_transition(f2, kSeed)}}); }},
      {"range_membership", [&] { return check_range_membership(h, kSeed, 3); }},
      {"injectivity", [&] { return check_injectivity(z); }},
  };
  int failed = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t = std::chrono::steady_clock::now();
    CheckResult r(criteria[k].first);
    try {
      r = criteria[k].second();
    } catch (const std::exception& e) {
      r.status = Status::fail;
      r.detail = e.what();
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
    const bool ok = r.passed();
    failed += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << " [" << k + 1 << "] " << criteria[k].first << ": " << summary(r) << " [" << fmt(sec) << " s]"
              << std::endl;
  }
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << " in "
            << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) << " s" << std::endl;
  return failed == 0 ? 0 : 1;
}
