// Acceptance suite: one test case per criterion, each printing a single
// PASS/FAIL line with the measured quantity and its threshold.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "dtsa/dtsa.hpp"
#include "oracles.hpp"

using namespace dtsa;
namespace fs = std::filesystem;

namespace {

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void report(int criterion, bool ok, const std::string& detail) {
  std::printf("[criterion %2d] %s  %s\n", criterion, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  REQUIRE(ok);
}

fs::path scratch_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("dtsa_acceptance_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<NoiseSample> gaussian_noise(std::size_t n, std::size_t d, std::uint64_t seed) {
  SplitMix64 g(seed);
  std::vector<NoiseSample> out(n);
  for (auto& s : out) {
    s.xi = DenseVector(d);
    s.psi = DenseVector(d);
    for (std::size_t c = 0; c < d; ++c) {
      s.xi[c] = standard_normal(g);
      s.psi[c] = standard_normal(g);
    }
  }
  return out;
}

// five-state cycle-plus-uniform chain with rotating two-dimensional features
json gtd_system_doc() {
  const double tau = 6.283185307179586;
  json features = json::array();
  for (int s = 0; s < 5; ++s)
    features.push_back({1.09 * std::cos(tau * s / 5.0), 1.09 * std::sin(tau * s / 5.0)});
  json transitions = json::array();
  for (int s = 0; s < 5; ++s) {
    json row = json::array();
    for (int t = 0; t < 5; ++t) row.push_back(0.1 + (t == (s + 1) % 5 ? 0.5 : 0.0));
    transitions.push_back(row);
  }
  json rewards = json::array();
  for (int i = 0; i < 4; ++i) {
    json row = json::array();
    for (int s = 0; s < 5; ++s) row.push_back(0.9 * std::cos(tau * (s + i) / 5.0));
    rewards.push_back(row);
  }
  return {{"type", "gtd"},
          {"transitions", transitions},
          {"rewards", rewards},
          {"features", features},
          {"discount", 0.5}};
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j)
        if (v[j] < v[i] || (v[j] == v[i] && j < i)) r[i] += 1.0;
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("criterion 01: average-consistency identity") {
  Stopwatch watch;
  const std::vector<TopologyKind> kinds = {TopologyKind::ring, TopologyKind::path,
                                           TopologyKind::star, TopologyKind::complete,
                                           TopologyKind::erdos_renyi};
  double worst = 0.0;
  for (std::size_t t = 0; t < kinds.size(); ++t) {
    const std::size_t n = 6, d = 2;
    const Topology topo = build_topology(kinds[t], n, 0.5, 7 + t);
    const WeightMatrix w = metropolis_weights(topo);
    const WeightMatrix v = lazy_weights(topo, 0.4);
    const BlockSystem sys = random_instance(d, n, 1000 + t);
    const StepSchedule sched{0.5, 0.1};

    SplitMix64 g(55 + t);
    for (int trial = 0; trial < 10000; ++trial) {
      IterateState st = zero_state(n, d);
      st.k = trial % 100;
      for (double& x : st.X.a) x = standard_normal(g);
      for (double& x : st.Y.a) x = standard_normal(g);
      const auto noise = gaussian_noise(n, d, g.next());

      const IterateState out = step(st, sys, w, v, sched, noise);
      DenseVector xi_bar(d), psi_bar(d);
      for (const auto& s : noise) {
        xi_bar += s.xi;
        psi_bar += s.psi;
      }
      for (std::size_t c = 0; c < d; ++c) {
        xi_bar[c] /= static_cast<double>(n);
        psi_bar[c] /= static_cast<double>(n);
      }
      const auto [xb, yb] =
          averaged_step(row_mean(st.X), row_mean(st.Y), sys, sched, st.k, xi_bar, psi_bar);
      const DenseVector mx = row_mean(out.X);
      const DenseVector my = row_mean(out.Y);
      for (std::size_t c = 0; c < d; ++c) {
        worst = std::max(worst, std::abs(mx[c] - xb[c]));
        worst = std::max(worst, std::abs(my[c] - yb[c]));
      }
    }
  }
  const double elapsed = watch.seconds();
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "max node-mean gap %.3g (limit 1e-12), 5 topologies x 10^4 steps in %.1fs "
                "(limit 5s)",
                worst, elapsed);
  report(1, worst <= 1e-12 && elapsed < 5.0, detail);
}

TEST_CASE("criterion 02: per-step contraction inequalities") {
  Stopwatch watch;
  std::int64_t violations = 0, steps = 0;
  for (const auto& [kind, n] :
       std::vector<std::pair<std::string, int>>{{"ring", 4}, {"ring", 8}, {"star", 6}}) {
    json doc = {{"system", {{"type", "random"}, {"d", 2}, {"N", n}}},
                {"topology_w", {{"kind", kind}}},
                {"alpha0", 0.5},
                {"beta0", 0.1},
                {"noise", {{"iso", 0.25}}},
                {"iterations", 10000},
                {"replicas", 20},
                {"seed", 17},
                {"audit", true},
                {"rate_window", {1000, 10000}},
                {"output", scratch_dir("c2_" + kind + std::to_string(n)).string()}};
    const ExperimentResult r = run_experiment(parse_config(doc));
    violations += r.audit_violations;
    steps += r.summary.at("audit").at("steps").get<std::int64_t>();
  }
  const double elapsed = watch.seconds();
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "%lld violations over %lld audited steps (20 seeds x 3 graphs), %.1fs "
                "(limit 60s)",
                static_cast<long long>(violations), static_cast<long long>(steps), elapsed);
  report(2, violations == 0 && elapsed < 60.0, detail);
}

TEST_CASE("criterion 03: pathwise consensus dominance") {
  Stopwatch watch;
  json doc = {{"system", {{"type", "random"}, {"d", 2}, {"N", 4}}},
              {"topology_w", {{"kind", "ring"}}},
              {"alpha0", 0.5},
              {"beta0", 0.1},
              {"delta", 2.0 / 3.0},
              {"noise", {{"iso", 0.25}}},
              {"iterations", 100000},
              {"replicas", 3},
              {"seed", 3},
              {"audit", true},
              {"rate_window", {1000, 100000}},
              {"output", scratch_dir("c3").string()}};
  const ExperimentResult r = run_experiment(parse_config(doc));
  const auto& lemma = r.summary.at("lemma1_dominance");
  const bool finite = lemma.at("finite_bound").get<bool>();
  const std::int64_t checked = lemma.at("checked").get<std::int64_t>();
  const std::int64_t violations = lemma.at("violations").get<std::int64_t>();
  const double sigma = r.summary.at("parameters").at("sigma").get<double>();
  char detail[180];
  std::snprintf(detail, sizeof detail,
                "sigma=%.4f finite bound, %lld dominance violations over %lld recorded "
                "steps up to k=1e5 (%.1fs)",
                sigma, static_cast<long long>(violations), static_cast<long long>(checked),
                watch.seconds());
  report(3, finite && checked > 0 && violations == 0, detail);
}

TEST_CASE("criterion 04: mean-square-error rate exponent") {
  Stopwatch watch;
  json doc = {{"system", {{"type", "random"}, {"d", 4}, {"N", 8}, {"delta_margin", 20.0}}},
              {"topology_w", {{"kind", "ring"}}},
              {"alpha0", 0.8},
              {"beta0", 0.8},
              {"noise", {{"iso", 0.01}}},
              {"iterations", 100000},
              {"record_every", 100},
              {"replicas", 32},
              {"seed", 0},
              {"rate_window", {1000, 100000}},
              {"output", scratch_dir("c4").string()}};
  const ExperimentResult r = run_experiment(parse_config(doc));
  const auto& fit = r.summary.at("fits").at("mse_weighted");
  const double slope = fit.at("exponent").get<double>();
  const double r2 = fit.at("r_squared").get<double>();
  const double elapsed = watch.seconds();
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "fitted slope %.4f in [-0.83, -0.53] (r^2 %.4f), 32 replicas x 1e5 steps "
                "in %.1fs (limit 300s)",
                slope, r2, elapsed);
  report(4, slope >= -0.83 && slope <= -0.53 && elapsed < 300.0, detail);
}

TEST_CASE("criterion 05: consensus error grows with sigma") {
  Stopwatch watch;
  json doc = {{"system", {{"type", "random"}, {"d", 2}, {"N", 4}}},
              {"topology_w", {{"kind", "ring"}}},
              {"alpha0", 0.5},
              {"beta0", 0.1},
              {"noise", {{"iso", 0.25}}},
              {"iterations", 10000},
              {"replicas", 4},
              {"seed", 11},
              {"rate_window", {1000, 10000}},
              {"output", scratch_dir("c5").string()}};
  const json grid = {{"laziness", {0.0, 0.3, 0.6, 0.85}}};
  const SweepResult sweep = run_sweep(parse_config(doc), grid);

  std::vector<double> sigmas, errors;
  bool all_ok = true;
  for (const auto& row : sweep.rows) {
    if (row.status != "ok") all_ok = false;
    sigmas.push_back(row.sigma);
    errors.push_back(row.window_avg_consensus_sq);
  }
  const double rho = all_ok ? spearman(sigmas, errors) : -1.0;
  char detail[200];
  std::snprintf(detail, sizeof detail,
                "sigma {%.3f..%.3f} over 4 laziness points, Spearman %.3f (need >= 0.9), "
                "window k in [1e3, 1e4] (%.1fs)",
                sigmas.front(), sigmas.back(), rho, watch.seconds());
  report(5, all_ok && sigmas.back() >= 0.89 && rho >= 0.9, detail);
}

TEST_CASE("criterion 06: noise model exactness") {
  Stopwatch watch;
  // a correlated PSD covariance, d = 2
  SplitMix64 g(99);
  DenseMatrix root(4, 4);
  for (double& x : root.a) x = standard_normal(g);
  DenseMatrix gamma = transpose(root) * root;
  const NoiseModel model = make_noise_model(gamma);

  const auto samples = sample_noise(model, 12345, 100000);
  const DenseMatrix cov = empirical_covariance(samples);
  const double rel_err = frobenius_norm(cov - gamma) / frobenius_norm(gamma);
  std::size_t bound_ok = 0;
  for (const auto& s : samples) {
    double sq = 0.0;
    for (std::size_t i = 0; i < 2; ++i) sq += s.xi[i] * s.xi[i] + s.psi[i] * s.psi[i];
    if (std::sqrt(sq) <= model.bound) ++bound_ok;
  }
  const double elapsed = watch.seconds();
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "covariance rel err %.4f (limit 0.05), bound held on %zu/100000 samples, "
                "%.1fs (limit 5s)",
                rel_err, bound_ok, elapsed);
  report(6, rel_err <= 0.05 && bound_ok == samples.size() && elapsed < 5.0, detail);
}

TEST_CASE("criterion 07: spectral oracle agreement") {
  double worst = 0.0;
  for (std::size_t n = 2; n <= 8; ++n) {
    std::vector<Topology> tops = {build_topology(TopologyKind::ring, n),
                                  build_topology(TopologyKind::path, n),
                                  build_topology(TopologyKind::star, n),
                                  build_topology(TopologyKind::complete, n)};
    if (n >= 3) tops.push_back(build_topology(TopologyKind::erdos_renyi, n, 0.6, 31 * n));
    for (const auto& t : tops) {
      for (double lam : {0.0, 0.5}) {
        const WeightMatrix wm = lam > 0.0 ? lazy_weights(t, lam) : metropolis_weights(t);
        worst = std::max(worst, std::abs(second_singular_value(wm.m) -
                                         oracles::second_singular_value(wm.m)));
      }
    }
  }
  char detail[120];
  std::snprintf(detail, sizeof detail,
                "max |power iteration - full decomposition| = %.3g over all families "
                "N <= 8 (limit 1e-8)",
                worst);
  report(7, worst <= 1e-8, detail);
}

TEST_CASE("criterion 08: sampled policy evaluation converges") {
  Stopwatch watch;
  json doc = {{"system", gtd_system_doc()},
              {"topology_w", {{"kind", "ring"}}},
              {"alpha0", 0.9},
              {"beta0", 0.9},
              {"noise", {{"type", "gtd"}}},
              {"iterations", 100000},
              {"record_every", 100},
              {"replicas", 32},
              {"seed", 0},
              {"rate_window", {1000, 100000}},
              {"output", scratch_dir("c8").string()}};
  const ExperimentResult r = run_experiment(parse_config(doc));
  double err_1e2 = -1.0, err_1e5 = -1.0;
  for (const auto& m : r.averaged) {
    if (m.k == 100) err_1e2 = m.ybar_err;
    if (m.k == 100000) err_1e5 = m.ybar_err;
  }
  const double ratio = err_1e2 / err_1e5;
  const double elapsed = watch.seconds();
  char detail[180];
  std::snprintf(detail, sizeof detail,
                "replica-mean |ybar - y*|^2: %.3g at k=1e2 vs %.3g at k=1e5, ratio %.0fx "
                "(need >= 100x), %.1fs (limit 120s)",
                err_1e2, err_1e5, ratio, elapsed);
  report(8, err_1e2 > 0.0 && err_1e5 > 0.0 && ratio >= 100.0 && elapsed < 120.0, detail);
}

TEST_CASE("criterion 09: bound constants match hand evaluations") {
  const std::int64_t ks = kstar(0.5, 2.0 / 3.0, 1.0 / 3.0);
  const double d_value = constant_D(4, 1.0, 1.0, 0.5, 2.0 / 3.0, 2);
  // independent evaluations of the same formulas
  const double ks_raw = std::pow(0.5 / (2.0 / 3.0 - 1.0 / 3.0), 1.5);
  const double d_expected = 2.0 * std::sqrt(4.0) * (1.0 + 1.0) * (6.0 * 0.5 + 1.0) *
                            std::pow(2.0, 1.0 / 3.0) / (1.0 - 2.0 / 3.0);
  const bool ks_ok = ks == 2 && std::ceil(ks_raw) == 2.0;
  const bool d_ok = std::abs(d_value - d_expected) <= 1e-9 * d_expected;
  const std::int64_t ks6 = kstar(0.5, 0.5, 1.0 / 3.0);
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "kstar = %lld (expect 2), kstar(delta=1/2) = %lld (expect 6), D = %.6f "
                "(expect %.6f, 1e-9 rel)",
                static_cast<long long>(ks), static_cast<long long>(ks6), d_value, d_expected);
  report(9, ks_ok && d_ok && ks6 == 6, detail);
}

TEST_CASE("criterion 10: byte-identical artifacts") {
  json doc = {{"system", {{"type", "random"}, {"d", 2}, {"N", 4}}},
              {"topology_w", {{"kind", "ring"}}},
              {"alpha0", 0.5},
              {"beta0", 0.1},
              {"noise", {{"iso", 0.04}}},
              {"iterations", 1000},
              {"replicas", 4},
              {"seed", 21},
              {"audit", true},
              {"rate_window", {100, 1000}}};
  const fs::path out1 = scratch_dir("c10a");
  const fs::path out2 = scratch_dir("c10b");
  doc["output"] = out1.string();
  const ExperimentResult r1 = run_experiment(parse_config(doc));
  doc["output"] = out2.string();
  const ExperimentResult r2 = run_experiment(parse_config(doc));

  bool identical = r1.run_dir.filename() == r2.run_dir.filename();
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(r1.run_dir)) {
    const fs::path other = r2.run_dir / entry.path().filename();
    if (!fs::exists(other) ||
        read_text_file(entry.path().string()) != read_text_file(other.string()))
      identical = false;
    ++files;
  }
  char detail[120];
  std::snprintf(detail, sizeof detail,
                "two consecutive runs produced %zu byte-identical artifact files", files);
  report(10, identical && files >= 8, detail);
}
