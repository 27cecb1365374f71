#pragma once

#include <atomic>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dtsa/algorithm.hpp"
#include "dtsa/analysis.hpp"
#include "dtsa/network.hpp"
#include "dtsa/noise.hpp"
#include "dtsa/problem.hpp"
#include "dtsa/serialization.hpp"

namespace dtsa {

// ---------------------------------------------------------------------------
// Experiment configuration.

struct SystemSpec {
  enum class Kind { random, gtd, file };
  Kind kind = Kind::random;
  // random
  std::size_t d = 2, N = 4;
  double delta_margin = 0.5;
  // gtd
  Mdp mdp;
  DenseMatrix features;
  double discount = 0.9;
  // file
  std::string path;
};

struct TopologySpec {
  TopologyKind kind = TopologyKind::ring;
  double edge_prob = 0.0;
  double laziness = 0.0;
};

struct NoiseSpec {
  enum class Kind { iso, matrix, gtd_sampling };
  Kind kind = Kind::iso;
  double iso_value = 0.0;
  DenseMatrix gamma;  // used when kind == matrix
};

struct ExperimentConfig {
  SystemSpec system;
  TopologySpec topology_w, topology_v;
  double alpha0 = 0.5, beta0 = 0.1;
  std::optional<double> delta;  // default: midpoint (1 + sigma) / 2
  NoiseSpec noise;
  std::int64_t iterations = 1000;
  std::int64_t record_every = 0;  // 0 -> max(1, iterations / 1000)
  int replicas = 32;
  std::uint64_t seed = 0;
  std::string output = "runs";
  bool audit = false;
  double d0 = 0.0, d1 = 0.0;
  std::optional<double> projection_radius;
  std::pair<std::int64_t, std::int64_t> rate_window{1000, 100000};
  bool dump_trajectories = false;

  bool theorem_checks = true;  // cleared when beta0 > alpha0
  std::vector<std::string> warnings;
  std::vector<std::string> applied_defaults;
};

struct ConfigError : std::runtime_error {
  std::vector<std::string> errors;
  explicit ConfigError(std::vector<std::string> errs)
      : std::runtime_error(join(errs)), errors(std::move(errs)) {}

 private:
  static std::string join(const std::vector<std::string>& errs) {
    std::string s = "invalid configuration:";
    for (const auto& e : errs) s += "\n  - " + e;
    return s;
  }
};

namespace detail {

inline void check_known_keys(const json& obj, const std::set<std::string>& known,
                             const std::string& where, std::vector<std::string>& errors) {
  for (const auto& [key, value] : obj.items())
    if (!known.count(key)) errors.push_back(where + ": unknown key \"" + key + "\"");
}

inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Parses and validates a configuration document. Semantic problems are
// collected exhaustively rather than reported one at a time.
inline ExperimentConfig parse_config(const json& doc) {
  std::vector<std::string> errors;
  ExperimentConfig cfg;

  if (!doc.is_object()) throw ConfigError({"top level must be a JSON object"});
  detail::check_known_keys(
      doc,
      {"system", "topology_w", "topology_v", "alpha0", "beta0", "delta", "noise",
       "iterations", "record_every", "replicas", "seed", "output", "audit", "d0", "d1",
       "projection_radius", "rate_window", "dump_trajectories"},
      "config", errors);

  const auto grab_number = [&](const json& obj, const char* key, double fallback,
                               bool* had = nullptr) {
    if (obj.contains(key) && obj.at(key).is_number()) {
      if (had) *had = true;
      return obj.at(key).get<double>();
    }
    if (obj.contains(key)) errors.push_back(std::string(key) + " must be a number");
    if (had) *had = false;
    return fallback;
  };

  // system -------------------------------------------------------------
  if (doc.contains("system") && doc.at("system").is_object()) {
    const json& s = doc.at("system");
    const std::string type = s.value("type", "random");
    if (type == "random") {
      detail::check_known_keys(s, {"type", "d", "N", "delta_margin"}, "system", errors);
      cfg.system.kind = SystemSpec::Kind::random;
      cfg.system.d = static_cast<std::size_t>(grab_number(s, "d", 2));
      cfg.system.N = static_cast<std::size_t>(grab_number(s, "N", 4));
      cfg.system.delta_margin = grab_number(s, "delta_margin", 0.5);
      if (cfg.system.d < 1) errors.push_back("system.d must be at least 1");
      if (cfg.system.N < 1) errors.push_back("system.N must be at least 1");
      if (!(cfg.system.delta_margin > 0.0))
        errors.push_back("system.delta_margin must be positive");
    } else if (type == "gtd") {
      detail::check_known_keys(s, {"type", "transitions", "rewards", "features", "discount"},
                               "system", errors);
      cfg.system.kind = SystemSpec::Kind::gtd;
      try {
        cfg.system.mdp.transitions = matrix_from_json(s.at("transitions"));
        for (const auto& r : s.at("rewards"))
          cfg.system.mdp.rewards.push_back(vector_from_json(r));
        cfg.system.features = matrix_from_json(s.at("features"));
      } catch (const std::exception& e) {
        errors.push_back(std::string("system: ") + e.what());
      }
      cfg.system.discount = grab_number(s, "discount", 0.9);
      if (!(cfg.system.discount >= 0.0 && cfg.system.discount < 1.0))
        errors.push_back("system.discount must be in [0, 1)");
      cfg.system.N = cfg.system.mdp.rewards.size();
      cfg.system.d = cfg.system.features.cols;
      if (cfg.system.N < 1) errors.push_back("system.rewards must list at least one agent");
    } else if (type == "file") {
      detail::check_known_keys(s, {"type", "path"}, "system", errors);
      cfg.system.kind = SystemSpec::Kind::file;
      if (s.contains("path") && s.at("path").is_string())
        cfg.system.path = s.at("path").get<std::string>();
      else
        errors.push_back("system.path must be a string");
    } else {
      errors.push_back("system.type must be one of random | gtd | file");
    }
  } else if (doc.contains("system")) {
    errors.push_back("system must be an object");
  } else {
    cfg.applied_defaults.push_back("system = random d=2 N=4 delta_margin=0.5");
  }

  // topologies ----------------------------------------------------------
  const auto parse_topology = [&](const char* key, TopologySpec& spec, bool& present) {
    present = doc.contains(key);
    if (!present) return;
    if (!doc.at(key).is_object()) {
      errors.push_back(std::string(key) + " must be an object");
      return;
    }
    const json& t = doc.at(key);
    detail::check_known_keys(t, {"kind", "edge_prob", "laziness"}, key, errors);
    try {
      spec.kind = topology_kind_from_string(t.value("kind", "ring"));
    } catch (const std::exception& e) {
      errors.push_back(std::string(key) + ": " + e.what());
    }
    spec.edge_prob = grab_number(t, "edge_prob", 0.0);
    spec.laziness = grab_number(t, "laziness", 0.0);
    if (spec.kind == TopologyKind::erdos_renyi &&
        !(spec.edge_prob > 0.0 && spec.edge_prob <= 1.0))
      errors.push_back(std::string(key) + ".edge_prob must be in (0, 1] for erdos_renyi");
    if (spec.kind != TopologyKind::erdos_renyi && t.contains("edge_prob"))
      errors.push_back(std::string(key) + ".edge_prob only applies to erdos_renyi");
    if (!(spec.laziness >= 0.0 && spec.laziness < 1.0))
      errors.push_back(std::string(key) + ".laziness must be in [0, 1)");
  };
  bool had_w = false, had_v = false;
  parse_topology("topology_w", cfg.topology_w, had_w);
  parse_topology("topology_v", cfg.topology_v, had_v);
  if (!had_w) cfg.applied_defaults.push_back("topology_w = ring");
  if (!had_v) {
    cfg.topology_v = cfg.topology_w;
    cfg.applied_defaults.push_back("topology_v = topology_w");
  }

  // scalars ---------------------------------------------------------------
  bool had = false;
  cfg.alpha0 = grab_number(doc, "alpha0", 0.5, &had);
  if (!had) cfg.applied_defaults.push_back("alpha0 = 0.5");
  cfg.beta0 = grab_number(doc, "beta0", 0.1, &had);
  if (!had) cfg.applied_defaults.push_back("beta0 = 0.1");
  if (!(cfg.alpha0 > 0.0)) errors.push_back("alpha0 must be positive");
  if (!(cfg.beta0 > 0.0)) errors.push_back("beta0 must be positive");
  if (doc.contains("delta")) {
    cfg.delta = grab_number(doc, "delta", 0.0);
    if (!(*cfg.delta > 0.0 && *cfg.delta < 1.0)) errors.push_back("delta must be in (0, 1)");
  } else {
    cfg.applied_defaults.push_back("delta = (1 + sigma) / 2");
  }
  cfg.iterations = static_cast<std::int64_t>(grab_number(doc, "iterations", 1000, &had));
  if (!had) cfg.applied_defaults.push_back("iterations = 1000");
  if (cfg.iterations < 1) errors.push_back("iterations must be at least 1");
  cfg.record_every = static_cast<std::int64_t>(grab_number(doc, "record_every", 0, &had));
  if (!had) cfg.applied_defaults.push_back("record_every = max(1, iterations / 1000)");
  if (cfg.record_every < 0) errors.push_back("record_every must be nonnegative");
  cfg.replicas = static_cast<int>(grab_number(doc, "replicas", 32, &had));
  if (!had) cfg.applied_defaults.push_back("replicas = 32");
  if (cfg.replicas < 1) errors.push_back("replicas must be at least 1");
  cfg.seed = static_cast<std::uint64_t>(grab_number(doc, "seed", 0, &had));
  if (!had) cfg.applied_defaults.push_back("seed = 0");
  if (doc.contains("output")) {
    if (doc.at("output").is_string())
      cfg.output = doc.at("output").get<std::string>();
    else
      errors.push_back("output must be a string");
  } else {
    cfg.applied_defaults.push_back("output = runs");
  }
  if (doc.contains("audit")) {
    if (doc.at("audit").is_boolean())
      cfg.audit = doc.at("audit").get<bool>();
    else
      errors.push_back("audit must be a boolean");
  }
  cfg.d0 = grab_number(doc, "d0", 0.0);
  cfg.d1 = grab_number(doc, "d1", 0.0);
  if (cfg.d0 < 0.0 || cfg.d1 < 0.0) errors.push_back("d0 and d1 must be nonnegative");
  if (doc.contains("projection_radius")) {
    cfg.projection_radius = grab_number(doc, "projection_radius", 0.0);
    if (!(*cfg.projection_radius > 0.0))
      errors.push_back("projection_radius must be positive");
  }
  if (doc.contains("rate_window")) {
    const json& w = doc.at("rate_window");
    if (w.is_array() && w.size() == 2 && w[0].is_number() && w[1].is_number()) {
      cfg.rate_window = {w[0].get<std::int64_t>(), w[1].get<std::int64_t>()};
      if (!(cfg.rate_window.first >= 1 && cfg.rate_window.second > cfg.rate_window.first))
        errors.push_back("rate_window must be [k_min, k_max] with 1 <= k_min < k_max");
    } else {
      errors.push_back("rate_window must be a two-element numeric array");
    }
  }
  if (doc.contains("dump_trajectories")) {
    if (doc.at("dump_trajectories").is_boolean())
      cfg.dump_trajectories = doc.at("dump_trajectories").get<bool>();
    else
      errors.push_back("dump_trajectories must be a boolean");
  }

  // noise -------------------------------------------------------------------
  if (doc.contains("noise")) {
    if (!doc.at("noise").is_object()) {
      errors.push_back("noise must be an object");
    } else {
      const json& n = doc.at("noise");
      detail::check_known_keys(n, {"iso", "gamma", "type"}, "noise", errors);
      if (n.contains("type")) {
        if (n.at("type").is_string() && n.at("type").get<std::string>() == "gtd") {
          cfg.noise.kind = NoiseSpec::Kind::gtd_sampling;
          if (cfg.system.kind != SystemSpec::Kind::gtd)
            errors.push_back("noise.type = gtd requires a gtd system");
        } else {
          errors.push_back("noise.type must be \"gtd\"");
        }
      } else if (n.contains("gamma")) {
        cfg.noise.kind = NoiseSpec::Kind::matrix;
        try {
          cfg.noise.gamma = matrix_from_json(n.at("gamma"));
        } catch (const std::exception& e) {
          errors.push_back(std::string("noise.gamma: ") + e.what());
        }
      } else if (n.contains("iso")) {
        cfg.noise.kind = NoiseSpec::Kind::iso;
        cfg.noise.iso_value = grab_number(n, "iso", 0.0);
        if (cfg.noise.iso_value < 0.0) errors.push_back("noise.iso must be nonnegative");
      } else {
        errors.push_back("noise needs one of: iso, gamma, type");
      }
    }
  } else {
    cfg.applied_defaults.push_back("noise = iso 0 (noiseless)");
  }

  if (cfg.beta0 > cfg.alpha0) {
    cfg.theorem_checks = false;
    cfg.warnings.push_back(
        "beta0 > alpha0: the coupling ratio exceeds 1, theorem checks disabled");
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

// Reads a config file; JSON syntax errors are reported with line/column.
inline json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw std::runtime_error(path + ":" + std::to_string(line) + ":" + std::to_string(col) +
                             ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  return parse_config(parse_json_file(path));
}

// "a.b.c=value" overrides applied to the raw document before validation.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override must look like path.to.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &doc;
  std::size_t begin = 0;
  while (true) {
    const auto dotp = path.find('.', begin);
    const std::string key = path.substr(begin, dotp == std::string::npos ? dotp : dotp - begin);
    if (key.empty()) throw std::invalid_argument("override has an empty path segment");
    if (dotp == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    begin = dotp + 1;
  }
}

// ---------------------------------------------------------------------------
// Building the pieces an experiment needs.

struct ExperimentSetup {
  BlockSystem system;
  Solution solution;
  WeightMatrix w, v;
  std::optional<NoiseModel> noise_model;  // absent in sampled-GTD mode
  std::optional<GtdModel> gtd;
  StepSchedule schedule;
  std::optional<BoundParams> params;  // present when theorem checks are on
  std::int64_t record_every = 1;
  bool audit = false;
};

inline ExperimentSetup build_experiment(const ExperimentConfig& cfg) {
  ExperimentSetup setup;
  std::optional<GtdModel> gtd;

  switch (cfg.system.kind) {
    case SystemSpec::Kind::random:
      setup.system = random_instance(cfg.system.d, cfg.system.N,
                                     substream_seed(cfg.seed, 0x73797374ULL),
                                     cfg.system.delta_margin);
      break;
    case SystemSpec::Kind::gtd: {
      gtd = gtd_model(cfg.system.mdp, cfg.system.features, cfg.system.discount);
      setup.system = gtd_system(*gtd);
      break;
    }
    case SystemSpec::Kind::file:
      setup.system = block_system_from_json(parse_json_file(cfg.system.path));
      break;
  }
  setup.gtd = std::move(gtd);
  setup.solution = exact_solution(setup.system);

  const auto build_wm = [&](const TopologySpec& spec, std::uint64_t tag) {
    const Topology t = build_topology(spec.kind, setup.system.N, spec.edge_prob,
                                      substream_seed(cfg.seed, 0x746f706fULL, tag));
    return spec.laziness > 0.0 ? lazy_weights(t, spec.laziness) : metropolis_weights(t);
  };
  setup.w = build_wm(cfg.topology_w, 0);
  setup.v = build_wm(cfg.topology_v, 1);

  if (cfg.noise.kind == NoiseSpec::Kind::gtd_sampling) {
    require(setup.gtd.has_value(), "sampled GTD noise requires a gtd system");
  } else if (cfg.noise.kind == NoiseSpec::Kind::matrix) {
    require(cfg.noise.gamma.rows == 2 * setup.system.d,
            "noise.gamma must be 2d x 2d for the system dimension");
    setup.noise_model = make_noise_model(cfg.noise.gamma);
  } else {
    const std::size_t n2 = 2 * setup.system.d;
    DenseMatrix gamma(n2, n2);
    for (std::size_t i = 0; i < n2; ++i) gamma(i, i) = cfg.noise.iso_value;
    setup.noise_model = make_noise_model(gamma);
  }

  setup.schedule = StepSchedule{cfg.alpha0, cfg.beta0};
  if (cfg.theorem_checks && setup.noise_model.has_value()) {
    setup.params = make_bound_params(setup.w, setup.v, setup.system,
                                     setup.noise_model->bound, setup.schedule,
                                     cfg.delta.value_or(0.0), cfg.d0, cfg.d1);
  }
  setup.audit = cfg.audit && setup.params.has_value();
  setup.record_every =
      setup.audit ? 1
                  : (cfg.record_every > 0 ? cfg.record_every
                                          : std::max<std::int64_t>(1, cfg.iterations / 1000));
  return setup;
}

// ---------------------------------------------------------------------------
// Artifacts.

inline constexpr const char* kCsvHeader =
    "k,alpha,beta,V,consensus_sq,mse_weighted,xbar_err,ybar_err";

inline std::string trajectory_csv(const Trajectory& traj) {
  std::string out = kCsvHeader;
  out += "\n";
  for (const auto& r : traj.records) {
    out += std::to_string(r.k);
    for (double v : {r.alpha, r.beta, r.consensus_residual, r.consensus_sq, r.mse_weighted,
                     r.xbar_err, r.ybar_err}) {
      out += ",";
      out += detail::format_double(v);
    }
    out += "\n";
  }
  return out;
}

inline json trajectory_to_json(const Trajectory& traj) {
  json arr = json::array();
  for (const auto& r : traj.records) {
    json rec;
    rec["k"] = r.k;
    rec["alpha"] = r.alpha;
    rec["beta"] = r.beta;
    rec["V"] = r.consensus_residual;
    rec["consensus_sq"] = r.consensus_sq;
    rec["mse_weighted"] = r.mse_weighted;
    rec["xbar_err"] = r.xbar_err;
    rec["ybar_err"] = r.ybar_err;
    rec["xhat_norm"] = r.xhat_norm;
    rec["yhat_norm"] = r.yhat_norm;
    rec["xbar"] = vector_to_json(r.xbar);
    rec["ybar"] = vector_to_json(r.ybar);
    arr.push_back(std::move(rec));
  }
  return arr;
}

// Resolved configuration echo; excludes the output directory so artifact
// bytes do not depend on where they are written.
inline ordered_json config_echo(const ExperimentConfig& cfg) {
  ordered_json j;
  ordered_json sys;
  switch (cfg.system.kind) {
    case SystemSpec::Kind::random:
      sys["type"] = "random";
      sys["d"] = cfg.system.d;
      sys["N"] = cfg.system.N;
      sys["delta_margin"] = cfg.system.delta_margin;
      break;
    case SystemSpec::Kind::gtd: {
      sys["type"] = "gtd";
      sys["transitions"] = matrix_to_json(cfg.system.mdp.transitions);
      json rewards = json::array();
      for (const auto& r : cfg.system.mdp.rewards) rewards.push_back(vector_to_json(r));
      sys["rewards"] = std::move(rewards);
      sys["features"] = matrix_to_json(cfg.system.features);
      sys["discount"] = cfg.system.discount;
      break;
    }
    case SystemSpec::Kind::file:
      sys["type"] = "file";
      sys["path"] = cfg.system.path;
      break;
  }
  j["system"] = std::move(sys);
  const auto topo = [&](const TopologySpec& t) {
    ordered_json tj;
    tj["kind"] = to_string(t.kind);
    if (t.kind == TopologyKind::erdos_renyi) tj["edge_prob"] = t.edge_prob;
    tj["laziness"] = t.laziness;
    return tj;
  };
  j["topology_w"] = topo(cfg.topology_w);
  j["topology_v"] = topo(cfg.topology_v);
  j["alpha0"] = cfg.alpha0;
  j["beta0"] = cfg.beta0;
  if (cfg.delta.has_value()) j["delta"] = *cfg.delta;
  ordered_json nj;
  switch (cfg.noise.kind) {
    case NoiseSpec::Kind::iso: nj["iso"] = cfg.noise.iso_value; break;
    case NoiseSpec::Kind::matrix: nj["gamma"] = matrix_to_json(cfg.noise.gamma); break;
    case NoiseSpec::Kind::gtd_sampling: nj["type"] = "gtd"; break;
  }
  j["noise"] = std::move(nj);
  j["iterations"] = cfg.iterations;
  j["record_every"] = cfg.record_every;
  j["replicas"] = cfg.replicas;
  j["seed"] = cfg.seed;
  j["audit"] = cfg.audit;
  j["d0"] = cfg.d0;
  j["d1"] = cfg.d1;
  if (cfg.projection_radius.has_value()) j["projection_radius"] = *cfg.projection_radius;
  j["rate_window"] = {cfg.rate_window.first, cfg.rate_window.second};
  j["dump_trajectories"] = cfg.dump_trajectories;
  return j;
}

inline std::string config_hash(const ordered_json& echo) {
  // FNV-1a over the canonical dump
  const std::string s = echo.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) buf[15 - i] = hex[(h >> (4 * i)) & 0xF];
  buf[16] = '\0';
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Replica execution.

inline unsigned worker_cap() {
  if (const char* env = std::getenv("DTSA_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

template <class F>
void parallel_for(std::size_t count, F&& body) {
  const std::size_t workers = std::min<std::size_t>(worker_cap(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) break;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::uint64_t replica_seed(std::uint64_t seed, int replica) {
  return substream_seed(seed, 0x7265706cULL, static_cast<std::uint64_t>(replica));
}

inline Trajectory run_replica(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                              int replica) {
  RunOptions opt;
  opt.iterations = cfg.iterations;
  opt.record_every = setup.record_every;
  opt.seed = replica_seed(cfg.seed, replica);
  if (cfg.projection_radius.has_value()) opt.projection_radius = *cfg.projection_radius;
  if (cfg.noise.kind == NoiseSpec::Kind::gtd_sampling)
    return run(setup.system, setup.w, setup.v, setup.schedule, GtdNoise{*setup.gtd}, opt,
               &setup.solution);
  return run(setup.system, setup.w, setup.v, setup.schedule, ModelNoise{*setup.noise_model},
             opt, &setup.solution);
}

// Per-k mean of the scalar metrics across replicas.
struct MeanRecord {
  std::int64_t k = 0;
  double alpha = 0.0, beta = 0.0;
  double consensus_residual = 0.0, consensus_sq = 0.0;
  double mse_weighted = 0.0, xbar_err = 0.0, ybar_err = 0.0;
};

struct ExperimentResult {
  std::filesystem::path run_dir;
  ordered_json summary;
  std::vector<MeanRecord> averaged;
  std::int64_t audit_violations = 0;   // proof-inequality audit, all replicas
  std::int64_t lemma1_violations = 0;  // pathwise dominance, all replicas
  int exit_code = 0;
};

inline std::string mean_records_csv(const std::vector<MeanRecord>& recs) {
  std::string out = kCsvHeader;
  out += "\n";
  for (const auto& r : recs) {
    out += std::to_string(r.k);
    for (double v : {r.alpha, r.beta, r.consensus_residual, r.consensus_sq, r.mse_weighted,
                     r.xbar_err, r.ybar_err}) {
      out += ",";
      out += detail::format_double(v);
    }
    out += "\n";
  }
  return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const ExperimentSetup setup = build_experiment(cfg);

  std::vector<std::string> warnings = cfg.warnings;
  if (cfg.projection_radius.has_value()) {
    const double needed =
        std::max(norm(setup.solution.x_star), norm(setup.solution.y_star));
    if (!(*cfg.projection_radius > needed))
      warnings.push_back("projection_radius " + std::to_string(*cfg.projection_radius) +
                         " does not contain the solution (needs > " +
                         std::to_string(needed) + ")");
  }

  const ordered_json echo = config_echo(cfg);
  const std::string hash = config_hash(echo);
  ExperimentResult result;
  result.run_dir = fs::path(cfg.output) / ("run_" + hash);
  fs::create_directories(result.run_dir);

  const std::size_t replicas = static_cast<std::size_t>(cfg.replicas);
  std::vector<Trajectory> trajectories(replicas);
  parallel_for(replicas, [&](std::size_t r) {
    try {
      trajectories[r] = run_replica(cfg, setup, static_cast<int>(r));
    } catch (const DivergenceError& e) {
      throw std::runtime_error("replica " + std::to_string(r) + ": " + e.what());
    }
  });

  // aggregate
  const std::size_t n_records = trajectories.front().records.size();
  std::vector<MeanRecord> averaged(n_records);
  for (std::size_t i = 0; i < n_records; ++i) {
    MeanRecord& m = averaged[i];
    const auto& first = trajectories.front().records[i];
    m.k = first.k;
    m.alpha = first.alpha;
    m.beta = first.beta;
    for (const auto& traj : trajectories) {
      const auto& rec = traj.records[i];
      m.consensus_residual += rec.consensus_residual;
      m.consensus_sq += rec.consensus_sq;
      m.mse_weighted += rec.mse_weighted;
      m.xbar_err += rec.xbar_err;
      m.ybar_err += rec.ybar_err;
    }
    const double inv = 1.0 / static_cast<double>(replicas);
    m.consensus_residual *= inv;
    m.consensus_sq *= inv;
    m.mse_weighted *= inv;
    m.xbar_err *= inv;
    m.ybar_err *= inv;
  }
  result.averaged = averaged;

  // audits
  ordered_json audit_json;
  audit_json["enabled"] = setup.audit;
  if (setup.audit) {
    std::int64_t eq1 = 0, eq2 = 0, v_after = 0, v_checked = 0, v_early = 0,
                 v_early_checked = 0, steps = 0;
    for (const auto& traj : trajectories) {
      const ProofAuditReport rep = proof_inequality_audit(traj, *setup.params);
      eq1 += rep.eq1_violations;
      eq2 += rep.eq2_violations;
      v_after += rep.v_recursion_violations;
      v_checked += rep.v_recursion_checked;
      v_early += rep.v_recursion_early_violations;
      v_early_checked += rep.v_recursion_early_checked;
      steps += rep.steps;
    }
    result.audit_violations = eq1 + eq2 + v_after;
    audit_json["steps"] = steps;
    audit_json["eq1_violations"] = eq1;
    audit_json["eq2_violations"] = eq2;
    audit_json["v_recursion_violations"] = v_after;
    audit_json["v_recursion_checked"] = v_checked;
    audit_json["v_recursion_early_violations"] = v_early;
    audit_json["v_recursion_early_checked"] = v_early_checked;
  }

  ordered_json lemma1_json;
  lemma1_json["enabled"] = setup.params.has_value();
  if (setup.params.has_value()) {
    std::int64_t checked = 0, violations = 0;
    bool finite = true;
    for (const auto& rec : trajectories.front().records)
      if (!std::isfinite(lemma1_bound(rec.k, *setup.params))) finite = false;
    for (const auto& traj : trajectories)
      for (const auto& rec : traj.records) {
        const double bound = lemma1_bound(rec.k, *setup.params);
        if (!std::isfinite(bound)) continue;
        ++checked;
        if (rec.consensus_sq > bound + 1e-9) ++violations;
      }
    result.lemma1_violations = violations;
    lemma1_json["finite_bound"] = finite;
    lemma1_json["checked"] = checked;
    lemma1_json["violations"] = violations;
  }

  // rate fits on the replica means
  const auto fit_or_null = [&](const std::string& metric) -> ordered_json {
    std::vector<std::int64_t> ks;
    std::vector<double> vals;
    for (const auto& m : averaged) {
      ks.push_back(m.k);
      vals.push_back(metric == "mse_weighted"     ? m.mse_weighted
                     : metric == "consensus_sq"   ? m.consensus_sq
                     : metric == "V"              ? m.consensus_residual
                     : metric == "ybar_err"       ? m.ybar_err
                                                  : m.xbar_err);
    }
    const std::int64_t k_min = cfg.rate_window.first;
    const std::int64_t k_max = std::min(cfg.rate_window.second, cfg.iterations);
    try {
      const RateFit fit = fit_rate_exponent(ks, vals, k_min, k_max);
      ordered_json fj;
      fj["exponent"] = fit.exponent;
      fj["intercept"] = fit.intercept;
      fj["r_squared"] = fit.r_squared;
      fj["k_min"] = fit.k_min;
      fj["k_max"] = fit.k_max;
      fj["samples"] = fit.samples;
      return fj;
    } catch (const std::exception& e) {
      ordered_json fj;
      fj["error"] = e.what();
      return fj;
    }
  };

  // summary
  ordered_json summary;
  summary["config_hash"] = hash;
  ordered_json params;
  params["N"] = setup.system.N;
  params["d"] = setup.system.d;
  params["sigma_w"] = setup.w.sigma2;
  params["sigma_v"] = setup.v.sigma2;
  params["sigma"] = std::max(setup.w.sigma2, setup.v.sigma2);
  params["alpha0"] = cfg.alpha0;
  params["beta0"] = cfg.beta0;
  params["R"] = setup.system.R;
  if (setup.noise_model.has_value()) params["C"] = setup.noise_model->bound;
  if (setup.params.has_value()) {
    params["delta"] = setup.params->delta;
    params["kstar"] = setup.params->kstar;
    params["D"] = setup.params->D;
    params["d0"] = setup.params->D0;
    params["d1"] = setup.params->D1;
  }
  params["record_every"] = setup.record_every;
  summary["parameters"] = std::move(params);
  summary["defaults_applied"] = cfg.applied_defaults;
  summary["warnings"] = warnings;
  summary["theorem_checks"] = setup.params.has_value();
  summary["audit"] = std::move(audit_json);
  summary["lemma1_dominance"] = std::move(lemma1_json);
  if (setup.params.has_value()) {
    // centralized-error curve in replica mean, dominated by the smallest
    // gridded lemma-2 constants
    std::vector<std::int64_t> ks;
    std::vector<double> central;
    for (const auto& m : averaged) {
      ks.push_back(m.k);
      central.push_back(m.ybar_err + setup.schedule.gamma(m.k) * m.xbar_err);
    }
    const Lemma2Fit l2 = fit_lemma2_constants(ks, central);
    ordered_json fit_json;
    fit_json["d0"] = l2.d0;
    fit_json["d1"] = l2.d1;
    summary["lemma2_fit"] = std::move(fit_json);
  }
  ordered_json fits;
  fits["mse_weighted"] = fit_or_null("mse_weighted");
  fits["V"] = fit_or_null("V");
  summary["fits"] = std::move(fits);
  {
    const MeanRecord& last = averaged.back();
    ordered_json fin;
    fin["k"] = last.k;
    fin["mse_weighted"] = last.mse_weighted;
    fin["consensus_sq"] = last.consensus_sq;
    fin["xbar_err"] = last.xbar_err;
    fin["ybar_err"] = last.ybar_err;
    summary["final"] = std::move(fin);
  }
  {
    ordered_json curves;
    json karr = json::array(), mse = json::array(), cons = json::array(),
         yerr = json::array();
    for (const auto& m : averaged) {
      karr.push_back(m.k);
      mse.push_back(m.mse_weighted);
      cons.push_back(m.consensus_sq);
      yerr.push_back(m.ybar_err);
    }
    curves["k"] = std::move(karr);
    curves["mse_weighted"] = std::move(mse);
    curves["consensus_sq"] = std::move(cons);
    curves["ybar_err"] = std::move(yerr);
    if (setup.params.has_value()) {
      json lb = json::array(), tb = json::array();
      for (const auto& m : averaged) {
        const double l1 = lemma1_bound(m.k, *setup.params);
        const double t1 = theorem1_bound(m.k, *setup.params);
        lb.push_back(std::isfinite(l1) ? json(l1) : json("inf"));
        tb.push_back(std::isfinite(t1) ? json(t1) : json("inf"));
      }
      curves["lemma1_bound"] = std::move(lb);
      curves["theorem1_bound"] = std::move(tb);
    }
    summary["curves"] = std::move(curves);
  }
  result.summary = summary;
  result.exit_code = (setup.audit && (result.audit_violations + result.lemma1_violations) > 0)
                         ? 1
                         : 0;

  // write artifacts
  write_text_file((result.run_dir / "config.json").string(), echo.dump(2) + "\n");
  write_text_file((result.run_dir / "system.json").string(),
                  json(block_system_to_json(setup.system)).dump(2) + "\n");
  write_text_file((result.run_dir / "topology_w.edges").string(),
                  edge_list_text(setup.w.topology));
  write_text_file((result.run_dir / "topology_v.edges").string(),
                  edge_list_text(setup.v.topology));
  for (std::size_t r = 0; r < replicas; ++r) {
    char name[48];
    std::snprintf(name, sizeof name, "replica_%03zu.csv", r);
    write_text_file((result.run_dir / name).string(), trajectory_csv(trajectories[r]));
    if (cfg.dump_trajectories) {
      std::snprintf(name, sizeof name, "trajectory_%03zu.json", r);
      write_text_file((result.run_dir / name).string(),
                      trajectory_to_json(trajectories[r]).dump() + "\n");
    }
  }
  write_text_file((result.run_dir / "averaged.csv").string(), mean_records_csv(averaged));
  write_text_file((result.run_dir / "summary.json").string(), summary.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------
// Parameter sweeps.

struct SweepRow {
  std::size_t index = 0;
  std::string overrides;  // "laziness=0.3 alpha0=0.5"
  double sigma = 0.0;
  double exponent_mse = std::numeric_limits<double>::quiet_NaN();
  double window_avg_consensus_sq = std::numeric_limits<double>::quiet_NaN();
  double final_consensus_sq = std::numeric_limits<double>::quiet_NaN();
  double final_mse = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

struct SweepResult {
  std::filesystem::path dir;
  std::vector<SweepRow> rows;
  int exit_code = 0;
};

// Grid axes: topology (list of kind strings, applied to both graphs),
// laziness (both graphs), alpha0, beta0, N (random systems only). The sweep
// walks the cartesian product in listed order; failures are recorded per
// point and do not stop the sweep.
inline SweepResult run_sweep(const ExperimentConfig& base, const json& grid) {
  if (!grid.is_object()) throw std::invalid_argument("sweep grid must be a JSON object");
  static const std::vector<std::string> axis_order = {"topology", "laziness", "alpha0",
                                                      "beta0", "N"};
  for (const auto& [key, value] : grid.items()) {
    if (std::find(axis_order.begin(), axis_order.end(), key) == axis_order.end())
      throw std::invalid_argument("sweep grid: unknown axis \"" + key + "\"");
    if (!value.is_array() || value.empty())
      throw std::invalid_argument("sweep grid: axis \"" + key + "\" must be a nonempty array");
  }

  std::vector<std::pair<std::string, std::vector<json>>> axes;
  for (const auto& name : axis_order)
    if (grid.contains(name))
      axes.emplace_back(name, std::vector<json>(grid.at(name).begin(), grid.at(name).end()));
  require(!axes.empty(), "sweep grid must list at least one axis");

  std::size_t total = 1;
  for (const auto& [name, values] : axes) total *= values.size();

  SweepResult result;
  const ordered_json base_echo = config_echo(base);
  ordered_json sweep_id = base_echo;
  sweep_id["__grid"] = grid;
  result.dir = std::filesystem::path(base.output) / ("sweep_" + config_hash(sweep_id));
  std::filesystem::create_directories(result.dir);

  for (std::size_t idx = 0; idx < total; ++idx) {
    ExperimentConfig cfg = base;
    cfg.output = (result.dir / "points").string();
    std::string desc;
    std::size_t rem = idx;
    for (const auto& [name, values] : axes) {
      const json& v = values[rem % values.size()];
      rem /= values.size();
      if (!desc.empty()) desc += " ";
      desc += name + "=" + v.dump();
      if (name == "topology") {
        const TopologyKind kind = topology_kind_from_string(v.get<std::string>());
        cfg.topology_w.kind = kind;
        cfg.topology_v.kind = kind;
      } else if (name == "laziness") {
        cfg.topology_w.laziness = v.get<double>();
        cfg.topology_v.laziness = v.get<double>();
      } else if (name == "alpha0") {
        cfg.alpha0 = v.get<double>();
      } else if (name == "beta0") {
        cfg.beta0 = v.get<double>();
      } else if (name == "N") {
        require(cfg.system.kind == SystemSpec::Kind::random,
                "sweep axis N applies to random systems only");
        cfg.system.N = v.get<std::size_t>();
      }
    }
    if (cfg.beta0 > cfg.alpha0) cfg.theorem_checks = false;

    SweepRow row;
    row.index = idx;
    row.overrides = desc;
    try {
      const ExperimentResult er = run_experiment(cfg);
      row.sigma = er.summary.at("parameters").at("sigma").get<double>();
      const auto& fit = er.summary.at("fits").at("mse_weighted");
      if (fit.contains("exponent")) row.exponent_mse = fit.at("exponent").get<double>();
      row.final_consensus_sq = er.summary.at("final").at("consensus_sq").get<double>();
      row.final_mse = er.summary.at("final").at("mse_weighted").get<double>();
      double acc = 0.0;
      std::size_t n = 0;
      for (const auto& m : er.averaged)
        if (m.k >= cfg.rate_window.first && m.k <= cfg.rate_window.second) {
          acc += m.consensus_sq;
          ++n;
        }
      if (n > 0) row.window_avg_consensus_sq = acc / static_cast<double>(n);
      if (er.exit_code != 0) result.exit_code = er.exit_code;
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    result.rows.push_back(std::move(row));
  }

  std::string csv =
      "index,overrides,sigma,exponent_mse,window_avg_consensus_sq,final_consensus_sq,"
      "final_mse,status\n";
  for (const auto& row : result.rows) {
    csv += std::to_string(row.index);
    csv += ",\"" + row.overrides + "\"";
    for (double v : {row.sigma, row.exponent_mse, row.window_avg_consensus_sq,
                     row.final_consensus_sq, row.final_mse}) {
      csv += ",";
      csv += detail::format_double(v);
    }
    csv += "," + row.status + "\n";
  }
  write_text_file((result.dir / "sweep_summary.csv").string(), csv);
  return result;
}

// ---------------------------------------------------------------------------
// Re-analysis of an existing run directory from its CSV artifacts.

inline std::vector<MeanRecord> read_metrics_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty CSV: " + path);
  require(line == kCsvHeader, "unexpected CSV header in " + path);
  std::vector<MeanRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MeanRecord m;
    double fields[8] = {0};
    std::size_t begin = 0;
    for (int f = 0; f < 8; ++f) {
      const auto comma = line.find(',', begin);
      const std::string cell = line.substr(begin, comma == std::string::npos
                                                      ? std::string::npos
                                                      : comma - begin);
      fields[f] = std::strtod(cell.c_str(), nullptr);
      begin = comma == std::string::npos ? line.size() : comma + 1;
    }
    m.k = static_cast<std::int64_t>(fields[0]);
    m.alpha = fields[1];
    m.beta = fields[2];
    m.consensus_residual = fields[3];
    m.consensus_sq = fields[4];
    m.mse_weighted = fields[5];
    m.xbar_err = fields[6];
    m.ybar_err = fields[7];
    rows.push_back(m);
  }
  return rows;
}

inline ordered_json analyze_run_dir(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  const ExperimentConfig cfg = parse_config(parse_json_file((run_dir / "config.json").string()));
  const BlockSystem sys = block_system_from_json(parse_json_file((run_dir / "system.json").string()));

  std::vector<std::string> replica_files;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("replica_", 0) == 0 && name.size() > 4 &&
        name.substr(name.size() - 4) == ".csv")
      replica_files.push_back(entry.path().string());
  }
  std::sort(replica_files.begin(), replica_files.end());
  require(!replica_files.empty(), "analyze: no replica CSVs in " + run_dir.string());

  std::vector<std::vector<MeanRecord>> replicas;
  for (const auto& f : replica_files) replicas.push_back(read_metrics_csv(f));
  const std::size_t n_records = replicas.front().size();
  for (const auto& r : replicas)
    require(r.size() == n_records, "analyze: replica CSVs have mismatched record grids");

  std::vector<MeanRecord> averaged(n_records);
  for (std::size_t i = 0; i < n_records; ++i) {
    MeanRecord& m = averaged[i];
    m.k = replicas.front()[i].k;
    m.alpha = replicas.front()[i].alpha;
    m.beta = replicas.front()[i].beta;
    for (const auto& r : replicas) {
      m.consensus_residual += r[i].consensus_residual;
      m.consensus_sq += r[i].consensus_sq;
      m.mse_weighted += r[i].mse_weighted;
      m.xbar_err += r[i].xbar_err;
      m.ybar_err += r[i].ybar_err;
    }
    const double inv = 1.0 / static_cast<double>(replicas.size());
    m.consensus_residual *= inv;
    m.consensus_sq *= inv;
    m.mse_weighted *= inv;
    m.xbar_err *= inv;
    m.ybar_err *= inv;
  }

  ordered_json out;
  out["run_dir"] = run_dir.string();
  out["replicas"] = replicas.size();
  out["records"] = n_records;

  // bounds need sigma and the noise model; both are reproducible from config
  std::optional<BoundParams> params;
  try {
    ExperimentConfig rebuilt = cfg;
    rebuilt.system.kind = SystemSpec::Kind::file;
    rebuilt.system.path = (run_dir / "system.json").string();
    const ExperimentSetup setup = build_experiment(rebuilt);
    params = setup.params;
    out["sigma"] = std::max(setup.w.sigma2, setup.v.sigma2);
  } catch (const std::exception& e) {
    out["setup_error"] = e.what();
  }
  (void)sys;

  const auto fit_metric = [&](const std::string& metric) -> ordered_json {
    std::vector<std::int64_t> ks;
    std::vector<double> vals;
    for (const auto& m : averaged) {
      ks.push_back(m.k);
      vals.push_back(metric == "mse_weighted" ? m.mse_weighted : m.consensus_residual);
    }
    try {
      const RateFit fit = fit_rate_exponent(ks, vals, cfg.rate_window.first,
                                            std::min(cfg.rate_window.second, cfg.iterations));
      ordered_json fj;
      fj["exponent"] = fit.exponent;
      fj["r_squared"] = fit.r_squared;
      fj["samples"] = fit.samples;
      return fj;
    } catch (const std::exception& e) {
      ordered_json fj;
      fj["error"] = e.what();
      return fj;
    }
  };
  ordered_json fits;
  fits["mse_weighted"] = fit_metric("mse_weighted");
  fits["V"] = fit_metric("V");
  out["fits"] = std::move(fits);

  if (params.has_value()) {
    std::int64_t checked = 0, violations = 0;
    for (const auto& r : replicas)
      for (const auto& m : r) {
        const double bound = lemma1_bound(m.k, *params);
        if (!std::isfinite(bound)) continue;
        ++checked;
        if (m.consensus_sq > bound + 1e-9) ++violations;
      }
    ordered_json lj;
    lj["checked"] = checked;
    lj["violations"] = violations;
    out["lemma1_dominance"] = std::move(lj);
  }

  const MeanRecord& last = averaged.back();
  ordered_json fin;
  fin["k"] = last.k;
  fin["mse_weighted"] = last.mse_weighted;
  fin["consensus_sq"] = last.consensus_sq;
  fin["ybar_err"] = last.ybar_err;
  out["final"] = std::move(fin);

  write_text_file((run_dir / "analysis.json").string(), out.dump(2) + "\n");
  return out;
}

}  // namespace dtsa
