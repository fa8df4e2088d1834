#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "parq/optim.hpp"
#include "parq/par.hpp"
#include "parq/problems.hpp"
#include "parq/quant_grid.hpp"
#include "parq/rng.hpp"
#include "parq/schedules.hpp"
#include "parq/trace.hpp"

namespace parq {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { kSgd, kProxSgd, kAprox, kBinaryConnect, kParq, kBinaryRelax };
enum class InitKind { kZeros, kConstant, kUniform };

struct ProblemSpec {
  std::string kind;  // quadratic | logistic | mlp
  // quadratic
  std::vector<double> center;
  double noise_sigma = 0.0;
  // logistic / mlp
  std::size_t n_samples = 200;
  std::size_t dim = 10;
  double separation = 4.0;
  std::uint64_t data_seed = 0;
  std::size_t minibatch = 8;
  std::size_t hidden = 16;
  double noise = 0.15;
  bool quantize_output = false;

  bool operator==(const ProblemSpec&) const = default;
};

struct ExperimentConfig {
  int schema_version = 1;
  std::string name = "experiment";
  ProblemSpec problem;
  OptimizerKind optimizer = OptimizerKind::kSgd;

  // regularization / quantization targets
  double lambda = 1.0;
  std::vector<double> quant_values;  // fixed target set for sgd-family methods
  bool indicator = false;            // aprox only: indicator regularizer (hard prox)
  int bits = 1;
  bool ternary = false;
  Granularity granularity = Granularity::kPerTensor;
  long grid_refresh_every = 1;

  // update rule extras
  double momentum = 0.0;
  double weight_decay = 0.0;
  bool decoupled_weight_decay = false;

  StepSchedule step_schedule = StepSchedule::constant(0.1);
  SlopeSchedule slope_schedule = SlopeSchedule::cosine(1);

  long steps = 1;
  std::vector<std::uint64_t> seeds{1};
  long eval_every = 0;  // 0 -> max(1, steps / 300)

  InitKind init = InitKind::kZeros;
  std::vector<double> init_values;  // kConstant
  double init_scale = 0.0;          // kUniform: w0 ~ U[-scale, scale]

  double quantized_tol = 1e-6;
  double bound_G = std::numeric_limits<double>::quiet_NaN();
  double bound_R = std::numeric_limits<double>::quiet_NaN();
  std::string out_dir;

  long effective_eval_every() const {
    return eval_every > 0 ? eval_every : std::max<long>(1, steps / 300);
  }

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string("config: missing required field '") + key + "'");
  return *it;
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "prox-sgd") return OptimizerKind::kProxSgd;
  if (s == "aprox") return OptimizerKind::kAprox;
  if (s == "binaryconnect") return OptimizerKind::kBinaryConnect;
  if (s == "parq") return OptimizerKind::kParq;
  if (s == "binaryrelax") return OptimizerKind::kBinaryRelax;
  throw ConfigError("config: unknown optimizer '" + s + "'");
}

inline std::string optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kProxSgd: return "prox-sgd";
    case OptimizerKind::kAprox: return "aprox";
    case OptimizerKind::kBinaryConnect: return "binaryconnect";
    case OptimizerKind::kParq: return "parq";
    case OptimizerKind::kBinaryRelax: return "binaryrelax";
  }
  return "?";
}

inline StepSchedule parse_step_schedule(const nlohmann::json& j) {
  const std::string kind = require_key(j, "kind").get<std::string>();
  const double base = require_key(j, "base").get<double>();
  if (kind == "constant") return StepSchedule::constant(base);
  if (kind == "inverse-sqrt") return StepSchedule::inverse_sqrt(base);
  if (kind == "multistep")
    return StepSchedule::multistep(base, require_key(j, "milestones").get<std::vector<long>>(),
                                   require_key(j, "decay").get<double>());
  throw ConfigError("config: unknown step_schedule kind '" + kind + "'");
}

inline SlopeSchedule parse_slope_schedule(const nlohmann::json& j, long steps) {
  const std::string kind = j.value("kind", std::string("cosine"));
  const double sat = j.value("saturation_fraction", 0.93);
  const double steep = j.value("steepness", 50.0);
  if (kind == "cosine") return SlopeSchedule::cosine(steps, sat);
  if (kind == "sigmoid") return SlopeSchedule::sigmoid(steps, steep, sat);
  if (kind == "constant-one") return SlopeSchedule::constant_one(steps);
  if (kind == "hard") return SlopeSchedule::hard(steps);
  throw ConfigError("config: unknown slope_schedule kind '" + kind + "'");
}

inline ProblemSpec parse_problem(const nlohmann::json& j) {
  ProblemSpec ps;
  ps.kind = require_key(j, "kind").get<std::string>();
  if (ps.kind == "quadratic") {
    ps.center = require_key(j, "center").get<std::vector<double>>();
    ps.noise_sigma = j.value("noise_sigma", 0.0);
  } else if (ps.kind == "logistic") {
    ps.n_samples = require_key(j, "n_samples").get<std::size_t>();
    ps.dim = require_key(j, "dim").get<std::size_t>();
    ps.separation = j.value("separation", 4.0);
    ps.data_seed = j.value("data_seed", std::uint64_t{0});
    ps.minibatch = j.value("minibatch", std::size_t{8});
  } else if (ps.kind == "mlp") {
    ps.hidden = require_key(j, "hidden").get<std::size_t>();
    ps.n_samples = require_key(j, "n_samples").get<std::size_t>();
    ps.data_seed = j.value("data_seed", std::uint64_t{0});
    ps.minibatch = j.value("minibatch", std::size_t{16});
    ps.noise = j.value("noise", 0.15);
    ps.quantize_output = j.value("quantize_output", false);
  } else {
    throw ConfigError("config: unknown problem kind '" + ps.kind + "'");
  }
  return ps;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig cfg;
    cfg.schema_version = j.value("schema_version", 1);
    if (cfg.schema_version != 1) throw ConfigError("config: unsupported schema_version");
    cfg.name = j.value("name", std::string("experiment"));
    cfg.problem = detail::parse_problem(detail::require_key(j, "problem"));
    cfg.optimizer = detail::parse_optimizer(detail::require_key(j, "optimizer").get<std::string>());
    cfg.lambda = j.value("lambda", 1.0);
    cfg.quant_values = j.value("quant_values", std::vector<double>{});
    cfg.indicator = j.value("indicator", false);
    cfg.bits = j.value("bits", 1);
    cfg.ternary = j.value("ternary", false);
    const std::string gran = j.value("granularity", std::string("per-tensor"));
    if (gran == "per-tensor")
      cfg.granularity = Granularity::kPerTensor;
    else if (gran == "per-row")
      cfg.granularity = Granularity::kPerRow;
    else
      throw ConfigError("config: unknown granularity '" + gran + "'");
    cfg.grid_refresh_every = j.value("grid_refresh_every", 1L);
    if (cfg.grid_refresh_every < 1) throw ConfigError("config: grid_refresh_every must be >= 1");
    cfg.momentum = j.value("momentum", 0.0);
    cfg.weight_decay = j.value("weight_decay", 0.0);
    cfg.decoupled_weight_decay = j.value("decoupled_weight_decay", false);
    cfg.steps = detail::require_key(j, "steps").get<long>();
    if (cfg.steps < 1) throw ConfigError("config: steps must be >= 1");
    cfg.step_schedule = detail::parse_step_schedule(detail::require_key(j, "step_schedule"));
    cfg.slope_schedule = detail::parse_slope_schedule(
        j.contains("slope_schedule") ? j.at("slope_schedule") : nlohmann::json::object(),
        cfg.steps);
    cfg.seeds = detail::require_key(j, "seeds").get<std::vector<std::uint64_t>>();
    if (cfg.seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    cfg.eval_every = j.value("eval_every", 0L);
    if (cfg.eval_every < 0) throw ConfigError("config: eval_every must be >= 0");
    if (j.contains("init")) {
      const auto& ji = j.at("init");
      const std::string kind = detail::require_key(ji, "kind").get<std::string>();
      if (kind == "zeros") {
        cfg.init = InitKind::kZeros;
      } else if (kind == "constant") {
        cfg.init = InitKind::kConstant;
        cfg.init_values = detail::require_key(ji, "values").get<std::vector<double>>();
      } else if (kind == "uniform") {
        cfg.init = InitKind::kUniform;
        cfg.init_scale = detail::require_key(ji, "scale").get<double>();
        if (!(cfg.init_scale > 0.0)) throw ConfigError("config: init scale must be positive");
      } else {
        throw ConfigError("config: unknown init kind '" + kind + "'");
      }
    }
    cfg.quantized_tol = j.value("quantized_tol", 1e-6);
    if (cfg.quantized_tol < 0.0) throw ConfigError("config: quantized_tol must be >= 0");
    if (j.contains("bound")) {
      cfg.bound_G = j.at("bound").value("G", std::numeric_limits<double>::quiet_NaN());
      cfg.bound_R = j.at("bound").value("R", std::numeric_limits<double>::quiet_NaN());
    }
    cfg.out_dir = j.value("out_dir", std::string());
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

namespace detail {

inline std::unique_ptr<Problem> make_problem(const ProblemSpec& ps) {
  if (ps.kind == "quadratic") return quadratic_problem(ps.center, ps.noise_sigma);
  if (ps.kind == "logistic")
    return logistic_problem(ps.n_samples, ps.dim, ps.separation, {ps.data_seed, 0},
                            ps.minibatch);
  if (ps.kind == "mlp")
    return mlp_problem(ps.hidden, ps.n_samples, {ps.data_seed, 0}, ps.minibatch, ps.noise,
                       ps.quantize_output);
  throw ConfigError("config: unknown problem kind '" + ps.kind + "'");
}

// Problem groups with the config's quantization settings applied. Per-row
// granularity only applies to 2-D groups; flat groups stay per-tensor.
inline std::vector<ParamGroup> configured_groups(const Problem& problem,
                                                 const ExperimentConfig& cfg) {
  std::vector<ParamGroup> groups(problem.groups().begin(), problem.groups().end());
  for (ParamGroup& g : groups) {
    if (!g.quantize) continue;
    g.bits = cfg.bits;
    g.ternary = cfg.ternary;
    g.granularity = (cfg.granularity == Granularity::kPerRow && g.cols > 0)
                        ? Granularity::kPerRow
                        : Granularity::kPerTensor;
  }
  return groups;
}

struct RunContext {
  ExperimentConfig cfg;
  std::unique_ptr<Problem> problem;
  std::vector<ParamGroup> groups;
  std::optional<ParRegularizer> reg;
  std::optional<QuantGrid> fixed_grid;
  std::optional<RegularizedOptimum> optimum;
};

inline RunContext build_context(const ExperimentConfig& cfg) {
  RunContext ctx;
  ctx.cfg = cfg;
  ctx.problem = make_problem(cfg.problem);
  ctx.groups = configured_groups(*ctx.problem, cfg);

  const bool wants_fixed_grid = cfg.optimizer == OptimizerKind::kBinaryConnect ||
                                cfg.optimizer == OptimizerKind::kProxSgd ||
                                cfg.optimizer == OptimizerKind::kAprox ||
                                (cfg.optimizer == OptimizerKind::kSgd && !cfg.quant_values.empty());
  if (wants_fixed_grid) {
    if (cfg.quant_values.empty())
      throw ConfigError("config: optimizer '" + optimizer_name(cfg.optimizer) +
                        "' requires quant_values");
    try {
      ctx.fixed_grid.emplace(cfg.quant_values);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: quant_values: ") + e.what());
    }
  }
  const bool wants_reg =
      cfg.optimizer == OptimizerKind::kProxSgd ||
      (cfg.optimizer == OptimizerKind::kAprox && !cfg.indicator);
  if (wants_reg) {
    try {
      ctx.reg.emplace(par_from_grid(*ctx.fixed_grid, cfg.lambda));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }

  if (cfg.problem.kind == "quadratic") {
    if (ctx.reg) {
      ctx.optimum = regularized_optimum(*ctx.problem, *ctx.reg);
    } else if (cfg.optimizer == OptimizerKind::kSgd) {
      auto w = ctx.problem->unregularized_optimum();
      if (w) ctx.optimum = RegularizedOptimum{*w, ctx.problem->full_loss(*w)};
    }
  }
  return ctx;
}

inline std::vector<double> make_init(const RunContext& ctx, std::uint64_t seed) {
  const std::size_t d = ctx.problem->dim();
  switch (ctx.cfg.init) {
    case InitKind::kZeros:
      return std::vector<double>(d, 0.0);
    case InitKind::kConstant:
      if (ctx.cfg.init_values.size() != d)
        throw ConfigError("config: init values length does not match problem dimension");
      return ctx.cfg.init_values;
    case InitKind::kUniform: {
      std::vector<double> w0(d);
      PhiloxRng rng({seed, 0x696e6974});  // "init" stream
      for (double& x : w0) x = ctx.cfg.init_scale * (2.0 * rng.next_double() - 1.0);
      return w0;
    }
  }
  return std::vector<double>(d, 0.0);
}

inline bool soft_quantizing(OptimizerKind k) {
  return k == OptimizerKind::kParq || k == OptimizerKind::kBinaryRelax;
}

inline double compute_quantized_fraction(const RunContext& ctx, const OptimizerState& state) {
  const double tol = ctx.cfg.quantized_tol;
  if (soft_quantizing(ctx.cfg.optimizer)) {
    std::size_t total = 0, on = 0;
    for (std::size_t gi = 0; gi < ctx.groups.size(); ++gi) {
      const ParamGroup& g = ctx.groups[gi];
      if (!g.quantize) continue;
      const auto slice = std::span<const double>(state.w).subspan(g.offset, g.size());
      const GroupGrids& grids = state.group_grids[gi];
      if (grids.empty()) continue;
      if (g.granularity == Granularity::kPerTensor) {
        for (double x : slice)
          if (std::fabs(x - grids[0].nearest(x)) <= tol) ++on;
        total += slice.size();
      } else {
        for (std::size_t r = 0; r < g.rows; ++r) {
          const auto row = slice.subspan(r * g.cols, g.cols);
          for (double x : row)
            if (std::fabs(x - grids[r].nearest(x)) <= tol) ++on;
          total += row.size();
        }
      }
    }
    return total == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : double(on) / double(total);
  }
  if (ctx.fixed_grid) return quantized_fraction(state.w, *ctx.fixed_grid, tol);
  return std::numeric_limits<double>::quiet_NaN();
}

inline std::vector<double> tracked_grid_values(const RunContext& ctx,
                                               const OptimizerState& state) {
  const QuantGrid* grid = nullptr;
  if (soft_quantizing(ctx.cfg.optimizer)) {
    for (std::size_t gi = 0; gi < ctx.groups.size(); ++gi) {
      if (!ctx.groups[gi].quantize) continue;
      if (gi < state.group_grids.size() && !state.group_grids[gi].empty()) {
        grid = &state.group_grids[gi][0];
        break;
      }
    }
  } else if (ctx.fixed_grid) {
    grid = &*ctx.fixed_grid;
  }
  if (!grid) return {};
  std::vector<double> qs;
  for (double v : grid->values())
    if (v > 0.0) qs.push_back(v);
  return qs;
}

inline double gap_envelope(double G, double R, long t) {
  return G * R * (2.0 + 1.5 * std::log(double(t))) / std::sqrt(double(t));
}

inline ExperimentTrace run_single(const RunContext& ctx, std::uint64_t seed) {
  const ExperimentConfig& cfg = ctx.cfg;
  const Problem& problem = *ctx.problem;
  const std::size_t d = problem.dim();

  OptimizerState state(make_init(ctx, seed));
  std::vector<double> grad(d);
  std::vector<double> velocity;
  if (cfg.momentum != 0.0) velocity.assign(d, 0.0);

  ExperimentTrace trace;
  trace.seed = seed;
  const long every = cfg.effective_eval_every();

  for (long t = 1; t <= cfg.steps; ++t) {
    const double eta = cfg.step_schedule.at(t);
    problem.stochastic_grad(state.w, derive_seed(seed, std::uint64_t(t)), grad);
    if (cfg.weight_decay != 0.0 && !cfg.decoupled_weight_decay)
      for (std::size_t i = 0; i < d; ++i) grad[i] += cfg.weight_decay * state.w[i];
    std::span<const double> g = grad;
    if (cfg.momentum != 0.0) {
      for (std::size_t i = 0; i < d; ++i)
        velocity[i] = cfg.momentum * velocity[i] + grad[i];
      g = velocity;
    }
    if (cfg.weight_decay != 0.0 && cfg.decoupled_weight_decay) {
      const double shrink = 1.0 - eta * cfg.weight_decay;
      for (std::size_t i = 0; i < d; ++i) {
        state.u[i] *= shrink;
        state.w[i] *= shrink;
      }
    }

    double inv = std::numeric_limits<double>::quiet_NaN();
    switch (cfg.optimizer) {
      case OptimizerKind::kSgd:
        sgd_step(state, g, eta);
        break;
      case OptimizerKind::kProxSgd:
        prox_sgd_step(state, g, eta, *ctx.reg);
        break;
      case OptimizerKind::kAprox:
        if (cfg.indicator)
          aprox_step(state, g, eta, *ctx.fixed_grid);
        else
          aprox_step(state, g, eta, *ctx.reg);
        break;
      case OptimizerKind::kBinaryConnect:
        binaryconnect_step(state, g, eta, *ctx.fixed_grid);
        break;
      case OptimizerKind::kParq: {
        inv = cfg.slope_schedule.inv_slope(t);
        const bool refresh = ((t - 1) % cfg.grid_refresh_every) == 0;
        parq_step(state, g, eta, inv, ctx.groups, refresh);
        break;
      }
      case OptimizerKind::kBinaryRelax: {
        inv = cfg.slope_schedule.inv_slope(t);
        const bool refresh = ((t - 1) % cfg.grid_refresh_every) == 0;
        binaryrelax_step(state, g, eta, inv, ctx.groups, refresh);
        break;
      }
    }

    if (t % every == 0 || t == cfg.steps) {
      TraceRecord r;
      r.step = t;
      r.train_loss = problem.full_loss(state.w);
      r.eval_metric = problem.eval_metric(state.w);
      if (ctx.optimum) {
        double objective = r.train_loss;
        if (ctx.reg) objective += ctx.reg->eval(state.w);
        r.objective_gap = objective - ctx.optimum->value;
      }
      r.quantized_fraction = compute_quantized_fraction(ctx, state);
      r.gamma = state.gamma;
      r.eta = eta;
      r.inv_slope = inv;
      if (!std::isnan(cfg.bound_G) && !std::isnan(cfg.bound_R))
        r.bound_value = gap_envelope(cfg.bound_G, cfg.bound_R, t);
      r.q_values = tracked_grid_values(ctx, state);
      const bool bad = !std::isfinite(r.train_loss);
      trace.records.push_back(std::move(r));
      if (bad) {
        trace.aborted = true;
        break;
      }
    }
  }
  return trace;
}

inline std::size_t worker_count() {
  if (const char* env = std::getenv("PARQ_WORKERS")) {
    char* end = nullptr;
    const unsigned long n = std::strtoul(env, &end, 10);
    if (end != env && n >= 1) return std::size_t(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : std::size_t(hw);
}

}  // namespace detail

struct RunResult {
  std::vector<ExperimentTrace> traces;
  std::vector<SummaryRow> summary;
  std::vector<std::filesystem::path> trace_files;
  std::filesystem::path summary_file;
  bool any_aborted = false;
};

// Runs every seed of the config (in parallel across a worker pool sized by
// PARQ_WORKERS or the hardware concurrency; results are merged in seed order,
// identical to serial execution) and writes one CSV per seed plus a summary
// CSV when out_dir is set.
inline RunResult run(const ExperimentConfig& cfg) {
  if (detail::soft_quantizing(cfg.optimizer) &&
      cfg.slope_schedule.total_steps() < cfg.steps)
    throw ConfigError("config: slope_schedule covers fewer steps than the run");
  detail::RunContext ctx = detail::build_context(cfg);

  RunResult result;
  result.traces.resize(cfg.seeds.size());
  const std::size_t workers = std::min(detail::worker_count(), cfg.seeds.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
      result.traces[i] = detail::run_single(ctx, cfg.seeds[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t wi = 0; wi < workers; ++wi) {
      pool.emplace_back([&] {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= cfg.seeds.size()) break;
          try {
            result.traces[i] = detail::run_single(ctx, cfg.seeds[i]);
          } catch (...) {
            std::lock_guard lock(err_mutex);
            if (!first_error) first_error = std::current_exception();
            break;
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  for (const auto& t : result.traces) result.any_aborted |= t.aborted;
  result.summary = summarize(result.traces);

  if (!cfg.out_dir.empty()) {
    const std::filesystem::path dir(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output dir " + dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < result.traces.size(); ++i) {
      const auto path = dir / (cfg.name + "_seed" + std::to_string(cfg.seeds[i]) + ".csv");
      write_trace_csv(path, result.traces[i]);
      result.trace_files.push_back(path);
    }
    result.summary_file = dir / (cfg.name + "_summary.csv");
    write_summary_csv(result.summary_file, result.summary);
  }
  return result;
}

struct BoundRow {
  long step = 0;
  double mean_gap = 0.0;
  double stderr_ = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // bound - mean_gap
  bool flagged = false;
};

struct BoundReport {
  int n_seeds = 0;
  std::vector<BoundRow> rows;
  long flag_count = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  long worst_step = 0;
};

// Compares the seed-averaged objective gap against G R (2 + 1.5 ln t)/sqrt(t)
// at every logged step; steps t >= 10 with mean gap above the bound are
// flagged. The expectation is approximated by the seed mean, so reports carry
// the seed count and a standard-error column for statistical reading.
inline BoundReport check_bound_series(std::span<const long> steps,
                                      std::span<const double> mean_gaps,
                                      std::span<const double> stderrs, int n_seeds,
                                      double G, double R) {
  if (!(G > 0.0) || !(R > 0.0))
    throw std::invalid_argument("check_bound: G and R must be positive");
  if (steps.size() != mean_gaps.size())
    throw std::invalid_argument("check_bound: size mismatch");
  BoundReport report;
  report.n_seeds = n_seeds;
  bool any_gap = false;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    BoundRow row;
    row.step = steps[i];
    row.mean_gap = mean_gaps[i];
    row.stderr_ = i < stderrs.size() ? stderrs[i] : 0.0;
    row.bound = detail::gap_envelope(G, R, row.step);
    row.margin = row.bound - row.mean_gap;
    if (!std::isnan(row.mean_gap)) any_gap = true;
    row.flagged = row.step >= 10 && !std::isnan(row.mean_gap) && row.mean_gap > row.bound;
    if (row.flagged) ++report.flag_count;
    if (row.margin < report.worst_margin) {
      report.worst_margin = row.margin;
      report.worst_step = row.step;
    }
    report.rows.push_back(row);
  }
  if (!any_gap)
    throw std::runtime_error("check_bound: trace has no objective gap (optimum oracle unavailable)");
  return report;
}

inline BoundReport check_bound(std::span<const SummaryRow> summary, double G, double R) {
  std::vector<long> steps;
  std::vector<double> gaps, errs;
  for (const SummaryRow& r : summary) {
    steps.push_back(r.step);
    gaps.push_back(r.objective_gap_mean);
    errs.push_back(r.objective_gap_stderr);
  }
  const int n = summary.empty() ? 0 : summary.front().n_seeds;
  return check_bound_series(steps, gaps, errs, n, G, R);
}

struct MethodSeries {
  std::string name;
  std::vector<double> train_loss;
  std::vector<double> eval_metric;
  std::vector<double> objective_gap;
  std::vector<double> quantized_fraction;
  std::vector<double> q_max;
  std::vector<double> inv_slope;
};

// Mean first differences of the LSBQ grid magnitude over thirds of training:
// the expand-then-contract signature reads as positive first, negative last.
struct TrendSummary {
  std::string name;
  double first_third = 0.0;
  double middle_third = 0.0;
  double last_third = 0.0;
  bool valid = false;
};

struct CompareResult {
  std::vector<long> steps;
  std::vector<MethodSeries> methods;
  std::vector<TrendSummary> trends;
};

inline CompareResult compare_methods(const std::vector<ExperimentConfig>& configs,
                                     const std::filesystem::path* out_csv = nullptr) {
  if (configs.empty()) throw ConfigError("compare: need at least one config");
  for (std::size_t i = 1; i < configs.size(); ++i) {
    if (!(configs[i].problem == configs[0].problem))
      throw ConfigError("compare: mismatched problem specs");
    if (configs[i].steps != configs[0].steps)
      throw ConfigError("compare: configs must share the step count");
    if (configs[i].effective_eval_every() != configs[0].effective_eval_every())
      throw ConfigError("compare: configs must share the eval cadence");
  }

  CompareResult result;
  for (const ExperimentConfig& cfg : configs) {
    const RunResult rr = run(cfg);
    if (rr.any_aborted)
      throw std::runtime_error("compare: config '" + cfg.name +
                               "' aborted on a non-finite loss");
    MethodSeries series;
    series.name = cfg.name;
    if (result.steps.empty())
      for (const SummaryRow& r : rr.summary) result.steps.push_back(r.step);
    if (rr.summary.size() != result.steps.size())
      throw std::runtime_error("compare: config '" + cfg.name +
                               "' logged a different number of steps");
    for (const SummaryRow& r : rr.summary) {
      series.train_loss.push_back(r.train_loss_mean);
      series.eval_metric.push_back(r.eval_metric_mean);
      series.objective_gap.push_back(r.objective_gap_mean);
      series.quantized_fraction.push_back(r.quantized_fraction_mean);
      series.q_max.push_back(r.q_max_mean);
      series.inv_slope.push_back(r.inv_slope);
    }
    result.methods.push_back(std::move(series));
  }

  for (const MethodSeries& m : result.methods) {
    TrendSummary trend;
    trend.name = m.name;
    std::vector<double> diffs;
    for (std::size_t i = 0; i + 1 < m.q_max.size(); ++i) {
      if (std::isnan(m.q_max[i]) || std::isnan(m.q_max[i + 1])) {
        diffs.clear();
        break;
      }
      diffs.push_back(m.q_max[i + 1] - m.q_max[i]);
    }
    if (diffs.size() >= 3) {
      const std::size_t third = diffs.size() / 3;
      const auto mean_of = [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += diffs[i];
        return s / double(hi - lo);
      };
      trend.first_third = mean_of(0, third);
      trend.middle_third = mean_of(third, 2 * third);
      trend.last_third = mean_of(2 * third, diffs.size());
      trend.valid = true;
    }
    result.trends.push_back(trend);
  }

  if (out_csv) {
    std::ofstream f(*out_csv, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + out_csv->string());
    f << "step";
    for (const MethodSeries& m : result.methods)
      f << ',' << m.name << "_train_loss," << m.name << "_eval_metric," << m.name
        << "_objective_gap," << m.name << "_quantized_fraction," << m.name << "_q_max";
    f << '\n';
    for (std::size_t i = 0; i < result.steps.size(); ++i) {
      f << result.steps[i];
      for (const MethodSeries& m : result.methods)
        f << ',' << detail::format_double(m.train_loss[i]) << ','
          << detail::format_double(m.eval_metric[i]) << ','
          << detail::format_double(m.objective_gap[i]) << ','
          << detail::format_double(m.quantized_fraction[i]) << ','
          << detail::format_double(m.q_max[i]);
      f << '\n';
    }
    if (!f) throw std::runtime_error("write failed: " + out_csv->string());
  }
  return result;
}

}  // namespace parq
