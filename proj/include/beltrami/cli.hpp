#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "beltrami/diffusivity.hpp"
#include "beltrami/errors.hpp"
#include "beltrami/flow.hpp"
#include "beltrami/io.hpp"
#include "beltrami/learning.hpp"
#include "beltrami/metric.hpp"
#include "beltrami/positional.hpp"
#include "beltrami/solvers.hpp"
#include "beltrami/verify.hpp"

namespace beltrami::cli {

using json = nlohmann::json;

enum Exit : int { kOk = 0, kNumerical = 1, kInput = 2 };

// Every option of every subcommand; names match the config-file keys.
struct Options {
  std::string config;
  std::uint64_t seed = 0;

  // data
  std::string graph, features, labels, positions, out;
  std::string positional = "none";  // none | ppr | poincare | file

  // positional encodings
  double beta = 0.85;
  std::string ppr_mode = "series";
  std::size_t topk = 0;
  std::size_t embed_dim = 2;
  std::size_t embed_epochs = 200;
  double embed_lr = 0.1;
  std::size_t negatives = 5;

  // diffusivity
  std::string kernel = "scaled_dot";
  std::string normalizer = "softmax";
  std::size_t key_dim = 4;
  std::string init = "constant";  // constant | random
  double alpha = 1.0;

  // rewiring
  std::string rewiring = "fixed";
  std::size_t k = 1;
  std::size_t refresh_every = 10;
  double radius = 0.0;
  std::string metric = "euclidean";

  // solver
  std::string method = "euler";
  double tau = 0.1;
  double t_end = 1.0;
  double rtol = 1e-6;
  double atol = 1e-8;
  std::size_t max_steps = 100000;
  std::size_t patience = 0;  // 0: disabled
  std::size_t snapshot_every = 1;
  bool frozen_weights = false;

  // learning
  std::size_t pos_dim = 2;
  std::size_t feat_dim = 8;
  double lr = 0.05;
  std::size_t epochs = 100;
  std::size_t train_per_class = 4;
  std::size_t val_per_class = 0;
  std::string grad = "reverse";  // reverse | fd
  double fd_step = 1e-5;
  std::string params;

  // verify
  std::string suite = "all";
  std::string directed_slots;
};

namespace detail {

inline void add_common(CLI::App* s, Options& o) {
  s->add_option("--config", o.config, "flat key = value file; command-line flags take precedence");
  s->add_option("--seed", o.seed, "RNG seed");
}

inline void add_data(CLI::App* s, Options& o, bool labels) {
  s->add_option("--graph", o.graph, "edge list file")->required();
  s->add_option("--features", o.features, "feature matrix file (default: identity)");
  if (labels) s->add_option("--labels", o.labels, "labels file, -1 for unlabeled")->required();
}

inline void add_positional(CLI::App* s, Options& o) {
  s->add_option("--positional", o.positional, "positional source")
      ->check(CLI::IsMember({"none", "ppr", "poincare", "file"}));
  s->add_option("--positions", o.positions, "positional matrix file (--positional file)");
  s->add_option("--beta", o.beta);
  s->add_option("--ppr_mode", o.ppr_mode)->check(CLI::IsMember({"series", "solve"}));
  s->add_option("--topk", o.topk, "keep the k largest PPR entries per row (0: all)");
  s->add_option("--embed_dim", o.embed_dim);
  s->add_option("--embed_epochs", o.embed_epochs);
  s->add_option("--embed_lr", o.embed_lr);
  s->add_option("--negatives", o.negatives);
}

inline void add_diffusivity(CLI::App* s, Options& o) {
  s->add_option("--kernel", o.kernel)->check(CLI::IsMember({"scaled_dot", "cosine_sim", "pearson", "exp_kernel"}));
  s->add_option("--normalizer", o.normalizer)->check(CLI::IsMember({"softmax", "squareplus"}));
  s->add_option("--key_dim", o.key_dim);
}

inline void add_rewiring(CLI::App* s, Options& o) {
  s->add_option("--rewiring", o.rewiring)->check(CLI::IsMember({"fixed", "knn_precomputed", "knn_adaptive", "radius"}));
  s->add_option("--k", o.k);
  s->add_option("--refresh_every", o.refresh_every);
  s->add_option("--radius", o.radius);
  s->add_option("--metric", o.metric)->check(CLI::IsMember({"euclidean", "poincare"}));
}

inline void add_solver(CLI::App* s, Options& o) {
  s->add_option("--method", o.method)->check(CLI::IsMember({"euler", "rk4", "dopri5"}));
  s->add_option("--tau", o.tau);
  s->add_option("--t_end", o.t_end);
  s->add_option("--rtol", o.rtol);
  s->add_option("--atol", o.atol);
  s->add_option("--max_steps", o.max_steps);
  s->add_option("--patience", o.patience, "0 disables patience-based inference");
}

inline void add_model(CLI::App* s, Options& o) {
  s->add_option("--pos_dim", o.pos_dim, "width of the positional channels u");
  s->add_option("--feat_dim", o.feat_dim, "width of the feature channels x");
  s->add_option("--train_per_class", o.train_per_class);
  s->add_option("--val_per_class", o.val_per_class);
}

inline void build(CLI::App& app, Options& o) {
  app.require_subcommand(1);
  app.fallthrough(false);

  auto* enc = app.add_subcommand("encode", "compute positional encodings");
  add_common(enc, o);
  enc->add_option("--graph", o.graph, "edge list file")->required();
  add_positional(enc, o);
  enc->add_option("--out", o.out, "output matrix file")->required();

  auto* dif = app.add_subcommand("diffuse", "run the flow and dump snapshots");
  add_common(dif, o);
  add_data(dif, o, false);
  add_positional(dif, o);
  add_diffusivity(dif, o);
  add_rewiring(dif, o);
  add_solver(dif, o);
  dif->add_option("--init", o.init, "attention weights")->check(CLI::IsMember({"constant", "random"}));
  dif->add_option("--alpha", o.alpha);
  dif->add_option("--snapshot_every", o.snapshot_every, "accepted steps between snapshots (0: final only)");
  dif->add_flag("--frozen_weights", o.frozen_weights, "compute the attention once at t = 0");
  dif->add_option("--out", o.out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "fit encoders, attention and decoder");
  add_common(tr, o);
  add_data(tr, o, true);
  add_positional(tr, o);
  add_diffusivity(tr, o);
  add_rewiring(tr, o);
  add_solver(tr, o);
  add_model(tr, o);
  tr->add_option("--lr", o.lr);
  tr->add_option("--epochs", o.epochs);
  tr->add_option("--grad", o.grad)->check(CLI::IsMember({"reverse", "fd"}));
  tr->add_option("--fd_step", o.fd_step);
  tr->add_option("--out", o.out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate saved parameters");
  add_common(ev, o);
  add_data(ev, o, true);
  add_positional(ev, o);
  add_rewiring(ev, o);
  add_solver(ev, o);
  add_model(ev, o);
  ev->add_option("--params", o.params, "params.json written by train")->required();
  ev->add_option("--out", o.out, "output JSON file (default: stdout only)");

  auto* ver = app.add_subcommand("verify", "run the property suites");
  add_common(ver, o);
  ver->add_option("suite", o.suite, "suite name")
      ->check(CLI::IsMember({"all", "graph", "polyakov", "solvers", "attention", "rewiring", "positional"}));
  ver->add_option("--directed_slots", o.directed_slots, "audit a directed slot file against the graph invariants");
  ver->add_option("--out", o.out, "also write the report to this file");
}

// Config values become extra `--key=value` arguments, but only for options
// the user did not set on the command line.
inline std::vector<std::string> merge_config(const std::vector<std::string>& args, const std::string& sub,
                                             const std::string& path, CLI::App& first_pass) {
  auto in = io::open_input(path);
  const auto kv = io::read_key_values(in);
  CLI::App* s = first_pass.get_subcommand(sub);
  std::vector<std::string> merged(args.begin() + 1, args.end());
  for (const auto& [key, value] : kv) {
    if (key == "config") throw InputError("config files cannot include other config files");
    CLI::Option* opt = nullptr;
    try {
      opt = s->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw InputError("config key '" + key + "' is not an option of '" + sub + "'");
    }
    if (opt->count() == 0) merged.push_back("--" + key + "=" + value);
  }
  return merged;
}

inline Kernel kernel_of(const Options& o) { return kernel_from_name(o.kernel); }
inline Normalizer normalizer_of(const Options& o) { return normalizer_from_name(o.normalizer); }

inline SolverConfig solver_of(const Options& o) {
  SolverConfig c;
  c.method = method_from_name(o.method);
  c.tau = o.tau;
  c.t_end = o.t_end;
  c.rtol = o.rtol;
  c.atol = o.atol;
  c.max_steps = o.max_steps;
  if (o.patience > 0) c.patience = o.patience;
  c.snapshot_every = o.snapshot_every;
  c.validate();
  return c;
}

inline Matrix identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

inline Matrix load_rows(const std::string& path, std::size_t n, const char* what) {
  Matrix m = io::load_matrix(path);
  if (m.rows() != n)
    throw InputError(std::string(what) + " file has " + std::to_string(m.rows()) + " rows, graph has " +
                     std::to_string(n) + " nodes");
  return m;
}

inline MetricSpace metric_of(const Options& o, std::size_t dim) {
  return o.metric == "poincare" ? MetricSpace::poincare_ball(dim) : MetricSpace::euclidean(dim);
}

// Positional matrix for the requested source; empty (n x 0) for "none".
inline Matrix positional_matrix(const Options& o, const Graph& g) {
  const std::size_t n = g.num_nodes();
  if (o.positional == "none") return Matrix(n, 0);
  if (o.positional == "file") {
    if (o.positions.empty()) throw InputError("--positional file needs --positions");
    return load_rows(o.positions, n, "positions");
  }
  if (o.positional == "ppr") {
    PprConfig c;
    c.beta = o.beta;
    c.mode = o.ppr_mode == "solve" ? PprMode::LinearSolve : PprMode::Series;
    if (o.topk > 0) c.topk = o.topk;
    return ppr_encode(g, c).matrix;
  }
  HypEmbedConfig c;
  c.dim = o.embed_dim;
  c.epochs = o.embed_epochs;
  c.lr = o.embed_lr;
  c.negatives_per_edge = o.negatives;
  c.seed = o.seed;
  return poincare_embed(g, MetricSpace::poincare_ball(o.embed_dim), c).positions;
}

inline RewiringPolicy policy_of(const Options& o, const Graph& base) {
  RewiringPolicy p;
  p.mode = rewiring_from_name(o.rewiring);
  p.k = o.k;
  p.refresh_every = o.refresh_every;
  p.radius = o.radius;
  p.base = base;
  p.validate();
  return p;
}

inline void write_json(const std::string& path, const json& j) {
  auto out = io::open_output(path);
  out << j.dump(2) << '\n';
}

inline std::filesystem::path out_dir(const Options& o) {
  std::filesystem::path dir(o.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw InputError("cannot create output directory '" + o.out + "'");
  return dir;
}

inline json stats_json(const SolverStats& s) {
  return {{"accepted_steps", s.accepted},
          {"rejected_steps", s.rejected},
          {"rhs_evaluations", s.rhs_evaluations},
          {"max_accepted_error", s.max_accepted_error}};
}

inline Matrix joint_unscaled(const JointState<double>& s) {
  Matrix m(s.num_nodes(), s.joint_dim());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t c = 0; c < s.pos_dim(); ++c) m(i, c) = s.U(i, c);
    for (std::size_t c = 0; c < s.feat_dim(); ++c) m(i, s.pos_dim() + c) = s.X(i, c);
  }
  return m;
}

// ---- subcommands ----

inline int cmd_encode(const Options& o, std::ostream& out) {
  if (o.positional == "none") throw InputError("nothing to encode");
  const auto loaded = io::load_graph(o.graph);
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix pe = positional_matrix(o, loaded.graph);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  io::save_matrix(o.out, pe);
  out << "n=" << pe.rows() << " d'=" << pe.cols() << " encoding_ms=" << ms << '\n';
  return kOk;
}

inline int cmd_diffuse(const Options& o, std::ostream& out) {
  const auto loaded = io::load_graph(o.graph);
  const Graph& g = loaded.graph;
  const std::size_t n = g.num_nodes();
  JointState<double> s0;
  s0.X = o.features.empty() ? identity(n) : load_rows(o.features, n, "features");
  s0.U = positional_matrix(o, g);
  s0.alpha = o.alpha;
  s0.validate();
  const SolverConfig cfg = solver_of(o);

  const std::size_t joint = s0.joint_dim();
  DiffusivityParams<double> p;
  if (o.init == "random") {
    std::mt19937_64 rng(o.seed);
    p = verify::detail::random_params(kernel_of(o), normalizer_of(o), o.key_dim, s0.pos_dim(), joint, rng);
  } else {
    p = DiffusivityParams<double>::constant_init(kernel_of(o), normalizer_of(o), o.key_dim, s0.pos_dim(), joint);
  }

  const RewiringPolicy policy = policy_of(o, g);
  if (policy.mode != RewiringMode::Fixed && s0.pos_dim() == 0)
    throw InputError("rewiring '" + o.rewiring + "' needs positional channels");
  BeltramiSystem sys(policy, metric_of(o, s0.pos_dim()), p, s0);
  if (o.frozen_weights && policy.mode == RewiringMode::AdaptiveKnn)
    throw InputError("--frozen_weights cannot be combined with adaptive rewiring");
  std::optional<EdgeWeights<double>> frozen;
  if (o.frozen_weights) frozen = compute_weights(sys.stencil(), s0, p);
  const RhsFn f = [&](const JointState<double>& s) { return frozen ? apply_diffusion(*frozen, s) : sys(s); };
  StepHook hook;
  if (policy.mode == RewiringMode::AdaptiveKnn)
    hook = [&](const JointState<double>& s, std::size_t accepted) { sys.on_accepted_step(s, accepted); };

  const auto dir = out_dir(o);
  auto dump = [&](const Trajectory& traj, const std::string& status, const std::string& error) {
    json snaps = json::array();
    for (std::size_t q = 1; q < traj.states.size(); ++q) {
      const std::string name = "snapshot_" + std::to_string(q) + ".csv";
      auto f_out = io::open_output((dir / name).string());
      io::write_csv(f_out, joint_unscaled(traj.states[q]));
      snaps.push_back({{"file", name}, {"t", traj.times[q]}});
    }
    json stats = stats_json(traj.stats);
    stats["method"] = o.method;
    stats["status"] = status;
    stats["snapshots"] = snaps;
    stats["rewires"] = sys.rewires();
    stats["stencil_edges"] = sys.stencil().num_undirected_edges();
    if (!error.empty()) stats["error"] = error;
    write_json((dir / "stats.json").string(), stats);
    return snaps.size();
  };

  try {
    const Trajectory traj = integrate(s0, cfg, f, hook);
    const std::size_t count = dump(traj, "ok", "");
    out << "snapshots=" << count << " accepted=" << traj.stats.accepted << " rejected=" << traj.stats.rejected
        << " rhs_evaluations=" << traj.stats.rhs_evaluations << '\n';
    return kOk;
  } catch (const SolverError& e) {
    dump(e.partial(), "failed", e.what());
    throw;
  }
}

struct LoadedData {
  Graph graph;
  Graph stencil;
  NodeData data;
};

inline LoadedData load_training_data(const Options& o) {
  LoadedData d;
  d.graph = io::load_graph(o.graph).graph;
  const std::size_t n = d.graph.num_nodes();
  d.data.features = o.features.empty() ? identity(n) : load_rows(o.features, n, "features");
  d.data.positions = positional_matrix(o, d.graph);
  d.data.labels = io::load_labels(o.labels);
  if (d.data.labels.size() != n)
    throw InputError("labels file has " + std::to_string(d.data.labels.size()) + " entries, graph has " +
                     std::to_string(n) + " nodes");
  int mx = -1;
  for (int y : d.data.labels) mx = std::max(mx, y);
  if (mx < 0) throw InputError("no labeled nodes");
  d.data.num_classes = static_cast<std::size_t>(mx) + 1;
  d.data.split = make_split(d.data.labels, d.data.num_classes, o.train_per_class, o.val_per_class, o.seed);

  const RewiringPolicy policy = policy_of(o, d.graph);
  if (policy.mode == RewiringMode::AdaptiveKnn)
    throw InputError("training unrolls a fixed stencil; use fixed, knn_precomputed or radius");
  if (policy.mode != RewiringMode::Fixed && d.data.positions.cols() == 0)
    throw InputError("rewiring '" + o.rewiring + "' needs positional input");
  // The stencil is built once from the raw positional input.
  const std::size_t pin = d.data.positions.cols();
  d.stencil = rewire(policy, d.data.positions,
                     o.positional == "poincare" ? MetricSpace::poincare_ball(pin) : MetricSpace::euclidean(pin));
  return d;
}

inline ModelShape shape_of(const Options& o, const NodeData& data) {
  ModelShape s;
  s.pos_in = data.positions.cols();
  s.feat_in = data.features.cols();
  s.pos_dim = s.pos_in > 0 ? o.pos_dim : 0;
  s.feat_dim = o.feat_dim;
  s.key_dim = o.key_dim;
  s.classes = data.num_classes;
  return s;
}

inline json shape_json(const ModelShape& s) {
  return {{"pos_in", s.pos_in}, {"feat_in", s.feat_in}, {"pos_dim", s.pos_dim},
          {"feat_dim", s.feat_dim}, {"key_dim", s.key_dim}, {"classes", s.classes}};
}

inline json accuracies_json(const Accuracies& a) {
  return {{"train_acc", a.train}, {"val_acc", a.val}, {"test_acc", a.test}, {"terminal_time", a.terminal_time}};
}

inline int cmd_train(const Options& o, std::ostream& out) {
  const LoadedData d = load_training_data(o);
  const ModelShape shape = shape_of(o, d.data);
  const auto init = init_params(shape, kernel_of(o), normalizer_of(o), o.seed);
  TrainConfig cfg;
  cfg.lr = o.lr;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.grad.mode = o.grad == "fd" ? GradMode::FiniteDifference : GradMode::UnrolledReverse;
  cfg.grad.h = o.fd_step;
  cfg.solver = solver_of(o);
  if (cfg.solver.patience) throw InputError("patience applies to eval, not train");

  const auto dir = out_dir(o);
  const TrainResult r = train(d.stencil, d.data, init, cfg);
  {
    auto m = io::open_output((dir / "metrics.jsonl").string());
    for (const auto& e : r.history)
      m << json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc}}
               .dump()
        << '\n';
  }
  const Accuracies acc = evaluate(d.stencil, d.data, r.params, cfg.solver);
  json summary = accuracies_json(acc);
  summary["best_epoch"] = r.best_epoch;
  summary["best_val_acc"] = r.best_val_acc;
  summary["epochs"] = r.history.size();
  summary["final_train_loss"] = r.history.empty() ? 0.0 : r.history.back().train_loss;
  summary["num_parameters"] = init.num_parameters();
  summary["split"] = {{"train", d.data.split.train.size()}, {"val", d.data.split.val.size()},
                      {"test", d.data.split.test.size()}};
  write_json((dir / "summary.json").string(), summary);

  json params = {{"shape", shape_json(shape)},
                 {"kernel", o.kernel},
                 {"normalizer", o.normalizer},
                 {"positional", o.positional},
                 {"theta", r.params.flatten()}};
  write_json((dir / "params.json").string(), params);
  out << summary.dump() << '\n';
  return kOk;
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  const LoadedData d = load_training_data(o);
  json saved;
  {
    auto in = io::open_input(o.params);
    try {
      saved = json::parse(in);
    } catch (const json::exception& e) {
      throw InputError("params file: " + std::string(e.what()));
    }
  }
  ModelShape shape;
  std::vector<double> theta;
  Kernel kernel{};
  Normalizer norm{};
  try {
    const auto& s = saved.at("shape");
    shape = {s.at("pos_in").get<std::size_t>(),   s.at("feat_in").get<std::size_t>(), s.at("pos_dim").get<std::size_t>(),
             s.at("feat_dim").get<std::size_t>(), s.at("key_dim").get<std::size_t>(), s.at("classes").get<std::size_t>()};
    theta = saved.at("theta").get<std::vector<double>>();
    kernel = kernel_from_name(saved.at("kernel").get<std::string>());
    norm = normalizer_from_name(saved.at("normalizer").get<std::string>());
  } catch (const json::exception& e) {
    throw InputError("params file: " + std::string(e.what()));
  }
  if (shape.pos_in != d.data.positions.cols() || shape.feat_in != d.data.features.cols())
    throw InputError("params were trained on inputs of a different width");
  const auto layout = init_params(shape, kernel, norm, 0);
  const auto p = ModelParams<double>::from_flat(layout, std::span<const double>(theta));
  const Accuracies acc = evaluate(d.stencil, d.data, p, solver_of(o));
  const json result = accuracies_json(acc);
  if (!o.out.empty()) write_json(o.out, result);
  out << result.dump() << '\n';
  return kOk;
}

inline int cmd_verify(const Options& o, std::ostream& out) {
  std::optional<verify::SlotAudit> audit;
  if (!o.directed_slots.empty()) {
    auto in = io::open_input(o.directed_slots);
    audit = verify::read_slots(in);
  }
  const json report = verify::run(o.suite, o.seed, audit);
  const std::string text = report.dump(2);
  out << text << '\n';
  if (!o.out.empty()) {
    auto f = io::open_output(o.out);
    f << text << '\n';
  }
  return report["passed"].get<bool>() ? kOk : kNumerical;
}

}  // namespace detail

// Parses and runs one command. Exit codes: 0 success, 1 numerical or
// training failure (including failed verify suites), 2 usage or input error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    Options o;
    std::string sub;
    {
      CLI::App app{"graph Beltrami diffusion"};
      detail::build(app, o);
      try {
        std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
        app.parse(std::move(rev));
      } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kInput;
      }
      sub = app.get_subcommands().front()->get_name();
      if (!o.config.empty()) {
        auto merged = detail::merge_config(args, sub, o.config, app);
        o = Options{};
        CLI::App again{"graph Beltrami diffusion"};
        detail::build(again, o);
        try {
          std::vector<std::string> rev(merged.rbegin(), merged.rend());
          again.parse(std::move(rev));
        } catch (const CLI::ParseError& e) {
          return again.exit(e, out, err) == 0 ? kOk : kInput;
        }
      }
    }
    if (sub == "encode") return detail::cmd_encode(o, out);
    if (sub == "diffuse") return detail::cmd_diffuse(o, out);
    if (sub == "train") return detail::cmd_train(o, out);
    if (sub == "eval") return detail::cmd_eval(o, out);
    return detail::cmd_verify(o, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  }
}

}  // namespace beltrami::cli
