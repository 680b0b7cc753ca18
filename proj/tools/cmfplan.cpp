// cmfplan command line: phantom data, training, planning, simulation,
// evaluation and file checks. Exit codes: 0 ok, 1 usage, 2 missing/invalid
// input, 3 training diverged, 4 checkpoint mismatch, 5 invariant violation.

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cmfplan/baseline.hpp"
#include "cmfplan/config.hpp"
#include "cmfplan/errors.hpp"
#include "cmfplan/eval.hpp"
#include "cmfplan/io.hpp"
#include "cmfplan/phantom.hpp"
#include "cmfplan/plan_search.hpp"
#include "cmfplan/planner.hpp"
#include "cmfplan/simulator.hpp"

namespace fs = std::filesystem;
using namespace cmf;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInput = 2, kDiverged = 3, kMismatch = 4, kInvariant = 5 };

struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::string preset_name;
  int jobs = 1;
};

AppConfig load_app_config(const Common& c) {
  if (!c.config_path.empty()) {
    if (!c.preset_name.empty())
      return config_from_json(read_json(c.config_path), preset(c.preset_name));
    return load_config(c.config_path);
  }
  return c.preset_name.empty() ? default_config() : preset(c.preset_name);
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file (partial files overlay the base)");
  cmd->add_option("--preset", c.preset_name, "base config: default or desk");
  cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

std::vector<fs::path> case_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PhantomCase> load_cases(const fs::path& dir) {
  std::vector<PhantomCase> cases;
  for (const auto& f : case_files(dir)) cases.push_back(phantom_case_from_json(read_json(f)));
  return cases;
}

// A phantom case file or a bare planning case.
PlanningCase load_planning_case(const fs::path& p) {
  const Json j = read_json(p);
  if (j.contains("planning")) return phantom_case_from_json(j).planning;
  return planning_case_from_json(j);
}

std::string case_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%05zu.json", i);
  return buf;
}

bool explicit_config(const Common& c) { return !c.config_path.empty() || !c.preset_name.empty(); }

// With an explicit config the checkpoint must match its architecture.
AcmtModel load_acmt(const fs::path& p, Direction want, const AcmtConfig* expected = nullptr) {
  AcmtModel m = acmt_from_checkpoint(read_json(p), expected);
  if (m.direction != want)
    throw CheckpointMismatch(p.string() + " holds a " + std::string(to_string(m.direction)) +
                             " model, expected " + std::string(to_string(want)));
  return m;
}

// --- commands ---------------------------------------------------------------

int cmd_config(const Common& c, bool dump) {
  const AppConfig cfg = load_app_config(c);
  if (dump) std::cout << canonical(to_json(cfg));
  return kOk;
}

struct GenArgs {
  std::size_t train = 0, test = 0;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const Common& c, const GenArgs& a) {
  AppConfig cfg = load_app_config(c);
  if (a.seed) cfg.phantom.seed = *a.seed;
  cfg.phantom.validate();
  const fs::path out(a.out);
  std::error_code ec;
  fs::create_directories(out / "train", ec);
  fs::create_directories(out / "test", ec);
  if (ec || !fs::is_directory(out / "train") || !fs::is_directory(out / "test"))
    throw InvalidArgument("cannot create output directory " + out.string());

  const std::size_t total = a.train + a.test;
  std::vector<std::string> text(total);
  std::vector<std::exception_ptr> errors(total);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(total); ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      const bool tr = i < a.train;
      const auto seed = case_seed(cfg.phantom.seed, tr ? Split::Train : Split::Test,
                                  tr ? i : i - a.train);
      text[i] = canonical(to_json(generate_case(cfg.phantom, seed)));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t i = 0; i < total; ++i) {
    const bool tr = i < a.train;
    write_text(out / (tr ? "train" : "test") / case_name(tr ? i : i - a.train), text[i]);
  }
  write_json(out / "dataset.json", Json{{"phantom", to_json(cfg.phantom)},
                                        {"train", a.train},
                                        {"test", a.test}});
  std::cout << "wrote " << a.train << " train and " << a.test << " test cases to " << out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string role, data, out, loss_csv;
};

void write_loss_csv(const fs::path& p, const TrainResult& r) {
  std::ostringstream s;
  s << "epoch,loss\n";
  s.precision(17);
  for (std::size_t e = 0; e < r.loss_history.size(); ++e) s << e << "," << r.loss_history[e] << "\n";
  write_text(p, s.str());
}

int cmd_train(const Common& c, const TrainArgs& a) {
  AppConfig cfg = load_app_config(c);
  cfg.train.jobs = c.jobs;
  const auto cases = load_cases(fs::path(a.data) / "train");
  if (cases.empty()) throw InvalidArgument("no training cases in " + a.data + "/train");
  const auto views = training_views(cases, cfg.augment);

  TrainResult result;
  Json ckpt;
  if (a.role == "baseline") {
    std::vector<DefnetSample> data;
    for (const auto& [i, p] : views) data.push_back(defnet_sample(cases[i], p));
    auto model = make_defnet(cfg.baseline, cfg.model_seed + 2);
    result = train(model, std::span<const DefnetSample>(data), cfg.train);
    ckpt = checkpoint_json(model);
  } else {
    const bool bp = a.role == "bp";
    std::vector<MovementSample> data;
    for (const auto& [i, p] : views)
      data.push_back(bp ? bp_sample(cases[i], p) : fs_sample(cases[i], p));
    auto model = make_acmt(bp ? cfg.bp : cfg.fs, bp ? Direction::FaceToBone : Direction::BoneToFace,
                           cfg.model_seed + (bp ? 0 : 1));
    result = train(model, std::span<const MovementSample>(data), bp ? cfg.train : fs_train_hyper(cfg));
    ckpt = checkpoint_json(model);
  }
  write_json(a.out, ckpt);
  const fs::path csv = a.loss_csv.empty() ? fs::path(a.out).replace_extension(".loss.csv")
                                          : fs::path(a.loss_csv);
  write_loss_csv(csv, result);
  std::cout << "trained " << a.role << " on " << views.size() << " samples for "
            << result.loss_history.size() << " epochs";
  if (!result.loss_history.empty()) std::cout << ", final loss " << result.loss_history.back();
  std::cout << "\n";
  return kOk;
}

struct PlanArgs {
  std::string case_file, bp, fs = "oracle", out, audit;
  std::size_t n = 10;
  std::uint64_t seed = 0;
};

int cmd_plan(const Common& c, const PlanArgs& a) {
  const AppConfig cfg = load_app_config(c);
  const PlanningCase pc = load_planning_case(a.case_file);
  const bool strict = explicit_config(c);
  const AcmtModel bp = load_acmt(a.bp, Direction::FaceToBone, strict ? &cfg.bp : nullptr);
  SearchOptions opts = cfg.search;
  opts.candidates = a.n;
  opts.seed = a.seed;
  opts.jobs = c.jobs;

  SearchResult r;
  if (a.fs == "oracle") {
    const OracleSimulator oracle(cfg.phantom.sigma);
    r = run([&](const PlanningCase& x) { return plan_case(bp, x, cfg.planner); }, oracle, pc, opts);
  } else {
    const AcmtModel fsm = load_acmt(a.fs, Direction::BoneToFace, strict ? &cfg.fs : nullptr);
    r = run(bp, fsm, pc, opts, cfg.planner);
  }
  write_json(a.out, to_json(r.best().plan));
  if (!a.audit.empty()) write_json(a.audit, audit_json(r));
  std::cout << "winner " << r.winner << " of " << r.candidates.size() << ", score "
            << r.best().score << " mm\n";
  return kOk;
}

struct SimArgs {
  std::string case_file, plan = "identity", fs = "oracle", out, csv;
};

int cmd_simulate(const Common& c, const SimArgs& a) {
  const AppConfig cfg = load_app_config(c);
  const PlanningCase pc = load_planning_case(a.case_file);
  const BonyPlan plan = a.plan == "identity" ? BonyPlan::identity(pc.pre_bone.movable_present())
                                             : plan_from_json(read_json(a.plan));
  SimulatedFace face = [&] {
    if (a.fs == "oracle") return OracleSimulator(cfg.phantom.sigma).simulate(pc, plan);
    return simulate(load_acmt(a.fs, Direction::BoneToFace,
                               explicit_config(c) ? &cfg.fs : nullptr),
                    pc, plan);
  }();
  write_text(a.out, to_ply(face.mesh));
  if (!a.csv.empty()) {
    std::ostringstream s;
    s << "point,vertex,distance_mm\n";
    s.precision(17);
    double total = 0.0;
    for (std::size_t i = 0; i < pc.face_sample_indices.size(); ++i) {
      const auto v = pc.face_sample_indices[i];
      const double d = (face.mesh.vertices[v] - pc.desired_face[i]).norm();
      total += d;
      s << i << "," << v << "," << d << "\n";
    }
    write_text(a.csv, s.str());
    std::cout << "facial MAE vs desired " << total / pc.face_sample_indices.size() << " mm\n";
  }
  return kOk;
}

struct EvalArgs {
  std::string data, bp, fs, baseline, out, table, csv;
};

int cmd_evaluate(const Common& c, const EvalArgs& a) {
  const AppConfig cfg = load_app_config(c);
  const auto cases = load_cases(fs::path(a.data) / "test");
  if (cases.empty()) throw InvalidArgument("no test cases in " + a.data + "/test");
  std::optional<AcmtModel> bp, fsm;
  std::optional<DefnetModel> base;
  EvalModels models;
  const bool strict = explicit_config(c);
  if (!a.bp.empty())
    models.bp = &bp.emplace(load_acmt(a.bp, Direction::FaceToBone, strict ? &cfg.bp : nullptr));
  if (!a.fs.empty())
    models.fs = &fsm.emplace(load_acmt(a.fs, Direction::BoneToFace, strict ? &cfg.fs : nullptr));
  if (!a.baseline.empty())
    models.baseline = &base.emplace(
        defnet_from_checkpoint(read_json(a.baseline), strict ? &cfg.baseline : nullptr));
  EvalOptions o;
  o.search = cfg.search;
  o.planner = cfg.planner;
  o.metric = cfg.mae_metric;
  o.exact_max_n = cfg.exact_max_n;
  o.jobs = c.jobs;
  EvalReport r = evaluate(cases, models, o);
  r.config_snapshot = canonical(to_json(cfg));
  if (!a.out.empty()) write_json(a.out, to_json(r));
  if (!a.csv.empty()) write_text(a.csv, per_point_csv(r, cases));
  const std::string table = render_table(r);
  if (!a.table.empty()) write_text(a.table, table);
  std::cout << table;
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed) {
  AcmtConfig cfg;
  cfg.tower.width_divisor = 32.0;
  cfg.tower.point_divisor = 64.0;
  cfg.tower.radii = {20.0, 40.0, 80.0, 160.0};
  cfg.tower.max_neighbors = 6;
  auto model = make_acmt(cfg, Direction::FaceToBone, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0), b(-0.1, 0.1);
  for (const auto& p : collect_params(model))
    if (p.name.ends_with("bias"))
      for (auto& x : p.values) x = b(rng);
  auto cloud = [&](std::size_t n, double s) {
    std::vector<Vec3> v(n);
    for (auto& x : v) x = Vec3(u(rng), u(rng), u(rng)) * s;
    return v;
  };
  const auto src = cloud(48, 50.0), tgt = cloud(40, 50.0), mv = cloud(48, 3.0),
             truth = cloud(40, 3.0);
  auto loss = [&] { return mse_loss(acmt_forward(model, src, tgt, mv), truth, nullptr); };
  AcmtModel g = zeros_like(model);
  AcmtTape tape;
  Tensor2 d;
  mse_loss(acmt_forward(model, src, tgt, mv, &tape), truth, &d);
  acmt_backward(model, tape, d, g);
  const double err = finite_diff_check(loss, collect_params(model), collect_params(g), 1e-4);
  std::cout << "max relative gradient error " << err << "\n";
  if (!(err < 1e-4)) throw InvariantViolation("gradient check failed");
  return kOk;
}

// Recognizes the file by content and runs the matching parser, which
// enforces the type invariants. Phantom cases are also checked against a
// fresh tissue-oracle evaluation.
std::string validate_file(const fs::path& p) {
  const auto ext = p.extension();
  if (ext == ".ply" || ext == ".obj") {
    read_mesh(p);
    return "mesh";
  }
  const Json j = read_json(p);
  if (!j.is_object()) throw InvalidArgument("top-level JSON must be an object");
  if (j.contains("format")) {
    const auto kind = checkpoint_kind(j);
    if (kind == "defnet") defnet_from_checkpoint(j);
    else acmt_from_checkpoint(j);
    return kind + " checkpoint";
  }
  if (j.contains("planning")) {
    const auto c = phantom_case_from_json(j);
    const auto desired = tissue_oracle(c.planning.pre_bone.points(), c.post_bone(),
                                       c.planning.pre_face, c.spec.sigma)
                             .displaced();
    for (std::size_t i = 0; i < desired.size(); ++i)
      if ((desired[i] - c.planning.desired_face[i]).norm() > 1e-9)
        throw InvalidArgument("desired face disagrees with the ground-truth plan at point " +
                              std::to_string(i));
    return "phantom case";
  }
  if (j.contains("pre_face")) {
    planning_case_from_json(j);
    return "planning case";
  }
  if (j.contains("methods")) {
    eval_report_from_json(j);
    return "evaluation report";
  }
  if (j.contains("LF")) {
    plan_from_json(j);
    return "plan";
  }
  if (j.contains("candidates") && j.contains("winner")) {
    const auto& cands = j.at("candidates");
    const auto w = j.at("winner").get<std::size_t>();
    if (!cands.is_array() || w >= cands.size())
      throw InvalidArgument("audit winner index out of range");
    std::size_t flagged = 0;
    for (const auto& c : cands) {
      plan_from_json(c.at("plan"));
      if (c.at("winner").get<bool>()) ++flagged;
      if (c.at("score").get<double>() < cands[w].at("score").get<double>())
        throw InvalidArgument("audit winner does not have the lowest score");
    }
    if (flagged != 1 || !cands[w].at("winner").get<bool>())
      throw InvalidArgument("audit must flag exactly the winner");
    return "audit";
  }
  if (j.contains("phantom") && j.contains("train") && j.contains("test")) {
    phantom_spec_from_json(j.at("phantom"));
    return "dataset manifest";
  }
  if (j.contains("preset")) {
    Json rest = j;
    rest.erase("preset");
    config_from_json(rest, preset(j.at("preset").get<std::string>()));
  } else {
    config_from_json(j);
  }
  return "config";
}

int cmd_validate(const std::vector<std::string>& paths) {
  int failures = 0;
  std::vector<fs::path> files;
  for (const auto& s : paths) {
    const fs::path p(s);
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
    } else {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      const std::string kind = validate_file(f);
      std::cout << f.string() << ": ok (" << kind << ")\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cout << f.string() << ": INVALID: " << e.what() << "\n";
    }
  }
  std::cout << files.size() << " files, " << failures << " errors\n";
  return failures == 0 ? kOk : kInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phantom-scale bony surgical planning with correspondence-based movement transfer"};
  app.require_subcommand(1);
  Common common;

  auto* config = app.add_subcommand("config", "print the effective configuration");
  bool dump = false;
  add_common(config, common);
  config->add_flag("--dump", dump, "print every setting as JSON");

  auto* gen = app.add_subcommand("gen-data", "generate a phantom dataset");
  GenArgs gen_args;
  add_common(gen, common);
  gen->add_option("--spec", common.config_path, "alias of --config");
  gen->add_option("--train", gen_args.train, "training cases")->required();
  gen->add_option("--test", gen_args.test, "test cases")->required();
  gen->add_option("--out", gen_args.out, "output directory")->required();
  gen->add_option("--seed", gen_args.seed, "base seed (overrides phantom.seed)");

  auto* tr = app.add_subcommand("train", "train one model and write a checkpoint");
  TrainArgs train_args;
  add_common(tr, common);
  tr->add_option("--role", train_args.role, "bp, fs or baseline")
      ->required()
      ->check(CLI::IsMember({"bp", "fs", "baseline"}));
  tr->add_option("--data", train_args.data, "dataset directory")->required();
  tr->add_option("--out", train_args.out, "checkpoint file")->required();
  tr->add_option("--loss-csv", train_args.loss_csv, "loss history (default <out>.loss.csv)");

  auto* plan = app.add_subcommand("plan", "plan one case with candidate search");
  PlanArgs plan_args;
  add_common(plan, common);
  plan->add_option("--case", plan_args.case_file, "case JSON")->required();
  plan->add_option("--bp", plan_args.bp, "bony planner checkpoint")->required();
  plan->add_option("--fs", plan_args.fs, "facial simulator checkpoint, or 'oracle'");
  plan->add_option("--n", plan_args.n, "candidates")->check(CLI::PositiveNumber);
  plan->add_option("--seed", plan_args.seed, "perturbation seed");
  plan->add_option("--out", plan_args.out, "plan JSON")->required();
  plan->add_option("--audit", plan_args.audit, "per-candidate audit JSON");

  auto* sim = app.add_subcommand("simulate", "predict the post-operative face for a plan");
  SimArgs sim_args;
  add_common(sim, common);
  sim->add_option("--case", sim_args.case_file, "case JSON")->required();
  sim->add_option("--plan", sim_args.plan, "plan JSON, or 'identity'");
  sim->add_option("--fs", sim_args.fs, "facial simulator checkpoint, or 'oracle'");
  sim->add_option("--out", sim_args.out, "face mesh (PLY)")->required();
  sim->add_option("--csv", sim_args.csv, "per-point distance to the desired face");

  auto* ev = app.add_subcommand("evaluate", "evaluate models on a test set");
  EvalArgs eval_args;
  add_common(ev, common);
  ev->add_option("--data", eval_args.data, "dataset directory")->required();
  ev->add_option("--bp", eval_args.bp, "bony planner checkpoint");
  ev->add_option("--fs", eval_args.fs, "facial simulator checkpoint");
  ev->add_option("--baseline", eval_args.baseline, "baseline checkpoint");
  ev->add_option("--out", eval_args.out, "report JSON");
  ev->add_option("--table", eval_args.table, "text table");
  ev->add_option("--csv", eval_args.csv, "per-point errors");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of a toy model");
  std::uint64_t gc_seed = 1;
  gc->add_option("--seed", gc_seed, "model and data seed");

  auto* val = app.add_subcommand("validate", "check files against their type invariants");
  std::vector<std::string> val_paths;
  val->add_option("paths", val_paths, "files or directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  omp_set_num_threads(common.jobs);
  try {
    if (*config) return cmd_config(common, dump);
    if (*gen) return cmd_gen_data(common, gen_args);
    if (*tr) return cmd_train(common, train_args);
    if (*plan) return cmd_plan(common, plan_args);
    if (*sim) return cmd_simulate(common, sim_args);
    if (*ev) return cmd_evaluate(common, eval_args);
    if (*gc) return cmd_gradcheck(gc_seed);
    if (*val) return cmd_validate(val_paths);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const DegenerateGeometry& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << " (epoch " << e.epoch() << ")\n";
    return kDiverged;
  } catch (const CheckpointMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMismatch;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvariant;
  }
  return kUsage;
}
