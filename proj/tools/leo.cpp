// leo: data generation, two-stage training, evaluation, ablations, graph
// export and self-verification.
//
// Exit codes: 0 success, 1 usage error, 2 validation error, 3 selfcheck failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "leo/checkpoint.hpp"
#include "leo/config.hpp"
#include "leo/dataset.hpp"
#include "leo/dot.hpp"
#include "leo/experiment.hpp"
#include "leo/selfcheck.hpp"
#include "leo/synth.hpp"

namespace fs = std::filesystem;
using namespace leo;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitSelfcheck = 3;

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v == 0) throw ValidationError("bad --k entry '" + item + "'");
    ks.push_back(v);
  }
  if (ks.empty()) throw ValidationError("--k needs at least one value");
  return ks;
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return RunConfig::from_json(read_json_file(path));
}

std::string epoch_name(int stage, std::size_t epoch) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "stage%d_epoch%03zu.leo", stage, epoch);
  return buf;
}

// --- gen-data ----------------------------------------------------------------

struct GenArgs {
  std::string config;
  std::string out;
  std::optional<std::size_t> scenes;
  std::uint64_t seed = 0;
  std::optional<int> objects_min;
  std::optional<int> objects_max;
};

int cmd_gen_data(const GenArgs& a) {
  auto rc = load_run_config(a.config);
  auto sc = rc.synth;
  if (a.scenes) sc.num_scenes = *a.scenes;
  if (a.objects_min) sc.min_objects = *a.objects_min;
  if (a.objects_max) sc.max_objects = *a.objects_max;
  Dataset d;
  d.vocab = synth::vocabulary(sc);
  d.scenes = synth::generate(sc, a.seed);
  std::vector<std::string> ids;
  for (const auto& s : d.scenes) ids.push_back(s.scan_id);
  d.splits = make_splits(ids, a.seed);
  if (fs::exists(fs::path(a.out) / "scenes")) fs::remove_all(fs::path(a.out) / "scenes");
  save_dataset(a.out, d);
  nlohmann::json echo = {{"seed", a.seed}, {"synth", to_json(sc)}};
  write_text_file((fs::path(a.out) / "data_config.json").string(), dump_json(echo));
  std::cout << "wrote " << d.scenes.size() << " scenes (" << d.splits.train.size() << " train, " << d.splits.val.size()
            << " val, " << d.splits.test.size() << " test) to " << a.out << "\n";
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainOverrides {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> stage1_epochs;
  std::optional<std::size_t> stage2_epochs;
  std::string task;
  std::string strategy;
  std::string link_mode;
};

RunConfig effective_config(const TrainOverrides& o) {
  auto rc = load_run_config(o.config);
  if (!o.data.empty()) rc.data_dir = o.data;
  if (!o.out.empty()) rc.output_dir = o.out;
  if (o.seed) rc.train.seed = *o.seed;
  if (o.stage1_epochs) rc.train.stage1_epochs = *o.stage1_epochs;
  if (o.stage2_epochs) rc.train.stage2_epochs = *o.stage2_epochs;
  if (!o.task.empty()) rc.train.task = parse_task(o.task);
  if (!o.strategy.empty()) rc.train.integration.strategy = parse_strategy(o.strategy);
  if (!o.link_mode.empty()) rc.train.integration.link_mode = parse_link_mode(o.link_mode);
  rc.train.validate();
  return rc;
}

struct TrainArgs {
  TrainOverrides o;
  std::string stage = "all";
  std::string resume;
  std::string init;
  std::optional<std::size_t> stop_after;
};

int cmd_train(const TrainArgs& a) {
  auto rc = effective_config(a.o);
  if (a.stage != "1" && a.stage != "2" && a.stage != "all") throw ValidationError("--stage must be 1, 2 or all");
  const auto data = load_dataset(rc.data_dir);
  rc.model = model_config_for(data.vocab, rc.model);
  const auto train_scenes = data.split("train");
  const auto val_scenes = data.split("val");
  const auto train = prepare_all(train_scenes, rc.model);
  const auto val = prepare_all(val_scenes, rc.model);

  const fs::path out(rc.output_dir);
  fs::create_directories(out / "checkpoints");
  write_text_file((out / "config.json").string(), dump_json(rc.to_json()));

  LeoModel<float> model(rc.model, rc.train.seed);
  Trainer<float> trainer(model, rc.train, train, val);
  const auto log_path = out / "train_log.csv";

  if (!a.resume.empty()) {
    const auto ck = load_checkpoint(a.resume);
    if (!ck.state) throw ValidationError("checkpoint " + a.resume + " has no training state to resume");
    apply_checkpoint(ck, model);
    trainer.restore(*ck.state);
  } else if (a.stage == "2") {
    const std::string init = a.init.empty() ? (out / "stage1.leo").string() : a.init;
    const auto ck = load_checkpoint(init);
    apply_checkpoint(ck, model);
    if (ck.state) {
      TrainState s = *ck.state;
      s.optimizer = {};
      trainer.restore(s);
    }
  }
  if (a.resume.empty()) write_text_file(log_path.string(), EpochLog::csv_header() + "\n");

  const auto train_echo = to_json(rc.train);
  auto hook = [&](const EpochLog& log, const Trainer<float>& t) {
    std::ofstream(log_path, std::ios::app) << log.csv_row() << "\n";
    const auto ck = make_checkpoint(model, t.state(), train_echo);
    save_checkpoint((out / "checkpoints" / epoch_name(log.stage, log.epoch)).string(), ck);
    save_checkpoint((out / "last.leo").string(), ck);
    std::cout << "stage " << log.stage << " epoch " << log.epoch << " lr " << log.lr << " loss " << log.loss
              << " link_auc " << log.link.auc << "\n";
  };
  const std::size_t stop = a.stop_after.value_or(SIZE_MAX);
  auto finish = [&](int stage) {
    const std::size_t total = stage == 1 ? rc.train.stage1_epochs : rc.train.stage2_epochs;
    if (trainer.stage() == stage && trainer.epochs_done() >= total) {
      save_checkpoint((out / ("stage" + std::to_string(stage) + ".leo")).string(),
                      make_checkpoint(model, trainer.state(), train_echo));
    }
  };
  if ((a.stage == "1" || a.stage == "all") && trainer.stage() == 1) {
    trainer.run_stage(1, hook, stop);
    finish(1);
    if (trainer.epochs_done() < rc.train.stage1_epochs) return 0;
  }
  if (a.stage == "2" || a.stage == "all") {
    trainer.run_stage(2, hook, stop);
    finish(2);
  }
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string config;
  std::string data;
  std::string ckpt;
  std::string out;
  std::string split = "test";
  std::string task;
  std::string link_mode;
  std::string strategy;
  std::string ks = "1,3,5,10,20,50,100";
};

int cmd_eval(const EvalArgs& a) {
  auto rc = load_run_config(a.config);
  if (!a.data.empty()) rc.data_dir = a.data;
  Task task = a.task.empty() ? rc.train.task : parse_task(a.task);
  IntegrationConfig integ = rc.train.integration;
  if (!a.link_mode.empty()) integ.link_mode = parse_link_mode(a.link_mode);
  if (!a.strategy.empty()) integ.strategy = parse_strategy(a.strategy);
  const auto ks = parse_ks(a.ks);

  const auto ck = load_checkpoint(a.ckpt);
  const auto model = model_from_checkpoint<float>(ck);
  const auto data = load_dataset(rc.data_dir);
  const auto scenes = data.split(a.split);
  const auto inputs = prepare_all(scenes, model.config());
  const auto summary = evaluate_split(model, inputs, task, integ, ks);

  const fs::path out(a.out.empty() ? (fs::path(rc.output_dir) / "eval").string() : a.out);
  fs::create_directories(out);
  write_text_file((out / "metrics.csv").string(), summary.report.to_csv());
  write_text_file((out / "per_predicate.csv").string(), summary.report.per_predicate_csv(data.vocab.predicates));
  auto j = summary.report.to_json();
  j["link"] = {{"accuracy", summary.link.accuracy}, {"auc", summary.link.auc}, {"edges", summary.link.edges}};
  j["settings"] = {{"task", to_string(task)},
                   {"strategy", to_string(integ.strategy)},
                   {"link_mode", to_string(integ.link_mode)},
                   {"split", a.split},
                   {"scenes", scenes.size()}};
  write_text_file((out / "metrics.json").string(), dump_json(j));
  std::ostringstream timing;
  timing << "scan_id,objects,edges,seconds\n";
  double total = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    timing << scenes[i].scan_id << ',' << inputs[i].num_objects << ',' << inputs[i].graph.num_edges() << ','
           << summary.scenes[i].seconds << '\n';
    total += summary.scenes[i].seconds;
  }
  write_text_file((out / "timing.csv").string(), timing.str());
  std::cout << summary.report.to_csv();
  std::cout << "link_auc," << summary.link.auc << "\n";
  std::cout << "mean_seconds_per_scene," << (scenes.empty() ? 0.0 : total / static_cast<double>(scenes.size()))
            << "\n";
  return 0;
}

// --- ablate ------------------------------------------------------------------

struct AblateArgs {
  TrainOverrides o;
  std::string sweep;
  std::size_t seeds = 3;
  std::string ks = "1,3,5,10";
};

int cmd_ablate(const AblateArgs& a) {
  auto rc = effective_config(a.o);
  const auto ks = parse_ks(a.ks);
  if (a.seeds == 0) throw ValidationError("--seeds must be positive");
  const auto data = load_dataset(rc.data_dir);
  const auto base_model = model_config_for(data.vocab, rc.model);
  const auto train_scenes = data.split("train");
  const auto val_scenes = data.split("val");
  const auto test_scenes = data.split("test");

  struct Setting {
    std::string value;
    ModelConfig model;
    TrainConfig train;
  };
  std::vector<Setting> settings;
  if (a.sweep == "depth") {
    for (std::size_t l = 1; l <= 7; ++l) {
      Setting s{std::to_string(l), base_model, rc.train};
      s.model.linegnn_layers = l;
      settings.push_back(s);
    }
  } else if (a.sweep == "strategy") {
    for (auto st : {Strategy::kPre, Strategy::kPost, Strategy::kNone, Strategy::kNoneLp}) {
      Setting s{to_string(st), base_model, rc.train};
      s.train.integration.strategy = st;
      settings.push_back(s);
    }
  } else if (a.sweep == "linkmode") {
    for (auto m : {LinkMode::kFc, LinkMode::kLp, LinkMode::kGt}) {
      Setting s{to_string(m), base_model, rc.train};
      s.train.integration.link_mode = m;
      settings.push_back(s);
    }
  } else {
    throw ValidationError("--sweep must be depth, strategy or linkmode");
  }

  const fs::path out(rc.output_dir);
  fs::create_directories(out);
  write_text_file((out / "config.json").string(), dump_json(rc.to_json()));
  std::ostringstream csv;
  csv.precision(17);
  csv << "sweep,value,metric,k,mean,std,n\n";
  for (const auto& s : settings) {
    const auto train = prepare_all(train_scenes, s.model);
    const auto val = prepare_all(val_scenes, s.model);
    const auto test = prepare_all(test_scenes, s.model);
    std::map<std::pair<std::string, std::size_t>, std::vector<double>> samples;
    for (std::size_t seed = 0; seed < a.seeds; ++seed) {
      auto tc = s.train;
      tc.seed = rc.train.seed + seed;
      const auto model = train_model<float>(s.model, tc, train, val);
      const auto sum = evaluate_split(model, test, tc.task, tc.integration, ks);
      for (const auto& e : sum.report.entries) samples[{e.metric, e.k}].push_back(e.value);
      samples[{"link_auc", 0}].push_back(sum.link.auc);
      std::cout << a.sweep << "=" << s.value << " seed " << tc.seed << " done\n";
    }
    for (const auto& [key, v] : samples) {
      double mean = 0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      csv << a.sweep << ',' << s.value << ',' << key.first << ',' << key.second << ',' << mean << ',' << sd << ','
          << v.size() << '\n';
    }
  }
  write_text_file((out / ("ablation_" + a.sweep + ".csv")).string(), csv.str());
  std::cout << csv.str();
  return 0;
}

// --- export-graph ------------------------------------------------------------

struct ExportArgs {
  std::string ckpt;
  std::string scene;
  std::string out;
  std::string vocab;
  std::string task = "predcls";
  std::string strategy = "pre";
  std::string link_mode = "lp";
  std::size_t k = 10;
  bool line_graph = false;
};

int cmd_export_graph(const ExportArgs& a) {
  const auto ck = load_checkpoint(a.ckpt);
  const auto model = model_from_checkpoint<float>(ck);
  Vocabulary vocab;
  if (!a.vocab.empty()) {
    vocab = load_vocabulary(a.vocab);
  } else {
    for (std::size_t i = 0; i < model.config().num_object_classes; ++i) vocab.objects.push_back(std::to_string(i));
    for (std::size_t i = 0; i < model.config().num_predicates; ++i) vocab.predicates.push_back(std::to_string(i));
  }
  const auto scene = load_scene_json(a.scene, SceneLimits::from(vocab));
  const auto in = prepare_inputs(scene, model.config());
  IntegrationConfig integ{parse_strategy(a.strategy), parse_link_mode(a.link_mode)};
  const auto ev = evaluate_scene(model, in, parse_task(a.task), integ);

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const auto stem = (out.parent_path() / out.stem()).string();
  write_text_file(out.string(), predicted_graph_dot(scene, ev.triplets.predictions, vocab, a.k));
  write_text_file(stem + ".gt.dot", scene_graph_dot(scene, vocab));
  if (a.line_graph) write_text_file(stem + ".line.dot", line_graph_dot(scene, in.graph, in.line_graph));
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

// --- selfcheck ---------------------------------------------------------------

int cmd_selfcheck(std::uint64_t seed, bool full) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_selfcheck(seed, full);
  bool ok = true;
  std::printf("%-36s %-6s %-12s %-10s %s\n", "check", "result", "value", "limit", "detail");
  for (const auto& r : results) {
    std::printf("%-36s %-6s %-12.3g %-10.3g %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL", r.value, r.limit,
                r.detail.c_str());
    ok = ok && r.pass;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s in %.1f s\n", ok ? "all checks passed" : "SELFCHECK FAILED", secs);
  return ok ? 0 : kExitSelfcheck;
}

void add_train_overrides(CLI::App* c, TrainOverrides& o) {
  c->add_option("--config", o.config, "JSON run configuration");
  c->add_option("--data", o.data, "dataset directory (overrides data_dir)");
  c->add_option("--out", o.out, "output directory (overrides output_dir)");
  c->add_option("--seed", o.seed, "training seed");
  c->add_option("--stage1-epochs", o.stage1_epochs);
  c->add_option("--stage2-epochs", o.stage2_epochs);
  c->add_option("--task", o.task, "predcls|sgcls");
  c->add_option("--strategy", o.strategy, "pre|post|none|none+lp");
  c->add_option("--link-mode", o.link_mode, "fc|lp|gt");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LEO scene-graph reasoning: data, training, evaluation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate a synthetic dataset");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--config", gen.config, "JSON run configuration (synth section)");
  g->add_option("--scenes", gen.scenes, "number of scenes");
  g->add_option("--seed", gen.seed, "data seed");
  g->add_option("--objects-min", gen.objects_min);
  g->add_option("--objects-max", gen.objects_max);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "two-stage training");
  add_train_overrides(t, tr.o);
  t->add_option("--stage", tr.stage, "1, 2 or all");
  t->add_option("--resume", tr.resume, "checkpoint to continue from");
  t->add_option("--init", tr.init, "stage-1 checkpoint for --stage 2 (default OUT/stage1.leo)");
  t->add_option("--stop-after-epoch", tr.stop_after, "stop once the current stage has this many epochs");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--config", ev.config, "JSON run configuration");
  e->add_option("--data", ev.data, "dataset directory");
  e->add_option("--ckpt", ev.ckpt, "checkpoint")->required();
  e->add_option("--out", ev.out, "report directory");
  e->add_option("--split", ev.split, "train|val|test");
  e->add_option("--task", ev.task, "predcls|sgcls");
  e->add_option("--link-mode", ev.link_mode, "fc|lp|gt");
  e->add_option("--strategy", ev.strategy, "pre|post|none|none+lp");
  e->add_option("--k", ev.ks, "comma-separated k values");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "ablation sweep, mean and std over seeds");
  add_train_overrides(a, ab.o);
  a->add_option("--sweep", ab.sweep, "depth|strategy|linkmode")->required();
  a->add_option("--seeds", ab.seeds, "seeds per setting");
  a->add_option("--k", ab.ks, "comma-separated k values");

  ExportArgs ex;
  auto* x = app.add_subcommand("export-graph", "DOT export of predicted and ground-truth graphs");
  x->add_option("--ckpt", ex.ckpt, "checkpoint")->required();
  x->add_option("--scene", ex.scene, "scene JSON file")->required();
  x->add_option("--out", ex.out, "DOT output path")->required();
  x->add_option("--vocab", ex.vocab, "vocabulary JSON for labels");
  x->add_option("--task", ex.task, "predcls|sgcls");
  x->add_option("--strategy", ex.strategy, "pre|post|none|none+lp");
  x->add_option("--link-mode", ex.link_mode, "fc|lp|gt");
  x->add_option("--k", ex.k, "number of predicted relationships drawn");
  x->add_flag("--line-graph", ex.line_graph, "also write the line-graph structure");

  std::uint64_t check_seed = 1;
  bool check_full = false;
  auto* s = app.add_subcommand("selfcheck", "gradient, line-graph and metric oracles");
  s->add_option("--seed", check_seed);
  s->add_flag("--full", check_full, "check every parameter end to end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*a) return cmd_ablate(ab);
    if (*x) return cmd_export_graph(ex);
    if (*s) return cmd_selfcheck(check_seed, check_full);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
