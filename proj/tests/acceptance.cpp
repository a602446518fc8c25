// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all
// pass. Thresholds and experiment sizes are fixed below.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "leo/dataset.hpp"
#include "leo/experiment.hpp"
#include "leo/selfcheck.hpp"
#include "leo/synth.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

namespace fs = std::filesystem;
using namespace leo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct SplitData {
  Vocabulary vocab;
  std::vector<Scene> train, test;
};

SplitData synth_split(const synth::SynthConfig& sc, std::uint64_t seed) {
  Dataset d{synth::vocabulary(sc), synth::generate(sc, seed), {}};
  std::vector<std::string> ids;
  for (const auto& s : d.scenes) ids.push_back(s.scan_id);
  d.splits = make_splits(ids, seed);
  return {d.vocab, d.split("train"), d.split("test")};
}

// ---------------------------------------------------------------------------

constexpr double kC1Seconds = 5;

Outcome structural_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t bad_counts = 0, bad_graphs = 0;
  for (std::size_t k = 2; k <= 12; ++k) {
    const auto lg = build_line_graph(PrimitiveGraph::complete(k));
    if (lg.num_nodes() != k * (k - 1) || lg.num_adjacencies() != k * (k - 1) * (k - 2)) ++bad_counts;
  }
  SplitMix64 rng(1);
  for (int trial = 0; trial < 50;) {
    const auto g = selfcheck::random_graph(rng, 8);
    if (g.num_edges() == g.num_objects() * (g.num_objects() - 1)) continue;
    ++trial;
    if (selfcheck::adjacency_set(build_line_graph(g)) != oracle::same_source_pairs(g.edges())) ++bad_graphs;
  }
  const double secs = seconds_since(t0);
  return {bad_counts == 0 && bad_graphs == 0 && secs < kC1Seconds,
          "K=2..12 count mismatches " + std::to_string(bad_counts) + ", brute-force mismatches " +
              std::to_string(bad_graphs) + "/50, " + fmt("%.2f s (limit 5 s)", secs)};
}

constexpr double kC2OpTolerance = 1e-4;
constexpr double kC2PipelineTolerance = 1e-3;
constexpr double kC2Seconds = 60;

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double op_worst = 0;
  std::string op_name;
  std::size_t ops = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    for (auto& c : selfcheck::op_cases(seed)) {
      const auto r = gradcheck(c.loss, c.inputs);
      ++ops;
      if (r.max_rel_error >= op_worst) {
        op_worst = r.max_rel_error;
        op_name = c.name;
      }
    }
  double e2e_worst = 0;
  std::size_t elements = 0, reprobed = 0;
  for (auto task : {Task::kPredCls, Task::kSgCls})
    for (auto st : {Strategy::kPre, Strategy::kPost, Strategy::kNone, Strategy::kNoneLp}) {
      const auto r = selfcheck::pipeline_gradcheck(task, st, 1);
      e2e_worst = std::max(e2e_worst, r.max_rel_error);
      elements += r.checked;
      reprobed += r.reprobed;
    }
  const double secs = seconds_since(t0);
  return {op_worst <= kC2OpTolerance && e2e_worst <= kC2PipelineTolerance && secs < kC2Seconds,
          std::to_string(ops) + " op checks worst " + fmt("%.2e", op_worst) + " (" + op_name + ", limit 1e-4); " +
              "8 end-to-end cases, " + std::to_string(elements) + " elements (" + std::to_string(reprobed) +
              " reprobed at a kink) worst " + fmt("%.2e", e2e_worst) + " (limit 1e-3); " +
              fmt("%.1f s (limit 60 s)", secs)};
}

constexpr double kC3Seconds = 10;

Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  SplitMix64 rng(1);
  std::size_t mismatches = 0, dominance = 0, monotone = 0, comparisons = 0;
  for (int f = 0; f < 50; ++f) {
    std::vector<EvalScene> fixture;
    for (int s = 0; s < 5; ++s) fixture.push_back(oracle::random_fixture(rng));
    for (bool c : {true, false}) {
      double prev_r = 0, prev_m = 0;
      for (std::size_t k = 1; k <= 40; ++k) {
        const double r = recall_at_k(fixture, k, c), m = mean_recall_at_k(fixture, k, c);
        comparisons += 2;
        mismatches += (r != oracle::recall(fixture, k, c)) + (m != oracle::mean_recall(fixture, k, c));
        monotone += (r < prev_r) + (m < prev_m);
        prev_r = r;
        prev_m = m;
      }
    }
    for (const auto& scene : fixture) {
      const std::vector<EvalScene> one = {scene};
      for (std::size_t k = 1; k <= 40; ++k) dominance += recall_at_k(one, k, false) < recall_at_k(one, k, true);
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && dominance == 0 && monotone == 0 && secs < kC3Seconds,
          "oracle mismatches " + std::to_string(mismatches) + "/" + std::to_string(comparisons) +
              ", scenes x k with ngcR@k < R@k " + std::to_string(dominance) + "/10000" +
              ", monotonicity violations " + std::to_string(monotone) + ", " + fmt("%.2f s (limit 10 s)", secs)};
}

constexpr double kC4Recall = 0.95;
constexpr double kC4Seconds = 600;

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.num_scenes = 80;
  sc.min_objects = 4;
  sc.max_objects = 6;
  sc.p_stack = 0.6;
  sc.p_attach = 0.4;
  sc.predicates = {synth::Predicate::kStandingOn, synth::Predicate::kAttachedTo};
  // First 20 scenes whose relationships sit on distinct pairs, at most five.
  std::vector<Scene> scenes;
  for (const auto& s : synth::generate(sc, 4)) {
    std::set<std::pair<long, long>> pairs;
    for (const auto& r : s.relationships) pairs.insert({r.subject_id, r.object_id});
    if (!s.relationships.empty() && s.relationships.size() <= 5 && pairs.size() == s.relationships.size() &&
        scenes.size() < 20)
      scenes.push_back(s);
  }
  auto mc = model_config_for(synth::vocabulary(sc), ModelConfig{});
  mc.encoder.feature_dim = 128;
  const auto train = prepare_all(scenes, mc);
  TrainConfig tc;
  tc.stage1_epochs = 0;
  tc.stage2_epochs = 120;
  tc.seed = 1;
  const auto model = train_model<float>(mc, tc, train, {});
  const double r5 = evaluate_split(model, train, Task::kPredCls, tc.integration, std::vector<std::size_t>{5})
                        .report.value("predcls", "r", 5);
  const double secs = seconds_since(t0);
  return {scenes.size() == 20 && r5 >= kC4Recall && secs < kC4Seconds,
          std::to_string(scenes.size()) + " scenes, 120 stage-2 epochs, train R@5 " + fmt("%.3f", r5) +
              " (limit 0.95), " + fmt("%.0f s (limit 600 s)", secs)};
}

constexpr double kC5Auc = 0.90;
constexpr double kC5Seconds = 300;

Outcome link_separability() {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.num_scenes = 200;
  sc.p_align = 0.2;
  sc.predicates.pop_back();  // aligned with: a three-body relation no pair-local predictor can see
  const auto data = synth_split(sc, 5);
  auto mc = model_config_for(data.vocab, ModelConfig{});
  mc.encoder.feature_dim = 64;
  const auto train = prepare_all(data.train, mc);
  const auto test = prepare_all(data.test, mc);
  TrainConfig tc;
  tc.stage1_epochs = 40;
  tc.stage2_epochs = 0;
  tc.seed = 1;
  const auto model = train_model<float>(mc, tc, train, {});
  const auto sum = evaluate_split(model, test, Task::kPredCls, tc.integration, std::vector<std::size_t>{5});
  const double secs = seconds_since(t0);
  return {sum.link.auc >= kC5Auc && secs < kC5Seconds,
          "40 stage-1 epochs, held-out link AUC " + fmt("%.3f", sum.link.auc) + " over " +
              std::to_string(sum.link.edges) + " edges (limit 0.90), " + fmt("%.0f s (limit 300 s)", secs)};
}

constexpr double kC6Gap = 0.10;
constexpr double kC6Seconds = 1200;

Outcome edge_context_gain() {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.num_scenes = 400;
  sc.p_align = 0.5;
  sc.p_stack = 0.1;
  sc.p_attach = 0.1;
  sc.predicates = {synth::Predicate::kAlignedWith};
  const auto data = synth_split(sc, 6);
  auto mc = model_config_for(data.vocab, ModelConfig{});
  mc.encoder.feature_dim = 32;
  mc.linegnn_layers = 5;
  const auto train = prepare_all(data.train, mc);
  const auto test = prepare_all(data.test, mc);
  double mean[2] = {0, 0};
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (int i = 0; i < 2; ++i) {
      TrainConfig tc;
      tc.stage1_epochs = 0;
      tc.stage2_epochs = 30;
      tc.lr = 1e-3;
      tc.seed = seed;
      tc.integration = {i == 0 ? Strategy::kPre : Strategy::kNone, LinkMode::kFc};
      const auto model = train_model<float>(mc, tc, train, {});
      const auto sum = evaluate_split(model, test, tc.task, tc.integration, std::vector<std::size_t>{5});
      const double acc = class_balanced_accuracy(sum.scenes, test, 0);
      mean[i] += acc / 3;
      per_seed += (i == 0 ? " seed " + std::to_string(seed) + " pre " : " none ") + fmt("%.3f", acc);
    }
  }
  const double gap = mean[0] - mean[1];
  const double secs = seconds_since(t0);
  return {gap >= kC6Gap && secs < kC6Seconds,
          "aligned-with balanced accuracy pre " + fmt("%.3f", mean[0]) + " vs none " + fmt("%.3f", mean[1]) +
              ", gap " + fmt("%.3f", gap) + " (limit 0.10);" + per_seed + "; " + fmt("%.0f s (limit 1200 s)", secs)};
}

constexpr double kC7Slack = 0.02;

Outcome link_mode_order() {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.num_scenes = 200;
  const auto data = synth_split(sc, 7);
  auto mc = model_config_for(data.vocab, ModelConfig{});
  mc.encoder.feature_dim = 32;
  const auto train = prepare_all(data.train, mc);
  const auto test = prepare_all(data.test, mc);
  const LinkMode modes[3] = {LinkMode::kGt, LinkMode::kLp, LinkMode::kFc};
  double mr10[3] = {0, 0, 0}, mr5[3] = {0, 0, 0};
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    for (int m = 0; m < 3; ++m) {
      TrainConfig tc;
      tc.stage1_epochs = 20;
      tc.stage2_epochs = 20;
      tc.lr = 1e-3;
      tc.seed = seed;
      tc.integration.link_mode = modes[m];
      const auto model = train_model<float>(mc, tc, train, {});
      const auto sum = evaluate_split(model, test, tc.task, tc.integration, std::vector<std::size_t>{5, 10});
      mr10[m] += sum.report.value("predcls", "m_r", 10) / 3;
      mr5[m] += sum.report.value("predcls", "m_r", 5) / 3;
    }
  const bool ordered = mr10[0] >= mr10[1] && mr10[1] >= mr10[2] - kC7Slack;
  std::string detail = "3-seed mean mR@10 gt " + fmt("%.3f", mr10[0]) + " lp " + fmt("%.3f", mr10[1]) + " fc " +
                       fmt("%.3f", mr10[2]) + " (need gt >= lp >= fc - 0.02); mR@5 gt " + fmt("%.3f", mr5[0]) +
                       " lp " + fmt("%.3f", mr5[1]) + " fc " + fmt("%.3f", mr5[2]) + "; " +
                       fmt("%.0f s", seconds_since(t0));
  return {ordered, detail};
}

int cli(const std::string& args, const testing_support::TempDir& dir) {
  const std::string cmd = std::string(LEO_CLI_PATH) + " " + args + " >>" + dir.file("cli.log") + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  using testing_support::read_file;
  testing_support::TempDir dir("leo_acceptance");
  const nlohmann::json cfg = {
      {"model", {{"feature_dim", 16}, {"histogram_bins", 4}, {"geom_dim", 16}, {"link_dim", 16}}},
      {"train", {{"stage1_epochs", 2}, {"stage2_epochs", 3}, {"lr", 1e-3}, {"seed", 11}}},
      {"synth", {{"min_objects", 3}, {"max_objects", 5}, {"min_points", 24}, {"max_points", 32}}},
  };
  testing_support::write_file(dir.file("config.json"), cfg.dump(2));
  const std::string c = " --config " + dir.file("config.json");
  int rc = cli("gen-data" + c + " --scenes 12 --seed 3 --out " + dir.file("data"), dir);
  for (const char* run : {"a", "b"}) {
    rc |= cli("train" + c + " --data " + dir.file("data") + " --out " + dir.file(run), dir);
    rc |= cli("eval" + c + " --data " + dir.file("data") + " --ckpt " + dir.file(std::string(run) + "/last.leo") +
                  " --out " + dir.file(std::string(run) + "/eval"),
              dir);
  }
  // Interrupted after stage-2 epoch 1, then resumed.
  const std::string r = " --data " + dir.file("data") + " --out " + dir.file("r");
  rc |= cli("train" + c + r + " --stage 1", dir);
  rc |= cli("train" + c + r + " --stage 2 --stop-after-epoch 1", dir);
  rc |= cli("train" + c + r + " --resume " + dir.file("r/last.leo"), dir);
  if (rc != 0) return {false, "a command failed; see output:\n" + read_file(dir.file("cli.log"))};

  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.file("a"))) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir.file("a"));
    const auto ext = rel.extension();
    if (ext != ".leo" && ext != ".csv") continue;
    ++files;
    if (rel.filename() == "timing.csv") continue;  // wall-clock seconds
    differing += read_file(e.path()) != read_file(fs::path(dir.file("b")) / rel);
  }
  const bool resumed = read_file(dir.file("a/last.leo")) == read_file(dir.file("r/last.leo")) &&
                       read_file(dir.file("a/stage2.leo")) == read_file(dir.file("r/stage2.leo"));
  return {files > 0 && differing == 0 && resumed,
          std::to_string(files) + " checkpoint/CSV files compared across two runs, " + std::to_string(differing) +
              " differ (timing.csv excluded); resumed run final checkpoint " + (resumed ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"1 structural oracle", structural_oracle}, {"2 gradient suite", gradient_suite},
      {"3 metric oracle", metric_oracle},         {"4 overfit", overfit},
      {"5 link separability", link_separability}, {"6 edge-context gain", edge_context_gain},
      {"7 link-mode ordering", link_mode_order},  {"8 determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of 8 criteria passed\n", 8 - failed);
  return failed == 0 ? 0 : 1;
}
