#include <gtest/gtest.h>
#include <unistd.h>

#include <cstdlib>
#include <sstream>

#include "logohall/harness/stages.hpp"
#include "mock_corpus.hpp"

using namespace logohall;
using logohall::testing::fresh_dir;
using logohall::testing::write_corpus;
using logohall::testing::write_file;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Digest of every file under a directory, keyed by relative path.
std::map<std::string, std::string> tree_digest(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = sha256_hex(read_text(e.path()));
  return out;
}

RunConfig config_in(const fs::path& dir, const std::string& yaml) {
  write_file(dir / "run.yaml", yaml);
  return load_run_config(dir / "run.yaml");
}

}  // namespace

TEST(RunConfig, DefaultsAndParsing) {
  const auto c = parse_run_config("manifest: m.jsonl\nendpoints: e.yaml\nseed: 9\nstages: [bias, probe]\n", "/base");
  EXPECT_EQ(c.resolve(c.manifest), fs::path("/base/m.jsonl"));
  EXPECT_EQ(c.out(), fs::path("/base/out"));
  EXPECT_EQ(c.root_seed, 9u);
  EXPECT_TRUE(c.has(Stage::Bias));
  EXPECT_FALSE(c.has(Stage::Perturb));
  EXPECT_EQ(c.kinds.size(), 9u);
  EXPECT_EQ(c.probe.k, std::optional<std::size_t>(32));
  EXPECT_EQ(c.rotation, RotationProfile::Default);

  const auto d = parse_run_config(
      "rotation_profile: appendix\nperturbations: [Blur, Occlusion]\nprobe: {k: cv, C: 0.1}\nsynth: {d: 64, s: 4}\n", "/");
  EXPECT_EQ(d.rotation, RotationProfile::Appendix);
  EXPECT_EQ(d.kinds.size(), 2u);
  EXPECT_FALSE(d.probe.k.has_value());
  EXPECT_EQ(d.probe.C, 0.1);
  EXPECT_EQ(d.synth.d, 64u);
}

TEST(RunConfig, Errors) {
  EXPECT_THROW(parse_run_config("stages: [bias, dance]\n", "/"), ConfigError);
  EXPECT_THROW(parse_run_config("manifset: x\n", "/"), ConfigError);
  EXPECT_THROW(parse_run_config("rotation_profile: sideways\n", "/"), ConfigError);
  EXPECT_THROW(parse_run_config("perturbations: [Blurr]\n", "/"), ConfigError);
  EXPECT_THROW(parse_run_config("probe: {source: magic}\n", "/"), ConfigError);
  EXPECT_THROW(parse_run_config("seed: [1, 2\n", "/"), ConfigError);
  const auto missing = parse_run_config("manifest: nope.jsonl\nendpoints: nope.yaml\nstages: [bias]\n", "/nonexistent");
  EXPECT_THROW(validate_run_config(missing), ConfigError);
  auto bad_prompt = parse_run_config("stages: [bias]\nprompt_id: other\n", "/");
  const auto dir = fresh_dir("cfg_errors");
  write_file(dir / "m.jsonl", "");
  write_file(dir / "e.yaml", "endpoints: []\n");
  bad_prompt.base_dir = dir;
  bad_prompt.manifest = "m.jsonl";
  bad_prompt.endpoints = "e.yaml";
  EXPECT_THROW(validate_run_config(bad_prompt), ConfigError);
  fs::remove_all(dir);
}

TEST(RunConfig, DigestTracksContent) {
  const auto a = parse_run_config("seed: 1\n", "/x");
  const auto b = parse_run_config("seed: 1\n", "/y");
  const auto c = parse_run_config("seed: 2\n", "/x");
  EXPECT_EQ(config_digest(a), config_digest(b));
  EXPECT_NE(config_digest(a), config_digest(c));
  EXPECT_NE(run_seeds(a)["placebo"], run_seeds(c)["placebo"]);
}

TEST(RunStages, EmptySelectionIsNoOp) {
  const auto dir = fresh_dir("empty_stages");
  const auto cfg = config_in(dir, "output_dir: out\n");
  std::ostringstream log;
  const auto s = run_stages(cfg, log);
  EXPECT_FALSE(s.bias || s.perturb || s.probe || s.synth);
  EXPECT_NE(log.str().find("no stages selected"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "out"));
  fs::remove_all(dir);
}

TEST(BiasStage, MockRatesFourColumnsAndRestart) {
  const auto dir = fresh_dir("bias_stage");
  write_corpus(dir, {120, 6, 6, 4});
  write_file(dir / "endpoints.yaml", R"(endpoints:
  - {model_id: m-a, transport: mock, mock: {seed: 1, default_prior: Nike, hallucination_rate: 0.66}}
  - {model_id: m-b, transport: mock, mock: {seed: 2, default_prior: Nike, hallucination_rate: 0.20}}
  - {model_id: m-c, transport: mock, mock: {seed: 3, default_prior: Nike, hallucination_rate: 0.45, text_accuracy: 0.8}}
  - {model_id: m-d, transport: mock, mock: {seed: 4, default_prior: Nike, hallucination_rate: 0.90}}
)");
  const auto cfg = config_in(dir, "manifest: manifest.jsonl\nendpoints: endpoints.yaml\nreplicates: 40\nstages: [bias]\n");
  std::ostringstream log;
  const auto s = run_stages(cfg, log);
  ASSERT_TRUE(s.bias);
  ASSERT_EQ(s.bias->reports.size(), 4u);
  const double rates[] = {0.66, 0.20, 0.45, 0.90};
  for (int m = 0; m < 4; ++m) {
    const auto& r = s.bias->reports[m];
    EXPECT_EQ(r.n_symbol, 120u * 40);
    const double sd = std::sqrt(rates[m] * (1 - rates[m]) / (120.0 * 40));
    EXPECT_NEAR(*r.hall, rates[m], 3 * sd) << r.model_id;
    EXPECT_EQ(r.categories.size(), 4u);
    EXPECT_EQ(r.colors.size(), 6u);
    EXPECT_EQ(r.shapes.size(), 4u);
  }
  EXPECT_NEAR(*s.bias->reports[2].acc_text, 0.8, 0.03);

  const auto table = read_text(cfg.out() / "bias" / "table1.md");
  EXPECT_NE(table.find("| Type | m-a | m-b | m-c | m-d |"), std::string::npos);
  for (const char* f : {"m-a.predictions.jsonl", "m-a.report.json", "table1.csv", "plot_data.json", "artifacts.json"})
    EXPECT_TRUE(fs::exists(cfg.out() / "bias" / f)) << f;
  const auto rep = nlohmann::json::parse(read_text(cfg.out() / "bias" / "m-a.report.json"));
  EXPECT_EQ(rep["provenance"]["config_digest"], config_digest(cfg));
  EXPECT_EQ(rep["provenance"]["seeds"]["root"], 0);

  // Second run answers from the cache and reproduces every artifact.
  const auto before = tree_digest(cfg.out() / "bias");
  const auto again = run_stages(cfg, log);
  EXPECT_EQ(again.bias->network_calls, 0u);
  EXPECT_EQ(tree_digest(cfg.out() / "bias"), before);
  fs::remove_all(dir);
}

TEST(BiasStage, PlantedRateWithinOnePercent) {
  // n = 24000: one percentage point is more than 3 binomial sd.
  const auto dir = fresh_dir("bias_rate");
  write_corpus(dir, {120, 0, 0, 0});
  write_file(dir / "endpoints.yaml",
             "endpoints:\n  - {model_id: m, transport: mock, mock: {seed: 8, default_prior: Nike, hallucination_rate: 0.45}}\n");
  const auto cfg = config_in(dir, "manifest: manifest.jsonl\nendpoints: endpoints.yaml\nreplicates: 200\nstages: [bias]\n");
  std::ostringstream log;
  const auto s = run_stages(cfg, log);
  EXPECT_EQ(s.bias->reports[0].n_symbol, 24000u);
  EXPECT_NEAR(*s.bias->reports[0].hall, 0.45, 0.01);
  fs::remove_all(dir);
}

TEST(PerturbStage, OcclusionFailureAndTotals) {
  const auto dir = fresh_dir("perturb_stage");
  write_corpus(dir, {24, 6, 6, 2});
  write_file(dir / "endpoints.yaml", R"(endpoints:
  - model_id: occl
    transport: mock
    mock:
      seed: 5
      default_prior: Apple
      hallucination_rate: {default: 0.1, Occlusion: 0.7}
      text_accuracy: {default: 0.95, Occlusion: 0.4}
  - {model_id: ident, transport: mock, mock: {seed: 6}}
)");
  const auto cfg = config_in(dir, "manifest: manifest.jsonl\nendpoints: endpoints.yaml\nreplicates: 10\nseed: 3\nstages: [perturb]\n");
  std::ostringstream log;
  const auto s = run_stages(cfg, log);
  ASSERT_TRUE(s.perturb);
  EXPECT_EQ(s.perturb->images_written, 36u * 9);
  const auto& occl = *s.perturb->reports[0].perturbations;
  ASSERT_EQ(occl.rows.size(), 9u);
  double sum = 0, lowest = 2;
  std::string lowest_kind;
  for (const auto& r : occl.rows) {
    sum += *r.accuracy;
    if (*r.accuracy < lowest) {
      lowest = *r.accuracy;
      lowest_kind = r.kind;
    }
  }
  EXPECT_EQ(lowest_kind, "Occlusion");
  EXPECT_NEAR(*occl.total, sum / 9, 1e-12);

  const auto& ident = *s.perturb->reports[1].perturbations;
  for (const auto& r : ident.rows) EXPECT_EQ(*r.accuracy, 1.0) << r.kind;
  EXPECT_EQ(*ident.total, 1.0);

  // Sidecar records the per-item seed and parameters.
  std::ifstream sidecar(cfg.out() / "perturb" / "Occlusion" / "sidecar.jsonl");
  std::string line;
  std::getline(sidecar, line);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["seed"], derive_item_seed(3, j["logo_id"].get<std::string>(), PerturbationKind::Occlusion));
  EXPECT_TRUE(j["params"].contains("holes"));
  EXPECT_TRUE(fs::exists(cfg.out() / "perturb" / j["file"].get<std::string>()));

  const auto before = tree_digest(cfg.out() / "perturb");
  const auto again = run_stages(cfg, log);
  EXPECT_EQ(again.perturb->images_written, 0u);
  EXPECT_EQ(again.perturb->images_reused, 36u * 9);
  EXPECT_EQ(again.perturb->network_calls, 0u);
  EXPECT_EQ(tree_digest(cfg.out() / "perturb"), before);

  // A tampered image is regenerated.
  const auto victim = cfg.out() / "perturb" / j["file"].get<std::string>();
  write_file(victim, "junk");
  EXPECT_EQ(run_stages(cfg, log).perturb->images_written, 1u);
  EXPECT_EQ(tree_digest(cfg.out() / "perturb"), before);
  fs::remove_all(dir);
}

TEST(ProbeStage, SyntheticWorldArtifactsAndContrast) {
  const auto dir = fresh_dir("probe_stage");
  const auto cfg = config_in(dir, "seed: 4\nstages: [probe]\nprobe: {k: 4, C: 0.05}\nsynth: {d: 64, s: 4, M: 800, signal: 4.0}\n");
  std::ostringstream log;
  const auto s = run_stages(cfg, log);
  ASSERT_TRUE(s.probe);
  EXPECT_EQ(s.probe->targeted.indices.size(), 4u);
  EXPECT_EQ(s.probe->placebo.origin, MaskOrigin::RandomPlacebo);
  EXPECT_LT(*s.probe->targeted_deltas->d_hall, -0.1);
  EXPECT_GT(*s.probe->placebo_deltas->d_hall, *s.probe->targeted_deltas->d_hall);
  for (const char* f : {"probe.json", "mask_targeted.json", "mask_placebo.json", "deltas.json", "calibration.json",
                        "pca.json", "world.json", "artifacts.json"})
    EXPECT_TRUE(fs::exists(cfg.out() / "probe" / f)) << f;
  const auto mask = mask_from_json(nlohmann::json::parse(read_text(cfg.out() / "probe" / "mask_targeted.json")));
  EXPECT_EQ(mask.indices, s.probe->targeted.indices);
  const auto pca = nlohmann::json::parse(read_text(cfg.out() / "probe" / "pca.json"));
  EXPECT_EQ(pca["points"].size(), 800u);
  const auto before = tree_digest(cfg.out() / "probe");
  run_stages(cfg, log);
  EXPECT_EQ(tree_digest(cfg.out() / "probe"), before);
  fs::remove_all(dir);
}

TEST(ProbeStage, ZeroKGivesZeroDeltas) {
  const auto dir = fresh_dir("probe_k0");
  const auto cfg = config_in(dir, "stages: [probe]\nprobe: {k: 0}\nsynth: {d: 32, s: 4, M: 300}\n");
  std::ostringstream log;
  const auto s = run_stages(cfg, log);
  EXPECT_EQ(*s.probe->targeted_deltas->d_hall, 0.0);
  EXPECT_EQ(*s.probe->placebo_deltas->d_hall, 0.0);
  fs::remove_all(dir);
}

TEST(ProbeStage, EmbeddingFilesAndActivationFallback) {
  const auto dir = fresh_dir("probe_files");
  const auto world = make_planted_world(48, 4, 5.0, -1.0, 21, true);
  write_synth_dataset(dir / "emb", world, generate(world, 600));
  const auto cfg = config_in(dir,
                             "stages: [probe]\nprobe: {source: embeddings, embeddings_dir: emb, labels: emb/labels.jsonl, "
                             "k: 4, C: 0.05}\n");
  std::ostringstream log;
  const auto s = run_stages(cfg, log);
  ASSERT_TRUE(s.probe->probe);
  EXPECT_EQ(s.probe->targeted.origin, MaskOrigin::Probe);
  EXPECT_GE(recovery_score(s.probe->targeted.indices, world), 0.75);
  EXPECT_FALSE(s.probe->targeted_effect.has_value());

  // Without labels the selection falls back to activation magnitude.
  const auto act = config_in(dir, "stages: [probe]\nprobe: {source: embeddings, embeddings_dir: emb, k: 4}\n");
  const auto a = run_stages(act, log);
  EXPECT_FALSE(a.probe->probe.has_value());
  EXPECT_EQ(a.probe->targeted.origin, MaskOrigin::Activation);
  EXPECT_EQ(a.probe->targeted.indices.size(), 4u);

  fs::remove(dir / "emb" / "synth-000003.lemb");
  EXPECT_THROW(run_stages(cfg, log), ConfigError);
  fs::remove_all(dir);
}

TEST(ProbeStage, RecordedReportsFeedDeltas) {
  const auto dir = fresh_dir("probe_reports");
  MetricsReport base, tgt;
  base.model_id = tgt.model_id = "llava";
  base.acc_text = 0.995;
  base.hall = 0.6613;
  tgt.acc_text = 0.963;
  tgt.hall = 0.3653;
  tgt.condition = "targeted";
  write_file(dir / "base.json", metrics_report_to_json(base).dump());
  write_file(dir / "tgt.json", metrics_report_to_json(tgt).dump());
  auto cfg = config_in(dir, "stages: [probe]\nprobe: {k: 4, base_report: base.json, targeted_report: tgt.json}\n"
                            "synth: {d: 32, s: 4, M: 300}\n");
  std::ostringstream log;
  const auto s = run_stages(cfg, log);
  EXPECT_NEAR(*s.probe->targeted_deltas->d_hall, -0.296, 1e-12);
  EXPECT_NEAR(*s.probe->targeted_deltas->d_acc_text, -0.032, 1e-12);
  fs::remove_all(dir);
}

TEST(SynthCheck, WritesSummaryAndDataset) {
  const auto dir = fresh_dir("synth_check");
  const auto cfg = config_in(dir, "stages: [synth-check]\nsynth: {d: 64, s: 4, M: 500, signal: 4.0, write_dataset: true}\n");
  std::ostringstream log;
  const auto s = run_stages(cfg, log);
  ASSERT_TRUE(s.synth);
  EXPECT_GT(s.synth->bayes_accuracy, 0.8);
  const auto j = nlohmann::json::parse(read_text(cfg.out() / "synth" / "synth_check.json"));
  EXPECT_EQ(j["recovery_score"], *s.synth->probe.recovery);
  EXPECT_TRUE(j.contains("provenance"));
  EXPECT_TRUE(fs::exists(cfg.out() / "synth" / "dataset" / "synth-000499.lemb"));
  EXPECT_TRUE(fs::exists(cfg.out() / "synth" / "dataset" / "world.json"));
  fs::remove_all(dir);
}

#ifdef LOGOHALL_CLI
namespace {

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(LOGOHALL_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const auto dir = fresh_dir("cli");
  const auto manifest = write_corpus(dir, {6, 1, 1, 0});
  EXPECT_EQ(run_cli("--version"), 0);
  EXPECT_EQ(run_cli("bogus"), 2);
  write_file(dir / "bad.yaml", "stages: [bias]\nmanifest: missing.jsonl\nendpoints: missing.yaml\n");
  EXPECT_EQ(run_cli("run " + (dir / "bad.yaml").string()), 2);

  write_file(dir / "down.yaml",
             "endpoints:\n  - {model_id: down, transport: http, base_url: 'http://127.0.0.1:1', auth_env: HOME,"
             " retry: {max_attempts: 2, backoff_ms: 1}}\n");
  EXPECT_EQ(run_cli("query --manifest " + manifest.string() + " --endpoints " + (dir / "down.yaml").string() +
                    " --out " + (dir / "q").string()),
            3);

  write_file(dir / "invalid.jsonl",
             R"({"id":"x","image_path":"a.png","category":"PureSymbol","hard60":false,"gt_text":"Nope"})"
             "\n");
  EXPECT_EQ(run_cli("curate --manifest " + (dir / "invalid.jsonl").string() + " --out " + (dir / "o.jsonl").string()), 4);

  write_file(dir / "ok.yaml", "endpoints:\n  - {model_id: mock, transport: mock, mock: {default_prior: Nike, hallucination_rate: 0.5}}\n");
  EXPECT_EQ(run_cli("query --manifest " + manifest.string() + " --endpoints " + (dir / "ok.yaml").string() + " --out " +
                    (dir / "q").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "q" / "bias" / "mock.predictions.jsonl"));
  EXPECT_EQ(run_cli("score --manifest " + manifest.string() + " --predictions " +
                    (dir / "q" / "bias" / "mock.predictions.jsonl").string() + " --out " + (dir / "s").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "s" / "table1.md"));
  EXPECT_EQ(run_cli("report --reports " + (dir / "s" / "mock.report.json").string() + " --out " + (dir / "r").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "r" / "plot_data.json"));
  EXPECT_EQ(run_cli("synth-check --out " + (dir / "sc").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "sc" / "synth" / "synth_check.json"));
  EXPECT_EQ(run_cli("ablate --mask " + (dir / "sc" / "synth" / "mask_targeted.json").string() + " --in " +
                    (dir / "sc").string() + " --out " + (dir / "abl").string()),
            0);
  fs::remove_all(dir);
}
#endif
