// Command-line front end. Every subcommand maps library errors to exit
// codes: 2 config, 3 upstream, 4 invariant.

#include <iostream>

#include "CLI11.hpp"

#include "logohall/harness/stages.hpp"

using namespace logohall;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << s;
}

std::vector<Stage> parse_stage_list(const std::vector<std::string>& names) {
  std::vector<Stage> out;
  for (const auto& n : names) {
    const auto s = parse_stage(n);
    if (!s) throw ConfigError("unknown stage '" + n + "'");
    out.push_back(*s);
  }
  return out;
}

// Loads a run config when given, otherwise starts from defaults rooted at
// the working directory.
RunConfig base_config(const std::string& path) {
  if (!path.empty()) return load_run_config(path);
  RunConfig c;
  c.base_dir = fs::current_path();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Logo hallucination diagnostics: bias, perturbation and projector-probe stages"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // curate
  std::string cur_in, cur_out, cur_by;
  bool cur_force = false;
  std::size_t cur_per_group = 0;
  std::uint64_t cur_seed = 0;
  auto* curate = app.add_subcommand("curate", "Assign color/shape buckets from images; optionally draw a stratified sample");
  curate->add_option("--manifest", cur_in, "Input manifest (JSONL)")->required()->check(CLI::ExistingFile);
  curate->add_option("--out", cur_out, "Output manifest")->required();
  curate->add_flag("--force", cur_force, "Recompute buckets that are already set");
  curate->add_option("--stratify", cur_by, "Family to stratify by")->check(CLI::IsMember({"category", "color", "shape", "hard60"}));
  curate->add_option("--per-group", cur_per_group, "Records per group when stratifying");
  curate->add_option("--seed", cur_seed, "Sampling seed");

  // perturb
  std::string pert_config, pert_manifest, pert_out, pert_profile = "default";
  std::uint64_t pert_seed = 0;
  std::vector<std::string> pert_kinds;
  auto* perturb = app.add_subcommand("perturb", "Write perturbed copies of every manifest image with a parameter sidecar");
  perturb->add_option("--config", pert_config, "Run config (YAML)")->check(CLI::ExistingFile);
  perturb->add_option("--manifest", pert_manifest, "Manifest (overrides config)");
  perturb->add_option("--out", pert_out, "Output directory (overrides config)");
  perturb->add_option("--seed", pert_seed, "Root seed");
  perturb->add_option("--profile", pert_profile, "Random-rotation profile")->check(CLI::IsMember({"default", "appendix"}));
  perturb->add_option("--kinds", pert_kinds, "Subset of perturbations")->delimiter(',');

  // query
  std::string q_config, q_manifest, q_endpoints, q_out, q_prompt, q_perturbed;
  std::uint64_t q_replicates = 1;
  auto* query = app.add_subcommand("query", "Query every endpoint over the manifest and write prediction records");
  query->add_option("--config", q_config, "Run config (YAML)")->check(CLI::ExistingFile);
  query->add_option("--manifest", q_manifest, "Manifest (overrides config)");
  query->add_option("--endpoints", q_endpoints, "Endpoints config (overrides config)");
  query->add_option("--out", q_out, "Output directory (overrides config)");
  query->add_option("--prompt-id", q_prompt, "Prompt id");
  query->add_option("--replicates", q_replicates, "Queries per logo")->check(CLI::PositiveNumber);

  // score
  std::string s_manifest, s_out, s_condition = "base";
  std::vector<std::string> s_predictions;
  bool s_sample_shares = false;
  auto* score = app.add_subcommand("score", "Judge prediction records into a metrics report");
  score->add_option("--manifest", s_manifest, "Manifest")->required()->check(CLI::ExistingFile);
  score->add_option("--predictions", s_predictions, "Prediction JSONL file(s), one model each")->required()->check(CLI::ExistingFile);
  score->add_option("--out", s_out, "Output directory")->required();
  score->add_option("--condition", s_condition, "Condition label stored in the report");
  score->add_flag("--sample-shares", s_sample_shares, "Distribution shares over samples instead of correct answers");

  // probe
  std::string pr_config, pr_emb, pr_labels, pr_out, pr_k;
  double pr_C = 0.01;
  bool pr_activation = false;
  std::uint64_t pr_seed = 0;
  auto* probe = app.add_subcommand("probe", "Fit the sparse probe on pooled embeddings and write masks, deltas, PCA and calibration");
  probe->add_option("--config", pr_config, "Run config (YAML)")->check(CLI::ExistingFile);
  probe->add_option("--embeddings", pr_emb, "Directory of <logo_id>.lemb files");
  probe->add_option("--labels", pr_labels, "Labels JSONL {logo_id, label}");
  probe->add_option("--out", pr_out, "Output directory");
  probe->add_option("--C", pr_C, "Inverse regularization strength");
  probe->add_option("-k", pr_k, "Mask size, or 'cv'");
  probe->add_option("--seed", pr_seed, "Root seed");
  probe->add_flag("--activation", pr_activation, "Select by mean absolute activation instead of the probe");

  // ablate
  std::string ab_mask, ab_in, ab_out, ab_base, ab_cond;
  auto* ablate_cmd = app.add_subcommand("ablate", "Apply a mask to LEMB files, or compute deltas between two reports");
  ablate_cmd->add_option("--mask", ab_mask, "Mask JSON")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--in", ab_in, "Input LEMB file or directory");
  ablate_cmd->add_option("--out", ab_out, "Output LEMB file or directory");
  ablate_cmd->add_option("--base", ab_base, "Base metrics report")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--cond", ab_cond, "Condition metrics report")->check(CLI::ExistingFile);

  // synth-check
  std::string sc_config, sc_out;
  std::uint64_t sc_seed = 0;
  bool sc_dataset = false, sc_cv = false;
  auto* synth = app.add_subcommand("synth-check", "Run the probe and ablation pipeline on a planted synthetic world");
  synth->add_option("--config", sc_config, "Run config (YAML)")->check(CLI::ExistingFile);
  synth->add_option("--out", sc_out, "Output directory");
  synth->add_option("--seed", sc_seed, "Root seed");
  synth->add_flag("--write-dataset", sc_dataset, "Also write LEMB files, labels and world description");
  synth->add_flag("--cv", sc_cv, "Choose k by cross-validation");

  // report
  std::vector<std::string> rep_in;
  std::string rep_out;
  auto* report = app.add_subcommand("report", "Merge metrics reports into model-column tables and plot data");
  report->add_option("--reports", rep_in, "Report JSON files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", rep_out, "Output directory")->required();

  // run
  std::string run_config;
  std::vector<std::string> run_stages_opt;
  auto* run = app.add_subcommand("run", "Run the stages selected in a config");
  run->add_option("config", run_config, "Run config (YAML)")->required()->check(CLI::ExistingFile);
  run->add_option("--stages", run_stages_opt, "Override the stage selection")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::Config);
  }

  try {
    if (*curate) {
      auto records = load_manifest(cur_in);
      const auto s = curate_records(records, cur_in, cur_force);
      std::cerr << "curate: " << s.colored << " colored, " << s.shaped << " shaped, " << s.flagged << " flags added\n";
      if (!cur_by.empty()) {
        if (cur_per_group == 0) throw ConfigError("--stratify needs --per-group");
        const StratifyBy by = cur_by == "category" ? StratifyBy::Category
                              : cur_by == "color"  ? StratifyBy::Color
                              : cur_by == "shape"  ? StratifyBy::Shape
                                                   : StratifyBy::Hard60;
        std::vector<LogoRecord> sample;
        for (auto& g : stratify(records, by, cur_per_group, cur_seed))
          sample.insert(sample.end(), g.records.begin(), g.records.end());
        records = std::move(sample);
      }
      // Keep image paths valid relative to the new manifest location.
      const auto out_dir = fs::absolute(fs::path(cur_out)).parent_path();
      for (auto& r : records)
        r.image_path = fs::relative(fs::absolute(resolve_image_path(cur_in, r)), out_dir).generic_string();
      save_manifest(cur_out, records);
    } else if (*perturb) {
      auto cfg = base_config(pert_config);
      if (!pert_manifest.empty()) cfg.manifest = fs::absolute(pert_manifest).string();
      if (!pert_out.empty()) cfg.output_dir = fs::absolute(pert_out).string();
      if (perturb->count("--seed")) cfg.root_seed = pert_seed;
      if (perturb->count("--profile"))
        cfg.rotation = pert_profile == "default" ? RotationProfile::Default : RotationProfile::Appendix;
      if (!pert_kinds.empty()) {
        cfg.kinds.clear();
        for (const auto& k : pert_kinds) {
          const auto p = parse_perturbation(k);
          if (!p) throw ConfigError("unknown perturbation '" + k + "'");
          cfg.kinds.push_back(*p);
        }
      }
      if (cfg.manifest.empty()) throw ConfigError("perturb: a manifest is required");
      const auto records = load_manifest(cfg.resolve(cfg.manifest));
      ArtifactWriter w(cfg.out() / "perturb", provenance(cfg));
      std::size_t reused = 0;
      const auto n = write_perturbed_images(cfg, records, w, &reused);
      w.finish();
      std::cerr << "perturb: " << n << " images written, " << reused << " reused\n";
    } else if (*query) {
      auto cfg = base_config(q_config);
      if (!q_manifest.empty()) cfg.manifest = fs::absolute(q_manifest).string();
      if (!q_endpoints.empty()) cfg.endpoints = fs::absolute(q_endpoints).string();
      if (!q_out.empty()) cfg.output_dir = fs::absolute(q_out).string();
      if (!q_prompt.empty()) cfg.prompt_id = q_prompt;
      if (query->count("--replicates")) cfg.replicates = q_replicates;
      cfg.stages = {Stage::Bias};
      validate_run_config(cfg);
      run_bias_stage(cfg, std::cerr);
    } else if (*score) {
      const auto records = load_manifest(s_manifest);
      std::vector<MetricsReport> reports;
      for (const auto& p : s_predictions) {
        const auto preds = load_predictions(p);
        if (preds.empty()) throw ConfigError("no predictions in " + p);
        const auto scored = join_predictions(records, preds);
        auto rep = build_metrics_report(preds.front().model_id, scored,
                                        s_sample_shares ? ShareMode::Samples : ShareMode::Correct);
        rep.condition = s_condition;
        const bool perturbed = std::any_of(preds.begin(), preds.end(),
                                           [](const auto& r) { return r.perturbation != kNoPerturbation; });
        if (perturbed) rep.perturbations = perturbation_report(scored);
        write_text(fs::path(s_out) / (file_safe(rep.model_id) + ".report.json"), metrics_report_to_json(rep).dump(2) + "\n");
        reports.push_back(std::move(rep));
      }
      write_text(fs::path(s_out) / "table1.md", table1_markdown(reports));
      if (std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.perturbations.has_value(); }))
        write_text(fs::path(s_out) / "perturbation.md", perturbation_markdown(reports));
    } else if (*probe) {
      auto cfg = base_config(pr_config);
      if (!pr_emb.empty()) {
        cfg.probe.source = "embeddings";
        cfg.probe.embeddings_dir = fs::absolute(pr_emb).string();
      }
      if (!pr_labels.empty()) cfg.probe.labels = fs::absolute(pr_labels).string();
      if (!pr_out.empty()) cfg.output_dir = fs::absolute(pr_out).string();
      if (probe->count("--C")) cfg.probe.C = pr_C;
      if (probe->count("--seed")) cfg.root_seed = pr_seed;
      if (pr_activation) cfg.probe.selection = SelectionMode::Activation;
      if (pr_k == "cv") {
        cfg.probe.k.reset();
      } else if (!pr_k.empty()) {
        try {
          cfg.probe.k = std::stoull(pr_k);
        } catch (const std::exception&) {
          throw ConfigError("-k must be a count or 'cv'");
        }
      }
      cfg.stages = {Stage::Probe};
      validate_run_config(cfg);
      run_probe_stage(cfg, std::cerr);
    } else if (*ablate_cmd) {
      if (!ab_base.empty() || !ab_cond.empty()) {
        if (ab_base.empty() || ab_cond.empty()) throw ConfigError("ablate: --base and --cond go together");
        const auto d = deltas(metrics_report_from_json(read_json(ab_base)), metrics_report_from_json(read_json(ab_cond)));
        for (const auto& w : d.warnings) std::cerr << "warning: " << w << '\n';
        std::cout << nlohmann::json{{"d_acc_text", detail::opt_json(d.d_acc_text)},
                                    {"d_hall", detail::opt_json(d.d_hall)},
                                    {"warnings", d.warnings}}
                         .dump(2)
                  << '\n';
      } else {
        if (ab_mask.empty() || ab_in.empty() || ab_out.empty())
          throw ConfigError("ablate: need --mask, --in and --out (or --base and --cond)");
        const auto mask = mask_from_json(read_json(ab_mask));
        if (fs::is_directory(ab_in)) {
          fs::create_directories(ab_out);
          std::size_t n = 0;
          for (const auto& e : fs::directory_iterator(ab_in))
            if (e.path().extension() == ".lemb") {
              save_lemb(fs::path(ab_out) / e.path().filename(), ablate(load_lemb(e.path()), mask));
              ++n;
            }
          std::cerr << "ablate: " << n << " files\n";
        } else {
          save_lemb(ab_out, ablate(load_lemb(ab_in), mask));
        }
      }
    } else if (*synth) {
      auto cfg = base_config(sc_config);
      if (!sc_out.empty()) cfg.output_dir = fs::absolute(sc_out).string();
      if (synth->count("--seed")) cfg.root_seed = sc_seed;
      if (sc_dataset) cfg.synth.write_dataset = true;
      if (sc_cv) cfg.synth.cross_validate = true;
      cfg.stages = {Stage::SynthCheck};
      validate_run_config(cfg);
      run_synth_check(cfg, std::cerr);
    } else if (*report) {
      std::vector<MetricsReport> reports;
      for (const auto& p : rep_in) reports.push_back(metrics_report_from_json(read_json(p)));
      write_text(fs::path(rep_out) / "table1.md", table1_markdown(reports));
      write_text(fs::path(rep_out) / "table1.csv", bucket_rows_csv(reports));
      write_text(fs::path(rep_out) / "perturbation.md", perturbation_markdown(reports));
      write_text(fs::path(rep_out) / "perturbation.csv", perturbation_csv(reports));
      write_text(fs::path(rep_out) / "plot_data.json", plot_data(reports).dump(2) + "\n");
    } else if (*run) {
      auto cfg = load_run_config(run_config);
      if (!run_stages_opt.empty()) cfg.stages = parse_stage_list(run_stages_opt);
      run_stages(cfg, std::cerr);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::Invariant);
  }
  return 0;
}
