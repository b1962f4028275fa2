#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "logohall/corpus/color.hpp"
#include "logohall/corpus/image.hpp"
#include "logohall/corpus/record.hpp"
#include "logohall/corpus/shape.hpp"
#include "logohall/harness/config.hpp"
#include "logohall/metrics/metrics.hpp"
#include "logohall/metrics/report_io.hpp"
#include "logohall/perturb/perturb.hpp"
#include "logohall/probe/ablation.hpp"
#include "logohall/probe/analysis.hpp"
#include "logohall/probe/embedding.hpp"
#include "logohall/probe/probe.hpp"
#include "logohall/querent/querent.hpp"
#include "logohall/synth/planted.hpp"

namespace logohall {

// Writes stage outputs into one directory and keeps an index of every file
// with its digest. JSON artifacts carry the provenance block inline; other
// formats are covered by the index.
class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path dir, nlohmann::json prov) : dir_(std::move(dir)), prov_(std::move(prov)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path json(const std::string& name, nlohmann::json body) {
    body["provenance"] = prov_;
    return text(name, body.dump(2) + "\n");
  }

  std::filesystem::path text(const std::string& name, const std::string& content) {
    const auto path = dir_ / name;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write artifact: " + path.string());
    out << content;
    out.close();
    index_[name] = sha256_hex(content);
    return path;
  }

  // Registers a file written by other code.
  void track(const std::string& name) {
    const auto bytes = read_file_bytes(dir_ / name);
    index_[name] = Sha256{}.field(std::span<const std::uint8_t>(bytes)).hex();
  }

  void finish() {
    nlohmann::json files = nlohmann::json::object();
    for (const auto& [name, digest] : index_) files[name] = digest;
    nlohmann::json body{{"files", files}, {"provenance", prov_}};
    std::ofstream(dir_ / "artifacts.json", std::ios::binary) << body.dump(2) << '\n';
  }

 private:
  std::filesystem::path dir_;
  nlohmann::json prov_;
  std::map<std::string, std::string> index_;
};

inline std::string file_safe(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_');
  return out;
}

// ---- corpus curation ----

struct CurateSummary {
  std::size_t colored = 0, shaped = 0, flagged = 0;
};

// Fills missing color and shape buckets from the images. With `force`,
// existing assignments are recomputed too.
inline CurateSummary curate_records(std::vector<LogoRecord>& records, const std::filesystem::path& manifest_path,
                                    bool force = false) {
  CurateSummary s;
  for (auto& r : records) {
    if (!force && r.color_bucket && r.shape_bucket) continue;
    const auto img = load_image(resolve_image_path(manifest_path, r));
    if (force || !r.color_bucket) {
      const auto dc = dominant_color(img);
      r.color_bucket = dc.bucket;
      for (const auto& f : dc.flags)
        if (std::find(r.flags.begin(), r.flags.end(), f) == r.flags.end()) {
          r.flags.push_back(f);
          ++s.flagged;
        }
      ++s.colored;
    }
    if (force || !r.shape_bucket) {
      r.shape_bucket = classify_shape(img).bucket;
      ++s.shaped;
    }
  }
  return s;
}

// ---- querying ----

struct ModelPredictions {
  ModelEndpoint endpoint;
  std::vector<PredictionRecord> predictions;
  std::uint64_t network_calls = 0;
};

// Runs every endpoint over the jobs. Responses persist in a per-model cache
// under <output>/cache so reruns reuse them.
inline std::vector<ModelPredictions> query_all(const RunConfig& cfg, const std::vector<LogoRecord>& records,
                                               const std::vector<PredictionJob>& jobs) {
  auto endpoints = load_endpoints(cfg.resolve(cfg.endpoints));
  const auto catalog = mock_catalog(records);
  const auto lexicon = brand_lexicon(records, endpoints);
  std::vector<ModelPredictions> out;
  for (auto& ep : endpoints) {
    ep.mock.catalog = catalog;
    auto cache = std::make_shared<ResponseCache>(cfg.out() / "cache" / (file_safe(ep.model_id) + ".jsonl"));
    Querent q(ep, make_transport(ep), cache, lexicon);
    ModelPredictions mp{ep, q.predict_batch(jobs, cfg.prompt_id), 0};
    mp.network_calls = q.network_calls();
    out.push_back(std::move(mp));
  }
  return out;
}

// ---- bias stage ----

struct BiasResult {
  std::vector<MetricsReport> reports;
  std::uint64_t network_calls = 0;
};

inline BiasResult run_bias_stage(const RunConfig& cfg, std::ostream& log = std::clog) {
  const auto manifest_path = cfg.resolve(cfg.manifest);
  const auto records = load_manifest(manifest_path);
  std::vector<PredictionJob> jobs;
  for (const auto& r : records)
    for (std::uint64_t rep = 0; rep < cfg.replicates; ++rep)
      jobs.push_back({&r, [&manifest_path, &r] { return load_image(resolve_image_path(manifest_path, r)); },
                      std::string(kNoPerturbation), rep});

  ArtifactWriter w(cfg.out() / "bias", provenance(cfg));
  BiasResult res;
  for (auto& mp : query_all(cfg, records, jobs)) {
    const auto name = file_safe(mp.endpoint.model_id);
    std::ostringstream lines;
    write_predictions(lines, mp.predictions);
    w.text(name + ".predictions.jsonl", lines.str());
    auto rep = build_metrics_report(mp.endpoint.model_id, join_predictions(records, mp.predictions));
    w.json(name + ".report.json", metrics_report_to_json(rep));
    res.network_calls += mp.network_calls;
    log << "bias: " << mp.endpoint.model_id << ": " << mp.predictions.size() << " predictions, "
        << mp.network_calls << " network calls\n";
    res.reports.push_back(std::move(rep));
  }
  w.text("table1.md", table1_markdown(res.reports));
  w.text("table1.csv", bucket_rows_csv(res.reports));
  w.json("plot_data.json", plot_data(res.reports));
  w.finish();
  return res;
}

// ---- perturbation stage ----

struct PerturbResult {
  std::vector<MetricsReport> reports;
  std::size_t images_written = 0;
  std::size_t images_reused = 0;
  std::uint64_t network_calls = 0;
};

namespace detail {

inline std::map<std::string, nlohmann::json> load_sidecar(const std::filesystem::path& path) {
  std::map<std::string, nlohmann::json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.contains("logo_id")) out[j["logo_id"].get<std::string>()] = j;
    }
  return out;
}

inline std::string file_digest(const std::filesystem::path& p) {
  const auto bytes = read_file_bytes(p);
  return Sha256{}.field(std::span<const std::uint8_t>(bytes)).hex();
}

}  // namespace detail

// Writes <out>/perturb/<kind>/<logo_id>.png plus a sidecar.jsonl per kind
// recording seed and parameters. An image is reused when its sidecar entry
// matches the source digest and spec and the file digest still matches.
inline std::size_t write_perturbed_images(const RunConfig& cfg, const std::vector<LogoRecord>& records,
                                          ArtifactWriter& w, std::size_t* reused = nullptr) {
  const auto manifest_path = cfg.resolve(cfg.manifest);
  std::size_t written = 0;
  for (auto kind : cfg.kinds) {
    const std::string kdir(to_string(kind));
    const auto sidecar_path = w.dir() / kdir / "sidecar.jsonl";
    const auto previous = detail::load_sidecar(sidecar_path);
    std::ostringstream sidecar;
    for (const auto& r : records) {
      const auto img = load_image(resolve_image_path(manifest_path, r));
      const auto src_digest = image_digest(img);
      const auto seed = derive_item_seed(cfg.root_seed, r.id, kind);
      const auto spec = resolve_spec(kind, seed, cfg.rotation);
      const std::string rel = kdir + "/" + file_safe(r.id) + ".png";
      nlohmann::json entry{{"logo_id", r.id},
                           {"kind", kdir},
                           {"seed", seed},
                           {"params", params_to_json(spec.params)},
                           {"source_digest", src_digest},
                           {"file", rel}};
      const auto path = w.dir() / rel;
      bool reuse = false;
      if (auto it = previous.find(r.id); it != previous.end() && std::filesystem::exists(path)) {
        auto prev = it->second;
        const auto prev_digest = prev.value("output_sha256", "");
        prev.erase("output_sha256");
        reuse = prev == entry && detail::file_digest(path) == prev_digest;
      }
      if (reuse) {
        if (reused) ++*reused;
      } else {
        std::filesystem::create_directories(path.parent_path());
        save_png(apply_perturbation(spec, img), path);
        ++written;
      }
      entry["output_sha256"] = detail::file_digest(path);
      sidecar << entry.dump() << '\n';
      w.track(rel);
    }
    w.text(kdir + "/sidecar.jsonl", sidecar.str());
  }
  return written;
}

inline PerturbResult run_perturb_stage(const RunConfig& cfg, std::ostream& log = std::clog) {
  const auto records = load_manifest(cfg.resolve(cfg.manifest));
  ArtifactWriter w(cfg.out() / "perturb", provenance(cfg));
  PerturbResult res;
  res.images_written = write_perturbed_images(cfg, records, w, &res.images_reused);
  log << "perturb: " << res.images_written << " images written, " << res.images_reused << " reused\n";

  std::vector<PredictionJob> jobs;
  const auto dir = w.dir();
  for (auto kind : cfg.kinds)
    for (const auto& r : records)
      for (std::uint64_t rep = 0; rep < cfg.replicates; ++rep) {
        auto path = dir / std::string(to_string(kind)) / (file_safe(r.id) + ".png");
        jobs.push_back({&r, [path] { return load_image(path); }, std::string(to_string(kind)), rep});
      }
  for (auto& mp : query_all(cfg, records, jobs)) {
    const auto name = file_safe(mp.endpoint.model_id);
    std::ostringstream lines;
    write_predictions(lines, mp.predictions);
    w.text(name + ".predictions.jsonl", lines.str());
    const auto scored = join_predictions(records, mp.predictions);
    auto rep = build_metrics_report(mp.endpoint.model_id, scored);
    rep.condition = "perturbed";
    rep.perturbations = perturbation_report(scored);
    w.json(name + ".report.json", metrics_report_to_json(rep));
    res.network_calls += mp.network_calls;
    log << "perturb: " << mp.endpoint.model_id << ": " << mp.predictions.size() << " predictions, "
        << mp.network_calls << " network calls\n";
    res.reports.push_back(std::move(rep));
  }
  w.text("perturbation.md", perturbation_markdown(res.reports));
  w.text("perturbation.csv", perturbation_csv(res.reports));
  w.json("plot_data.json", plot_data(res.reports));
  w.finish();
  return res;
}

// ---- probe stage and synthetic check ----

struct ProbeData {
  std::vector<PooledFeature> features;
  std::vector<EmbeddingMatrix> matrices;  // kept for activation selection
  std::optional<PlantedWorld> world;
};

inline std::vector<std::pair<std::string, int>> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read labels: " + path.string());
  std::vector<std::pair<std::string, int>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const int y = j.at("label").get<int>();
      if (y != 0 && y != 1) throw ConfigError("label must be 0 or 1");
      out.emplace_back(j.at("logo_id").get<std::string>(), y);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline PlantedWorld synth_world(const RunConfig& cfg) {
  const auto& s = cfg.synth;
  return make_planted_world(s.d, s.s, s.signal, s.b_star, derive_seed(cfg.root_seed, "synth-world"), s.center_logit,
                            s.noise);
}

inline ProbeData load_probe_data(const RunConfig& cfg) {
  ProbeData data;
  if (cfg.probe.source == "synth") {
    data.world = synth_world(cfg);
    data.features = generate(*data.world, cfg.synth.M);
    return data;
  }
  const auto dir = cfg.resolve(cfg.probe.embeddings_dir);
  std::vector<std::pair<std::string, int>> labels;
  if (!cfg.probe.labels.empty()) {
    labels = load_labels(cfg.resolve(cfg.probe.labels));
  } else {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.path().extension() == ".lemb") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) labels.emplace_back(f.stem().string(), -1);
  }
  if (labels.empty()) throw ConfigError("probe: no embeddings found in " + dir.string());
  for (const auto& [id, y] : labels) {
    const auto path = dir / (file_safe(id) + ".lemb");
    if (!std::filesystem::exists(path)) throw ConfigError("probe: missing embedding for '" + id + "': " + path.string());
    auto z = load_lemb(path);
    data.features.push_back({id, pool(z), y});
    data.matrices.push_back(std::move(z));
  }
  return data;
}

struct ProbeStageResult {
  std::optional<ProbeModel> probe;
  std::optional<CvResult> cv;
  AblationMask targeted;
  AblationMask placebo;
  std::optional<AblationEffect> targeted_effect;  // synthetic worlds only
  std::optional<AblationEffect> placebo_effect;
  std::optional<double> recovery;
  std::optional<Deltas> targeted_deltas;
  std::optional<Deltas> placebo_deltas;
  std::optional<CalibrationReport> calibration_base;
  std::optional<CalibrationReport> calibration_ablated;
  PcaResult pca;
};

namespace detail {

inline MetricsReport proxy_report(const std::string& condition, double hall, std::size_t n) {
  MetricsReport r;
  r.model_id = "synth";
  r.condition = condition;
  r.hall = hall;
  r.no_hall = 1.0 - hall;
  r.n_symbol = n;
  return r;
}

inline MetricsReport load_report(const RunConfig& cfg, const std::string& p) {
  std::ifstream in(cfg.resolve(p));
  if (!in) throw ConfigError("cannot read report: " + p);
  try {
    return metrics_report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(p + ": " + e.what());
  }
}

inline nlohmann::json deltas_to_json(const Deltas& d) {
  return {{"d_acc_text", detail::opt_json(d.d_acc_text)}, {"d_hall", detail::opt_json(d.d_hall)}, {"warnings", d.warnings}};
}

}  // namespace detail

inline ProbeStageResult run_probe_pipeline(const RunConfig& cfg, const ProbeData& data) {
  ProbeStageResult res;
  const auto& ps = cfg.probe;
  const std::size_t d = data.features.front().z_bar.size();
  const bool labelled = std::all_of(data.features.begin(), data.features.end(), [](const auto& f) { return f.label >= 0; });
  const bool by_activation = ps.selection == SelectionMode::Activation || !labelled;

  std::size_t k = ps.k.value_or(0);
  if (!by_activation) {
    ProbeOptions opt;
    opt.C = ps.C;
    res.probe = fit_probe(data.features, opt);
    if (!ps.k) {
      CvOptions cv;
      cv.folds = ps.folds;
      cv.seed = derive_seed(cfg.root_seed, "cv");
      cv.probe = opt;
      res.cv = cross_validate_k(data.features, ps.ks, cv);
      k = res.cv->selected_k;
    }
  } else if (!ps.k) {
    throw ConfigError("probe: activation selection needs a fixed k");
  }
  if (k > d) throw ConfigError("probe: k exceeds embedding dimension");

  if (k == 0) {
    res.targeted = make_mask({}, by_activation ? MaskOrigin::Activation : MaskOrigin::Probe);
  } else if (by_activation) {
    std::vector<EmbeddingMatrix> mats = data.matrices;
    if (mats.empty())
      for (const auto& f : data.features) {
        EmbeddingMatrix z;
        z.logo_id = f.logo_id;
        z.rows = 1;
        z.cols = static_cast<std::uint32_t>(d);
        z.values.assign(f.z_bar.begin(), f.z_bar.end());
        mats.push_back(std::move(z));
      }
    res.targeted = make_mask(select_by_activation(mats, k), MaskOrigin::Activation);
  } else {
    res.targeted = make_mask(top_k(res.probe->w, k), MaskOrigin::Probe);
  }
  res.placebo = random_placebo(d, k, derive_seed(cfg.root_seed, "placebo"));

  if (data.world) {
    const auto& world = *data.world;
    res.recovery = k > 0 ? recovery_score(res.targeted.indices, world) : 0.0;
    res.targeted_effect = simulate_ablation_effect(world, res.targeted, cfg.synth.M);
    res.placebo_effect = simulate_ablation_effect(world, res.placebo, cfg.synth.M);
    const auto base = detail::proxy_report("base", res.targeted_effect->before, cfg.synth.M);
    res.targeted_deltas = deltas(base, detail::proxy_report("targeted", res.targeted_effect->after, cfg.synth.M));
    res.placebo_deltas = deltas(base, detail::proxy_report("placebo", res.placebo_effect->after, cfg.synth.M));
  }
  if (!ps.base_report.empty()) {
    const auto base = detail::load_report(cfg, ps.base_report);
    if (!ps.targeted_report.empty()) res.targeted_deltas = deltas(base, detail::load_report(cfg, ps.targeted_report));
    if (!ps.placebo_report.empty()) res.placebo_deltas = deltas(base, detail::load_report(cfg, ps.placebo_report));
  }

  // Baseline and ablated calibration of the probe's probabilities. In a
  // synthetic world the ablated labels are redrawn from the generating
  // model with the targeted coordinates zeroed.
  if (res.probe) {
    std::vector<double> p0, p1;
    std::vector<int> y0, y1;
    Rng rng(derive_seed(cfg.root_seed, "calibration"));
    for (const auto& f : data.features) {
      p0.push_back(res.probe->predict_proba(f.z_bar));
      y0.push_back(f.label);
      if (data.world) {
        const auto z = ablate(f.z_bar, res.targeted);
        p1.push_back(res.probe->predict_proba(z));
        y1.push_back(rng.bernoulli(detail::sigmoid(world_logit(*data.world, z))) ? 1 : 0);
      }
    }
    res.calibration_base = reliability_curve(p0, y0);
    if (data.world) res.calibration_ablated = reliability_curve(p1, y1);
  }
  if (!ps.targeted_report.empty() && !res.calibration_ablated) {
    const auto t = detail::load_report(cfg, ps.targeted_report);
    if (t.calibration) res.calibration_ablated = t.calibration;
  }

  std::vector<std::vector<double>> pts;
  for (const auto& f : data.features) pts.push_back(f.z_bar);
  res.pca = pca_2d(pts);
  return res;
}

inline void write_probe_artifacts(const ProbeStageResult& res, const ProbeData& data, ArtifactWriter& w) {
  if (res.probe) w.json("probe.json", probe_to_json(*res.probe));
  if (res.cv)
    w.json("cv.json", {{"ks", res.cv->ks},
                       {"utility", res.cv->utility},
                       {"selected_k", res.cv->selected_k},
                       {"unstable", res.cv->unstable}});
  w.json("mask_targeted.json", mask_to_json(res.targeted));
  w.json("mask_placebo.json", mask_to_json(res.placebo));
  nlohmann::json dj = nlohmann::json::object();
  if (res.targeted_deltas) dj["targeted"] = detail::deltas_to_json(*res.targeted_deltas);
  if (res.placebo_deltas) dj["placebo"] = detail::deltas_to_json(*res.placebo_deltas);
  if (res.targeted_effect)
    dj["hall_proxy"] = {{"base", res.targeted_effect->before},
                        {"targeted", res.targeted_effect->after},
                        {"placebo", res.placebo_effect->after}};
  if (res.recovery) dj["recovery_score"] = *res.recovery;
  w.json("deltas.json", dj);
  nlohmann::json cal = nlohmann::json::object();
  if (res.calibration_base) cal["baseline"] = calibration_to_json(*res.calibration_base);
  if (res.calibration_ablated) cal["ablated"] = calibration_to_json(*res.calibration_ablated);
  w.json("calibration.json", cal);
  nlohmann::json pts = nlohmann::json::array();
  for (std::size_t i = 0; i < data.features.size(); ++i)
    pts.push_back({{"logo_id", data.features[i].logo_id},
                   {"label", data.features[i].label},
                   {"pc", {res.pca.coords[i][0], res.pca.coords[i][1]}}});
  w.json("pca.json", {{"explained_variance", res.pca.explained_variance},
                      {"explained_ratio", res.pca.explained_ratio},
                      {"points", pts}});
  if (data.world) w.json("world.json", world_to_json(*data.world));
}

inline ProbeStageResult run_probe_stage(const RunConfig& cfg, std::ostream& log = std::clog) {
  const auto data = load_probe_data(cfg);
  auto res = run_probe_pipeline(cfg, data);
  ArtifactWriter w(cfg.out() / "probe", provenance(cfg));
  write_probe_artifacts(res, data, w);
  w.finish();
  log << "probe: k=" << res.targeted.indices.size();
  if (res.probe) log << ", nonzeros=" << res.probe->nonzeros() << (res.probe->converged ? "" : " (not converged)");
  if (res.targeted_deltas && res.targeted_deltas->d_hall) log << ", targeted dHall=" << *res.targeted_deltas->d_hall;
  if (res.placebo_deltas && res.placebo_deltas->d_hall) log << ", placebo dHall=" << *res.placebo_deltas->d_hall;
  log << '\n';
  return res;
}

struct SynthCheckResult {
  PlantedWorld world;
  double bayes_accuracy = 0.0;
  ProbeStageResult probe;
  double seconds = 0.0;  // fit plus selection; not written to artifacts
};

// The planted-world oracle: fits the probe on generated data and scores it
// against the known support and the generating model.
inline SynthCheckResult run_synth_check(const RunConfig& cfg, std::ostream& log = std::clog) {
  RunConfig c = cfg;
  c.probe = ProbeSettings{};
  c.probe.C = cfg.probe.C;
  c.probe.k = cfg.synth.cross_validate ? std::nullopt : std::optional<std::size_t>(cfg.synth.s);
  c.probe.ks = cfg.probe.ks;
  c.probe.folds = cfg.probe.folds;
  SynthCheckResult out;
  ProbeData data;
  data.world = synth_world(c);
  data.features = generate(*data.world, c.synth.M);
  out.world = *data.world;
  out.bayes_accuracy = bayes_accuracy(out.world, data.features);
  const auto t0 = std::chrono::steady_clock::now();
  out.probe = run_probe_pipeline(c, data);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ArtifactWriter w(cfg.out() / "synth", provenance(cfg));
  write_probe_artifacts(out.probe, data, w);
  w.json("synth_check.json", {{"bayes_accuracy", out.bayes_accuracy},
                              {"recovery_score", *out.probe.recovery},
                              {"k", out.probe.targeted.indices.size()},
                              {"probe_nonzeros", out.probe.probe->nonzeros()},
                              {"probe_converged", out.probe.probe->converged},
                              {"targeted_delta", out.probe.targeted_effect->delta()},
                              {"placebo_delta", out.probe.placebo_effect->delta()}});
  if (cfg.synth.write_dataset) {
    write_synth_dataset(w.dir() / "dataset", out.world, data.features);
    log << "synth-check: dataset written to " << (w.dir() / "dataset").string() << '\n';
  }
  w.finish();
  log << "synth-check: bayes_acc=" << out.bayes_accuracy << " recovery=" << *out.probe.recovery
      << " targeted=" << out.probe.targeted_effect->delta() << " placebo=" << out.probe.placebo_effect->delta()
      << " (" << out.seconds << " s)\n";
  return out;
}

// ---- whole run ----

struct RunSummary {
  std::optional<BiasResult> bias;
  std::optional<PerturbResult> perturb;
  std::optional<ProbeStageResult> probe;
  std::optional<SynthCheckResult> synth;
};

inline RunSummary run_stages(const RunConfig& cfg, std::ostream& log = std::clog) {
  RunSummary s;
  if (cfg.stages.empty()) {
    log << "notice: no stages selected; nothing to do (set 'stages' in the config or pass --stages)\n";
    return s;
  }
  validate_run_config(cfg);
  // Stage order is fixed regardless of how the selection was written.
  auto in_stage = [&](Stage st, auto&& fn) {
    if (!cfg.has(st)) return;
    try {
      fn();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(to_string(st)) + " stage: " + e.what());
    } catch (const UpstreamError& e) {
      throw UpstreamError(std::string(to_string(st)) + " stage: " + e.what());
    } catch (const InvariantError& e) {
      throw InvariantError(std::string(to_string(st)) + " stage: " + e.what());
    }
  };
  in_stage(Stage::Bias, [&] { s.bias = run_bias_stage(cfg, log); });
  in_stage(Stage::Perturb, [&] { s.perturb = run_perturb_stage(cfg, log); });
  in_stage(Stage::Probe, [&] { s.probe = run_probe_stage(cfg, log); });
  in_stage(Stage::SynthCheck, [&] { s.synth = run_synth_check(cfg, log); });
  return s;
}

}  // namespace logohall
