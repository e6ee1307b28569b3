#include "fuess/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <spdlog/spdlog.h>

#include "fuess/baselines.hpp"
#include "fuess/error.hpp"
#include "fuess/random.hpp"
#include "fuess/synthetic.hpp"
#include "fuess/vector_store.hpp"
#include "fuess/zavs.hpp"

namespace fuess {

namespace {

using nlohmann::json;

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSpec, std::string("bad value for '") + key + "': " + e.what(), key);
  }
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return field<T>(j, key, T{});
}

std::string csv_number(const std::optional<double>& x) { return x ? format_number(*x) : ""; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string(), path.string());
  out << text;
  if (!out) throw Error(Errc::Io, "write failed: " + path.string(), path.string());
}

Dataset load_source(const DatasetSource& src) {
  if (src.preset) return generate(preset(*src.preset, src.n_samples, src.seed, src.noise_std));
  if (!src.csv) throw Error(Errc::InvalidSpec, "dataset needs 'csv' or 'preset'", "dataset");
  std::optional<std::filesystem::path> meta;
  if (src.metadata) meta = *src.metadata;
  return load_dataset(*src.csv, src.primary, meta);
}

SelectionResult all_variables(const std::vector<std::string>& names) {
  std::vector<ScoredVariable> scores;
  for (const auto& n : names) scores.push_back({n, 1.0});
  return aggregate_runs(names, {scores}, {""}, 1.0);
}

json outcome_json(const SampleOutcome& o) {
  return {{"method", o.cell.method},
          {"mode", to_string(o.cell.mode)},
          {"shots", o.cell.shots},
          {"missing_ratio", o.cell.missing_ratio},
          {"seed", o.seed},
          {"context", o.context},
          {"test_id", o.test_id},
          {"y_true", o.y_true},
          {"y_pred", o.y_pred ? json(*o.y_pred) : json(nullptr)},
          {"confidence", o.confidence ? json(*o.confidence) : json(nullptr)},
          {"error", o.error},
          {"record", o.record ? to_json(*o.record) : json(nullptr)}};
}

}  // namespace

ExperimentSpec experiment_spec_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidSpec, "experiment spec must be a JSON object");
  ExperimentSpec s;
  if (!j.contains("dataset") || !j["dataset"].is_object()) {
    throw Error(Errc::InvalidSpec, "missing 'dataset' object", "dataset");
  }
  const auto& d = j["dataset"];
  s.dataset.csv = optional_field<std::string>(d, "csv");
  s.dataset.primary = field<std::string>(d, "primary", "");
  s.dataset.metadata = optional_field<std::string>(d, "metadata");
  s.dataset.preset = optional_field<std::string>(d, "preset");
  s.dataset.n_samples = field<std::size_t>(d, "n_samples", s.dataset.n_samples);
  s.dataset.seed = field<std::uint64_t>(d, "seed", s.dataset.seed);
  s.dataset.noise_std = field<double>(d, "noise_std", s.dataset.noise_std);
  if (!s.dataset.csv && !s.dataset.preset) {
    throw Error(Errc::InvalidSpec, "dataset needs 'csv' or 'preset'", "dataset");
  }
  if (s.dataset.csv && s.dataset.primary.empty()) {
    throw Error(Errc::InvalidSpec, "a CSV dataset needs 'primary'", "dataset.primary");
  }

  s.methods = field<std::vector<std::string>>(j, "methods", {});
  for (const auto& m : s.methods) {
    if (m != "llm") {
      try {
        parse_baseline_kind(m);
      } catch (const Error&) {
        throw Error(Errc::InvalidSpec, "unknown method '" + m + "'", "methods");
      }
    }
  }
  try {
    s.mode = parse_prediction_mode(field<std::string>(j, "mode", "fsc"));
    s.ablation = parse_ablation_flags(field<std::string>(j, "ablation", ""));
    s.ci_method = parse_ci_method(field<std::string>(j, "ci_method", "t-spread"));
  } catch (const Error& e) {
    throw Error(Errc::InvalidSpec, e.what(), e.detail());
  }
  s.shots = field<std::vector<std::size_t>>(j, "shots", s.shots);
  s.missing_ratios = field<std::vector<double>>(j, "missing_ratios", s.missing_ratios);
  s.trials = optional_field<std::size_t>(j, "trials");
  s.seeds = field<std::vector<std::uint64_t>>(j, "seeds", s.seeds);
  s.temperature = field<double>(j, "temperature", s.temperature);
  s.ci_level = field<double>(j, "ci_level", s.ci_level);
  s.backend = field<std::string>(j, "backend", s.backend);
  s.max_tests = optional_field<std::size_t>(j, "max_tests");
  s.baseline_folds = field<std::size_t>(j, "baseline_folds", s.baseline_folds);
  if (j.contains("split")) {
    const auto& sp = j["split"];
    s.split.pool_size = field<std::size_t>(sp, "pool_size", s.split.pool_size);
    s.split.n_contexts = field<std::size_t>(sp, "n_contexts", s.split.n_contexts);
    s.split.context_size = field<std::size_t>(sp, "context_size", s.split.context_size);
    s.split.tests_per_context = field<std::size_t>(sp, "tests_per_context", s.split.tests_per_context);
  }
  if (j.contains("selection")) {
    const auto& se = j["selection"];
    s.selection.runs = field<std::size_t>(se, "runs", 0);
    s.selection.fraction = field<double>(se, "fraction", s.selection.fraction);
    s.selection.knowledge_dir = optional_field<std::string>(se, "knowledge_dir");
    s.selection.file = optional_field<std::string>(se, "file");
  }

  if (s.shots.empty() || std::find(s.shots.begin(), s.shots.end(), 0u) != s.shots.end()) {
    throw Error(Errc::InvalidSpec, "'shots' must list positive counts", "shots");
  }
  for (double r : s.missing_ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error(Errc::InvalidSpec, "missing ratios must be in [0, 1]", "missing_ratios");
  }
  if (s.missing_ratios.empty()) throw Error(Errc::InvalidSpec, "'missing_ratios' is empty", "missing_ratios");
  if (s.seeds.empty()) throw Error(Errc::InvalidSpec, "'seeds' is empty", "seeds");
  if (s.trials && *s.trials == 0) throw Error(Errc::InvalidSpec, "'trials' must be >= 1", "trials");
  if (!(s.temperature >= 0.0) || !std::isfinite(s.temperature)) {
    throw Error(Errc::InvalidSpec, "'temperature' must be finite and >= 0", "temperature");
  }
  if (s.backend != "stub" && s.backend != "remote") {
    throw Error(Errc::InvalidSpec, "'backend' must be stub or remote", "backend");
  }
  if (s.mode == PredictionMode::Fsc) {
    for (auto k : s.shots) {
      if (k > s.split.context_size) {
        throw Error(Errc::InvalidSpec, "FSC shots exceed the context size", "shots");
      }
    }
  }
  return s;
}

json to_json(const ExperimentSpec& s) {
  json d{{"primary", s.dataset.primary}, {"n_samples", s.dataset.n_samples},
         {"seed", s.dataset.seed}, {"noise_std", s.dataset.noise_std}};
  if (s.dataset.csv) d["csv"] = *s.dataset.csv;
  if (s.dataset.metadata) d["metadata"] = *s.dataset.metadata;
  if (s.dataset.preset) d["preset"] = *s.dataset.preset;
  json sel{{"runs", s.selection.runs}, {"fraction", s.selection.fraction}};
  if (s.selection.knowledge_dir) sel["knowledge_dir"] = *s.selection.knowledge_dir;
  if (s.selection.file) sel["file"] = *s.selection.file;
  json j{{"report_version", kReportVersion},
         {"dataset", d},
         {"methods", s.methods},
         {"mode", to_string(s.mode)},
         {"shots", s.shots},
         {"missing_ratios", s.missing_ratios},
         {"seeds", s.seeds},
         {"split",
          {{"pool_size", s.split.pool_size},
           {"n_contexts", s.split.n_contexts},
           {"context_size", s.split.context_size},
           {"tests_per_context", s.split.tests_per_context}}},
         {"selection", sel},
         {"ablation", to_string(s.ablation)},
         {"temperature", s.temperature},
         {"ci_method", to_string(s.ci_method)},
         {"ci_level", s.ci_level},
         {"backend", s.backend},
         {"baseline_folds", s.baseline_folds}};
  if (s.trials) j["trials"] = *s.trials;
  if (s.max_tests) j["max_tests"] = *s.max_tests;
  return j;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, "cannot open " + path.string(), path.string());
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::InvalidSpec, "experiment spec is not valid JSON", path.string());
  return experiment_spec_from_json(j);
}

std::vector<CellSummary> summarize(const std::vector<SampleOutcome>& outcomes) {
  std::vector<CellSummary> cells;
  std::vector<std::vector<const SampleOutcome*>> members;
  for (const auto& o : outcomes) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSummary& c) { return c.cell == o.cell; });
    if (it == cells.end()) {
      cells.push_back({o.cell, 0, 0, std::nullopt, std::nullopt, ""});
      members.emplace_back();
      it = cells.end() - 1;
    }
    members[static_cast<std::size_t>(it - cells.begin())].push_back(&o);
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> y_true, y_pred, conf;
    for (const auto* o : members[c]) {
      if (!o->y_pred) {
        ++cells[c].failures;
        continue;
      }
      y_true.push_back(o->y_true);
      y_pred.push_back(*o->y_pred);
      if (o->confidence) conf.push_back(*o->confidence);
    }
    auto& cell = cells[c];
    cell.n = y_true.size();
    if (!conf.empty()) {
      double sum = 0.0;
      for (double x : conf) sum += x;
      cell.mean_confidence = sum / static_cast<double>(conf.size());
    }
    if (y_true.empty()) {
      cell.status = "failed";
      continue;
    }
    Metrics m;
    m.n = y_true.size();
    m.mae = mean_absolute_error(y_true, y_pred);
    m.rmse = root_mean_squared_error(y_true, y_pred);
    m.smape = smape(y_true, y_pred);
    m.mape = mape(y_true, y_pred);
    cell.status = cell.failures ? "partial" : "ok";
    try {
      m.r2 = r_squared(y_true, y_pred);
    } catch (const Error&) {
      m.r2 = std::nan("");
      cell.status = "degenerate-r2";
    }
    cell.metrics = m;
  }
  return cells;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, LlmBackend* backend) {
  ExperimentReport report;
  report.spec = spec;
  if (spec.methods.empty()) return report;

  const Dataset data = load_source(spec.dataset);
  const auto catalog_names = data.variable_names();

  std::vector<ContextSplit> splits;
  for (auto seed : spec.seeds) {
    auto params = spec.split;
    params.seed = seed;
    splits.push_back(split_contexts(data, params));
  }
  Dataset first_pool = data;
  first_pool.samples.clear();
  for (auto i : splits.front().pool_indices) first_pool.samples.push_back(data.samples[i]);

  std::unique_ptr<LlmBackend> owned;
  if (!backend) {
    if (spec.backend == "remote") {
      owned = std::make_unique<RemoteBackend>(RemoteConfig{});
    } else {
      owned = std::make_unique<StubBackend>(StubConfig{1e-9, first_pool});
    }
    backend = owned.get();
  }
  GenerationParams gen;
  gen.temperature = spec.temperature;

  if (spec.selection.file) {
    std::ifstream in(*spec.selection.file, std::ios::binary);
    if (!in) throw Error(Errc::FileNotFound, "cannot open " + *spec.selection.file, *spec.selection.file);
    report.selection = selection_from_json(json::parse(in));
  } else if (spec.selection.runs > 0) {
    LocalHashEmbedder embedder;
    VectorStore ikvs(StoreKind::Ikvs, embedder.dimension());
    if (spec.selection.knowledge_dir) {
      const auto docs = load_knowledge_dir(*spec.selection.knowledge_dir);
      const auto chunks = chunk_documents(docs);
      if (!chunks.empty()) ikvs = build_ikvs(chunks, embedder);
    }
    ZavsConfig zc;
    zc.n_runs = spec.selection.runs;
    zc.fraction = spec.selection.fraction;
    zc.generation = gen;
    zc.generation.seed = spec.seeds.front();
    report.selection = select_variables(data.task, data.catalog, ikvs, embedder, *backend, zc);
    if (report.selection->run_selections.size() >= 2) {
      report.ascs = ascs(report.selection->run_selections, report.selection->selected.size());
    }
  }
  const SelectionResult selection = report.selection.value_or(all_variables(catalog_names));
  const auto& names = selection.selected;

  UfssConfig ucfg;
  ucfg.mode = spec.mode;
  ucfg.trials = spec.trials;
  ucfg.ci_level = spec.ci_level;
  ucfg.ci_method = spec.ci_method;
  ucfg.generation = gen;
  ucfg.ablation = spec.ablation;

  for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
    const auto seed = spec.seeds[si];
    const auto& split = splits[si];
    BaselineOptions bopt;
    bopt.seed = seed;
    bopt.folds = spec.baseline_folds;

    // (context, dataset row) for each test, in split order.
    std::vector<std::pair<std::size_t, std::size_t>> tests;
    for (std::size_t c = 0; c < split.contexts.size(); ++c) {
      for (auto idx : split.contexts[c].test_indices) tests.emplace_back(c, idx);
    }
    if (spec.max_tests && tests.size() > *spec.max_tests) tests.resize(*spec.max_tests);

    std::optional<VectorStore> ipdvs;
    if (spec.mode == PredictionMode::Rac) {
      std::vector<Sample> pool;
      for (auto i : split.pool_indices) pool.push_back(data.samples[i]);
      ipdvs = build_ipdvs(pool, names);
    }

    for (double ratio : spec.missing_ratios) {
      std::vector<Sample> masked;
      for (const auto& [c, idx] : tests) {
        masked.push_back(apply_missing_mask(restrict_sample(data.samples[idx], names), ratio,
                                            derive_seed(seed, idx)));
      }
      for (auto k : spec.shots) {
        const auto base_outcome = [&](const std::string& method, std::size_t t) {
          SampleOutcome o;
          o.cell = {method, spec.mode, k, ratio};
          o.seed = seed;
          o.context = tests[t].first;
          o.test_id = tests[t].second;
          o.y_true = data.samples[tests[t].second].label.value();
          return o;
        };
        for (const auto& method : spec.methods) {
          if (method == "llm") {
            auto cfg = ucfg;
            cfg.k_shots = k;
            for (std::size_t t = 0; t < tests.size(); ++t) {
              auto o = base_outcome(method, t);
              cfg.generation.seed = derive_seed(seed, o.test_id);
              try {
                PredictionRecord rec;
                if (spec.mode == PredictionMode::Fsc) {
                  const auto& ctx = split.contexts[o.context].context;
                  ContextSet demos{std::vector<Sample>(ctx.begin(), ctx.begin() + static_cast<std::ptrdiff_t>(k))};
                  rec = predict_fsc(data.task, data.catalog, demos, masked[t], selection, *backend, cfg);
                } else {
                  rec = predict_rac(data.task, data.catalog, *ipdvs, masked[t], selection, *backend, cfg);
                }
                rec.id = o.test_id;
                o.y_pred = rec.point_estimate;
                o.confidence = rec.confidence_score;
                o.record = std::move(rec);
              } catch (const Error& e) {
                o.error = e.what();
              }
              report.outcomes.push_back(std::move(o));
            }
            continue;
          }
          const auto kind = parse_baseline_kind(method);
          if (spec.mode == PredictionMode::Fsc) {
            // One fit per context serves all of its tests.
            std::map<std::size_t, std::vector<std::size_t>> by_context;
            for (std::size_t t = 0; t < tests.size(); ++t) by_context[tests[t].first].push_back(t);
            std::vector<SampleOutcome> outs(tests.size());
            for (const auto& [c, members] : by_context) {
              const auto& ctx = split.contexts[c].context;
              std::vector<Sample> train(ctx.begin(), ctx.begin() + static_cast<std::ptrdiff_t>(k));
              std::vector<Sample> batch;
              for (auto t : members) batch.push_back(masked[t]);
              std::optional<BaselineResult> res;
              std::string error;
              try {
                res = run_baseline(kind, train, batch, names, bopt);
              } catch (const Error& e) {
                error = e.what();
              }
              for (std::size_t i = 0; i < members.size(); ++i) {
                auto o = base_outcome(method, members[i]);
                if (res) {
                  o.y_pred = res->predictions[i];
                } else {
                  o.error = error;
                }
                outs[members[i]] = std::move(o);
              }
            }
            for (auto& o : outs) report.outcomes.push_back(std::move(o));
          } else {
            for (std::size_t t = 0; t < tests.size(); ++t) {
              auto o = base_outcome(method, t);
              try {
                const auto demos = retrieve_demonstrations(*ipdvs, masked[t], k);
                const auto res = run_baseline(kind, demos.demonstrations,
                                              std::vector<Sample>{masked[t]}, names, bopt);
                o.y_pred = res.predictions.front();
              } catch (const Error& e) {
                o.error = e.what();
              }
              report.outcomes.push_back(std::move(o));
            }
          }
        }
      }
    }
  }
  for (const auto& o : report.outcomes) {
    if (!o.error.empty()) report.warnings.push_back(o.cell.method + " test " + std::to_string(o.test_id) + ": " + o.error);
  }
  report.cells = summarize(report.outcomes);
  return report;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir.string() + ": " + ec.message(), dir.string());

  std::string metrics = "method,mode,shots,missing_ratio,n,mae,rmse,r2,smape,mape,status\n";
  for (const auto& c : report.cells) {
    const auto& m = c.metrics;
    metrics += c.cell.method + "," + to_string(c.cell.mode) + "," + std::to_string(c.cell.shots) + "," +
               format_number(c.cell.missing_ratio) + "," + std::to_string(c.n) + "," +
               csv_number(m ? std::optional(m->mae) : std::nullopt) + "," +
               csv_number(m ? std::optional(m->rmse) : std::nullopt) + "," +
               csv_number(m && c.status != "degenerate-r2" ? std::optional(m->r2) : std::nullopt) + "," +
               csv_number(m ? std::optional(m->smape) : std::nullopt) + "," +
               csv_number(m ? m->mape : std::nullopt) + "," + c.status + "\n";
  }
  write_text(dir / "metrics.csv", metrics);

  const auto& spec = report.spec;
  const double first_ratio = spec.missing_ratios.empty() ? 0.0 : spec.missing_ratios.front();
  const std::size_t last_shots = spec.shots.empty() ? 0 : spec.shots.back();
  std::string nshot = "method,shots,n,mae,rmse\n";
  std::string missing = "method,missing_ratio,n,mae,rmse,smape,mean_confidence\n";
  for (const auto& c : report.cells) {
    const auto& m = c.metrics;
    if (c.cell.missing_ratio == first_ratio) {
      nshot += c.cell.method + "," + std::to_string(c.cell.shots) + "," + std::to_string(c.n) + "," +
               csv_number(m ? std::optional(m->mae) : std::nullopt) + "," +
               csv_number(m ? std::optional(m->rmse) : std::nullopt) + "\n";
    }
    if (c.cell.shots == last_shots) {
      missing += c.cell.method + "," + format_number(c.cell.missing_ratio) + "," + std::to_string(c.n) +
                 "," + csv_number(m ? std::optional(m->mae) : std::nullopt) + "," +
                 csv_number(m ? std::optional(m->rmse) : std::nullopt) + "," +
                 csv_number(m ? std::optional(m->smape) : std::nullopt) + "," +
                 csv_number(c.mean_confidence) + "\n";
    }
  }
  write_text(dir / "nshot_curve.csv", nshot);
  write_text(dir / "missing_ratio.csv", missing);

  std::string conf = "method,shots,missing_ratio,seed,test_id,confidence,abs_error\n";
  std::string records;
  for (const auto& o : report.outcomes) {
    records += outcome_json(o).dump() + "\n";
    if (o.confidence && o.y_pred) {
      conf += o.cell.method + "," + std::to_string(o.cell.shots) + "," + format_number(o.cell.missing_ratio) +
              "," + std::to_string(o.seed) + "," + std::to_string(o.test_id) + "," +
              format_number(*o.confidence) + "," + format_number(std::abs(*o.y_pred - o.y_true)) + "\n";
    }
  }
  write_text(dir / "confidence_error.csv", conf);
  write_text(dir / "records.jsonl", records);

  std::string ascs_csv = "runs,m,ascs\n";
  if (report.ascs && report.selection) {
    ascs_csv += std::to_string(report.selection->run_selections.size()) + "," +
                std::to_string(report.selection->selected.size()) + "," + format_number(*report.ascs) + "\n";
  }
  write_text(dir / "ascs.csv", ascs_csv);
  write_text(dir / "spec.json", to_json(spec).dump(2) + "\n");
  if (report.selection) write_text(dir / "selection.json", to_json(*report.selection).dump(2) + "\n");
}

}  // namespace fuess
