#include "fuess/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fuess/error.hpp"
#include "fuess/experiment.hpp"
#include "fuess/llm.hpp"
#include "fuess/prompt.hpp"
#include "fuess/random.hpp"
#include "fuess/synthetic.hpp"
#include "fuess/ufss.hpp"
#include "fuess/vector_store.hpp"
#include "fuess/zavs.hpp"

namespace fuess {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonOpts {
  std::string backend = "stub";
  std::string model = "gpt-4o";
  double temperature = 0.0;
  int max_retries = 3;
  std::uint64_t seed = 0;
};

struct DataOpts {
  std::string dataset;
  std::string primary;
  std::string metadata;
  std::string preset;
  std::size_t n_samples = 600;
  std::uint64_t data_seed = 0;
  double noise = 0.0;
  std::string process;
  std::string facility;
};

struct PredictOpts {
  std::string mode = "fsc";
  std::string selection;
  std::string ipdvs;
  std::string test;
  std::size_t shots = 10;
  std::size_t trials = 0;  // 0: mode default
  std::string ci_method = "t-spread";
  double ci_level = 0.95;
  double missing_ratio = 0.0;
  std::string ablation;
  SplitParams split;
  std::size_t max_tests = 0;  // 0: all
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--backend", o.backend, "LLM backend")->check(CLI::IsMember({"stub", "remote"}));
  cmd->add_option("--model", o.model, "Model name sent to the remote backend");
  cmd->add_option("--temperature", o.temperature, "Sampling temperature")->check(CLI::NonNegativeNumber);
  cmd->add_option("--max-retries", o.max_retries, "Retries on transient remote failures");
  cmd->add_option("--seed", o.seed, "Seed for splits, masks and stub noise");
}

void add_data(CLI::App* cmd, DataOpts& o) {
  auto* csv = cmd->add_option("--dataset", o.dataset, "Process data CSV");
  auto* pre = cmd->add_option("--preset", o.preset, "Synthetic preset instead of a CSV")
                  ->check(CLI::IsMember(preset_names()));
  csv->excludes(pre);
  cmd->add_option("--primary", o.primary, "Primary variable column (default: last column)");
  cmd->add_option("--metadata", o.metadata, "Variable metadata JSON");
  cmd->add_option("--n-samples", o.n_samples, "Preset size");
  cmd->add_option("--data-seed", o.data_seed, "Preset generator seed");
  cmd->add_option("--noise", o.noise, "Preset label noise std");
  cmd->add_option("--process", o.process, "Industrial process named in prompts");
  cmd->add_option("--facility", o.facility, "Facility named in prompts");
}

void add_predict(CLI::App* cmd, PredictOpts& o) {
  cmd->add_option("--mode", o.mode, "fsc or rac")->check(CLI::IsMember({"fsc", "rac"}));
  cmd->add_option("--selection", o.selection, "selection.json (default: all variables)");
  cmd->add_option("--ipdvs", o.ipdvs, "Process data store for rac (default: built from the pool)");
  cmd->add_option("--test", o.test, "CSV of test samples (default: protocol split)");
  cmd->add_option("--shots", o.shots, "Demonstrations per prompt")->check(CLI::PositiveNumber);
  cmd->add_option("--trials", o.trials, "Completions per test sample (default fsc 10, rac 1)");
  cmd->add_option("--ci-method", o.ci_method, "t-spread, t-prediction or percentile")
      ->check(CLI::IsMember({"t-spread", "t-prediction", "percentile"}));
  cmd->add_option("--ci-level", o.ci_level, "Interval level");
  cmd->add_option("--missing-ratio", o.missing_ratio, "Fraction of test readings masked as N/A")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--pool-size", o.split.pool_size, "Protocol pool size");
  cmd->add_option("--contexts", o.split.n_contexts, "Number of contexts");
  cmd->add_option("--context-size", o.split.context_size, "Samples per context");
  cmd->add_option("--tests-per-context", o.split.tests_per_context, "Test samples per context");
  cmd->add_option("--max-tests", o.max_tests, "Cap on predicted test samples");
}

Dataset load_data(const DataOpts& o) {
  Dataset data;
  if (!o.preset.empty()) {
    data = generate(preset(o.preset, o.n_samples, o.data_seed, o.noise));
  } else {
    if (o.dataset.empty()) throw Error(Errc::InvalidArgument, "one of --dataset or --preset is required");
    std::string primary = o.primary;
    if (primary.empty()) {
      const auto header = read_csv_header(o.dataset);
      if (header.empty()) throw Error(Errc::MalformedCsv, "empty header", "header", 0);
      primary = header.back();
    }
    std::optional<fs::path> meta;
    if (!o.metadata.empty()) meta = o.metadata;
    data = load_dataset(o.dataset, primary, meta);
  }
  if (!o.process.empty()) data.task.industrial_process = o.process;
  if (!o.facility.empty()) data.task.facility = o.facility;
  return data;
}

std::unique_ptr<LlmBackend> make_backend(const CommonOpts& o, std::optional<Dataset> sidecar) {
  if (o.backend == "remote") return std::make_unique<RemoteBackend>(RemoteConfig{});
  return std::make_unique<StubBackend>(StubConfig{1e-9, std::move(sidecar)});
}

GenerationParams generation(const CommonOpts& o) {
  GenerationParams p;
  p.temperature = o.temperature;
  p.model_name = o.model;
  p.max_retries = o.max_retries;
  p.seed = o.seed;
  return p;
}

SelectionResult load_selection(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, "cannot open " + path, path);
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::SchemaViolation, path + " is not valid JSON", path);
  return selection_from_json(j);
}

SelectionResult all_selected(const Dataset& data) {
  std::vector<ScoredVariable> scores;
  for (const auto& v : data.catalog) scores.push_back({v.name, 1.0});
  return aggregate_runs(data.variable_names(), {scores}, {""}, 1.0);
}

VectorStore load_or_empty_ikvs(const std::string& path) {
  if (path.empty()) return VectorStore(StoreKind::Ikvs, kDefaultEmbeddingDim);
  auto store = load_store(path);
  if (store.kind() != StoreKind::Ikvs) throw Error(Errc::InvalidArgument, path + " is not a knowledge store", path);
  return store;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string(), path.string());
  out << text;
  if (!out) throw Error(Errc::Io, "write failed: " + path.string(), path.string());
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

// The only file carrying wall-clock time.
void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                    const json& config, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
  json in = json::object();
  for (const auto& p : inputs) {
    if (!p.empty() && fs::is_regular_file(p)) in[p.string()] = "fnv1a64:" + file_hash(p);
  }
  json outs = json::array();
  for (const auto& p : outputs) outs.push_back(p.string());
  const json manifest{{"tool", "fuess"},
                      {"command", command},
                      {"argv", args},
                      {"timestamp", utc_timestamp()},
                      {"template_version", kTemplateVersion},
                      {"config", config},
                      {"inputs", in},
                      {"outputs", outs}};
  write_file(dir / "run-manifest.json", manifest.dump(2) + "\n");
}

void print_cause_chain(std::ostream& err, const std::exception& e, int depth = 0) {
  err << (depth == 0 ? "error: " : std::string(2 * static_cast<std::size_t>(depth), ' ') + "caused by: ")
      << e.what() << '\n';
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    print_cause_chain(err, inner, depth + 1);
  } catch (...) {
  }
}

json common_json(const CommonOpts& c) {
  return {{"backend", c.backend}, {"model", c.model}, {"temperature", c.temperature},
          {"max_retries", c.max_retries}, {"seed", c.seed}};
}

struct PredictionRun {
  std::vector<PredictionRecord> records;
  std::vector<fs::path> inputs;
};

PredictionRun run_predictions(const CommonOpts& common, const DataOpts& data_opts, const PredictOpts& p,
                              const AblationFlags& ablation) {
  PredictionRun run;
  const Dataset data = load_data(data_opts);
  run.inputs = {data_opts.dataset, data_opts.metadata, p.selection, p.ipdvs, p.test};
  const SelectionResult selection = p.selection.empty() ? all_selected(data) : load_selection(p.selection);
  auto backend = make_backend(common, data);

  UfssConfig cfg;
  cfg.mode = parse_prediction_mode(p.mode);
  cfg.k_shots = p.shots;
  if (p.trials > 0) cfg.trials = p.trials;
  cfg.ci_method = parse_ci_method(p.ci_method);
  cfg.ci_level = p.ci_level;
  cfg.generation = generation(common);
  cfg.ablation = ablation;

  // (test sample, dataset row or test row, demonstrations for fsc)
  struct Job {
    Sample test;
    std::size_t id;
    ContextSet context;
  };
  std::vector<Job> jobs;
  std::vector<Sample> pool;
  if (p.test.empty()) {
    auto params = p.split;
    params.seed = common.seed;
    const auto split = split_contexts(data, params);
    for (auto i : split.pool_indices) pool.push_back(data.samples[i]);
    for (const auto& ctx : split.contexts) {
      if (p.shots > ctx.context.size() && cfg.mode == PredictionMode::Fsc) {
        throw Error(Errc::InvalidArgument, "--shots exceeds --context-size");
      }
      for (auto idx : ctx.test_indices) {
        ContextSet demos;
        if (cfg.mode == PredictionMode::Fsc) {
          demos.demonstrations.assign(ctx.context.begin(), ctx.context.begin() + static_cast<std::ptrdiff_t>(p.shots));
        }
        jobs.push_back({data.samples[idx], idx, std::move(demos)});
      }
    }
  } else {
    const Dataset tests = load_dataset(p.test, data.primary_variable.name);
    pool = data.samples;
    std::vector<std::size_t> order(data.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(common.seed);
    rng.shuffle(order);
    if (cfg.mode == PredictionMode::Fsc && p.shots > order.size()) {
      throw Error(Errc::InsufficientSamples, "--shots exceeds the dataset size");
    }
    ContextSet demos;
    for (std::size_t i = 0; cfg.mode == PredictionMode::Fsc && i < p.shots; ++i) {
      demos.demonstrations.push_back(data.samples[order[i]]);
    }
    for (std::size_t i = 0; i < tests.samples.size(); ++i) jobs.push_back({tests.samples[i], i, demos});
  }
  if (p.max_tests > 0 && jobs.size() > p.max_tests) jobs.resize(p.max_tests);

  std::optional<VectorStore> ipdvs;
  std::unique_ptr<EmbeddingProvider> text_embedder;
  if (cfg.mode == PredictionMode::Rac) {
    if (!p.ipdvs.empty()) {
      ipdvs = load_store(p.ipdvs);
      if (ipdvs->kind() != StoreKind::Ipdvs) {
        throw Error(Errc::InvalidArgument, p.ipdvs + " is not a process data store", p.ipdvs);
      }
      const auto& encoder = ipdvs->encoder_stats()->text_encoder;
      if (encoder.rfind("local-hash-", 0) == 0) {
        text_embedder = std::make_unique<LocalHashEmbedder>(ipdvs->dimension());
      } else if (encoder.rfind("remote:", 0) == 0) {
        RemoteEmbedderConfig rc;
        rc.model = encoder.substr(7);
        text_embedder = std::make_unique<RemoteEmbedder>(rc);
      }
      cfg.text_embedder = text_embedder.get();
    } else {
      ipdvs = build_ipdvs(pool, selection.selected);
    }
  }

  for (const auto& job : jobs) {
    const auto masked = apply_missing_mask(restrict_sample(job.test, selection.selected), p.missing_ratio,
                                           derive_seed(common.seed, job.id));
    auto local = cfg;
    local.generation.seed = derive_seed(common.seed, job.id);
    auto rec = cfg.mode == PredictionMode::Fsc
                   ? predict_fsc(data.task, data.catalog, job.context, masked, selection, *backend, local)
                   : predict_rac(data.task, data.catalog, *ipdvs, masked, selection, *backend, local);
    rec.id = job.id;
    run.records.push_back(std::move(rec));
  }
  return run;
}

std::string summary_line(const std::vector<PredictionRecord>& records) {
  double abs_err = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.test_sample.label) {
      abs_err += std::abs(r.point_estimate - *r.test_sample.label);
      ++n;
    }
  }
  std::string line = std::to_string(records.size()) + " predictions";
  if (n) line += ", MAE " + format_number(abs_err / static_cast<double>(n));
  return line;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-augmented soft sensing with frozen language models", "fuess"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  CommonOpts common;
  DataOpts data_opts;
  PredictOpts predict_opts;

  // ingest-kb
  std::string kb_dir, out_path;
  std::size_t chunk_size = kDefaultChunkSize, overlap = kDefaultChunkOverlap, dim = kDefaultEmbeddingDim;
  std::string embedder_kind = "local", embed_model = "text-embedding-3-small";
  auto* ingest_kb = app.add_subcommand("ingest-kb", "Chunk, embed and store a knowledge directory");
  ingest_kb->add_option("dir", kb_dir, "Directory of .txt/.md documents")->required();
  ingest_kb->add_option("--out", out_path, "Output store file")->required();
  ingest_kb->add_option("--chunk-size", chunk_size, "Characters per chunk");
  ingest_kb->add_option("--overlap", overlap, "Characters shared by neighbouring chunks");
  ingest_kb->add_option("--dim", dim, "Local embedding dimension");
  ingest_kb->add_option("--embedder", embedder_kind, "local or remote")->check(CLI::IsMember({"local", "remote"}));
  ingest_kb->add_option("--embed-model", embed_model, "Remote embedding model");

  // ingest-data
  std::string csv_path, selection_path;
  auto* ingest_data = app.add_subcommand("ingest-data", "Encode process samples into a data store");
  ingest_data->add_option("csv", csv_path, "Process data CSV")->required();
  ingest_data->add_option("--select", selection_path, "selection.json")->required();
  ingest_data->add_option("--out", out_path, "Output store file")->required();
  ingest_data->add_option("--primary", data_opts.primary, "Primary variable column (default: last column)");
  ingest_data->add_option("--metadata", data_opts.metadata, "Variable metadata JSON");
  std::string sample_encoder = "numeric";
  ingest_data->add_option("--encoder", sample_encoder, "numeric (z-score) or text (hashed text embedding)")
      ->check(CLI::IsMember({"numeric", "text"}));
  ingest_data->add_option("--dim", dim, "Embedding dimension for the text encoder");

  // select-vars
  std::string kb_path, out_dir = ".";
  ZavsConfig zavs_cfg;
  auto* select = app.add_subcommand("select-vars", "Rank and select auxiliary variables");
  add_common(select, common);
  add_data(select, data_opts);
  select->add_option("--kb", kb_path, "Knowledge store (default: none)");
  select->add_option("--fraction", zavs_cfg.fraction, "Share of variables kept")->check(CLI::Range(0.0, 1.0));
  select->add_option("--runs", zavs_cfg.n_runs, "Repeated selection runs")->check(CLI::PositiveNumber);
  select->add_option("--top-k", zavs_cfg.knowledge_top_k, "Knowledge chunks per query");
  select->add_option("--out-dir", out_dir, "Output directory");

  // explain-var
  std::string variable, explain_out;
  auto* explain = app.add_subcommand("explain-var", "Explain one variable's role (local query)");
  explain->add_option("name", variable, "Catalog variable")->required();
  add_common(explain, common);
  add_data(explain, data_opts);
  explain->add_option("--kb", kb_path, "Knowledge store (default: none)");
  explain->add_option("--top-k", zavs_cfg.knowledge_top_k, "Knowledge chunks per query");
  explain->add_option("--out", explain_out, "Also write the explanation as JSON");

  // predict
  auto* predict = app.add_subcommand("predict", "Predict the primary variable for test samples");
  add_common(predict, common);
  add_data(predict, data_opts);
  add_predict(predict, predict_opts);
  predict->add_option("--ablation", predict_opts.ablation, "Prompt ablations, e.g. no-role,no-cot");
  predict->add_option("--out-dir", out_dir, "Output directory");

  // evaluate
  std::string spec_path, report_dir = "report";
  auto* evaluate = app.add_subcommand("evaluate", "Run an experiment spec and write a report");
  evaluate->add_option("spec", spec_path, "Experiment spec JSON")->required();
  evaluate->add_option("--out-dir", report_dir, "Report directory");

  // ablate
  std::string flags = "no-role,no-cot,no-ec";
  auto* ablate = app.add_subcommand("ablate", "Compare the full prompt with ablated variants");
  add_common(ablate, common);
  add_data(ablate, data_opts);
  add_predict(ablate, predict_opts);
  ablate->add_option("--flags", flags, "Variants to run besides the full prompt");
  ablate->add_option("--out-dir", out_dir, "Output directory");

  // gen-data
  std::string preset_name, csv_out = "data.csv", meta_out;
  std::size_t gen_n = 600;
  std::uint64_t gen_seed = 0;
  double gen_noise = 0.0;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic preset dataset");
  gen->add_option("preset", preset_name, "Preset name")->required()->check(CLI::IsMember(preset_names()));
  gen->add_option("--n", gen_n, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--noise", gen_noise, "Label noise std")->check(CLI::NonNegativeNumber);
  gen->add_option("--out", csv_out, "Output CSV");
  gen->add_option("--metadata-out", meta_out, "Also write variable metadata JSON");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (ingest_kb->parsed()) {
      const auto docs = load_knowledge_dir(kb_dir);
      const auto chunks = chunk_documents(docs, chunk_size, overlap);
      if (chunks.empty()) throw Error(Errc::InvalidArgument, "no text found in " + kb_dir, kb_dir);
      std::unique_ptr<EmbeddingProvider> embedder;
      if (embedder_kind == "remote") {
        RemoteEmbedderConfig rc;
        rc.model = embed_model;
        embedder = std::make_unique<RemoteEmbedder>(rc);
      } else {
        embedder = std::make_unique<LocalHashEmbedder>(dim);
      }
      const auto store = build_ikvs(chunks, *embedder);
      save_store(store, out_path);
      const fs::path dir = fs::path(out_path).parent_path();
      std::vector<fs::path> inputs;
      for (const auto& d : docs) inputs.emplace_back(d.source);
      write_manifest(dir.empty() ? "." : dir, "ingest-kb", args,
                     {{"chunk_size", chunk_size}, {"overlap", overlap}, {"embedder", embedder->name()}},
                     inputs, {out_path});
      out << chunks.size() << " chunks from " << docs.size() << " documents -> " << out_path << '\n';
    } else if (ingest_data->parsed()) {
      data_opts.dataset = csv_path;
      const Dataset data = load_data(data_opts);
      const auto selection = load_selection(selection_path);
      const LocalHashEmbedder text_embedder(dim);
      const auto store = sample_encoder == "text" ? build_ipdvs_text(data.samples, selection.selected, text_embedder)
                                                  : build_ipdvs(data.samples, selection.selected);
      save_store(store, out_path);
      const fs::path dir = fs::path(out_path).parent_path();
      write_manifest(dir.empty() ? "." : dir, "ingest-data", args,
                     {{"variables", selection.selected}, {"encoder", sample_encoder}},
                     {csv_path, selection_path, data_opts.metadata}, {out_path});
      out << store.size() << " samples over " << selection.selected.size() << " variables -> " << out_path
          << '\n';
    } else if (select->parsed()) {
      const Dataset data = load_data(data_opts);
      const auto ikvs = load_or_empty_ikvs(kb_path);
      const LocalHashEmbedder embedder(ikvs.dimension());
      auto backend = make_backend(common, data);
      zavs_cfg.generation = generation(common);
      const auto result = select_variables(data.task, data.catalog, ikvs, embedder, *backend, zavs_cfg);

      const fs::path dir = out_dir;
      write_file(dir / "selection.json", to_json(result).dump(2) + "\n");
      json expl{{"global_explanation", result.global_explanation}, {"runs", result.run_explanations}};
      write_file(dir / "explanations.json", expl.dump(2) + "\n");
      std::string ascs_csv = "runs,m,ascs\n";
      if (result.run_selections.size() >= 2) {
        ascs_csv += std::to_string(result.run_selections.size()) + "," + std::to_string(result.selected.size()) +
                    "," + format_number(ascs(result.run_selections, result.selected.size())) + "\n";
      }
      write_file(dir / "ascs.csv", ascs_csv);
      auto config = common_json(common);
      config["fraction"] = zavs_cfg.fraction;
      config["runs"] = zavs_cfg.n_runs;
      config["top_k"] = zavs_cfg.knowledge_top_k;
      write_manifest(dir, "select-vars", args, config, {data_opts.dataset, data_opts.metadata, kb_path},
                     {dir / "selection.json", dir / "explanations.json", dir / "ascs.csv"});
      out << "selected " << result.selected.size() << " of " << data.catalog.size() << ":";
      for (const auto& name : result.selected) out << "\n  " << name << " (" << format_number(result.score_of(name)) << ")";
      out << '\n';
    } else if (explain->parsed()) {
      const Dataset data = load_data(data_opts);
      const auto ikvs = load_or_empty_ikvs(kb_path);
      const LocalHashEmbedder embedder(ikvs.dimension());
      auto backend = make_backend(common, data);
      zavs_cfg.generation = generation(common);
      const auto e = explain_variable(data.task, data.catalog, variable, ikvs, embedder, *backend, zavs_cfg);
      if (!explain_out.empty()) {
        write_file(explain_out, json{{"variable", e.variable}, {"reasoning", e.reasoning}}.dump(2) + "\n");
      }
      out << e.reasoning << '\n';
    } else if (predict->parsed()) {
      const auto ablation = parse_ablation_flags(predict_opts.ablation);
      const auto run = run_predictions(common, data_opts, predict_opts, ablation);
      const fs::path dir = out_dir;
      fs::create_directories(dir);
      write_records_jsonl(run.records, dir / "records.jsonl");
      auto config = common_json(common);
      config["mode"] = predict_opts.mode;
      config["shots"] = predict_opts.shots;
      config["missing_ratio"] = predict_opts.missing_ratio;
      config["ablation"] = to_string(ablation);
      write_manifest(dir, "predict", args, config, run.inputs, {dir / "records.jsonl"});
      out << summary_line(run.records) << " -> " << (dir / "records.jsonl").string() << '\n';
    } else if (evaluate->parsed()) {
      const auto spec = load_experiment_spec(spec_path);
      const auto report = run_experiment(spec);
      write_report(report, report_dir);
      std::vector<fs::path> inputs{spec_path};
      if (spec.dataset.csv) inputs.emplace_back(*spec.dataset.csv);
      write_manifest(report_dir, "evaluate", args, to_json(spec), inputs,
                     {fs::path(report_dir) / "metrics.csv"});
      out << report.cells.size() << " cells, " << report.outcomes.size() << " predictions -> " << report_dir
          << '\n';
    } else if (ablate->parsed()) {
      std::vector<AblationFlags> variants{AblationFlags{}};
      std::string rest = flags;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto token = rest.substr(0, comma);
        if (!token.empty()) variants.push_back(parse_ablation_flags(token));
        rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
      }
      const fs::path dir = out_dir;
      fs::create_directories(dir);
      std::string table = "variant,n,mae,rmse,smape,mean_confidence\n";
      std::vector<fs::path> outputs{dir / "ablation.csv"};
      std::vector<fs::path> inputs;
      for (const auto& v : variants) {
        const auto run = run_predictions(common, data_opts, predict_opts, v);
        inputs = run.inputs;
        const auto name = to_string(v);
        const auto file = dir / ("records_" + name + ".jsonl");
        write_records_jsonl(run.records, file);
        outputs.push_back(file);
        std::vector<SampleOutcome> outcomes;
        for (const auto& r : run.records) {
          SampleOutcome o;
          o.cell.method = name;
          o.y_true = r.test_sample.label.value_or(0.0);
          o.y_pred = r.point_estimate;
          o.confidence = r.confidence_score;
          outcomes.push_back(std::move(o));
        }
        for (const auto& cell : summarize(outcomes)) {
          const auto& m = cell.metrics;
          table += name + "," + std::to_string(cell.n) + "," + (m ? format_number(m->mae) : "") + "," +
                   (m ? format_number(m->rmse) : "") + "," + (m ? format_number(m->smape) : "") + "," +
                   (cell.mean_confidence ? format_number(*cell.mean_confidence) : "") + "\n";
        }
      }
      write_file(dir / "ablation.csv", table);
      auto config = common_json(common);
      config["mode"] = predict_opts.mode;
      config["shots"] = predict_opts.shots;
      config["flags"] = flags;
      write_manifest(dir, "ablate", args, config, inputs, outputs);
      out << variants.size() << " prompt variants -> " << (dir / "ablation.csv").string() << '\n';
    } else if (gen->parsed()) {
      const auto data = generate(preset(preset_name, gen_n, gen_seed, gen_noise));
      save_dataset(data, csv_out);
      if (!meta_out.empty()) {
        auto catalog = data.catalog;
        catalog.push_back(data.primary_variable);
        save_metadata(catalog, meta_out);
      }
      out << data.samples.size() << " samples of " << preset_name << " -> " << csv_out << '\n';
    }
  } catch (const std::exception& e) {
    print_cause_chain(err, e);
    return 2;
  }
  return 0;
}

}  // namespace fuess
