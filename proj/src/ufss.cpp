#include "fuess/ufss.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>

#include <boost/math/distributions/students_t.hpp>
#include <spdlog/spdlog.h>

#include "fuess/error.hpp"
#include "fuess/random.hpp"

namespace fuess {

namespace {

using nlohmann::json;

// Shifted by the first element so identical trials average to themselves exactly.
double mean_of(std::span<const double> xs) {
  double shift = 0.0;
  for (double x : xs) shift += x - xs.front();
  return xs.front() + shift / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs) {
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double quantile_linear(std::vector<double> sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

PredictionRecord run_trials(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                            const ContextSet& context, const Sample& test,
                            const SelectionResult& selection, LlmBackend& backend,
                            const UfssConfig& cfg) {
  const std::size_t n_trials = cfg.effective_trials();
  if (n_trials == 0) throw Error(Errc::InvalidArgument, "trials must be >= 1");
  if (cfg.ci_method == CiMethod::Percentile && n_trials < 20 && n_trials > 1) {
    throw Error(Errc::TooFewTrials, "PERCENTILE intervals need at least 20 trials");
  }

  const auto prompt = render_ss_pt(task, catalog, selection, context, test, cfg.ablation).chat();
  const ParseOptions parse{!cfg.ablation.no_ec};

  PredictionRecord rec;
  rec.test_sample = test;
  rec.mode = cfg.mode;
  rec.k_shots = context.demonstrations.size();
  rec.ablation = cfg.ablation;

  std::vector<double> confidences;
  std::exception_ptr last_failure;
  for (std::size_t t = 0; t < n_trials; ++t) {
    auto params = cfg.generation;
    params.seed = derive_seed(cfg.generation.seed.value_or(0), t);
    try {
      const auto answer = parse_response(ResponseKind::Ufss, backend.complete(prompt, params), parse);
      rec.trials.push_back(answer.ufss->prediction);
      if (answer.ufss->confidence) confidences.push_back(*answer.ufss->confidence);
      rec.explanation = answer.ufss->reasoning;
      for (const auto& w : answer.warnings) rec.warnings.push_back(w);
    } catch (const Error& e) {
      rec.warnings.push_back("trial " + std::to_string(t + 1) + " failed: " + e.what());
      spdlog::warn("trial {} failed: {}", t + 1, e.what());
      last_failure = std::current_exception();
    }
  }
  if (rec.trials.empty()) {
    try {
      std::rethrow_exception(last_failure);
    } catch (...) {
      std::throw_with_nested(
          Error(Errc::AllTrialsFailed, "all " + std::to_string(n_trials) + " trials failed"));
    }
  }

  rec.point_estimate = mean_of(rec.trials);
  if (!confidences.empty()) rec.confidence_score = mean_of(confidences);
  const std::size_t needed = cfg.ci_method == CiMethod::Percentile ? 20 : 2;
  if (n_trials > 1) {
    if (rec.trials.size() >= needed) {
      auto ci = confidence_interval(rec.trials, cfg.ci_level, cfg.ci_method);
      ci.lo = std::min(ci.lo, rec.point_estimate);
      ci.hi = std::max(ci.hi, rec.point_estimate);
      rec.confidence_interval = ci;
    } else {
      rec.warnings.push_back("too few successful trials for a confidence interval");
    }
  }
  return rec;
}

}  // namespace

std::string to_string(PredictionMode mode) { return mode == PredictionMode::Fsc ? "fsc" : "rac"; }

std::string to_string(CiMethod method) {
  switch (method) {
    case CiMethod::TSpread:
      return "t-spread";
    case CiMethod::TPrediction:
      return "t-prediction";
    case CiMethod::Percentile:
      return "percentile";
  }
  return "t-spread";
}

PredictionMode parse_prediction_mode(std::string_view text) {
  if (text == "fsc") return PredictionMode::Fsc;
  if (text == "rac") return PredictionMode::Rac;
  throw Error(Errc::InvalidArgument, "unknown prediction mode '" + std::string(text) + "'",
              std::string(text));
}

CiMethod parse_ci_method(std::string_view text) {
  if (text == "t-spread") return CiMethod::TSpread;
  if (text == "t-prediction") return CiMethod::TPrediction;
  if (text == "percentile") return CiMethod::Percentile;
  throw Error(Errc::InvalidArgument, "unknown interval method '" + std::string(text) + "'",
              std::string(text));
}

ConfidenceInterval confidence_interval(std::span<const double> trials, double level,
                                       CiMethod method) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(Errc::InvalidArgument, "confidence level must be in (0, 1)");
  }
  const std::size_t needed = method == CiMethod::Percentile ? 20 : 2;
  if (trials.size() < needed) {
    throw Error(Errc::TooFewTrials, std::to_string(trials.size()) + " trials, need " +
                                        std::to_string(needed));
  }
  ConfidenceInterval ci;
  ci.level = level;
  ci.method = method;
  if (method == CiMethod::Percentile) {
    std::vector<double> sorted(trials.begin(), trials.end());
    std::sort(sorted.begin(), sorted.end());
    ci.lo = quantile_linear(sorted, (1.0 - level) / 2.0);
    ci.hi = quantile_linear(sorted, (1.0 + level) / 2.0);
    return ci;
  }
  // Sorting first makes the sums independent of trial order.
  std::vector<double> sorted(trials.begin(), trials.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const double m = mean_of(sorted);
  const double s = sample_sd(sorted);
  const boost::math::students_t dist(n - 1.0);
  const double t = boost::math::quantile(dist, (1.0 + level) / 2.0);
  const double half = method == CiMethod::TSpread ? t * s / std::sqrt(n) : t * s * std::sqrt(1.0 + 1.0 / n);
  ci.lo = m - half;
  ci.hi = m + half;
  return ci;
}

std::size_t UfssConfig::effective_trials() const {
  return trials.value_or(mode == PredictionMode::Fsc ? 10 : 1);
}

json to_json(const PredictionRecord& r) {
  json ci = nullptr;
  if (r.confidence_interval) {
    ci = {{"lo", r.confidence_interval->lo},
          {"hi", r.confidence_interval->hi},
          {"level", r.confidence_interval->level},
          {"method", to_string(r.confidence_interval->method)}};
  }
  return {{"id", r.id},
          {"mode", to_string(r.mode)},
          {"k_shots", r.k_shots},
          {"ablation", to_string(r.ablation)},
          {"test_sample", sample_to_json(r.test_sample)},
          {"point_estimate", r.point_estimate},
          {"trials", r.trials},
          {"confidence_interval", ci},
          {"confidence_score", r.confidence_score ? json(*r.confidence_score) : json(nullptr)},
          {"explanation", r.explanation},
          {"warnings", r.warnings}};
}

PredictionRecord record_from_json(const json& j) {
  PredictionRecord r;
  try {
    r.id = j.at("id").get<std::size_t>();
    r.mode = parse_prediction_mode(j.at("mode").get<std::string>());
    r.k_shots = j.at("k_shots").get<std::size_t>();
    const auto ablation = j.at("ablation").get<std::string>();
    r.ablation = parse_ablation_flags(ablation);
    r.test_sample = sample_from_json(j.at("test_sample"));
    r.point_estimate = j.at("point_estimate").get<double>();
    r.trials = j.at("trials").get<std::vector<double>>();
    if (const auto& ci = j.at("confidence_interval"); !ci.is_null()) {
      r.confidence_interval = ConfidenceInterval{ci.at("lo").get<double>(), ci.at("hi").get<double>(),
                                                 ci.at("level").get<double>(),
                                                 parse_ci_method(ci.at("method").get<std::string>())};
    }
    if (const auto& c = j.at("confidence_score"); !c.is_null()) r.confidence_score = c.get<double>();
    r.explanation = j.at("explanation").get<std::string>();
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("malformed prediction record: ") + e.what());
  }
  return r;
}

void write_records_jsonl(std::span<const PredictionRecord> records,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string(), path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw Error(Errc::Io, "write failed: " + path.string(), path.string());
}

std::vector<PredictionRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, "cannot open " + path.string(), path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(Errc::SchemaViolation, "invalid JSON line in " + path.string(), {},
                  static_cast<std::int64_t>(out.size() + 1));
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

Sample restrict_sample(const Sample& sample, std::span<const std::string> names) {
  Sample out;
  out.label = sample.label;
  for (const auto& name : names) {
    const auto* v = sample.find(name);
    if (!v) throw Error(Errc::UnknownVariable, "sample lacks variable '" + name + "'", name);
    out.values.push_back({name, *v});
  }
  return out;
}

PredictionRecord predict_fsc(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                             const ContextSet& context, const Sample& test,
                             const SelectionResult& selection, LlmBackend& backend,
                             const UfssConfig& cfg) {
  ContextSet restricted;
  for (const auto& d : context.demonstrations) {
    restricted.demonstrations.push_back(restrict_sample(d, selection.selected));
  }
  auto local = cfg;
  local.mode = PredictionMode::Fsc;
  return run_trials(task, catalog, restricted, restrict_sample(test, selection.selected), selection,
                    backend, local);
}

ContextSet retrieve_demonstrations(const VectorStore& ipdvs, const Sample& test, std::size_t k,
                                   const EmbeddingProvider* text_embedder) {
  if (ipdvs.kind() != StoreKind::Ipdvs) {
    throw Error(Errc::InvalidArgument, "retrieval-augmented prediction needs a process data store");
  }
  if (k == 0) throw Error(Errc::InvalidArgument, "k_shots must be >= 1");
  if (ipdvs.empty()) throw Error(Errc::EmptyStore, "the process data store is empty");
  const auto query = encode_query(ipdvs, test, text_embedder);
  const auto hits = ipdvs.query_top_k(query, k);
  ContextSet context;
  for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
    context.demonstrations.push_back(std::get<Sample>(it->item->payload));
  }
  return context;
}

PredictionRecord predict_rac(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                             const VectorStore& ipdvs, const Sample& test,
                             const SelectionResult& selection, LlmBackend& backend,
                             const UfssConfig& cfg) {
  auto context = retrieve_demonstrations(ipdvs, test, cfg.k_shots, cfg.text_embedder);
  for (auto& d : context.demonstrations) d = restrict_sample(d, selection.selected);
  auto local = cfg;
  local.mode = PredictionMode::Rac;
  return run_trials(task, catalog, context, restrict_sample(test, selection.selected), selection,
                    backend, local);
}

}  // namespace fuess
