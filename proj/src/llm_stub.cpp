#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fuess/error.hpp"
#include "fuess/llm.hpp"
#include "fuess/random.hpp"

namespace fuess {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  while (true) {
    const auto nl = text.find('\n');
    lines.push_back(text.substr(0, nl));
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return lines;
}

// Lines following the marker line up to the next blank line.
std::optional<std::vector<std::string_view>> section_after(const std::vector<std::string_view>& lines,
                                                           std::string_view marker) {
  auto it = std::find(lines.begin(), lines.end(), marker);
  if (it == lines.end()) return std::nullopt;
  std::vector<std::string_view> out;
  for (++it; it != lines.end() && !it->empty(); ++it) out.push_back(*it);
  return out;
}

double abs_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return std::abs(sxy / std::sqrt(sxx * syy));
}

double round6(double x) { return std::round(x * 1e6) / 1e6; }

std::string stub_failure(const std::string& what) {
  throw Error(Errc::StubParseFailure, what);
}

}  // namespace

KnnEstimate weighted_knn(const std::vector<Sample>& demonstrations, const Sample& test,
                         double epsilon) {
  if (demonstrations.empty()) throw Error(Errc::EmptyContext, "kNN over zero demonstrations");
  const auto names = test.names();
  const std::size_t m = names.size();
  const std::size_t n = demonstrations.size();

  std::vector<double> mean(m, 0.0), sd(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& d : demonstrations) {
      if (const auto* v = d.find(names[j]); v && *v) {
        sum += **v;
        ++count;
      }
    }
    if (count == 0) continue;
    mean[j] = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const auto& d : demonstrations) {
      if (const auto* v = d.find(names[j]); v && *v) ss += (**v - mean[j]) * (**v - mean[j]);
    }
    sd[j] = std::sqrt(ss / static_cast<double>(count));
  }
  const auto z = [&](const Sample& s, std::size_t j) {
    const auto* v = s.find(names[j]);
    if (!v || !*v || sd[j] <= 0.0) return 0.0;
    return (**v - mean[j]) / sd[j];
  };

  KnnEstimate est;
  double weight_sum = 0.0;
  double weighted = 0.0;
  est.nearest_distance = INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double diff = z(test, j) - z(demonstrations[i], j);
      ss += diff * diff;
    }
    const double dist = std::sqrt(ss);
    if (dist < est.nearest_distance) {
      est.nearest_distance = dist;
      est.nearest_index = i;
    }
    const double w = 1.0 / (epsilon + dist);
    weight_sum += w;
    weighted += w * demonstrations[i].label.value();
  }
  est.prediction = weighted / weight_sum;
  return est;
}

std::string complete(LlmBackend& backend, std::string_view prompt, const GenerationParams& params) {
  if (prompt.empty()) throw Error(Errc::InvalidArgument, "empty prompt");
  return backend.complete(ChatPrompt{{}, std::string(prompt)}, params);
}

StubBackend::StubBackend(StubConfig config) : config_(std::move(config)) {}

std::string StubBackend::complete(const ChatPrompt& prompt, const GenerationParams& params) {
  ++calls_;
  const auto text = prompt.full_text();
  if (text.empty()) throw Error(Errc::InvalidArgument, "empty prompt");
  if (text.find("\n[Test Sample]\n") != std::string::npos) return answer_soft_sensor(text, params);
  if (text.find("\n[Auxiliary Variables]\n") != std::string::npos) return answer_global(text);
  if (text.find("\n[Auxiliary Variable]\n") != std::string::npos) return answer_local(text);
  return stub_failure("prompt is neither a selection nor a soft-sensor prompt");
}

std::string StubBackend::answer_soft_sensor(std::string_view text,
                                            const GenerationParams& params) const {
  const auto lines = split_lines(text);
  const auto demo_lines = section_after(lines, "[Context Samples]");
  const auto test_lines = section_after(lines, "[Test Sample]");
  if (!demo_lines || demo_lines->empty()) return stub_failure("no context samples in prompt");
  if (!test_lines || test_lines->size() != 1) return stub_failure("expected one test sample line");

  std::vector<Sample> demos;
  try {
    for (auto line : *demo_lines) {
      auto s = parse_sample_text(line);
      if (!s.label) return stub_failure("context sample without label: " + std::string(line));
      demos.push_back(std::move(s));
    }
    const auto test = parse_sample_text(test_lines->front());

    const auto est = weighted_knn(demos, test, config_.epsilon);
    double prediction = est.prediction;
    if (params.temperature > 0.0 && demos.size() > 1) {
      double mean = 0.0;
      for (const auto& d : demos) mean += *d.label;
      mean /= static_cast<double>(demos.size());
      double ss = 0.0;
      for (const auto& d : demos) ss += (*d.label - mean) * (*d.label - mean);
      const double sigma = params.temperature * std::sqrt(ss / static_cast<double>(demos.size() - 1));
      Rng rng(params.seed.value_or(0));
      prediction += sigma * rng.normal();
    }

    nlohmann::ordered_json out;
    out["Prediction Result"] = prediction;
    if (text.find("\"Confidence Score\"") != std::string_view::npos) {
      out["Confidence Score"] = 1.0 / (1.0 + est.nearest_distance);
      std::ostringstream why;
      why << "The test sample was compared with " << demos.size()
          << " context samples after standardising each auxiliary variable. The closest context "
             "sample is number "
          << est.nearest_index + 1 << " at distance " << format_number(round6(est.nearest_distance))
          << " with label " << format_number(*demos[est.nearest_index].label)
          << ". The prediction is the inverse-distance weighted mean of the context labels.";
      out["Reasoning"] = why.str();
    }
    return out.dump();
  } catch (const Error& e) {
    if (e.code() == Errc::StubParseFailure) throw;
    return stub_failure(std::string("cannot parse soft-sensor prompt: ") + e.what());
  }
}

std::string StubBackend::answer_global(std::string_view text) const {
  const auto lines = split_lines(text);
  const auto listed = section_after(lines, "[Auxiliary Variables]");
  if (!listed || listed->empty()) return stub_failure("no candidate variables in prompt");

  std::vector<std::pair<std::string, double>> scored;
  for (auto line : *listed) {
    if (line.size() < 3 || line.substr(0, 2) != "- ") {
      return stub_failure("bad candidate line: " + std::string(line));
    }
    std::string name(line.substr(2));
    double score = 1.0;
    if (config_.data_sidecar) {
      score = 0.0;
      const auto& ds = *config_.data_sidecar;
      std::vector<double> x, y;
      for (const auto& s : ds.samples) {
        const auto* v = s.find(name);
        if (v && *v && s.label) {
          x.push_back(**v);
          y.push_back(*s.label);
        }
      }
      score = round6(abs_pearson(x, y));
    }
    scored.emplace_back(std::move(name), score);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::ostringstream ranking;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (i) ranking << '\n';
    ranking << i + 1 << ". " << scored[i].first << ": " << format_number(scored[i].second);
  }
  nlohmann::ordered_json out;
  out["score and ranking"] = ranking.str();
  out["reasoning"] =
      config_.data_sidecar
          ? "Each candidate variable was scored by the absolute Pearson correlation between its "
            "recorded values and the primary variable; variables with stronger linear association "
            "rank higher."
          : "No process data were available, so every candidate variable received the same score "
            "and the ranking is alphabetical.";
  return out.dump();
}

std::string StubBackend::answer_local(std::string_view text) const {
  const auto lines = split_lines(text);
  const auto target = section_after(lines, "[Auxiliary Variable]");
  if (!target || target->size() != 1) return stub_failure("expected one target variable");
  const std::string name(target->front());

  std::size_t documents = 0;
  for (auto line : lines) {
    if (line.rfind("--- Document ", 0) == 0) ++documents;
  }
  std::ostringstream why;
  why << "Step 1: '" << name << "' was identified as the variable under analysis. Step 2: "
      << documents << " retrieved knowledge passage" << (documents == 1 ? "" : "s")
      << " were consulted for its role in the process.";
  if (config_.data_sidecar) {
    std::vector<double> x, y;
    for (const auto& s : config_.data_sidecar->samples) {
      const auto* v = s.find(name);
      if (v && *v && s.label) {
        x.push_back(**v);
        y.push_back(*s.label);
      }
    }
    why << " Step 3: its absolute Pearson correlation with the primary variable is "
        << format_number(round6(abs_pearson(x, y))) << '.';
  }
  nlohmann::ordered_json out;
  out["reasoning"] = why.str();
  return out.dump();
}

}  // namespace fuess
