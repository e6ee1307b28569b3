#include <cmath>

#include <json.hpp>

#include "fuess/error.hpp"
#include "fuess/llm.hpp"

namespace fuess {

namespace {

using nlohmann::json;

// End (exclusive) of the balanced {...} starting at `start`, honouring
// string literals; npos when unbalanced.
std::size_t balanced_object_end(std::string_view s, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

json first_json_object(std::string_view raw) {
  for (std::size_t pos = raw.find('{'); pos != std::string_view::npos;
       pos = raw.find('{', pos + 1)) {
    const auto end = balanced_object_end(raw, pos);
    if (end == std::string_view::npos) continue;
    json doc = json::parse(raw.substr(pos, end - pos), nullptr, /*allow_exceptions=*/false);
    if (doc.is_object()) return doc;
  }
  throw Error(Errc::NoJsonFound, "no JSON object in response");
}

std::string required_string(const json& doc, const std::string& field) {
  auto it = doc.find(field);
  if (it == doc.end() || !it->is_string()) {
    throw Error(Errc::SchemaViolation, "field '" + field + "' missing or not a string", field);
  }
  return it->get<std::string>();
}

std::optional<double> as_number(const json& v) {
  if (v.is_number()) {
    const double x = v.get<double>();
    return std::isfinite(x) ? std::optional<double>(x) : std::nullopt;
  }
  if (v.is_string()) return parse_number(v.get<std::string>());
  return std::nullopt;
}

}  // namespace

StructuredAnswer parse_response(ResponseKind kind, std::string_view raw,
                                const ParseOptions& options) {
  const json doc = first_json_object(raw);
  StructuredAnswer answer;
  answer.kind = kind;
  switch (kind) {
    case ResponseKind::ZavsGlobal:
      answer.zavs_global =
          ZavsGlobalAnswer{required_string(doc, "score and ranking"), required_string(doc, "reasoning")};
      break;
    case ResponseKind::ZavsLocal:
      answer.zavs_local = ZavsLocalAnswer{required_string(doc, "reasoning")};
      break;
    case ResponseKind::Ufss: {
      UfssAnswer u;
      auto pred = doc.find("Prediction Result");
      if (pred == doc.end()) {
        throw Error(Errc::SchemaViolation, "field 'Prediction Result' missing", "Prediction Result");
      }
      const auto value = as_number(*pred);
      if (!value) {
        throw Error(Errc::NonNumericPrediction, "'Prediction Result' is not a finite number: " +
                                                    pred->dump());
      }
      u.prediction = *value;

      auto conf = doc.find("Confidence Score");
      if (conf == doc.end()) {
        if (options.require_explanation) {
          throw Error(Errc::SchemaViolation, "field 'Confidence Score' missing", "Confidence Score");
        }
      } else {
        auto c = as_number(*conf);
        if (!c) {
          throw Error(Errc::SchemaViolation, "'Confidence Score' is not a number", "Confidence Score");
        }
        if (*c < -0.01 || *c > 1.01) {
          throw Error(Errc::ConfidenceOutOfRange,
                      "confidence " + format_number(*c) + " outside [0, 1]");
        }
        if (*c < 0.0 || *c > 1.0) {
          answer.warnings.push_back("confidence " + format_number(*c) + " clamped into [0, 1]");
          c = std::clamp(*c, 0.0, 1.0);
        }
        u.confidence = c;
      }

      if (doc.contains("Reasoning") || options.require_explanation) {
        u.reasoning = required_string(doc, "Reasoning");
      }
      answer.ufss = std::move(u);
      break;
    }
  }
  return answer;
}

std::string serialize_answer(const StructuredAnswer& answer) {
  nlohmann::ordered_json j;
  switch (answer.kind) {
    case ResponseKind::ZavsGlobal:
      j["score and ranking"] = answer.zavs_global.value().score_and_ranking;
      j["reasoning"] = answer.zavs_global->reasoning;
      break;
    case ResponseKind::ZavsLocal:
      j["reasoning"] = answer.zavs_local.value().reasoning;
      break;
    case ResponseKind::Ufss: {
      const auto& u = answer.ufss.value();
      j["Prediction Result"] = u.prediction;
      if (u.confidence) j["Confidence Score"] = *u.confidence;
      j["Reasoning"] = u.reasoning;
      break;
    }
  }
  return j.dump();
}

std::optional<std::string> extract_response_text(std::string_view body, std::string_view path) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) return std::nullopt;
  const json* node = &doc;
  std::size_t i = 0;
  while (i < path.size()) {
    if (path[i] == '.') {
      ++i;
      continue;
    }
    if (path[i] == '[') {
      const auto close = path.find(']', i);
      if (close == std::string_view::npos) return std::nullopt;
      const auto index = parse_number(path.substr(i + 1, close - i - 1));
      if (!index || !node->is_array() || *index < 0 ||
          static_cast<std::size_t>(*index) >= node->size()) {
        return std::nullopt;
      }
      node = &(*node)[static_cast<std::size_t>(*index)];
      i = close + 1;
      continue;
    }
    const auto end = path.find_first_of(".[", i);
    const std::string key(path.substr(i, end == std::string_view::npos ? path.size() - i : end - i));
    if (!node->is_object() || !node->contains(key)) return std::nullopt;
    node = &(*node)[key];
    i = end == std::string_view::npos ? path.size() : end;
  }
  if (!node->is_string()) return std::nullopt;
  return node->get<std::string>();
}

}  // namespace fuess
