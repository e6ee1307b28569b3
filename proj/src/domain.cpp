#include "fuess/domain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "fuess/error.hpp"
#include "fuess/random.hpp"

namespace fuess {

namespace {

constexpr std::string_view kMissingToken = "N/A";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// RFC 4180 record splitting; fields may be quoted with "" escapes.
std::vector<std::string> split_csv_record(std::string_view line, std::size_t row) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      if (!trim(current).empty()) {
        throw Error(Errc::MalformedCsv, "stray quote in row " + std::to_string(row),
                    "stray quote", static_cast<std::int64_t>(row));
      }
      current.clear();
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? current : std::string(trim(current)));
      current.clear();
      was_quoted = false;
    } else {
      current.push_back(c);
    }
  }
  if (quoted) {
    throw Error(Errc::MalformedCsv, "unterminated quote in row " + std::to_string(row),
                "unterminated quote", static_cast<std::int64_t>(row));
  }
  fields.push_back(was_quoted ? current : std::string(trim(current)));
  return fields;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

const Value* Sample::find(std::string_view name) const {
  for (const auto& e : values) {
    if (e.name == name) return &e.value;
  }
  return nullptr;
}

std::size_t Sample::missing_count() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](const Entry& e) { return !e.value; }));
}

std::vector<std::string> Sample::names() const {
  std::vector<std::string> out;
  out.reserve(values.size());
  for (const auto& e : values) out.push_back(e.name);
  return out;
}

std::vector<std::string> Dataset::variable_names() const {
  std::vector<std::string> out;
  out.reserve(catalog.size());
  for (const auto& v : catalog) out.push_back(v.name);
  return out;
}

const VariableSpec* Dataset::find_variable(std::string_view name) const {
  for (const auto& v : catalog) {
    if (v.name == name) return &v;
  }
  return nullptr;
}

Dataset Dataset::restricted_to(std::span<const std::string> names) const {
  std::vector<std::size_t> columns;
  Dataset out;
  out.primary_variable = primary_variable;
  out.task = task;
  for (const auto& name : names) {
    auto it = std::find_if(catalog.begin(), catalog.end(),
                           [&](const VariableSpec& v) { return v.name == name; });
    if (it == catalog.end()) {
      throw Error(Errc::UnknownVariable, "variable '" + name + "' is not in the catalog", name);
    }
    columns.push_back(static_cast<std::size_t>(it - catalog.begin()));
    out.catalog.push_back(*it);
  }
  out.task.feature_count = out.catalog.size();
  out.samples.reserve(samples.size());
  for (const auto& s : samples) {
    Sample r;
    r.label = s.label;
    r.values.reserve(columns.size());
    for (auto c : columns) r.values.push_back(s.values.at(c));
    out.samples.push_back(std::move(r));
  }
  return out;
}

void Dataset::validate() const {
  std::set<std::string_view> seen;
  for (const auto& v : catalog) {
    if (v.name.empty()) throw Error(Errc::InvalidSpec, "empty variable name");
    if (!seen.insert(v.name).second) {
      throw Error(Errc::InvalidSpec, "duplicate variable name '" + v.name + "'", v.name);
    }
  }
  if (task.feature_count != catalog.size()) {
    throw Error(Errc::InvalidSpec, "feature_count does not match catalog length");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!s.label) {
      throw Error(Errc::MissingLabel, "sample " + std::to_string(i) + " has no label", {},
                  static_cast<std::int64_t>(i));
    }
    if (s.values.size() != catalog.size()) {
      throw Error(Errc::InvalidSpec, "sample " + std::to_string(i) + " has wrong arity");
    }
    for (std::size_t j = 0; j < catalog.size(); ++j) {
      if (s.values[j].name != catalog[j].name) {
        throw Error(Errc::InvalidSpec, "sample " + std::to_string(i) + " breaks catalog order");
      }
    }
  }
}

std::string format_number(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_number(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::size_t round_half_up(double x) {
  if (!(x > 0.0)) return 0;
  return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
}

bool is_renderable_name(std::string_view name) {
  return !name.empty() && name.find(", ") == std::string_view::npos &&
         name.find(": ") == std::string_view::npos &&
         name.find(" -> ") == std::string_view::npos && name.find('\n') == std::string_view::npos &&
         trim(name) == name;
}

std::vector<VariableSpec> load_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, "cannot open metadata " + path.string(), path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidSpec, "metadata " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw Error(Errc::InvalidSpec, "metadata must be a JSON array");
  std::vector<VariableSpec> out;
  for (const auto& item : doc) {
    VariableSpec v;
    v.name = item.value("name", "");
    v.description = item.value("description", "");
    v.unit = item.value("unit", "");
    if (v.name.empty()) throw Error(Errc::InvalidSpec, "metadata entry without name");
    out.push_back(std::move(v));
  }
  return out;
}

void save_metadata(std::span<const VariableSpec> catalog, const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& v : catalog) {
    doc.push_back({{"name", v.name}, {"description", v.description}, {"unit", v.unit}});
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path, std::string_view primary_variable,
                     const std::optional<std::filesystem::path>& metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, "cannot open " + path.string(), path.string());

  std::string line;
  if (!std::getline(in, line)) {
    throw Error(Errc::MalformedCsv, "missing header row", "missing header", 0);
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_record(line, 0);

  std::unordered_map<std::string, VariableSpec> meta;
  if (metadata) {
    for (auto& v : load_metadata(*metadata)) meta.emplace(v.name, v);
  }

  Dataset ds;
  std::optional<std::size_t> primary_col;
  std::set<std::string> seen;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& name = header[c];
    if (name.empty()) throw Error(Errc::MalformedCsv, "empty header name", "empty header", 0);
    if (!seen.insert(name).second) {
      throw Error(Errc::MalformedCsv, "duplicate header '" + name + "'", "duplicate header", 0);
    }
    if (!is_renderable_name(name)) {
      throw Error(Errc::MalformedCsv,
                  "header '" + name + "' contains ', ', ': ' or ' -> ' and cannot be rendered",
                  "unrenderable header", 0);
    }
    VariableSpec spec{name, {}, {}};
    if (auto it = meta.find(name); it != meta.end()) spec = it->second;
    if (name == primary_variable) {
      primary_col = c;
      ds.primary_variable = spec;
    } else {
      ds.catalog.push_back(spec);
    }
  }
  if (!primary_col) {
    throw Error(Errc::UnknownPrimaryVariable,
                "primary variable '" + std::string(primary_variable) + "' not in header",
                std::string(primary_variable));
  }

  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_record(line, row);
    if (fields.size() != header.size()) {
      throw Error(Errc::MalformedCsv,
                  "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()),
                  "field count", static_cast<std::int64_t>(row));
    }
    Sample s;
    s.values.reserve(header.size() - 1);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      Value v;
      const auto cell = trim(fields[c]);
      if (!cell.empty() && cell != kMissingToken) {
        v = parse_number(cell);
        if (!v) {
          throw Error(Errc::MalformedCsv,
                      "row " + std::to_string(row) + " column '" + header[c] +
                          "': not a number: '" + std::string(cell) + "'",
                      "non-numeric cell", static_cast<std::int64_t>(row));
        }
      }
      if (c == *primary_col) {
        if (!v) {
          throw Error(Errc::MissingLabel, "row " + std::to_string(row) + " has no label", {},
                      static_cast<std::int64_t>(row));
        }
        s.label = v;
      } else {
        s.values.push_back({header[c], v});
      }
    }
    ds.samples.push_back(std::move(s));
  }

  ds.task.primary_variable_name = ds.primary_variable.name;
  ds.task.feature_count = ds.catalog.size();
  return ds;
}

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, "cannot open " + path.string(), path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(Errc::MalformedCsv, "missing header row", "missing header", 0);
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  return split_csv_record(line, 0);
}

std::string dataset_to_csv(const Dataset& dataset) {
  std::ostringstream out;
  for (const auto& v : dataset.catalog) out << csv_escape(v.name) << ',';
  out << csv_escape(dataset.primary_variable.name) << '\n';
  for (const auto& s : dataset.samples) {
    for (const auto& e : s.values) {
      out << (e.value ? format_number(*e.value) : std::string(kMissingToken)) << ',';
    }
    out << (s.label ? format_number(*s.label) : std::string(kMissingToken)) << '\n';
  }
  return out.str();
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string(), path.string());
  out << dataset_to_csv(dataset);
}

ContextSplit split_contexts(const Dataset& dataset, const SplitParams& p) {
  const std::size_t n = dataset.samples.size();
  const std::size_t needed_tests = p.n_contexts * p.tests_per_context;
  if (p.pool_size > n || p.n_contexts * p.context_size > p.pool_size ||
      needed_tests > n - p.pool_size) {
    throw Error(Errc::InsufficientSamples,
                "need pool " + std::to_string(p.pool_size) + " >= " +
                    std::to_string(p.n_contexts) + "x" + std::to_string(p.context_size) +
                    " context samples and " + std::to_string(needed_tests) +
                    " test samples outside the pool; dataset has " + std::to_string(n));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(p.seed);
  rng.shuffle(order);

  ContextSplit split;
  split.seed = p.seed;
  split.pool_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(p.pool_size));

  std::size_t next_test = p.pool_size;
  for (std::size_t c = 0; c < p.n_contexts; ++c) {
    ContextPair pair;
    for (std::size_t i = 0; i < p.context_size; ++i) {
      const auto idx = split.pool_indices[c * p.context_size + i];
      pair.context_indices.push_back(idx);
      pair.context.push_back(dataset.samples[idx]);
    }
    for (std::size_t i = 0; i < p.tests_per_context; ++i) {
      const auto idx = order[next_test++];
      pair.test_indices.push_back(idx);
      pair.tests.push_back(dataset.samples[idx]);
    }
    split.contexts.push_back(std::move(pair));
  }
  return split;
}

Sample apply_missing_mask(const Sample& sample, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw Error(Errc::RatioOutOfRange, "missing ratio must lie in [0, 1]");
  }
  Sample out = sample;
  const std::size_t m = out.values.size();
  const std::size_t count = std::min(m, round_half_up(ratio * static_cast<double>(m)));
  if (count == 0) return out;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  for (std::size_t i = 0; i < count; ++i) out.values[order[i]].value.reset();
  return out;
}

nlohmann::json sample_to_json(const Sample& sample) {
  nlohmann::json values = nlohmann::json::array();
  for (const auto& e : sample.values) {
    values.push_back({e.name, e.value ? nlohmann::json(*e.value) : nlohmann::json(nullptr)});
  }
  return {{"values", std::move(values)},
          {"label", sample.label ? nlohmann::json(*sample.label) : nlohmann::json(nullptr)}};
}

Sample sample_from_json(const nlohmann::json& j) {
  Sample s;
  for (const auto& pair : j.at("values")) {
    Entry e{pair.at(0).get<std::string>(), std::nullopt};
    if (!pair.at(1).is_null()) e.value = pair.at(1).get<double>();
    s.values.push_back(std::move(e));
  }
  if (!j.at("label").is_null()) s.label = j.at("label").get<double>();
  return s;
}

}  // namespace fuess
