#include "fuess/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fuess/error.hpp"
#include "fuess/random.hpp"

namespace fuess {

namespace {

struct PresetVariable {
  const char* name;
  const char* unit;
  VariableRange range;
  double weight;
};

// clang-format off
const PresetVariable kPensim[] = {
    {"Aeration rate", "m3/min", {30, 75, 2}, 0.0},
    {"Sugar feed rate", "L/h", {8, 150, 2}, 3.0},
    {"Acid flow rate", "L/h", {0, 40, 3}, 0.0},
    {"Base flow rate", "L/h", {0, 160, 2}, 0.0},
    {"Heating/cooling water flow rate", "L/h", {0, 300, 1}, 0.0},
    {"Heating water flow rate", "L/h", {0, 100, 2}, 0.0},
    {"Water for injection/dilution", "L/h", {0, 500, 1}, 0.0},
    {"Air head pressure", "bar", {0.6, 1.2, 4}, 0.0},
    {"Dumped broth flow", "L/h", {0, 4000, 1}, 0.0},
    {"Substrate concentration", "g/L", {0.001, 1.5, 4}, 0.0},
    {"Dissolved oxygen concentration", "mg/L", {5, 15, 3}, 1.5},
    {"Vessel Volume", "L", {58000, 100000, 0}, 0.0},
    {"Vessel Weight", "Kg", {62000, 105000, 0}, 0.0},
    {"pH", "/", {6.3, 6.7, 4}, 0.0},
    {"Temperature of broth", "K", {297, 299, 3}, 0.0},
    {"Generated heat", "KJ", {0, 450, 2}, 0.0},
    {"carbon dioxide percent in off-gas", "%", {0.1, 3, 4}, 0.0},
    {"PAA flow", "L/h", {0, 15, 3}, 0.0},
    {"Oil flow", "L/h", {5, 30, 3}, 0.0},
    {"Oxygen Uptake Rate", "g/min", {0, 1.5, 4}, 1.0},
    {"Oxygen in percent in off-gas", "%", {19.5, 21, 4}, 0.0},
    {"Carbon evolution rate", "g/h", {0, 2, 4}, 0.0},
};

const PresetVariable kPoly[] = {
    {"Hydrogen Ratio", "/", {0.05, 0.3, 3}, 4.0},
    {"Reactor Pressure", "bar", {28, 34, 3}, 2.0},
    {"Reactor Bed Level", "m", {10, 14, 3}, 0.0},
    {"Liquefied Recycle gas to R-310 dome top", "L/h", {20000, 40000, 1}, 0.0},
    {"Hydrogen Flow", "Kg/h", {1, 6, 3}, 1.5},
    {"Reactor Temperature", "K", {340, 346, 3}, 1.0},
    {"Propylene flow", "Kg/h", {25000, 45000, 1}, 0.0},
};
// clang-format on

double round_to(double x, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(x * scale) / scale;
}

}  // namespace

std::string to_string(SmoothFunction f) {
  switch (f) {
    case SmoothFunction::Sine:
      return "sine";
    case SmoothFunction::Square:
      return "square";
    case SmoothFunction::Exp:
      return "exp";
  }
  return "sine";
}

SmoothFunction parse_smooth_function(std::string_view text) {
  if (text == "sine") return SmoothFunction::Sine;
  if (text == "square") return SmoothFunction::Square;
  if (text == "exp") return SmoothFunction::Exp;
  throw Error(Errc::InvalidSpec, "unknown response function '" + std::string(text) + "'",
              std::string(text));
}

std::vector<std::string> GeneratorSpec::informative() const {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < weights.size() && j < catalog.size(); ++j) {
    if (weights[j] != 0.0) idx.push_back(j);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](auto a, auto b) { return std::abs(weights[a]) > std::abs(weights[b]); });
  std::vector<std::string> out;
  for (auto j : idx) out.push_back(catalog[j].name);
  return out;
}

Dataset generate(const GeneratorSpec& spec) {
  if (spec.n_samples == 0) throw Error(Errc::InvalidSpec, "n_samples must be >= 1", "n_samples");
  if (spec.catalog.empty()) throw Error(Errc::InvalidSpec, "empty catalog", "catalog");
  if (spec.ranges.size() != spec.catalog.size()) {
    throw Error(Errc::InvalidSpec, "one range per variable required", "ranges");
  }
  if (spec.weights.size() != spec.catalog.size()) {
    throw Error(Errc::InvalidSpec, "one weight per variable required", "weights");
  }
  if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) {
    throw Error(Errc::InvalidSpec, "noise_std must be finite and >= 0", "noise_std");
  }
  for (std::size_t j = 0; j < spec.ranges.size(); ++j) {
    const auto& r = spec.ranges[j];
    if (!(r.hi > r.lo) || !std::isfinite(r.lo) || !std::isfinite(r.hi) || r.decimals < 0) {
      throw Error(Errc::InvalidSpec, "invalid range for '" + spec.catalog[j].name + "'",
                  spec.catalog[j].name);
    }
    if (!is_renderable_name(spec.catalog[j].name)) {
      throw Error(Errc::InvalidSpec, "variable name cannot be rendered: '" + spec.catalog[j].name + "'",
                  spec.catalog[j].name);
    }
  }

  Dataset data;
  data.catalog = spec.catalog;
  data.primary_variable = spec.primary;
  data.task = spec.task;
  data.task.primary_variable_name = spec.primary.name;
  data.task.feature_count = spec.catalog.size();

  Rng features(derive_seed(spec.seed, 1));
  Rng noise(derive_seed(spec.seed, 2));
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    Sample s;
    double y = spec.intercept;
    for (std::size_t j = 0; j < spec.catalog.size(); ++j) {
      const auto& r = spec.ranges[j];
      const double x = std::clamp(round_to(features.uniform(r.lo, r.hi), r.decimals), r.lo, r.hi);
      const double u = (x - r.lo) / (r.hi - r.lo);
      double term = u;
      if (spec.shape == ResponseShape::Nonlinear) {
        switch (spec.function) {
          case SmoothFunction::Sine:
            term = std::sin(std::numbers::pi * u);
            break;
          case SmoothFunction::Square:
            term = u * u;
            break;
          case SmoothFunction::Exp:
            term = std::exp(u) - 1.0;
            break;
        }
      }
      y += spec.weights[j] * term;
      s.values.push_back({spec.catalog[j].name, x});
    }
    if (spec.noise_std > 0.0) y += noise.normal(0.0, spec.noise_std);
    s.label = y;
    data.samples.push_back(std::move(s));
  }
  return data;
}

GeneratorSpec preset(std::string_view name, std::size_t n_samples, std::uint64_t seed,
                     double noise_std) {
  GeneratorSpec spec;
  std::span<const PresetVariable> vars;
  if (name == "pensim-like") {
    vars = kPensim;
    spec.primary = {"Penicillin concentration", "Penicillin concentration", "g/L"};
    spec.task.industrial_process = "penicillin fermentation process";
    spec.task.facility = "fed-batch fermenter";
    spec.intercept = 10.0;
  } else if (name == "poly-like") {
    vars = kPoly;
    spec.primary = {"Melt Flow Rate", "Melt Flow Rate", "g/10min"};
    spec.task.industrial_process = "polypropylene production process";
    spec.task.facility = "fluidized bed reactor";
    spec.intercept = 2.0;
  } else {
    throw Error(Errc::InvalidSpec, "unknown preset '" + std::string(name) + "'", std::string(name));
  }
  for (const auto& v : vars) {
    spec.catalog.push_back({v.name, v.name, v.unit});
    spec.ranges.push_back(v.range);
    spec.weights.push_back(v.weight);
  }
  spec.n_samples = n_samples;
  spec.seed = seed;
  spec.noise_std = noise_std;
  return spec;
}

std::vector<std::string> preset_names() { return {"pensim-like", "poly-like"}; }

}  // namespace fuess
