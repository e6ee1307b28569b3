#include <algorithm>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fuess/error.hpp"
#include "fuess/llm.hpp"
#include "fuess/vector_store.hpp"

namespace fuess {

namespace {

using nlohmann::json;

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path below the origin, no trailing slash
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  const auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  Endpoint e{url.substr(0, slash), slash == std::string::npos ? "" : url.substr(slash)};
  while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  return e;
}

std::string resolve_base_url(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("FUESS_API_BASE_URL"); env && *env) return env;
  throw Error(Errc::InvalidArgument, "no API base URL configured (set FUESS_API_BASE_URL)");
}

std::string resolve_key(const std::string& env_name) {
  const char* key = std::getenv(env_name.c_str());
  if (!key || !*key) {
    throw Error(Errc::CredentialMissing, "environment variable " + env_name + " is not set",
                env_name);
  }
  return key;
}

struct HttpResult {
  int status = -1;  // -1: no response
  std::string body;
  std::string error;
  std::optional<double> retry_after;
};

HttpResult post_json(const std::string& base_url, const std::string& path, const std::string& key,
                     const std::string& body, int timeout_seconds) {
  const auto endpoint = split_url(base_url);
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(timeout_seconds, 0);
  client.set_read_timeout(timeout_seconds, 0);
  client.set_write_timeout(timeout_seconds, 0);
  const httplib::Headers headers{{"Authorization", "Bearer " + key}};

  HttpResult out;
  auto res = client.Post(endpoint.prefix + path, headers, body, "application/json");
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  if (res->has_header("Retry-After")) out.retry_after = parse_number(res->get_header_value("Retry-After"));
  return out;
}

bool transient(int status) { return status < 0 || status == 408 || status == 429 || status >= 500; }

}  // namespace

TokenBucket::TokenBucket(double rate, double burst)
    : rate_(rate), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  std::unique_lock lock(mutex_);
  while (true) {
    const auto now = std::chrono::steady_clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

RemoteBackend::RemoteBackend(RemoteConfig config)
    : config_(std::move(config)),
      in_flight_(std::clamp<std::ptrdiff_t>(config_.max_in_flight, 1, 1024)),
      bucket_(config_.requests_per_second, config_.burst) {}

std::string RemoteBackend::complete(const ChatPrompt& prompt, const GenerationParams& params) {
  if (prompt.system.empty() && prompt.user.empty()) {
    throw Error(Errc::InvalidArgument, "empty prompt");
  }
  if (!std::isfinite(params.temperature) || params.temperature < 0.0) {
    throw Error(Errc::InvalidArgument, "temperature must be finite and >= 0");
  }
  const auto key = resolve_key(config_.api_key_env);
  const auto base = resolve_base_url(config_.base_url);

  json messages = json::array();
  if (!prompt.system.empty()) messages.push_back({{"role", "system"}, {"content", prompt.system}});
  messages.push_back({{"role", "user"}, {"content", prompt.user}});
  json body;
  body[config_.model_field] = params.model_name;
  body[config_.messages_field] = std::move(messages);
  body[config_.temperature_field] = params.temperature;
  const auto payload = body.dump();

  auto backoff = config_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    try {
      return attempt_once(base, config_.path, key, payload);
    } catch (const Error& e) {
      const bool retryable = e.code() == Errc::RateLimited ||
                             (e.code() == Errc::Transport && transient(static_cast<int>(e.position())));
      if (!retryable || attempt >= params.max_retries) throw;
      spdlog::warn("chat completion attempt {} failed ({}); retrying in {} ms", attempt + 1,
                   e.what(), backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff = std::min(config_.max_backoff,
                         std::chrono::milliseconds(static_cast<std::int64_t>(
                             static_cast<double>(backoff.count()) * config_.backoff_factor)));
    }
  }
}

std::string RemoteBackend::attempt_once(const std::string& base, const std::string& path,
                                        const std::string& key, const std::string& body) {
  bucket_.acquire();
  in_flight_.acquire();
  ++attempts_;
  HttpResult res;
  try {
    res = post_json(base, path, key, body, config_.timeout_seconds);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();

  if (res.status < 0) throw Error(Errc::Transport, "request failed: " + res.error, {}, -1);
  if (res.status == 429) throw Error(Errc::RateLimited, "HTTP 429 from provider", {}, 429);
  if (res.status < 200 || res.status >= 300) {
    throw Error(Errc::Transport, "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 200),
                {}, res.status);
  }
  auto text = extract_response_text(res.body, config_.response_path);
  if (!text) {
    throw Error(Errc::SchemaViolation, "no text at '" + config_.response_path + "' in response",
                config_.response_path);
  }
  return *text;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config)
    : config_(std::move(config)), dimension_(config_.dimension) {}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
  const auto key = resolve_key(config_.api_key_env);
  const auto base = resolve_base_url(config_.base_url);
  const json body{{"model", config_.model}, {"input", std::string(text)}};
  const auto res = post_json(base, config_.path, key, body.dump(), config_.timeout_seconds);
  if (res.status < 0) {
    throw Error(Errc::ProviderUnavailable, "embedding request failed: " + res.error);
  }
  if (res.status < 200 || res.status >= 300) {
    throw Error(Errc::ProviderUnavailable, "embedding request returned HTTP " +
                                               std::to_string(res.status), {}, res.status);
  }
  const json doc = json::parse(res.body, nullptr, false);
  const json* emb = nullptr;
  if (doc.is_object() && doc.contains("data") && doc["data"].is_array() && !doc["data"].empty() &&
      doc["data"][0].is_object() && doc["data"][0].contains("embedding")) {
    emb = &doc["data"][0]["embedding"];
  }
  if (!emb || !emb->is_array() || emb->empty()) {
    throw Error(Errc::ProviderUnavailable, "embedding response lacks data[0].embedding");
  }
  EmbeddingVector v;
  for (const auto& x : *emb) {
    if (!x.is_number()) throw Error(Errc::ProviderUnavailable, "non-numeric embedding component");
    v.push_back(x.get<double>());
  }
  std::size_t expected = 0;
  if (dimension_.compare_exchange_strong(expected, v.size())) return v;
  if (expected != v.size()) {
    throw Error(Errc::DimensionMismatch, "embedding has " + std::to_string(v.size()) +
                                             " components, expected " + std::to_string(expected));
  }
  return v;
}

}  // namespace fuess
