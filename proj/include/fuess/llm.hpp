#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "fuess/domain.hpp"
#include "fuess/prompt.hpp"

namespace fuess {

struct GenerationParams {
  double temperature = 0.0;
  std::string model_name = "gpt-4o";
  int max_retries = 3;
  std::optional<std::uint64_t> seed;  // stub noise only
};

enum class ResponseKind { ZavsGlobal, ZavsLocal, Ufss };

struct ZavsGlobalAnswer {
  std::string score_and_ranking;
  std::string reasoning;
  bool operator==(const ZavsGlobalAnswer&) const = default;
};

struct ZavsLocalAnswer {
  std::string reasoning;
  bool operator==(const ZavsLocalAnswer&) const = default;
};

struct UfssAnswer {
  double prediction = 0.0;
  std::optional<double> confidence;  // absent only when not requested
  std::string reasoning;
  bool operator==(const UfssAnswer&) const = default;
};

/// Exactly one payload is set, matching `kind`.
struct StructuredAnswer {
  ResponseKind kind = ResponseKind::Ufss;
  std::optional<ZavsGlobalAnswer> zavs_global;
  std::optional<ZavsLocalAnswer> zavs_local;
  std::optional<UfssAnswer> ufss;
  std::vector<std::string> warnings;

  bool operator==(const StructuredAnswer& o) const {
    return kind == o.kind && zavs_global == o.zavs_global && zavs_local == o.zavs_local &&
           ufss == o.ufss;
  }
};

struct ParseOptions {
  /// UFSS only: when false, "Reasoning" and "Confidence Score" may be absent
  /// (prompts rendered without the explanation/confidence instructions).
  bool require_explanation = true;
};

/// Finds the first JSON object in `raw` (code fences and surrounding prose
/// are skipped) and validates it against the schema of `kind`. Numbers may
/// be JSON numbers or numeric strings. Confidence in [-0.01, 1.01] is
/// clamped into [0, 1] with a warning; anything else is an error.
StructuredAnswer parse_response(ResponseKind kind, std::string_view raw,
                                const ParseOptions& options = {});

/// Canonical JSON text for an answer; parse_response inverts it.
std::string serialize_answer(const StructuredAnswer& answer);

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete(const ChatPrompt& prompt, const GenerationParams& params) = 0;
  virtual std::string name() const = 0;
};

/// Single user message convenience wrapper; rejects an empty prompt.
std::string complete(LlmBackend& backend, std::string_view prompt, const GenerationParams& params);

struct StubConfig {
  double epsilon = 1e-9;
  /// Labelled data the stub may consult when scoring variables for a
  /// global selection query (absolute Pearson correlation); without it all
  /// candidates score 1.
  std::optional<Dataset> data_sidecar;
};

/// Deterministic stand-in for a frozen LLM. Soft-sensor prompts are answered
/// by inverse-distance weighted kNN over the demonstrations parsed back out
/// of the prompt; selection prompts by correlation scores. Reentrant.
class StubBackend final : public LlmBackend {
 public:
  explicit StubBackend(StubConfig config = {});

  std::string complete(const ChatPrompt& prompt, const GenerationParams& params) override;
  std::string name() const override { return "stub-knn"; }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::string answer_soft_sensor(std::string_view text, const GenerationParams& params) const;
  std::string answer_global(std::string_view text) const;
  std::string answer_local(std::string_view text) const;

  StubConfig config_;
  std::atomic<std::size_t> calls_{0};
};

/// Result of the stub's kNN over parsed demonstrations; exposed for tests
/// and for the kNN baseline.
struct KnnEstimate {
  double prediction = 0.0;
  double nearest_distance = 0.0;
  std::size_t nearest_index = 0;
};

/// Inverse-distance weighted kNN: features are the test sample's variables
/// z-scored over the demonstrations (population std; zero-variance and
/// missing values map to 0), weights 1 / (epsilon + d).
KnnEstimate weighted_knn(const std::vector<Sample>& demonstrations, const Sample& test,
                         double epsilon = 1e-9);

struct RemoteConfig {
  std::string base_url;  // empty: FUESS_API_BASE_URL
  std::string path = "/chat/completions";
  std::string api_key_env = "FUESS_API_KEY";
  std::string response_path = "choices[0].message.content";
  std::string model_field = "model";
  std::string messages_field = "messages";
  std::string temperature_field = "temperature";
  int timeout_seconds = 120;
  std::ptrdiff_t max_in_flight = 4;
  double requests_per_second = 0.0;  // 0: no rate limit
  double burst = 1.0;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_factor = 2.0;
  std::chrono::milliseconds max_backoff{30000};
};

/// Token bucket: `rate` tokens per second, at most `burst` banked.
class TokenBucket {
 public:
  TokenBucket(double rate, double burst);
  void acquire();

 private:
  std::mutex mutex_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

/// Chat-completion client over HTTP(S). Transient failures (connection
/// errors, 408, 429, 5xx) are retried with exponential backoff at most
/// `max_retries` times; other statuses fail immediately.
class RemoteBackend final : public LlmBackend {
 public:
  explicit RemoteBackend(RemoteConfig config);

  std::string complete(const ChatPrompt& prompt, const GenerationParams& params) override;
  std::string name() const override { return "remote"; }

  /// HTTP attempts issued so far.
  std::size_t attempts() const { return attempts_.load(); }

 private:
  std::string attempt_once(const std::string& base, const std::string& path,
                           const std::string& key, const std::string& body);

  RemoteConfig config_;
  std::counting_semaphore<1024> in_flight_;
  TokenBucket bucket_;
  std::atomic<std::size_t> attempts_{0};
};

/// Follows a path like "choices[0].message.content" into a JSON document.
std::optional<std::string> extract_response_text(std::string_view body, std::string_view path);

}  // namespace fuess
