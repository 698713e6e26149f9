#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cotforge/store.hpp"
#include "cotforge/templates.hpp"
#include "cotforge/transport.hpp"
#include "cotforge/types.hpp"

namespace cotforge {

enum class BackendMode { http, mock };

std::string_view to_string(BackendMode m);
BackendMode backend_mode_from_string(std::string_view s);

struct BackendConfig {
  std::string reasoner_endpoint = "http://127.0.0.1:8000/v1/chat/completions";
  std::string embedder_endpoint = "http://127.0.0.1:8000/v1/embeddings";
  std::string t2i_endpoint = "http://127.0.0.1:8001/v1/images/generations";
  // Keyed by role name ("generator", "selector", ...), plus "reasoner",
  // "embedder" and "t2i" as fallbacks.
  std::map<std::string, std::string> model_names;
  int timeout_ms = 120000;
  int max_retries = 3;
  int backoff_ms = 250;
  int parallelism = 4;
  BackendMode mode = BackendMode::mock;
  int mock_embedding_dim = 64;
  bool attach_images = true;
  std::optional<std::string> api_key;

  void validate() const;
  std::string model_for(std::string_view role, std::string_view kind) const;
};

void to_json(json& j, const BackendConfig& c);
void from_json(const json& j, BackendConfig& c);

struct CallCounts {
  std::int64_t reasoner = 0;
  std::int64_t embedder = 0;
  std::int64_t t2i = 0;
  std::int64_t backend_calls = 0;  // requests that reached the transport
  std::int64_t cache_hits = 0;
  std::int64_t retries = 0;

  CallCounts operator-(const CallCounts& o) const;
  bool operator==(const CallCounts&) const = default;
  json to_json() const;
};

class Telemetry {
 public:
  enum class Kind { reasoner, embedder, t2i };

  void count_call(Kind k);
  void count_backend_call() { backend_calls_.fetch_add(1); }
  void count_cache_hit() { cache_hits_.fetch_add(1); }
  void count_retry() { retries_.fetch_add(1); }
  CallCounts snapshot() const;

 private:
  std::atomic<std::int64_t> reasoner_{0}, embedder_{0}, t2i_{0}, backend_calls_{0}, cache_hits_{0}, retries_{0};
};

using TelemetrySinks = std::vector<std::shared_ptr<Telemetry>>;

struct Embedding {
  Eigen::VectorXd values;

  Eigen::Index dim() const { return values.size(); }
};

struct Completion {
  std::string text;
  std::optional<std::vector<double>> logprobs;
  std::int64_t seed = 0;
};

// Request metadata carried as headers; never part of the cache key.
struct RequestTag {
  Role role = Role::stage1_instruction;
  int round = -1;
  int candidates = 0;
  std::string task_id;
};

// Shared plumbing behind every client: bounded in-flight requests, the
// retry/backoff policy, response caching and telemetry.
class BackendCore {
 public:
  BackendCore(BackendConfig config, std::shared_ptr<Transport> transport, std::shared_ptr<const RunStore> store);

  const BackendConfig& config() const { return config_; }
  const RunStore* store() const { return store_.get(); }
  Telemetry& telemetry() { return telemetry_; }
  const Telemetry& telemetry() const { return telemetry_; }

  // Validates with `accept` before caching; a rejected body is a protocol error.
  std::string exchange(Telemetry::Kind kind, const std::string& url, const json& body, std::int64_t seed,
                       const Headers& headers, const std::function<void(const std::string&)>& accept,
                       const TelemetrySinks& sinks);

  void check_embedding_dim(Eigen::Index dim);

 private:
  std::string backend_id(Telemetry::Kind kind, const json& body) const;

  BackendConfig config_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<const RunStore> store_;
  std::counting_semaphore<1024> in_flight_;
  Telemetry telemetry_;
  std::atomic<Eigen::Index> embedding_dim_{-1};
};

class ReasonerClient {
 public:
  ReasonerClient(std::shared_ptr<BackendCore> core, std::shared_ptr<const ArtifactResolver> resolver)
      : core_(std::move(core)), resolver_(std::move(resolver)) {}

  // One request; n > 1 asks for n choices, choice i sampled with seed + i.
  std::vector<Completion> chat_complete(const std::vector<Message>& messages, const SamplingParams& params,
                                        const RequestTag& tag, int n = 1) const;
  std::string chat_complete_text(const std::vector<Message>& messages, const SamplingParams& params,
                                 const RequestTag& tag) const;

  std::string backend_id(Role role) const;
  ReasonerClient with_sinks(TelemetrySinks sinks) const;

  json request_body(const std::vector<Message>& messages, const SamplingParams& params, Role role, int n) const;

 private:
  std::shared_ptr<BackendCore> core_;
  std::shared_ptr<const ArtifactResolver> resolver_;
  TelemetrySinks sinks_;
};

class EmbedderClient {
 public:
  explicit EmbedderClient(std::shared_ptr<BackendCore> core) : core_(std::move(core)) {}

  Embedding embed_text(std::string_view text) const;
  EmbedderClient with_sinks(TelemetrySinks sinks) const;

 private:
  std::shared_ptr<BackendCore> core_;
  TelemetrySinks sinks_;
};

class T2IClient {
 public:
  explicit T2IClient(std::shared_ptr<BackendCore> core) : core_(std::move(core)) {}

  ImageRef t2i_generate(std::string_view prompt, std::int64_t seed,
                        std::optional<std::string> source_prompt_id = std::nullopt,
                        const RequestTag& tag = {}) const;
  T2IClient with_sinks(TelemetrySinks sinks) const;

 private:
  std::shared_ptr<BackendCore> core_;
  TelemetrySinks sinks_;
};

// Everything the pipeline stages need to talk to models.
class Backends {
 public:
  Backends(BackendConfig config, std::shared_ptr<Transport> transport, std::shared_ptr<const RunStore> store,
           std::shared_ptr<const TemplateRegistry> templates, std::shared_ptr<const ArtifactResolver> resolver);

  const ReasonerClient& reasoner() const { return reasoner_; }
  const EmbedderClient& embedder() const { return embedder_; }
  const T2IClient& t2i() const { return t2i_; }
  const TemplateRegistry& templates() const { return *templates_; }
  const ArtifactResolver& resolver() const { return *resolver_; }
  const BackendConfig& config() const { return core_->config(); }

  std::vector<Message> render_role_prompt(Role role, const Bindings& bindings,
                                          std::optional<TaskFamily> family = std::nullopt) const {
    return templates_->render(role, bindings, family);
  }

  // Same backends, additionally counting into `sink`.
  Backends scoped(std::shared_ptr<Telemetry> sink) const;
  CallCounts telemetry() const { return core_->telemetry().snapshot(); }

 private:
  std::shared_ptr<BackendCore> core_;
  std::shared_ptr<const TemplateRegistry> templates_;
  std::shared_ptr<const ArtifactResolver> resolver_;
  ReasonerClient reasoner_;
  EmbedderClient embedder_;
  T2IClient t2i_;
  TelemetrySinks sinks_;
};

}  // namespace cotforge
