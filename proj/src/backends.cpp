#include "cotforge/backends.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "cotforge/errors.hpp"

namespace cotforge {

namespace {

std::string_view kind_name(Telemetry::Kind k) {
  switch (k) {
    case Telemetry::Kind::reasoner: return "reasoner";
    case Telemetry::Kind::embedder: return "embedder";
    case Telemetry::Kind::t2i: return "t2i";
  }
  return "reasoner";
}

bool is_transient_status(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

Headers tag_headers(const RequestTag& tag) {
  Headers h{{"X-Cotforge-Role", std::string(to_string(tag.role))}};
  if (tag.round >= 0) h.emplace_back("X-Cotforge-Round", std::to_string(tag.round));
  if (tag.candidates > 0) h.emplace_back("X-Cotforge-Candidates", std::to_string(tag.candidates));
  if (!tag.task_id.empty()) h.emplace_back("X-Cotforge-Task", tag.task_id);
  return h;
}

std::string_view mime_for(std::string_view locator) {
  if (locator.ends_with(".png")) return "image/png";
  if (locator.ends_with(".jpg") || locator.ends_with(".jpeg")) return "image/jpeg";
  if (locator.ends_with(".webp")) return "image/webp";
  if (locator.ends_with(".ppm")) return "image/x-portable-pixmap";
  return "application/octet-stream";
}

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

TelemetrySinks with_extra(TelemetrySinks sinks, std::shared_ptr<Telemetry> extra) {
  sinks.push_back(std::move(extra));
  return sinks;
}

}  // namespace

std::string_view to_string(BackendMode m) { return m == BackendMode::http ? "http" : "mock"; }

BackendMode backend_mode_from_string(std::string_view s) {
  if (s == "http") return BackendMode::http;
  if (s == "mock") return BackendMode::mock;
  fail(ErrorKind::configuration, "unknown backend mode '" + std::string(s) + "'");
}

void BackendConfig::validate() const {
  require(parallelism >= 1, ErrorKind::configuration, "parallelism must be >= 1");
  require(parallelism <= 1024, ErrorKind::configuration, "parallelism must be <= 1024");
  require(timeout_ms > 0, ErrorKind::configuration, "timeout_ms must be > 0");
  require(max_retries >= 0, ErrorKind::configuration, "max_retries must be >= 0");
  require(backoff_ms >= 0, ErrorKind::configuration, "backoff_ms must be >= 0");
  require(mock_embedding_dim >= 1, ErrorKind::configuration, "mock embedding dim must be >= 1");
}

std::string BackendConfig::model_for(std::string_view role, std::string_view kind) const {
  if (auto it = model_names.find(std::string(role)); it != model_names.end()) return it->second;
  if (auto it = model_names.find(std::string(kind)); it != model_names.end()) return it->second;
  return "default";
}

void to_json(json& j, const BackendConfig& c) {
  j = json{{"reasoner_endpoint", c.reasoner_endpoint},
           {"embedder_endpoint", c.embedder_endpoint},
           {"t2i_endpoint", c.t2i_endpoint},
           {"model_names", c.model_names},
           {"timeout_ms", c.timeout_ms},
           {"max_retries", c.max_retries},
           {"backoff_ms", c.backoff_ms},
           {"parallelism", c.parallelism},
           {"mode", std::string(to_string(c.mode))},
           {"mock_embedding_dim", c.mock_embedding_dim},
           {"attach_images", c.attach_images}};
}

void from_json(const json& j, BackendConfig& c) {
  c.reasoner_endpoint = j.value("reasoner_endpoint", c.reasoner_endpoint);
  c.embedder_endpoint = j.value("embedder_endpoint", c.embedder_endpoint);
  c.t2i_endpoint = j.value("t2i_endpoint", c.t2i_endpoint);
  if (j.contains("model_names")) c.model_names = j["model_names"].get<std::map<std::string, std::string>>();
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  c.parallelism = j.value("parallelism", c.parallelism);
  if (j.contains("mode")) c.mode = backend_mode_from_string(j["mode"].get<std::string>());
  c.mock_embedding_dim = j.value("mock_embedding_dim", c.mock_embedding_dim);
  c.attach_images = j.value("attach_images", c.attach_images);
}

CallCounts CallCounts::operator-(const CallCounts& o) const {
  return {reasoner - o.reasoner, embedder - o.embedder,           t2i - o.t2i,
          backend_calls - o.backend_calls, cache_hits - o.cache_hits, retries - o.retries};
}

json CallCounts::to_json() const {
  return json{{"reasoner", reasoner},       {"embedder", embedder},     {"t2i", t2i},
              {"backend_calls", backend_calls}, {"cache_hits", cache_hits}, {"retries", retries}};
}

void Telemetry::count_call(Kind k) {
  switch (k) {
    case Kind::reasoner: reasoner_.fetch_add(1); break;
    case Kind::embedder: embedder_.fetch_add(1); break;
    case Kind::t2i: t2i_.fetch_add(1); break;
  }
}

CallCounts Telemetry::snapshot() const {
  return {reasoner_.load(), embedder_.load(), t2i_.load(), backend_calls_.load(), cache_hits_.load(), retries_.load()};
}

BackendCore::BackendCore(BackendConfig config, std::shared_ptr<Transport> transport,
                         std::shared_ptr<const RunStore> store)
    : config_((config.validate(), std::move(config))),
      transport_(std::move(transport)),
      store_(std::move(store)),
      in_flight_(config_.parallelism) {
  require(transport_ != nullptr, ErrorKind::configuration, "backend transport is null");
}

std::string BackendCore::backend_id(Telemetry::Kind kind, const json& body) const {
  return std::string(to_string(config_.mode)) + ":" + std::string(kind_name(kind)) + ":" +
         body.value("model", std::string("default"));
}

std::string BackendCore::exchange(Telemetry::Kind kind, const std::string& url, const json& body, std::int64_t seed,
                                  const Headers& headers, const std::function<void(const std::string&)>& accept,
                                  const TelemetrySinks& sinks) {
  auto for_all = [&](auto&& fn) {
    fn(telemetry_);
    for (const auto& s : sinks) fn(*s);
  };
  for_all([&](Telemetry& t) { t.count_call(kind); });

  json keyed = body;
  keyed.erase("seed");
  const auto key = CacheKey::of(backend_id(kind, body), canonical_dump(keyed), seed);
  if (store_) {
    if (auto cached = store_->get(key)) {
      for_all([](Telemetry& t) { t.count_cache_hit(); });
      return *std::move(cached);
    }
  }

  const auto payload = canonical_dump(body);
  HttpResponse res;
  {
    SemaphoreGuard guard(in_flight_);
    for (int attempt = 0;; ++attempt) {
      std::string reason;
      bool transient = false;
      for_all([](Telemetry& t) { t.count_backend_call(); });
      try {
        res = transport_->post(url, payload, headers);
        if (res.status >= 200 && res.status < 300) break;
        transient = is_transient_status(res.status);
        reason = "HTTP " + std::to_string(res.status) + " from " + url;
      } catch (const TransportFailure& e) {
        transient = true;
        reason = e.what();
      }
      if (!transient) fail(ErrorKind::protocol, reason + ": " + res.body.substr(0, 200));
      if (attempt >= config_.max_retries)
        fail(ErrorKind::backend_unavailable,
             reason + " (after " + std::to_string(config_.max_retries) + " retries)");
      for_all([](Telemetry& t) { t.count_retry(); });
      if (config_.backoff_ms > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<std::int64_t>(config_.backoff_ms) << attempt));
    }
  }

  try {
    accept(res.body);
  } catch (const json::exception& e) {
    fail(ErrorKind::protocol, std::string("malformed response from ") + url + ": " + e.what());
  }

  if (store_ && !store_->put_if_absent(key, res.body)) {
    if (auto first = store_->get(key)) return *std::move(first);
  }
  return res.body;
}

void BackendCore::check_embedding_dim(Eigen::Index dim) {
  Eigen::Index expected = -1;
  if (embedding_dim_.compare_exchange_strong(expected, dim)) return;
  if (expected != dim)
    fail(ErrorKind::configuration, "embedding dimension changed within one run: " + std::to_string(expected) +
                                       " then " + std::to_string(dim));
}

// --- reasoner ---------------------------------------------------------------

std::string ReasonerClient::backend_id(Role role) const {
  return "reasoner:" + core_->config().model_for(to_string(role), "reasoner");
}

ReasonerClient ReasonerClient::with_sinks(TelemetrySinks sinks) const {
  ReasonerClient c = *this;
  c.sinks_ = std::move(sinks);
  return c;
}

json ReasonerClient::request_body(const std::vector<Message>& messages, const SamplingParams& params, Role role,
                                  int n) const {
  json msgs = json::array();
  for (const auto& m : messages) {
    if (m.images.empty() || !core_->config().attach_images) {
      msgs.push_back({{"role", m.role}, {"content", m.text}});
      continue;
    }
    json parts = json::array({{{"type", "text"}, {"text", m.text}}});
    for (const auto& img : m.images) {
      auto bytes = resolver_->load(img);
      parts.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:" + std::string(mime_for(img.locator)) + ";base64," +
                                                  base64_encode(bytes)}}}});
    }
    msgs.push_back({{"role", m.role}, {"content", parts}});
  }
  json body{{"model", core_->config().model_for(to_string(role), "reasoner")},
            {"messages", msgs},
            {"temperature", params.temperature},
            {"top_p", params.top_p},
            {"seed", params.seed}};
  if (n > 1) body["n"] = n;
  return body;
}

std::vector<Completion> ReasonerClient::chat_complete(const std::vector<Message>& messages,
                                                      const SamplingParams& params, const RequestTag& tag,
                                                      int n) const {
  require(!messages.empty(), ErrorKind::invalid_input, "chat_complete needs at least one message");
  require(n >= 1, ErrorKind::invalid_input, "chat_complete needs n >= 1");
  params.validate();

  auto body = request_body(messages, params, tag.role, n);
  std::vector<Completion> out;
  auto parse = [&](const std::string& raw) {
    out.clear();
    auto j = json::parse(raw);
    const auto& choices = j.at("choices");
    if (!choices.is_array() || static_cast<int>(choices.size()) < n)
      fail(ErrorKind::protocol, "response carries fewer choices than requested");
    for (int i = 0; i < n; ++i) {
      const auto& choice = choices.at(static_cast<std::size_t>(i));
      const auto& content = choice.at("message").at("content");
      if (!content.is_string()) fail(ErrorKind::protocol, "choice content is not a string");
      Completion c{content.get<std::string>(), std::nullopt, params.seed + i};
      if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content")) {
        std::vector<double> lps;
        for (const auto& tok : choice["logprobs"]["content"]) lps.push_back(tok.at("logprob").get<double>());
        c.logprobs = std::move(lps);
      }
      out.push_back(std::move(c));
    }
  };
  auto raw = core_->exchange(Telemetry::Kind::reasoner, core_->config().reasoner_endpoint, body, params.seed,
                             tag_headers(tag), parse, sinks_);
  parse(raw);  // the stored value wins over the one just validated
  return out;
}

std::string ReasonerClient::chat_complete_text(const std::vector<Message>& messages, const SamplingParams& params,
                                               const RequestTag& tag) const {
  return chat_complete(messages, params, tag, 1).front().text;
}

// --- embedder ---------------------------------------------------------------

EmbedderClient EmbedderClient::with_sinks(TelemetrySinks sinks) const {
  EmbedderClient c = *this;
  c.sinks_ = std::move(sinks);
  return c;
}

Embedding EmbedderClient::embed_text(std::string_view text) const {
  require(!text.empty(), ErrorKind::invalid_input, "cannot embed empty text");
  json body{{"model", core_->config().model_for("embedder", "embedder")}, {"input", std::string(text)}};
  Embedding e;
  auto parse = [&](const std::string& raw) {
    auto j = json::parse(raw);
    const auto& vec = j.at("data").at(0).at("embedding");
    if (!vec.is_array() || vec.empty()) fail(ErrorKind::protocol, "embedding is empty");
    e.values.resize(static_cast<Eigen::Index>(vec.size()));
    for (std::size_t i = 0; i < vec.size(); ++i) {
      double v = vec[i].get<double>();
      if (!std::isfinite(v)) fail(ErrorKind::protocol, "embedding holds a non-finite value");
      e.values[static_cast<Eigen::Index>(i)] = v;
    }
  };
  Headers headers{{"X-Cotforge-Role", "embedder"}};
  auto raw = core_->exchange(Telemetry::Kind::embedder, core_->config().embedder_endpoint, body, 0, headers, parse,
                             sinks_);
  parse(raw);
  core_->check_embedding_dim(e.dim());
  return e;
}

// --- text-to-image ----------------------------------------------------------

T2IClient T2IClient::with_sinks(TelemetrySinks sinks) const {
  T2IClient c = *this;
  c.sinks_ = std::move(sinks);
  return c;
}

ImageRef T2IClient::t2i_generate(std::string_view prompt, std::int64_t seed,
                                 std::optional<std::string> source_prompt_id, const RequestTag& tag) const {
  require(!prompt.empty(), ErrorKind::invalid_input, "cannot generate an image from an empty prompt");
  require(core_->store() != nullptr, ErrorKind::configuration, "image generation needs a run store");
  json body{{"model", core_->config().model_for("t2i", "t2i")}, {"prompt", std::string(prompt)}, {"seed", seed},
            {"n", 1}};
  std::string bytes;
  auto parse = [&](const std::string& raw) {
    auto j = json::parse(raw);
    const auto& item = j.at("data").at(0);
    bytes = base64_decode(item.at("b64_json").get<std::string>());
    if (bytes.empty()) fail(ErrorKind::protocol, "image payload is empty");
  };
  Headers headers{{"X-Cotforge-Role", "t2i"}};
  if (tag.round >= 0) headers.emplace_back("X-Cotforge-Round", std::to_string(tag.round));
  if (!tag.task_id.empty()) headers.emplace_back("X-Cotforge-Task", tag.task_id);
  auto raw = core_->exchange(Telemetry::Kind::t2i, core_->config().t2i_endpoint, body, seed, headers, parse, sinks_);
  parse(raw);
  return core_->store()->put_image(bytes, seed, std::move(source_prompt_id));
}

// --- bundle -----------------------------------------------------------------

Backends::Backends(BackendConfig config, std::shared_ptr<Transport> transport, std::shared_ptr<const RunStore> store,
                   std::shared_ptr<const TemplateRegistry> templates, std::shared_ptr<const ArtifactResolver> resolver)
    : core_(std::make_shared<BackendCore>(std::move(config), std::move(transport), std::move(store))),
      templates_(std::move(templates)),
      resolver_(std::move(resolver)),
      reasoner_(core_, resolver_),
      embedder_(core_),
      t2i_(core_) {
  require(templates_ != nullptr, ErrorKind::configuration, "template registry is null");
  require(resolver_ != nullptr, ErrorKind::configuration, "artifact resolver is null");
}

Backends Backends::scoped(std::shared_ptr<Telemetry> sink) const {
  Backends b = *this;
  b.sinks_ = with_extra(sinks_, std::move(sink));
  b.reasoner_ = reasoner_.with_sinks(b.sinks_);
  b.embedder_ = embedder_.with_sinks(b.sinks_);
  b.t2i_ = t2i_.with_sinks(b.sinks_);
  return b;
}

}  // namespace cotforge
