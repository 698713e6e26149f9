#include "cotforge/mock_backend.hpp"

#include <cstdio>

#include "cotforge/errors.hpp"

namespace cotforge {

namespace {

std::string strip_for_canonical(json body) {
  body.erase("seed");
  body.erase("n");
  return canonical_dump(body);
}

bool ends_with(std::string_view s, std::string_view suffix) { return s.ends_with(suffix); }

double unit_interval(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace

std::string MockRequest::all_text() const {
  std::string out;
  if (!body.contains("messages")) return out;
  for (const auto& m : body["messages"]) {
    const auto& c = m["content"];
    if (c.is_string()) {
      out += c.get<std::string>();
    } else if (c.is_array()) {
      for (const auto& part : c)
        if (part.value("type", "") == "text") out += part.value("text", "");
    }
    out.push_back('\n');
  }
  return out;
}

std::string mock_base_text(std::string_view canonical, std::int64_t seed) {
  std::string material(canonical);
  material.push_back('#');
  material += std::to_string(seed);
  return "mock:" + sha256_hex(material).substr(0, 16);
}

std::vector<double> mock_embedding(std::string_view text, int dim) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(dim));
  for (int block = 0; static_cast<int>(v.size()) < dim; ++block) {
    std::string material(text);
    material.push_back('#');
    material += std::to_string(block);
    auto d = sha256(material);
    for (std::size_t w = 0; w < 4 && static_cast<int>(v.size()) < dim; ++w) {
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) bits = bits << 8 | d[w * 8 + static_cast<std::size_t>(b)];
      v.push_back(2.0 * unit_interval(bits) - 1.0);
    }
  }
  return v;
}

std::string mock_image_bytes(std::string_view prompt, std::int64_t seed) {
  constexpr int kSide = 8;
  std::string bytes = "P6\n8 8\n255\n";
  const std::size_t pixels = kSide * kSide * 3;
  std::string body;
  for (int block = 0; body.size() < pixels; ++block) {
    std::string material(prompt);
    material += "#" + std::to_string(seed) + "#" + std::to_string(block);
    auto d = sha256(material);
    body.append(reinterpret_cast<const char*>(d.data()), d.size());
  }
  body.resize(pixels);
  return bytes + body;
}

HttpResponse MockBackend::post(const std::string& url, const std::string& body, const Headers& headers) {
  requests_.fetch_add(1);
  MockRequest req;
  req.headers = headers;
  req.role = find_header(headers, "X-Cotforge-Role").value_or("");
  req.body = json::parse(body, nullptr, false);
  if (req.body.is_discarded() || !req.body.is_object()) return {400, R"({"error":"body is not a JSON object"})"};
  req.canonical = strip_for_canonical(req.body);
  req.seed = req.body.value("seed", std::int64_t{0});

  // Path suffix decides which service answers.
  auto path = url.substr(0, url.find('?'));
  if (ends_with(path, "/chat/completions"))
    req.endpoint = MockRequest::Endpoint::chat;
  else if (ends_with(path, "/embeddings"))
    req.endpoint = MockRequest::Endpoint::embeddings;
  else if (ends_with(path, "/images/generations"))
    req.endpoint = MockRequest::Endpoint::images;
  else
    return {404, R"({"error":"unknown endpoint"})"};

  if (fault_policy_) {
    if (auto status = fault_policy_(req)) {
      if (*status == 0) throw TransportFailure("mock: injected connection failure");
      return {*status, R"({"error":"injected fault"})"};
    }
  }

  switch (req.endpoint) {
    case MockRequest::Endpoint::chat: return chat(std::move(req));
    case MockRequest::Endpoint::embeddings: return embeddings(std::move(req));
    case MockRequest::Endpoint::images: return images(std::move(req));
  }
  return {500, "{}"};
}

std::string MockBackend::default_chat_text(const MockRequest& req) const {
  auto base = mock_base_text(req.canonical, req.seed);
  if (req.role == "generator") return "REASONING: " + base + "\nPROMPT: rendering of " + base;
  if (req.role == "selector") {
    auto count = std::stoll(req.header("X-Cotforge-Candidates").value_or("1"));
    std::string material = req.canonical + "#" + std::to_string(req.seed);
    auto bits = digest_prefix_u64(sha256(material));
    auto index = count > 0 ? bits % static_cast<std::uint64_t>(count) : 0;
    char score[32];
    std::snprintf(score, sizeof score, "%.4f", static_cast<double>((bits >> 16) & 0xffff) / 65535.0);
    return "INDEX: " + std::to_string(index) + "\nSCORE: " + score;
  }
  if (req.role == "critic") return "The image misses details the query implies (" + base + ").";
  if (req.role == "refiner") return "refined prompt " + base;
  return base;
}

HttpResponse MockBackend::chat(MockRequest req) {
  if (!req.body.contains("messages") || !req.body["messages"].is_array() || req.body["messages"].empty())
    return {400, R"({"error":"messages missing"})"};
  int n = req.body.value("n", 1);
  const auto base_seed = req.seed;
  // Temperature 0 is greedy decoding: the seed has no influence.
  const bool greedy = req.body.value("temperature", 1.0) == 0.0;
  json choices = json::array();
  for (int i = 0; i < n; ++i) {
    req.choice = i;
    req.seed = greedy ? 0 : base_seed + i;
    std::optional<std::string> text;
    if (text_policy_) text = text_policy_(req);
    if (!text) text = default_chat_text(req);
    choices.push_back({{"index", i},
                       {"message", {{"role", "assistant"}, {"content", *text}}},
                       {"finish_reason", "stop"}});
  }
  json out{{"object", "chat.completion"}, {"model", req.body.value("model", "mock")}, {"choices", choices}};
  return {200, out.dump()};
}

HttpResponse MockBackend::embeddings(MockRequest req) {
  if (!req.body.contains("input") || !req.body["input"].is_string()) return {400, R"({"error":"input missing"})"};
  auto text = req.body["input"].get<std::string>();
  std::optional<std::vector<double>> v;
  if (embedding_policy_) v = embedding_policy_(text);
  if (!v) v = mock_embedding(text, embedding_dim_);
  json out{{"object", "list"},
           {"model", req.body.value("model", "mock")},
           {"data", json::array({{{"object", "embedding"}, {"index", 0}, {"embedding", *v}}})}};
  return {200, out.dump()};
}

HttpResponse MockBackend::images(MockRequest req) {
  if (!req.body.contains("prompt") || !req.body["prompt"].is_string()) return {400, R"({"error":"prompt missing"})"};
  auto bytes = mock_image_bytes(req.body["prompt"].get<std::string>(), req.seed);
  json out{{"data", json::array({{{"b64_json", base64_encode(bytes)}}})}};
  return {200, out.dump()};
}

}  // namespace cotforge
