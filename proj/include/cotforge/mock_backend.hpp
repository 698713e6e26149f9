#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cotforge/transport.hpp"

namespace cotforge {

// A request as seen by the mock server, with the fields policies need.
struct MockRequest {
  enum class Endpoint { chat, embeddings, images };

  Endpoint endpoint = Endpoint::chat;
  std::string role;  // from the X-Cotforge-Role header, may be empty
  json body;
  std::string canonical;  // body minus "seed" and "n", canonical dump
  std::int64_t seed = 0;  // effective seed for this choice
  int choice = 0;
  Headers headers;

  std::optional<std::string> header(std::string_view name) const { return find_header(headers, name); }
  // Concatenated text of every chat message.
  std::string all_text() const;
};

// "mock:" followed by 16 hex chars of SHA-256(canonical ‖ '#' ‖ seed).
// At temperature 0 the chat mock uses seed 0 for every choice.
std::string mock_base_text(std::string_view canonical, std::int64_t seed);

// Deterministic values in [-1, 1] from SHA-256(text ‖ '#' ‖ block) expansion.
std::vector<double> mock_embedding(std::string_view text, int dim);

// 8x8 binary PPM whose pixels come from SHA-256(prompt ‖ '#' ‖ seed ‖ '#' ‖ block).
std::string mock_image_bytes(std::string_view prompt, std::int64_t seed);

// In-process stand-in for the three HTTP services. Responses are pure
// functions of (canonical request, seed) unless a policy intervenes.
class MockBackend : public Transport {
 public:
  // Returning a value replaces the default chat text for that choice.
  using TextPolicy = std::function<std::optional<std::string>(const MockRequest&)>;
  using EmbeddingPolicy = std::function<std::optional<std::vector<double>>(std::string_view text)>;
  // Returning a value short-circuits with that HTTP status (0 raises a
  // transport failure instead).
  using FaultPolicy = std::function<std::optional<int>(const MockRequest&)>;

  explicit MockBackend(int embedding_dim = 64) : embedding_dim_(embedding_dim) {}

  HttpResponse post(const std::string& url, const std::string& body, const Headers& headers) override;

  void set_text_policy(TextPolicy p) { text_policy_ = std::move(p); }
  void set_embedding_policy(EmbeddingPolicy p) { embedding_policy_ = std::move(p); }
  void set_fault_policy(FaultPolicy p) { fault_policy_ = std::move(p); }

  std::int64_t requests() const { return requests_.load(); }

  std::string default_chat_text(const MockRequest& req) const;

 private:
  HttpResponse chat(MockRequest req);
  HttpResponse embeddings(MockRequest req);
  HttpResponse images(MockRequest req);

  int embedding_dim_;
  TextPolicy text_policy_;
  EmbeddingPolicy embedding_policy_;
  FaultPolicy fault_policy_;
  std::atomic<std::int64_t> requests_{0};
};

}  // namespace cotforge
