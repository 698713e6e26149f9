#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cotforge/types.hpp"

namespace cotforge {

using Headers = std::vector<std::pair<std::string, std::string>>;

std::optional<std::string> find_header(const Headers& headers, std::string_view name);

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Raised by transports for connection-level failures (refused, reset,
// timed out). Clients treat it as transient and retry.
class TransportFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body, const Headers& headers) = 0;
};

class HttpTransport : public Transport {
 public:
  HttpTransport(int timeout_ms, std::optional<std::string> api_key)
      : timeout_ms_(timeout_ms), api_key_(std::move(api_key)) {}

  HttpResponse post(const std::string& url, const std::string& body, const Headers& headers) override;

 private:
  int timeout_ms_;
  std::optional<std::string> api_key_;
};

struct RecordedExchange {
  std::uint64_t seq = 0;
  std::string url;
  Headers headers;
  std::string request_body;
  int status = 0;
  std::string response_body;
  std::string error;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;

  json to_json() const;
};

// Wraps another transport and keeps every request/response pair, optionally
// appending each one to a JSON-Lines file.
class RecordingTransport : public Transport {
 public:
  explicit RecordingTransport(std::shared_ptr<Transport> inner,
                              std::optional<std::filesystem::path> jsonl_path = std::nullopt);

  HttpResponse post(const std::string& url, const std::string& body, const Headers& headers) override;

  std::vector<RecordedExchange> exchanges() const;
  void clear();

 private:
  std::shared_ptr<Transport> inner_;
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::vector<RecordedExchange> log_;
  std::uint64_t next_seq_ = 0;
};

std::int64_t monotonic_ns();

}  // namespace cotforge
