#include "cotforge/transport.hpp"

#include <httplib.h>

#include <exception>
#include <fstream>

#include "cotforge/errors.hpp"

namespace cotforge {

std::optional<std::string> find_header(const Headers& headers, std::string_view name) {
  for (const auto& [k, v] : headers)
    if (k == name) return v;
  return std::nullopt;
}

std::int64_t monotonic_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  require(scheme_end != std::string::npos, ErrorKind::configuration, "endpoint URL lacks a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpResponse HttpTransport::post(const std::string& url, const std::string& body, const Headers& headers) {
  auto [origin, path] = split_url(url);
  httplib::Client client(origin);
  auto secs = timeout_ms_ / 1000;
  auto usecs = (timeout_ms_ % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  if (api_key_) h.emplace("Authorization", "Bearer " + *api_key_);

  auto res = client.Post(path, h, body, "application/json");
  if (!res) throw TransportFailure("POST " + url + " failed: " + httplib::to_string(res.error()));
  return HttpResponse{res->status, res->body};
}

json RecordedExchange::to_json() const {
  json h = json::object();
  for (const auto& [k, v] : headers) h[k] = v;
  auto parse_or_raw = [](const std::string& s) -> json {
    auto j = json::parse(s, nullptr, false);
    return j.is_discarded() ? json(s) : j;
  };
  json out{{"seq", seq},
           {"url", url},
           {"headers", h},
           {"request", parse_or_raw(request_body)},
           {"status", status},
           {"start_ns", start_ns},
           {"end_ns", end_ns}};
  if (error.empty())
    out["response"] = parse_or_raw(response_body);
  else
    out["error"] = error;
  return out;
}

RecordingTransport::RecordingTransport(std::shared_ptr<Transport> inner, std::optional<std::filesystem::path> jsonl_path)
    : inner_(std::move(inner)), path_(std::move(jsonl_path)) {
  if (path_ && path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
}

HttpResponse RecordingTransport::post(const std::string& url, const std::string& body, const Headers& headers) {
  RecordedExchange ex;
  ex.url = url;
  ex.headers = headers;
  ex.request_body = body;
  ex.start_ns = monotonic_ns();
  std::optional<HttpResponse> res;
  std::exception_ptr failure;
  try {
    res = inner_->post(url, body, headers);
    ex.status = res->status;
    ex.response_body = res->body;
  } catch (const std::exception& e) {
    ex.error = e.what();
    failure = std::current_exception();
  }
  ex.end_ns = monotonic_ns();

  {
    std::lock_guard lock(mu_);
    ex.seq = next_seq_++;
    if (path_) {
      std::ofstream out(*path_, std::ios::app | std::ios::binary);
      out << canonical_dump(ex.to_json()) << '\n';
    }
    log_.push_back(ex);
  }
  if (failure) std::rethrow_exception(failure);
  return *res;
}

std::vector<RecordedExchange> RecordingTransport::exchanges() const {
  std::lock_guard lock(mu_);
  return log_;
}

void RecordingTransport::clear() {
  std::lock_guard lock(mu_);
  log_.clear();
}

}  // namespace cotforge
