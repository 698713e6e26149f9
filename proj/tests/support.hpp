#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cotforge/backends.hpp"
#include "cotforge/mock_backend.hpp"
#include "cotforge/store.hpp"
#include "cotforge/templates.hpp"
#include "cotforge/transport.hpp"
#include "cotforge/types.hpp"

namespace cotforge::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "cotforge-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline void write_bytes(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << bytes;
}

inline std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// A tiny PPM whose pixels depend on `tag`.
inline std::string demo_image(int tag) {
  std::string px(12, static_cast<char>(tag * 37 + 11));
  return "P6\n2 2\n255\n" + px;
}

inline ImageRef demo_ref(const fs::path& dir, int tag) {
  const auto name = "demo" + std::to_string(tag) + ".ppm";
  const auto bytes = demo_image(tag);
  write_bytes(dir / name, bytes);
  return ImageRef{sha256(bytes), name, std::nullopt, std::nullopt};
}

inline MultimodalContext make_context(const fs::path& dir, const std::string& id,
                                      TaskFamily family = TaskFamily::object_inference,
                                      const std::string& query = "a red car") {
  MultimodalContext ctx;
  ctx.task_id = id;
  ctx.task_family = family;
  ctx.query_text = query;
  ctx.demonstrations = {{"a red apple", demo_ref(dir, 0)}, {"a red ball", demo_ref(dir, 1)}};
  return ctx;
}

// Mock services behind a recording transport, with a run store in `dir`.
struct Harness {
  explicit Harness(const fs::path& dir, BackendConfig cfg = {}) : root(dir) {
    mock = std::make_shared<MockBackend>(cfg.mock_embedding_dim);
    recorder = std::make_shared<RecordingTransport>(mock);
    store = std::make_shared<RunStore>(dir / "run");
    templates = std::make_shared<TemplateRegistry>(TemplateRegistry::defaults());
    resolver = std::make_shared<FileResolver>(std::vector<fs::path>{dir, dir / "run"});
    cfg.backoff_ms = 0;
    config = cfg;
    rebuild();
  }

  void rebuild() { backends = std::make_unique<Backends>(config, recorder, store, templates, resolver); }

  // Requests whose X-Cotforge-Role header matches and whose path ends in `suffix`.
  std::vector<RecordedExchange> exchanges(const std::string& suffix, const std::string& role = "") const {
    std::vector<RecordedExchange> out;
    for (auto& e : recorder->exchanges()) {
      if (!e.url.ends_with(suffix)) continue;
      if (!role.empty() && find_header(e.headers, "X-Cotforge-Role").value_or("") != role) continue;
      out.push_back(e);
    }
    return out;
  }

  fs::path root;
  BackendConfig config;
  std::shared_ptr<MockBackend> mock;
  std::shared_ptr<RecordingTransport> recorder;
  std::shared_ptr<RunStore> store;
  std::shared_ptr<TemplateRegistry> templates;
  std::shared_ptr<FileResolver> resolver;
  std::unique_ptr<Backends> backends;
};

template <typename Fn>
ErrorKind error_kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::storage;
}

}  // namespace cotforge::testing
