#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotforge/digest.hpp"
#include "cotforge/types.hpp"

namespace cotforge {

// Digest of (backend_id, canonical request bytes, seed).
struct CacheKey {
  Digest digest{};

  static CacheKey of(std::string_view backend_id, std::string_view canonical_request, std::int64_t seed);
  std::string hex() const { return to_hex(digest); }
  bool operator==(const CacheKey&) const = default;
};

// Writes via a temporary file and rename so readers never see partial data.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::optional<std::string> read_file_if_exists(const std::filesystem::path& path);

// Content-addressed artifact and response store rooted at a run directory:
//   root/cache/<key>      backend responses
//   root/images/<sha>.ext generated images
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  // First writer wins; returns false when the key already held a value.
  bool put_if_absent(const CacheKey& key, std::string_view value) const;
  std::optional<std::string> get(const CacheKey& key) const;

  ImageRef put_image(std::string_view bytes, std::int64_t seed, std::optional<std::string> source_prompt_id) const;

 private:
  bool link_if_absent(const std::filesystem::path& target, std::string_view value) const;

  std::filesystem::path root_;
};

// Resolves locators against a list of base directories (absolute locators
// are used as-is) and verifies the content hash of whatever it finds.
class FileResolver : public ArtifactResolver {
 public:
  explicit FileResolver(std::vector<std::filesystem::path> roots) : roots_(std::move(roots)) {}
  std::string load(const ImageRef& ref) const override;

 private:
  std::vector<std::filesystem::path> roots_;
};

// Guesses a file extension from magic bytes.
std::string_view image_extension(std::string_view bytes);

}  // namespace cotforge
