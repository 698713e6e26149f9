#include "cotforge/store.hpp"

#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "cotforge/errors.hpp"

namespace cotforge {

namespace fs = std::filesystem;

namespace {

fs::path unique_temp_path(const fs::path& dir) {
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream name;
  name << ".tmp-" << ::getpid() << '-' << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '-'
       << counter.fetch_add(1);
  return dir / name.str();
}

void write_plain(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::storage, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) fail(ErrorKind::storage, "short write to " + path.string());
}

}  // namespace

CacheKey CacheKey::of(std::string_view backend_id, std::string_view canonical_request, std::int64_t seed) {
  std::string material;
  material.reserve(backend_id.size() + canonical_request.size() + 24);
  material.append(backend_id).push_back('\n');
  material.append(canonical_request).push_back('\n');
  material.append(std::to_string(seed));
  return CacheKey{sha256(material)};
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  auto dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  auto tmp = unique_temp_path(dir.empty() ? fs::path(".") : dir);
  write_plain(tmp, bytes);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrorKind::storage, "cannot rename into " + path.string() + ": " + ec.message());
  }
}

std::optional<std::string> read_file_if_exists(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "cache", ec);
  fs::create_directories(root_ / "images", ec);
  if (ec) fail(ErrorKind::storage, "cannot create run store at " + root_.string() + ": " + ec.message());
}

bool RunStore::link_if_absent(const fs::path& target, std::string_view value) const {
  if (fs::exists(target)) return false;
  auto tmp = unique_temp_path(target.parent_path());
  write_plain(tmp, value);
  // link(2) fails with EEXIST if another writer got there first.
  int rc = ::link(tmp.c_str(), target.c_str());
  int err = errno;
  fs::remove(tmp);
  if (rc == 0) return true;
  if (err == EEXIST) return false;
  fail(ErrorKind::storage, "cannot store " + target.string() + ": " + std::strerror(err));
}

bool RunStore::put_if_absent(const CacheKey& key, std::string_view value) const {
  return link_if_absent(root_ / "cache" / key.hex(), value);
}

std::optional<std::string> RunStore::get(const CacheKey& key) const {
  return read_file_if_exists(root_ / "cache" / key.hex());
}

ImageRef RunStore::put_image(std::string_view bytes, std::int64_t seed,
                             std::optional<std::string> source_prompt_id) const {
  ImageRef ref;
  ref.content_hash = sha256(bytes);
  ref.locator = "images/" + to_hex(ref.content_hash) + "." + std::string(image_extension(bytes));
  ref.seed = seed;
  ref.source_prompt_id = std::move(source_prompt_id);
  link_if_absent(root_ / ref.locator, bytes);
  return ref;
}

std::string FileResolver::load(const ImageRef& ref) const {
  fs::path loc(ref.locator);
  std::optional<std::string> bytes;
  if (loc.is_absolute()) {
    bytes = read_file_if_exists(loc);
  } else {
    for (const auto& root : roots_)
      if ((bytes = read_file_if_exists(root / loc))) break;
  }
  if (!bytes) fail(ErrorKind::missing_artifact, "cannot resolve image " + ref.locator);
  if (sha256(*bytes) != ref.content_hash)
    fail(ErrorKind::missing_artifact, "content hash mismatch for " + ref.locator);
  return *std::move(bytes);
}

std::string_view image_extension(std::string_view bytes) {
  if (bytes.starts_with("\x89PNG")) return "png";
  if (bytes.starts_with("\xff\xd8\xff")) return "jpg";
  if (bytes.starts_with("P6")) return "ppm";
  if (bytes.starts_with("RIFF") && bytes.size() > 12 && bytes.substr(8, 4) == "WEBP") return "webp";
  return "bin";
}

}  // namespace cotforge
