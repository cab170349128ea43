#include <curl/curl.h>
#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <memory>
#include <mutex>

#include "mlharness/manifest.hpp"

namespace mlh {

namespace fs = std::filesystem;

namespace {

std::string to_hex(const unsigned char* digest, unsigned int len) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kDigits[digest[i] >> 4]);
    out.push_back(kDigits[digest[i] & 0xf]);
  }
  return out;
}

struct DigestContext {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free};
  DigestContext() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
      fail(Errc::IoError, "cannot initialise SHA-256");
    }
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx.get(), data, n); }
  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    return to_hex(digest, len);
  }
};

bool is_hex_digest(std::string_view s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](unsigned char c) {
           return std::isxdigit(c) != 0;
         });
}

bool equal_ignore_case(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

// Exclusive advisory lock on a sibling lock file for the lifetime of the object.
class PathLock {
 public:
  explicit PathLock(const fs::path& lock_path) {
    fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(Errc::IoError, "cannot open lock file " + lock_path.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      fail(Errc::IoError, "cannot lock " + lock_path.string());
    }
  }
  ~PathLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  PathLock(const PathLock&) = delete;
  PathLock& operator=(const PathLock&) = delete;

 private:
  int fd_ = -1;
};

std::size_t write_to_stream(char* data, std::size_t size, std::size_t n, void* user) {
  auto* out = static_cast<std::ofstream*>(user);
  out->write(data, static_cast<std::streamsize>(size * n));
  return out->good() ? size * n : 0;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> content) {
  DigestContext d;
  d.update(content.data(), content.size());
  return d.hex();
}

std::string sha256_file_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot read " + path.string());
  DigestContext d;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    d.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return d.hex();
}

bool verify_checksum(std::span<const std::uint8_t> content, std::string_view expected) {
  if (!is_hex_digest(expected)) {
    fail(Errc::FormatError, "expected checksum must be 64 hex digits, got " +
                                std::to_string(expected.size()) + " characters");
  }
  return equal_ignore_case(sha256_hex(content), expected);
}

void curl_fetch(const std::string& url, const fs::path& destination) {
  static std::once_flag init;
  std::call_once(init, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });

  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::FetchError, "cannot write " + destination.string());

  std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(),
                                                           &curl_easy_cleanup);
  if (!curl) fail(Errc::FetchError, "curl_easy_init failed");
  curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, &write_to_stream);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, &out);
  const auto rc = curl_easy_perform(curl.get());
  out.close();
  if (rc != CURLE_OK) {
    fail(Errc::FetchError, "fetching " + url + " failed: " + curl_easy_strerror(rc));
  }
}

fs::path resolve_model_source(const ModelSource& source, const fs::path& cache_dir,
                              const Fetcher& fetch, const fs::path& base_dir) {
  if (!is_hex_digest(source.graph_checksum)) {
    fail(Errc::FormatError, "graph_checksum must be 64 hex digits");
  }
  const bool is_url = source.graph_path.find("://") != std::string::npos;

  if (!is_url) {
    fs::path p = source.graph_path;
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    if (!fs::is_regular_file(p)) fail(Errc::FetchError, "model graph not found: " + p.string());
    const auto digest = sha256_file_hex(p);
    if (!equal_ignore_case(digest, source.graph_checksum)) {
      fail(Errc::ChecksumMismatch, "checksum mismatch for " + p.string() + ": got " + digest);
    }
    return p;
  }

  std::error_code ec;
  fs::create_directories(cache_dir, ec);
  if (ec) fail(Errc::FetchError, "cannot create cache dir " + cache_dir.string());

  std::string key = source.graph_checksum;
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const auto cached = cache_dir / key;
  PathLock lock(cache_dir / (key + ".lock"));

  if (fs::exists(cached)) {
    const auto digest = sha256_file_hex(cached);
    if (!equal_ignore_case(digest, key)) {
      fail(Errc::ChecksumMismatch, "cached copy " + cached.string() + " is corrupt: got " + digest);
    }
    return cached;
  }

  const auto partial = cache_dir / (key + ".partial");
  try {
    fetch(source.graph_path, partial);
  } catch (const Error&) {
    fs::remove(partial, ec);
    throw;
  }
  const auto digest = sha256_file_hex(partial);
  if (!equal_ignore_case(digest, key)) {
    fs::remove(partial, ec);
    fail(Errc::ChecksumMismatch, "downloaded " + source.graph_path + " has checksum " + digest);
  }
  fs::rename(partial, cached);
  return cached;
}

}  // namespace mlh
