#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mlharness/tensor.hpp"

namespace mlh {

struct SemVer {
  std::uint64_t major = 0;
  std::uint64_t minor = 0;
  std::uint64_t patch = 0;

  friend auto operator<=>(const SemVer&, const SemVer&) = default;
  std::string to_string() const;
};

// MAJOR.MINOR.PATCH, decimal, no pre-release or build suffix.
SemVer parse_semver(std::string_view text);

// Supported forms: exact "X.Y.Z", caret "^X.x" / "^X.Y" / "^X.Y.Z"
// (same major, at least the floor; "x" counts as 0) and ">=X.Y.Z".
struct VersionConstraint {
  enum class Kind { Exact, Caret, AtLeast };
  Kind kind = Kind::Exact;
  SemVer floor;
};

VersionConstraint parse_constraint(std::string_view text);
bool matches_constraint(const VersionConstraint& constraint, const SemVer& version) noexcept;
bool matches_constraint(std::string_view constraint, std::string_view version);

enum class ColorLayout { RGB, BGR };

struct FrameworkSpec {
  std::string name;
  std::string version_constraint;

  friend bool operator==(const FrameworkSpec&, const FrameworkSpec&) = default;
};

struct IoSpec {
  std::string modality;
  ElementType element_type = ElementType::Float32;

  friend bool operator==(const IoSpec&, const IoSpec&) = default;
};

struct ModelSource {
  std::string graph_path;
  std::string graph_checksum;  // 64 lowercase hex digits

  friend bool operator==(const ModelSource&, const ModelSource&) = default;
};

struct DecodeStep {
  ElementType element_type = ElementType::UInt8;
  Layout data_layout = Layout::NHWC;
  ColorLayout color_layout = ColorLayout::RGB;
  friend bool operator==(const DecodeStep&, const DecodeStep&) = default;
};

struct CropStep {
  double percentage = 100.0;  // center crop, in (0, 100]
  friend bool operator==(const CropStep&, const CropStep&) = default;
};

struct ResizeStep {
  // The manifest writes dimensions as [C, H, W].
  std::uint64_t channels = 0;
  std::uint64_t height = 0;
  std::uint64_t width = 0;
  bool keep_aspect_ratio = false;
  friend bool operator==(const ResizeStep&, const ResizeStep&) = default;
};

struct MeanStep {
  std::vector<double> mean;
  friend bool operator==(const MeanStep&, const MeanStep&) = default;
};

struct RescaleStep {
  double rescale = 1.0;
  friend bool operator==(const RescaleStep&, const RescaleStep&) = default;
};

struct LayoutStep {
  Layout layout = Layout::NHWC;
  friend bool operator==(const LayoutStep&, const LayoutStep&) = default;
};

using StepSpec =
    std::variant<DecodeStep, CropStep, ResizeStep, MeanStep, RescaleStep, LayoutStep>;

std::string_view step_name(const StepSpec& step);

struct ExternalProcessing {
  std::string preprocess_source;
  std::string postprocess_source;
  std::string worker_launch;
  friend bool operator==(const ExternalProcessing&, const ExternalProcessing&) = default;
};

inline constexpr std::string_view kDefaultWorkerLaunch = "mlharness-worker";

// Built-in steps (in manifest order) or external scripts, never both.
using ProcessingSpec = std::variant<std::vector<StepSpec>, ExternalProcessing>;

struct Manifest {
  std::string name;
  std::string version;
  std::optional<std::string> task;
  FrameworkSpec framework;
  std::vector<IoSpec> inputs;
  std::vector<IoSpec> outputs;
  ModelSource model_source;
  ProcessingSpec processing;

  friend bool operator==(const Manifest&, const Manifest&) = default;

  bool uses_external_processing() const noexcept {
    return std::holds_alternative<ExternalProcessing>(processing);
  }
  // String configuration handed to processing hooks.
  Ctx hook_ctx() const;
};

// Parses and validates a manifest document. Unknown top-level keys are
// reported through `warnings` (when given) and otherwise ignored.
Manifest parse_manifest(std::string_view text, std::vector<std::string>* warnings = nullptr);

// Canonical YAML form; parse_manifest(serialize_manifest(m)) == m.
std::string serialize_manifest(const Manifest& manifest);

std::string sha256_hex(std::span<const std::uint8_t> content);
std::string sha256_file_hex(const std::filesystem::path& path);

// True iff SHA-256(content) equals `expected` (case-insensitive).
// FormatError when `expected` is not 64 hex digits.
bool verify_checksum(std::span<const std::uint8_t> content, std::string_view expected);

// Downloads `url` into `destination`. Throws FetchError.
using Fetcher = std::function<void(const std::string& url,
                                   const std::filesystem::path& destination)>;

// libcurl-backed fetcher (http, https, file URLs).
void curl_fetch(const std::string& url, const std::filesystem::path& destination);

// Returns a verified local copy of the model graph. Local paths are checked
// in place (relative paths resolve against `base_dir`); URLs are fetched once
// into `cache_dir` keyed by checksum and reused afterwards.
std::filesystem::path resolve_model_source(const ModelSource& source,
                                           const std::filesystem::path& cache_dir,
                                           const Fetcher& fetch = curl_fetch,
                                           const std::filesystem::path& base_dir = {});

}  // namespace mlh
