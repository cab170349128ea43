#include "mlharness/manifest.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

namespace mlh {

// ---------------------------------------------------------------------------
// versions

std::string SemVer::to_string() const {
  return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(patch);
}

namespace {

std::optional<std::uint64_t> parse_component(std::string_view s) {
  if (s.empty() || s.size() > 19) return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split_dots(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    auto dot = s.find('.', start);
    parts.push_back(s.substr(start, dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

SemVer parse_semver(std::string_view text) {
  const auto parts = split_dots(text);
  if (parts.size() == 3) {
    auto a = parse_component(parts[0]);
    auto b = parse_component(parts[1]);
    auto c = parse_component(parts[2]);
    if (a && b && c) return {*a, *b, *c};
  }
  fail(Errc::ParseError, "not a MAJOR.MINOR.PATCH version: '" + std::string(text) + "'");
}

VersionConstraint parse_constraint(std::string_view text) {
  const auto t = trim(text);
  if (t.starts_with(">=")) {
    return {VersionConstraint::Kind::AtLeast, parse_semver(trim(t.substr(2)))};
  }
  if (t.starts_with("^")) {
    const auto parts = split_dots(t.substr(1));
    if (!parts.empty() && parts.size() <= 3) {
      std::uint64_t c[3] = {0, 0, 0};
      bool ok = true;
      bool wildcard_seen = false;
      for (std::size_t i = 0; i < parts.size() && ok; ++i) {
        if (parts[i] == "x" || parts[i] == "X" || parts[i] == "*") {
          ok = i > 0;  // the major version must be concrete
          wildcard_seen = true;
        } else if (auto v = parse_component(parts[i]); v && !wildcard_seen) {
          c[i] = *v;
        } else {
          ok = false;
        }
      }
      if (ok) return {VersionConstraint::Kind::Caret, {c[0], c[1], c[2]}};
    }
    fail(Errc::ParseError, "unsupported caret constraint '" + std::string(text) + "'");
  }
  try {
    return {VersionConstraint::Kind::Exact, parse_semver(t)};
  } catch (const Error&) {
    fail(Errc::ParseError, "unsupported version constraint '" + std::string(text) +
                               "' (expected X.Y.Z, ^X.x, ^X.Y.Z or >=X.Y.Z)");
  }
}

bool matches_constraint(const VersionConstraint& constraint, const SemVer& version) noexcept {
  switch (constraint.kind) {
    case VersionConstraint::Kind::Exact:
      return version == constraint.floor;
    case VersionConstraint::Kind::Caret:
      return version.major == constraint.floor.major && version >= constraint.floor;
    case VersionConstraint::Kind::AtLeast:
      return version >= constraint.floor;
  }
  return false;
}

bool matches_constraint(std::string_view constraint, std::string_view version) {
  return matches_constraint(parse_constraint(constraint), parse_semver(trim(version)));
}

// ---------------------------------------------------------------------------
// manifest document

std::string_view step_name(const StepSpec& step) {
  static constexpr std::string_view kNames[] = {"decode", "crop",    "resize",
                                                "mean",   "rescale", "layout"};
  return kNames[step.index()];
}

Ctx Manifest::hook_ctx() const {
  Ctx ctx;
  ctx["model.name"] = name;
  ctx["model.version"] = version;
  if (task) ctx["model.task"] = *task;
  ctx["framework.name"] = framework.name;
  ctx["framework.version"] = framework.version_constraint;
  if (const auto* ext = std::get_if<ExternalProcessing>(&processing)) {
    ctx["preprocess"] = ext->preprocess_source;
    ctx["postprocess"] = ext->postprocess_source;
  }
  return ctx;
}

namespace {

[[noreturn]] void invalid(const std::string& message) { fail(Errc::ValidationError, message); }

const std::set<std::string, std::less<>> kTopLevelKeys = {
    "name",  "version", "task",       "framework",   "inputs",        "outputs",
    "model", "steps",   "preprocess", "postprocess", "worker_launch"};

std::string scalar(const YAML::Node& node, const std::string& path) {
  if (!node) invalid("missing required field '" + path + "'");
  if (!node.IsScalar()) invalid("field '" + path + "' must be a scalar");
  return node.Scalar();
}

std::string required_string(const YAML::Node& parent, const std::string& key,
                            const std::string& path) {
  auto s = scalar(parent[key], path);
  if (s.empty()) invalid("field '" + path + "' must not be empty");
  return s;
}

double number(const YAML::Node& node, const std::string& path) {
  if (!node) invalid("missing required field '" + path + "'");
  try {
    return node.as<double>();
  } catch (const YAML::Exception&) {
    invalid("field '" + path + "' must be a number");
  }
}

std::uint64_t positive_int(const YAML::Node& node, const std::string& path) {
  long long v = 0;
  try {
    v = node.as<long long>();
  } catch (const YAML::Exception&) {
    invalid("field '" + path + "' must be an integer");
  }
  if (v <= 0) invalid("field '" + path + "' must be positive");
  return static_cast<std::uint64_t>(v);
}

bool boolean(const YAML::Node& node, const std::string& path) {
  try {
    return node.as<bool>();
  } catch (const YAML::Exception&) {
    invalid("field '" + path + "' must be a boolean");
  }
}

ElementType element_type(const YAML::Node& node, const std::string& path) {
  const auto s = scalar(node, path);
  auto t = element_type_from_name(s);
  if (!t) invalid("field '" + path + "' has unknown element type '" + s + "'");
  return *t;
}

Layout layout(const YAML::Node& node, const std::string& path) {
  const auto s = scalar(node, path);
  auto l = layout_from_name(s);
  if (!l) invalid("field '" + path + "' must be NHWC or NCHW, got '" + s + "'");
  return *l;
}

std::vector<IoSpec> io_specs(const YAML::Node& node, const std::string& path) {
  if (!node) invalid("missing required field '" + path + "'");
  if (!node.IsSequence() || node.size() == 0) {
    invalid("field '" + path + "' must be a non-empty list");
  }
  std::vector<IoSpec> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const auto item_path = path + "[" + std::to_string(i) + "]";
    const auto& item = node[i];
    if (!item.IsMap()) invalid("field '" + item_path + "' must be a mapping");
    out.push_back({required_string(item, "type", item_path + ".type"),
                   element_type(item["element_type"], item_path + ".element_type")});
  }
  return out;
}

DecodeStep decode_step(const YAML::Node& node) {
  DecodeStep d;
  if (node["element_type"]) {
    d.element_type = element_type(node["element_type"], "steps.decode.element_type");
    if (d.element_type != ElementType::UInt8 && d.element_type != ElementType::Int8) {
      invalid("field 'steps.decode.element_type' must be uint8 or int8");
    }
  }
  if (node["data_layout"]) d.data_layout = layout(node["data_layout"], "steps.decode.data_layout");
  if (node["color_layout"]) {
    const auto s = scalar(node["color_layout"], "steps.decode.color_layout");
    if (s == "RGB") {
      d.color_layout = ColorLayout::RGB;
    } else if (s == "BGR") {
      d.color_layout = ColorLayout::BGR;
    } else {
      invalid("field 'steps.decode.color_layout' must be RGB or BGR, got '" + s + "'");
    }
  }
  return d;
}

CropStep crop_step(const YAML::Node& node) {
  if (node["method"]) {
    const auto m = scalar(node["method"], "steps.crop.method");
    if (m != "center") invalid("unsupported crop method '" + m + "'");
  }
  CropStep c{number(node["percentage"], "steps.crop.percentage")};
  if (!(c.percentage > 0.0 && c.percentage <= 100.0)) {
    invalid("field 'steps.crop.percentage' must be in (0, 100]");
  }
  return c;
}

ResizeStep resize_step(const YAML::Node& node) {
  const auto& dims = node["dimensions"];
  if (!dims) invalid("missing required field 'steps.resize.dimensions'");
  if (!dims.IsSequence() || dims.size() != 3) {
    invalid("field 'steps.resize.dimensions' must be [C, H, W]");
  }
  ResizeStep r;
  r.channels = positive_int(dims[0], "steps.resize.dimensions[0]");
  r.height = positive_int(dims[1], "steps.resize.dimensions[1]");
  r.width = positive_int(dims[2], "steps.resize.dimensions[2]");
  if (node["method"]) {
    const auto m = scalar(node["method"], "steps.resize.method");
    if (m != "bilinear") invalid("unsupported resize method '" + m + "'");
  }
  if (node["keep_aspect_ratio"]) {
    r.keep_aspect_ratio = boolean(node["keep_aspect_ratio"], "steps.resize.keep_aspect_ratio");
  }
  return r;
}

std::vector<StepSpec> steps(const YAML::Node& node) {
  if (!node.IsMap()) invalid("field 'steps' must be a mapping");
  std::vector<StepSpec> out;
  for (const auto& entry : node) {
    const auto key = entry.first.Scalar();
    const auto& value = entry.second;
    const auto path = "steps." + key;
    if (key == "decode") {
      out.emplace_back(decode_step(value));
    } else if (key == "crop") {
      out.emplace_back(crop_step(value));
    } else if (key == "resize") {
      out.emplace_back(resize_step(value));
    } else if (key == "mean") {
      if (!value.IsSequence() || value.size() == 0) invalid("field 'steps.mean' must be a list");
      MeanStep m;
      for (std::size_t i = 0; i < value.size(); ++i) {
        m.mean.push_back(number(value[i], path + "[" + std::to_string(i) + "]"));
      }
      out.emplace_back(std::move(m));
    } else if (key == "rescale") {
      RescaleStep r{number(value, path)};
      if (r.rescale == 0.0) invalid("field 'steps.rescale' must be non-zero");
      out.emplace_back(r);
    } else if (key == "layout") {
      out.emplace_back(LayoutStep{layout(value, path)});
    } else {
      invalid("unknown step '" + key + "'");
    }
  }
  return out;
}

std::string normalized_checksum(const std::string& s) {
  if (s.size() != 64 || !std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isxdigit(c) != 0;
      })) {
    invalid("field 'model.graph_checksum' must be 64 hex digits (SHA-256)");
  }
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower;
}

}  // namespace

Manifest parse_manifest(std::string_view text, std::vector<std::string>* warnings) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    fail(Errc::SyntaxError, std::string("malformed manifest: ") + e.what());
  }
  if (!root || root.IsNull()) fail(Errc::SyntaxError, "empty manifest document");
  if (!root.IsMap()) fail(Errc::SyntaxError, "manifest document must be a mapping");

  for (const auto& entry : root) {
    const auto key = entry.first.Scalar();
    if (!kTopLevelKeys.contains(key) && warnings) {
      warnings->push_back("unknown top-level key '" + key + "'");
    }
  }

  Manifest m;
  m.name = required_string(root, "name", "name");
  m.version = required_string(root, "version", "version");
  try {
    parse_semver(m.version);
  } catch (const Error&) {
    invalid("field 'version' must be MAJOR.MINOR.PATCH, got '" + m.version + "'");
  }
  if (root["task"]) m.task = scalar(root["task"], "task");

  const auto& fw = root["framework"];
  if (!fw) invalid("missing required field 'framework'");
  if (!fw.IsMap()) invalid("field 'framework' must be a mapping");
  m.framework.name = required_string(fw, "name", "framework.name");
  m.framework.version_constraint = required_string(fw, "version", "framework.version");
  try {
    parse_constraint(m.framework.version_constraint);
  } catch (const Error& e) {
    invalid(std::string("field 'framework.version': ") + e.what());
  }

  m.inputs = io_specs(root["inputs"], "inputs");
  m.outputs = io_specs(root["outputs"], "outputs");

  const auto& model = root["model"];
  if (!model) invalid("missing required field 'model'");
  if (!model.IsMap()) invalid("field 'model' must be a mapping");
  m.model_source.graph_path = required_string(model, "graph_path", "model.graph_path");
  m.model_source.graph_checksum =
      normalized_checksum(required_string(model, "graph_checksum", "model.graph_checksum"));

  const bool has_steps = static_cast<bool>(root["steps"]);
  const bool has_scripts = root["preprocess"] || root["postprocess"];
  if (has_steps && has_scripts) {
    invalid("manifest has both built-in 'steps' and 'preprocess'/'postprocess' scripts");
  }
  if (!has_steps && !has_scripts) {
    invalid("manifest needs either 'steps' or 'preprocess'/'postprocess' scripts");
  }
  if (has_steps) {
    if (root["worker_launch"]) invalid("'worker_launch' is only valid with external scripts");
    m.processing = steps(root["steps"]);
  } else {
    ExternalProcessing ext;
    if (root["preprocess"]) ext.preprocess_source = scalar(root["preprocess"], "preprocess");
    if (root["postprocess"]) ext.postprocess_source = scalar(root["postprocess"], "postprocess");
    ext.worker_launch = root["worker_launch"]
                            ? required_string(root, "worker_launch", "worker_launch")
                            : std::string(kDefaultWorkerLaunch);
    m.processing = std::move(ext);
  }
  return m;
}

namespace {

void emit_io(YAML::Emitter& out, const char* key, const std::vector<IoSpec>& specs) {
  out << YAML::Key << key << YAML::Value << YAML::BeginSeq;
  for (const auto& io : specs) {
    out << YAML::BeginMap << YAML::Key << "type" << YAML::Value << io.modality
        << YAML::Key << "element_type" << YAML::Value
        << std::string(element_type_name(io.element_type)) << YAML::EndMap;
  }
  out << YAML::EndSeq;
}

// Literal blocks only round-trip when the text ends in exactly one newline.
void emit_source(YAML::Emitter& out, const std::string& text) {
  const bool literal = text.size() >= 1 && text.back() == '\n' &&
                       (text.size() < 2 || text[text.size() - 2] != '\n') &&
                       text.find('\r') == std::string::npos &&
                       text.find('\t') == std::string::npos && text.front() != ' ';
  if (literal) {
    out << YAML::Literal << text;
  } else {
    out << YAML::DoubleQuoted << text;
  }
}

struct StepEmitter {
  YAML::Emitter& out;

  void operator()(const DecodeStep& d) const {
    out << YAML::BeginMap << YAML::Key << "element_type" << YAML::Value
        << std::string(element_type_name(d.element_type)) << YAML::Key << "data_layout"
        << YAML::Value << std::string(layout_name(d.data_layout)) << YAML::Key
        << "color_layout" << YAML::Value
        << (d.color_layout == ColorLayout::RGB ? "RGB" : "BGR") << YAML::EndMap;
  }
  void operator()(const CropStep& c) const {
    out << YAML::BeginMap << YAML::Key << "method" << YAML::Value << "center" << YAML::Key
        << "percentage" << YAML::Value << c.percentage << YAML::EndMap;
  }
  void operator()(const ResizeStep& r) const {
    out << YAML::BeginMap << YAML::Key << "dimensions" << YAML::Value << YAML::Flow
        << YAML::BeginSeq << r.channels << r.height << r.width << YAML::EndSeq << YAML::Key
        << "method" << YAML::Value << "bilinear" << YAML::Key << "keep_aspect_ratio"
        << YAML::Value << r.keep_aspect_ratio << YAML::EndMap;
  }
  void operator()(const MeanStep& m) const {
    out << YAML::Flow << YAML::BeginSeq;
    for (double v : m.mean) out << v;
    out << YAML::EndSeq;
  }
  void operator()(const RescaleStep& r) const { out << r.rescale; }
  void operator()(const LayoutStep& l) const { out << std::string(layout_name(l.layout)); }
};

}  // namespace

std::string serialize_manifest(const Manifest& m) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << m.name;
  out << YAML::Key << "version" << YAML::Value << YAML::DoubleQuoted << m.version;
  if (m.task) out << YAML::Key << "task" << YAML::Value << YAML::DoubleQuoted << *m.task;
  out << YAML::Key << "framework" << YAML::Value << YAML::BeginMap << YAML::Key << "name"
      << YAML::Value << YAML::DoubleQuoted << m.framework.name << YAML::Key << "version"
      << YAML::Value << YAML::DoubleQuoted << m.framework.version_constraint << YAML::EndMap;
  emit_io(out, "inputs", m.inputs);
  emit_io(out, "outputs", m.outputs);
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap << YAML::Key << "graph_path"
      << YAML::Value << YAML::DoubleQuoted << m.model_source.graph_path << YAML::Key
      << "graph_checksum" << YAML::Value << m.model_source.graph_checksum << YAML::EndMap;
  if (const auto* st = std::get_if<std::vector<StepSpec>>(&m.processing)) {
    out << YAML::Key << "steps" << YAML::Value << YAML::BeginMap;
    for (const auto& step : *st) {
      out << YAML::Key << std::string(step_name(step)) << YAML::Value;
      std::visit(StepEmitter{out}, step);
    }
    out << YAML::EndMap;
  } else {
    const auto& ext = std::get<ExternalProcessing>(m.processing);
    out << YAML::Key << "preprocess" << YAML::Value;
    emit_source(out, ext.preprocess_source);
    out << YAML::Key << "postprocess" << YAML::Value;
    emit_source(out, ext.postprocess_source);
    out << YAML::Key << "worker_launch" << YAML::Value << YAML::DoubleQuoted
        << ext.worker_launch;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace mlh
