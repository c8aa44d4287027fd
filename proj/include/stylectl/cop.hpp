/* Copyright 2026 The stylectl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Chain-of-Painting sessions: a linear, revertible history of stylization
// steps persisted as a directory
//
//   <dir>/manifest.json         schema in docs/session_manifest.md
//   <dir>/assets/<sha256>.png   content-addressed images and masks
//   <dir>/.lock                 advisory lock held while a step runs

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylectl/backend.hpp"
#include "stylectl/config_json.hpp"
#include "stylectl/errors.hpp"
#include "stylectl/hashing.hpp"
#include "stylectl/image.hpp"
#include "stylectl/image_io.hpp"
#include "stylectl/masking.hpp"
#include "stylectl/pipeline.hpp"

namespace stylectl {

inline constexpr int kSessionSchemaVersion = 1;

enum class AssetKind { Image, Mask };

inline std::string asset_kind_name(AssetKind k) { return k == AssetKind::Image ? "image" : "mask"; }
inline AssetKind parse_asset_kind(const std::string& s) {
  if (s == "image") return AssetKind::Image;
  if (s == "mask") return AssetKind::Mask;
  throw ArgumentError("unknown asset kind '" + s + "'");
}

struct AssetInfo {
  AssetKind kind = AssetKind::Image;
  int width = 0;
  int height = 0;
  int channels = 0;

  friend bool operator==(const AssetInfo&, const AssetInfo&) = default;
};

enum class StepStatus { Pending, Running, Done, Failed };

inline std::string status_name(StepStatus s) {
  switch (s) {
    case StepStatus::Pending:
      return "pending";
    case StepStatus::Running:
      return "running";
    case StepStatus::Done:
      return "done";
    case StepStatus::Failed:
      return "failed";
  }
  return "pending";
}
inline StepStatus parse_status(const std::string& s) {
  for (auto st : {StepStatus::Pending, StepStatus::Running, StepStatus::Done, StepStatus::Failed})
    if (status_name(st) == s) return st;
  throw ArgumentError("unknown step status '" + s + "'");
}

struct SessionStep {
  int index = 0;
  std::string source_ref;
  std::string reference_ref;
  std::optional<std::string> mask_ref;
  std::optional<std::string> reference_mask_ref;
  ControlConfig cfg;
  std::optional<std::string> output_ref;
  StepStatus status = StepStatus::Pending;
  std::string error;
  bool reverted = false;

  friend bool operator==(const SessionStep&, const SessionStep&) = default;
};

struct Session {
  std::string id;
  std::string created_at;  // ISO-8601 UTC
  std::string source_ref;
  std::vector<SessionStep> steps;      // the chain, oldest first
  std::vector<SessionStep> off_chain;  // reverted and failed steps, kept for audit
  std::map<std::string, AssetInfo> assets;
  std::filesystem::path dir;  // where the session lives; not part of equality

  // Output of the last step, or the source when the chain is empty.
  const std::string& head_ref() const {
    return steps.empty() ? source_ref : *steps.back().output_ref;
  }

  friend bool operator==(const Session& a, const Session& b) {
    return a.id == b.id && a.created_at == b.created_at && a.source_ref == b.source_ref &&
           a.steps == b.steps && a.off_chain == b.off_chain && a.assets == b.assets;
  }
};

// What a caller supplies for one step. Asset ids must already be in the
// session's store.
struct StepRequest {
  std::string reference_ref;
  std::optional<std::string> mask_ref;
  std::optional<std::string> reference_mask_ref;
  ControlConfig cfg;
};

// ---------------------------------------------------------------------------
// Manifest

namespace detail {

inline std::string utc_now_iso() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string random_id() {
  std::random_device rd;
  char buf[33];
  for (int i = 0; i < 4; ++i) std::snprintf(buf + 8 * i, 9, "%08x", rd());
  return std::string(buf, 32);
}

inline nlohmann::json optional_json(const std::optional<std::string>& s) {
  return s ? nlohmann::json(*s) : nlohmann::json(nullptr);
}
inline std::optional<std::string> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

inline nlohmann::json step_to_json(const SessionStep& s) {
  return {{"index", s.index},
          {"source", s.source_ref},
          {"reference", s.reference_ref},
          {"mask", optional_json(s.mask_ref)},
          {"reference_mask", optional_json(s.reference_mask_ref)},
          {"cfg", config_to_json(s.cfg)},
          {"output", optional_json(s.output_ref)},
          {"status", status_name(s.status)},
          {"error", s.error},
          {"reverted", s.reverted}};
}

inline SessionStep step_from_json(const nlohmann::json& j) {
  SessionStep s;
  s.index = j.at("index").get<int>();
  s.source_ref = j.at("source").get<std::string>();
  s.reference_ref = j.at("reference").get<std::string>();
  s.mask_ref = optional_from(j, "mask");
  s.reference_mask_ref = optional_from(j, "reference_mask");
  s.cfg = config_from_json(j.at("cfg"));
  s.output_ref = optional_from(j, "output");
  s.status = parse_status(j.at("status").get<std::string>());
  s.error = j.value("error", "");
  s.reverted = j.value("reverted", false);
  return s;
}

}  // namespace detail

inline nlohmann::json session_to_json(const Session& s) {
  nlohmann::json assets = nlohmann::json::object();
  for (const auto& [id, a] : s.assets)
    assets[id] = {{"kind", asset_kind_name(a.kind)},
                  {"width", a.width},
                  {"height", a.height},
                  {"channels", a.channels}};
  nlohmann::json steps = nlohmann::json::array(), off = nlohmann::json::array();
  for (const auto& st : s.steps) steps.push_back(detail::step_to_json(st));
  for (const auto& st : s.off_chain) off.push_back(detail::step_to_json(st));
  return {{"schema_version", kSessionSchemaVersion},
          {"session_id", s.id},
          {"created_at", s.created_at},
          {"source", s.source_ref},
          {"head", s.head_ref()},
          {"steps", std::move(steps)},
          {"off_chain", std::move(off)},
          {"assets", std::move(assets)}};
}

// Structural checks shared by load and in-memory use: every referenced asset
// is known, the chain is linear, and every done step has an output.
inline void validate_session(const Session& s) {
  auto need = [&](const std::string& id, const char* what) {
    if (!s.assets.count(id))
      throw IoError(std::string("session ") + s.id + ": " + what + " refers to unknown asset '" +
                    id + "'");
  };
  need(s.source_ref, "source");
  std::string prev = s.source_ref;
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    const auto& st = s.steps[i];
    if (st.index != static_cast<int>(i))
      throw IoError("session " + s.id + ": step indices are not contiguous");
    if (st.status != StepStatus::Done || !st.output_ref)
      throw IoError("session " + s.id + ": chain step " + std::to_string(i) + " is not done");
    if (st.source_ref != prev)
      throw IoError("session " + s.id + ": step " + std::to_string(i) +
                    " does not start from the previous output");
    need(st.source_ref, "step source");
    need(st.reference_ref, "step reference");
    if (st.mask_ref) need(*st.mask_ref, "step mask");
    if (st.reference_mask_ref) need(*st.reference_mask_ref, "step reference mask");
    need(*st.output_ref, "step output");
    prev = *st.output_ref;
  }
  for (const auto& st : s.off_chain) {
    need(st.source_ref, "off-chain step source");
    need(st.reference_ref, "off-chain step reference");
    if (st.mask_ref) need(*st.mask_ref, "off-chain step mask");
    if (st.reference_mask_ref) need(*st.reference_mask_ref, "off-chain step reference mask");
    if (st.output_ref) need(*st.output_ref, "off-chain step output");
  }
}

inline Session session_from_json(const nlohmann::json& j) {
  const int version = j.value("schema_version", -1);
  if (version != kSessionSchemaVersion)
    throw MigrationError("session manifest schema_version " + std::to_string(version) +
                         " is not supported (expected " + std::to_string(kSessionSchemaVersion) +
                         ")");
  Session s;
  try {
    s.id = j.at("session_id").get<std::string>();
    s.created_at = j.at("created_at").get<std::string>();
    s.source_ref = j.at("source").get<std::string>();
    for (const auto& [id, a] : j.at("assets").items())
      s.assets[id] = {parse_asset_kind(a.at("kind").get<std::string>()), a.at("width").get<int>(),
                      a.at("height").get<int>(), a.at("channels").get<int>()};
    for (const auto& st : j.at("steps")) s.steps.push_back(detail::step_from_json(st));
    for (const auto& st : j.value("off_chain", nlohmann::json::array()))
      s.off_chain.push_back(detail::step_from_json(st));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed session manifest: ") + e.what());
  }
  validate_session(s);
  return s;
}

// ---------------------------------------------------------------------------
// Asset store

inline std::filesystem::path asset_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / "assets" / (id + ".png");
}

inline Bytes read_asset(const Session& s, const std::string& id) {
  if (!s.assets.count(id)) throw NotFoundError("unknown asset '" + id + "'");
  return read_file_bytes(asset_path(s.dir, id));
}

inline Image load_asset_image(const Session& s, const std::string& id) {
  return decode_image(read_asset(s, id));
}

inline Mask load_asset_mask(const Session& s, const std::string& id) {
  if (!s.assets.count(id) || s.assets.at(id).kind != AssetKind::Mask)
    throw ArgumentError("asset '" + id + "' is not a mask");
  return decode_mask(read_asset(s, id));
}

// Writes the manifest with write-temp-then-rename.
inline void write_manifest(const Session& s) {
  write_file_atomic(s.dir / "manifest.json", session_to_json(s).dump(2) + "\n");
}

namespace detail {

// Canonical stored form: 8-bit PNG; masks become single-channel 0/255.
inline std::pair<Bytes, AssetInfo> canonical_asset(std::span<const std::uint8_t> bytes,
                                                   AssetKind kind) {
  Image img;
  try {
    img = decode_image(bytes);
  } catch (const Error& e) {
    throw ArgumentError(std::string("invalid ") + asset_kind_name(kind) + " upload: " + e.what());
  }
  if (kind == AssetKind::Mask) img = mask_to_image(mask_from_image(img));
  else img = quantize8(img);
  return {encode_png(img), {kind, img.width(), img.height(), img.channels()}};
}

}  // namespace detail

// Stores an image or mask and returns its content hash. Storing the same
// content twice yields the same id and one file.
inline std::string add_asset(Session& s, std::span<const std::uint8_t> bytes, AssetKind kind,
                             bool persist = true) {
  auto [png, info] = detail::canonical_asset(bytes, kind);
  const std::string id = sha256_hex(png);
  const auto path = asset_path(s.dir, id);
  if (!std::filesystem::exists(path)) {
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, png);
  }
  // A binary grayscale image and a mask can share canonical bytes; once
  // registered as a mask the asset stays usable as one.
  auto [it, inserted] = s.assets.emplace(id, info);
  if (!inserted && kind == AssetKind::Mask) it->second.kind = AssetKind::Mask;
  if (persist) write_manifest(s);
  return id;
}

inline std::string add_image_asset(Session& s, const Image& img, bool persist = true) {
  return add_asset(s, encode_png(quantize8(img)), AssetKind::Image, persist);
}

// ---------------------------------------------------------------------------
// Session operations

// An empty `id` draws a random one.
inline Session create_session(const std::filesystem::path& dir,
                              std::span<const std::uint8_t> source_bytes, std::string id = {}) {
  if (std::filesystem::exists(dir / "manifest.json"))
    throw ArgumentError("a session already exists in " + dir.string());
  Session s;
  s.dir = dir;
  // Validate before touching the filesystem.
  (void)detail::canonical_asset(source_bytes, AssetKind::Image);
  std::filesystem::create_directories(dir / "assets");
  s.id = id.empty() ? detail::random_id() : std::move(id);
  s.created_at = detail::utc_now_iso();
  s.source_ref = add_asset(s, source_bytes, AssetKind::Image, false);
  write_manifest(s);
  return s;
}

inline Session create_session(const std::filesystem::path& dir, const Image& source) {
  return create_session(dir, encode_png(quantize8(source)));
}

inline Session load_session(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw NotFoundError("no session manifest in " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  Session s = session_from_json(j);
  s.dir = dir;
  for (const auto& [id, info] : s.assets)
    if (!std::filesystem::exists(asset_path(dir, id)))
      throw IoError("session " + s.id + ": asset file for '" + id + "' is missing");
  return s;
}

// Writes the manifest to `dir` and copies any asset files not yet there.
// Saving to the session's own directory just rewrites the manifest.
inline void save_session(const Session& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "assets");
  for (const auto& [id, info] : s.assets) {
    const auto to = asset_path(dir, id);
    if (std::filesystem::exists(to)) continue;
    write_file_atomic(to, read_file_bytes(asset_path(s.dir, id)));
  }
  Session copy = s;
  copy.dir = dir;
  write_manifest(copy);
}

// Advisory lock on <dir>/.lock; one running step per session across threads
// and processes.
class SessionLock {
 public:
  explicit SessionLock(const std::filesystem::path& dir) {
    const auto path = dir / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw BusyError("session in " + dir.string() + " already has a running step");
    }
  }
  ~SessionLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  SessionLock(const SessionLock&) = delete;
  SessionLock& operator=(const SessionLock&) = delete;

 private:
  int fd_ = -1;
};

// A step that has been validated against the session but not yet run.
struct PreparedStep {
  SessionStep record;
  StylizeRequest request;
};

// Validates a step request against the current head. Throws for unknown
// assets, bad masks or an invalid config; nothing is modified.
inline PreparedStep prepare_step(const Session& s, const StepRequest& req) {
  req.cfg.validate();
  auto need = [&](const std::string& id, AssetKind kind, const char* what) {
    auto it = s.assets.find(id);
    if (it == s.assets.end())
      throw NotFoundError(std::string(what) + " asset '" + id + "' is not in the session");
    if (kind == AssetKind::Mask && it->second.kind != AssetKind::Mask)
      throw ArgumentError(std::string(what) + " asset '" + id + "' is not a mask");
  };
  need(req.reference_ref, AssetKind::Image, "reference");
  if (req.mask_ref) need(*req.mask_ref, AssetKind::Mask, "mask");
  if (req.reference_mask_ref) need(*req.reference_mask_ref, AssetKind::Mask, "reference mask");
  if (req.reference_mask_ref && !req.mask_ref)
    throw ArgumentError("a reference mask needs a mask");

  PreparedStep p;
  SessionStep& step = p.record;
  step.index = static_cast<int>(s.steps.size());
  step.source_ref = s.head_ref();
  step.reference_ref = req.reference_ref;
  step.mask_ref = req.mask_ref;
  step.reference_mask_ref = req.reference_mask_ref;
  step.cfg = req.cfg;
  step.status = StepStatus::Pending;

  StylizeRequest& sr = p.request;
  sr.source = load_asset_image(s, step.source_ref);
  sr.reference = load_asset_image(s, step.reference_ref);
  sr.cfg = req.cfg;
  if (req.mask_ref) {
    sr.source_mask = load_asset_mask(s, *req.mask_ref);
    if (sr.source_mask->width != sr.source.width() || sr.source_mask->height != sr.source.height())
      throw ArgumentError("mask is " + std::to_string(sr.source_mask->width) + "x" +
                          std::to_string(sr.source_mask->height) + ", head image is " +
                          std::to_string(sr.source.width()) + "x" +
                          std::to_string(sr.source.height()));
    sr.cop_mode = true;
  }
  if (req.reference_mask_ref) {
    sr.reference_mask = load_asset_mask(s, *req.reference_mask_ref);
    if (sr.reference_mask->width != sr.reference.width() ||
        sr.reference_mask->height != sr.reference.height())
      throw ArgumentError("reference mask does not match the reference image resolution");
  }
  return p;
}

// Outcome of running a prepared step: an output image or an error message.
struct StepOutcome {
  std::optional<Image> output;
  std::string error;
};

inline StepOutcome execute_step(const PreparedStep& p, const DenoiserBackend& backend,
                                const LatentCodec& codec, ProgressCallback on_progress = {}) {
  StylizeRequest sr = p.request;
  sr.on_progress = std::move(on_progress);
  try {
    return {stylize_fitted(sr, backend, codec).output, {}};
  } catch (const std::exception& e) {
    return {std::nullopt, e.what()};
  }
}

// Appends the outcome: a done step becomes the new head, a failed one goes to
// the audit list. The head must not have moved since prepare_step.
inline SessionStep commit_step(Session& s, PreparedStep p, const StepOutcome& outcome) {
  SessionStep step = std::move(p.record);
  if (step.source_ref != s.head_ref() || step.index != static_cast<int>(s.steps.size()))
    throw BusyError("session head moved while the step was running");
  if (outcome.output) {
    step.output_ref = add_image_asset(s, *outcome.output, false);
    step.status = StepStatus::Done;
    s.steps.push_back(step);
  } else {
    step.status = StepStatus::Failed;
    step.error = outcome.error;
    s.off_chain.push_back(step);
  }
  write_manifest(s);
  return step;
}

// Runs one step from the current head. A masked step keeps the previous
// head outside the mask; an unmasked step is a plain stylization. Request
// errors throw before anything runs; a failure inside the pipeline is
// recorded as a failed off-chain step, leaving the head unchanged.
inline SessionStep run_step(Session& s, const StepRequest& req, const DenoiserBackend& backend,
                            const LatentCodec& codec, ProgressCallback on_progress = {}) {
  SessionLock lock(s.dir);
  PreparedStep p = prepare_step(s, req);
  const StepOutcome outcome = execute_step(p, backend, codec, std::move(on_progress));
  return commit_step(s, std::move(p), outcome);
}

// Truncates the chain after `to_index`. Removed steps move to the audit
// list and their assets stay on disk.
inline void revert(Session& s, int to_index) {
  if (to_index < 0 || to_index >= static_cast<int>(s.steps.size()))
    throw ArgumentError("revert index " + std::to_string(to_index) + " outside [0, " +
                        std::to_string(static_cast<int>(s.steps.size()) - 1) + "]");
  SessionLock lock(s.dir);
  for (std::size_t i = static_cast<std::size_t>(to_index) + 1; i < s.steps.size(); ++i) {
    SessionStep st = s.steps[i];
    st.reverted = true;
    s.off_chain.push_back(std::move(st));
  }
  s.steps.resize(static_cast<std::size_t>(to_index) + 1);
  write_manifest(s);
}

}  // namespace stylectl
