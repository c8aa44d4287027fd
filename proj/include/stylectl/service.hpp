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

// HTTP/JSON front end for chain sessions. Routes:
//
//   POST /sessions                   image bytes          -> 201 {session_id, ...manifest}
//   GET  /sessions                                        -> 200 [session_id]
//   GET  /sessions/:id                                    -> 200 manifest
//   POST /sessions/:id/assets?kind=  image or mask bytes  -> 201 {asset_id, kind, width, height}
//   POST /sessions/:id/steps         JSON step request    -> 202 {job_id}
//   POST /sessions/:id/revert        {"to_index": k}      -> 200 manifest
//   GET  /jobs/:id                                        -> 200 job state
//   GET  /assets/:id                                      -> 200 image/png
//
// Errors are {"error": message} with 400 malformed request, 404 unknown id,
// 409 step already queued or running, 422 invalid parameters, 500 otherwise.
// No authentication: meant for a single local user.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "stylectl/backend.hpp"
#include "stylectl/config_json.hpp"
#include "stylectl/cop.hpp"
#include "stylectl/errors.hpp"

// After the Eigen users: resolv.h defines a _res macro.
#include <httplib.h>

namespace stylectl {

enum class JobStatus { Queued, Running, Done, Failed };

inline std::string job_status_name(JobStatus s) {
  switch (s) {
    case JobStatus::Queued:
      return "queued";
    case JobStatus::Running:
      return "running";
    case JobStatus::Done:
      return "done";
    case JobStatus::Failed:
      return "failed";
  }
  return "queued";
}

struct JobState {
  std::string job_id;
  std::string session_id;
  int step_index = 0;
  JobStatus status = JobStatus::Queued;
  double progress = 0.0;  // completed / total denoising steps
  int completed_steps = 0;
  int total_steps = 0;
  int progress_events = 0;  // callbacks received; equals total_steps when done
  std::optional<std::string> output_ref;
  std::optional<std::string> error;

  nlohmann::json to_json() const {
    return {{"job_id", job_id},
            {"session_id", session_id},
            {"step_index", step_index},
            {"status", job_status_name(status)},
            {"progress", progress},
            {"completed_steps", completed_steps},
            {"total_steps", total_steps},
            {"progress_events", progress_events},
            {"output", output_ref ? nlohmann::json(*output_ref) : nlohmann::json(nullptr)},
            {"error", error ? nlohmann::json(*error) : nlohmann::json(nullptr)}};
  }
};

struct ServiceOptions {
  std::filesystem::path root;  // one subdirectory per session
  int workers = 1;
  std::size_t max_upload_bytes = 64u << 20;
};

class Service {
 public:
  Service(ServiceOptions opt, std::shared_ptr<const DenoiserBackend> backend,
          std::shared_ptr<const LatentCodec> codec)
      : opt_(std::move(opt)), backend_(std::move(backend)), codec_(std::move(codec)) {
    if (opt_.workers < 1) throw ConfigurationError("service needs at least one worker");
    if (!backend_ || !codec_) throw ConfigurationError("service needs a backend and a codec");
    std::filesystem::create_directories(opt_.root);
    for (const auto& e : std::filesystem::directory_iterator(opt_.root))
      if (e.is_directory() && std::filesystem::exists(e.path() / "manifest.json")) {
        Session s = load_session(e.path());
        auto entry = std::make_shared<Entry>();
        entry->session = std::move(s);
        sessions_.emplace(entry->session.id, entry);
      }
    for (int i = 0; i < opt_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  }

  ~Service() {
    {
      std::lock_guard lock(queue_mu_);
      stopping_ = true;
    }
    queue_cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void mount(httplib::Server& srv) {
    srv.set_payload_max_length(opt_.max_upload_bytes);
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv.Post("/sessions", wrap([this](const auto& req, auto& res) { create(req, res); }));
    srv.Get("/sessions", wrap([this](const auto&, auto& res) { list(res); }));
    srv.Get("/sessions/:id", wrap([this](const auto& req, auto& res) { manifest(req, res); }));
    srv.Post("/sessions/:id/assets", wrap([this](const auto& req, auto& res) { upload(req, res); }));
    srv.Post("/sessions/:id/steps", wrap([this](const auto& req, auto& res) { submit(req, res); }));
    srv.Post("/sessions/:id/revert",
             wrap([this](const auto& req, auto& res) { do_revert(req, res); }));
    srv.Get("/jobs/:id", wrap([this](const auto& req, auto& res) { job(req, res); }));
    srv.Get("/assets/:id", wrap([this](const auto& req, auto& res) { asset(req, res); }));
  }

  std::optional<JobState> job_state(const std::string& id) const {
    std::lock_guard lock(jobs_mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    std::lock_guard jl(it->second->mu);
    return it->second->state;
  }

  std::filesystem::path session_dir(const std::string& id) const { return opt_.root / id; }

 private:
  struct Entry {
    std::mutex mu;
    Session session;
    bool busy = false;  // a job is queued or running
  };

  struct Job {
    mutable std::mutex mu;
    JobState state;
    std::shared_ptr<Entry> entry;
    PreparedStep prepared;
    std::unique_ptr<SessionLock> lock;
  };

  // HTTP-facing errors.
  struct HttpError : Error {
    HttpError(int status, const std::string& msg) : Error(msg), status(status) {}
    int status;
  };

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static void send_json(httplib::Response& res, int status, const nlohmann::json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      auto fail = [&](int status, const std::string& msg) {
        send_json(res, status, {{"error", msg}});
      };
      try {
        h(req, res);
      } catch (const HttpError& e) {
        fail(e.status, e.what());
      } catch (const NotFoundError& e) {
        fail(404, e.what());
      } catch (const BusyError& e) {
        fail(409, e.what());
      } catch (const ArgumentError& e) {
        fail(422, e.what());
      } catch (const ConfigurationError& e) {
        fail(422, e.what());
      } catch (const nlohmann::json::exception& e) {
        fail(400, std::string("malformed JSON: ") + e.what());
      } catch (const std::exception& e) {
        fail(500, e.what());
      }
    };
  }

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
    return it->second;
  }

  // Raw image bytes, or the first file part of a multipart upload.
  static std::string upload_body(const httplib::Request& req) {
    if (req.is_multipart_form_data()) {
      if (req.files.empty()) throw HttpError(400, "multipart upload has no file part");
      return req.files.begin()->second.content;
    }
    const std::string type = req.get_header_value("Content-Type");
    if (!(type.starts_with("image/") || type == "application/octet-stream"))
      throw HttpError(400, "expected an image upload, got Content-Type '" + type + "'");
    if (req.body.empty()) throw HttpError(400, "empty upload");
    return req.body;
  }

  static std::span<const std::uint8_t> as_bytes(const std::string& s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
  }

  static nlohmann::json parse_json_body(const httplib::Request& req) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      throw HttpError(400, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
    return j;
  }

  void create(const httplib::Request& req, httplib::Response& res) {
    const std::string body = upload_body(req);
    const std::string id = detail::random_id();
    Session s;
    try {
      s = create_session(session_dir(id), as_bytes(body), id);
    } catch (const ArgumentError& e) {
      std::filesystem::remove_all(session_dir(id));
      throw HttpError(400, e.what());
    }
    auto entry = std::make_shared<Entry>();
    entry->session = s;
    {
      std::lock_guard lock(sessions_mu_);
      sessions_.emplace(id, entry);
    }
    nlohmann::json j = session_to_json(s);
    send_json(res, 201, j);
  }

  void list(httplib::Response& res) const {
    nlohmann::json ids = nlohmann::json::array();
    std::lock_guard lock(sessions_mu_);
    for (const auto& [id, e] : sessions_) ids.push_back(id);
    send_json(res, 200, ids);
  }

  void manifest(const httplib::Request& req, httplib::Response& res) const {
    auto e = find(req.path_params.at("id"));
    std::lock_guard lock(e->mu);
    send_json(res, 200, session_to_json(e->session));
  }

  void upload(const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.path_params.at("id"));
    const std::string kind_text = req.has_param("kind") ? req.get_param_value("kind") : "image";
    AssetKind kind;
    try {
      kind = parse_asset_kind(kind_text);
    } catch (const ArgumentError& err) {
      throw HttpError(400, err.what());
    }
    const std::string body = upload_body(req);
    std::lock_guard lock(e->mu);
    std::string id;
    try {
      id = add_asset(e->session, as_bytes(body), kind);
    } catch (const ArgumentError& err) {
      throw HttpError(400, err.what());
    }
    const AssetInfo& info = e->session.assets.at(id);
    send_json(res, 201,
              {{"asset_id", id},
               {"kind", asset_kind_name(info.kind)},
               {"width", info.width},
               {"height", info.height},
               {"channels", info.channels}});
  }

  void submit(const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.path_params.at("id"));
    nlohmann::json body = parse_json_body(req);
    StepRequest sr;
    auto take_ref = [&](const char* key) -> std::optional<std::string> {
      if (!body.contains(key)) return std::nullopt;
      nlohmann::json v = body.at(key);
      body.erase(key);
      if (v.is_null()) return std::nullopt;
      if (!v.is_string()) throw HttpError(400, std::string("'") + key + "' must be an asset id");
      return v.get<std::string>();
    };
    auto reference = take_ref("reference");
    if (!reference) throw HttpError(400, "'reference' is required");
    sr.reference_ref = *reference;
    sr.mask_ref = take_ref("mask");
    sr.reference_mask_ref = take_ref("reference_mask");
    sr.cfg = config_from_json(body);

    auto job = std::make_shared<Job>();
    {
      std::lock_guard lock(e->mu);
      if (e->busy) throw BusyError("session already has a queued or running step");
      try {
        job->prepared = prepare_step(e->session, sr);
      } catch (const NotFoundError& err) {
        throw ArgumentError(err.what());
      }
      job->lock = std::make_unique<SessionLock>(e->session.dir);
      e->busy = true;
    }
    job->entry = e;
    job->state.job_id = detail::random_id();
    job->state.session_id = e->session.id;
    job->state.step_index = job->prepared.record.index;
    job->state.total_steps = sr.cfg.steps;
    {
      std::lock_guard lock(jobs_mu_);
      jobs_.emplace(job->state.job_id, job);
    }
    {
      std::lock_guard lock(queue_mu_);
      queue_.push_back(job);
    }
    queue_cv_.notify_one();
    send_json(res, 202,
              {{"job_id", job->state.job_id},
               {"session_id", job->state.session_id},
               {"step_index", job->state.step_index}});
  }

  void do_revert(const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.path_params.at("id"));
    const nlohmann::json body = parse_json_body(req);
    if (!body.contains("to_index") || !body.at("to_index").is_number_integer())
      throw HttpError(400, "'to_index' must be an integer");
    const int to = body.at("to_index").get<int>();
    std::lock_guard lock(e->mu);
    if (e->busy) throw BusyError("session has a queued or running step");
    revert(e->session, to);
    send_json(res, 200, session_to_json(e->session));
  }

  void job(const httplib::Request& req, httplib::Response& res) const {
    auto st = job_state(req.path_params.at("id"));
    if (!st) throw NotFoundError("unknown job '" + req.path_params.at("id") + "'");
    send_json(res, 200, st->to_json());
  }

  void asset(const httplib::Request& req, httplib::Response& res) const {
    const std::string id = req.path_params.at("id");
    const bool hex = id.size() == 64 && std::all_of(id.begin(), id.end(), [](char c) {
                       return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
                     });
    if (!hex) throw NotFoundError("unknown asset '" + id + "'");
    std::vector<std::shared_ptr<Entry>> entries;
    {
      std::lock_guard lock(sessions_mu_);
      for (const auto& [sid, e] : sessions_) entries.push_back(e);
    }
    for (const auto& e : entries) {
      std::lock_guard lock(e->mu);
      if (!e->session.assets.count(id)) continue;
      const Bytes bytes = read_asset(e->session, id);
      res.status = 200;
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
      return;
    }
    throw NotFoundError("unknown asset '" + id + "'");
  }

  void worker_loop() {
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        job = queue_.front();
        queue_.pop_front();
      }
      run(*job);
    }
  }

  void run(Job& job) {
    {
      std::lock_guard lock(job.mu);
      job.state.status = JobStatus::Running;
    }
    auto progress = [&job](int done, int total) {
      std::lock_guard lock(job.mu);
      job.state.completed_steps = done;
      job.state.total_steps = total;
      job.state.progress = static_cast<double>(done) / total;
      ++job.state.progress_events;
    };
    StepOutcome outcome;
    {
      std::unique_lock<std::mutex> backend_lock;
      if (!backend_->thread_safe()) backend_lock = std::unique_lock(backend_mu_);
      outcome = execute_step(job.prepared, *backend_, *codec_, progress);
    }
    SessionStep step;
    std::optional<std::string> commit_error;
    {
      std::lock_guard lock(job.entry->mu);
      try {
        step = commit_step(job.entry->session, std::move(job.prepared), outcome);
      } catch (const std::exception& e) {
        commit_error = e.what();
      }
      job.lock.reset();
      job.entry->busy = false;
    }
    std::lock_guard lock(job.mu);
    if (commit_error) {
      job.state.status = JobStatus::Failed;
      job.state.error = *commit_error;
    } else if (step.status == StepStatus::Done) {
      job.state.status = JobStatus::Done;
      job.state.progress = 1.0;
      job.state.output_ref = step.output_ref;
    } else {
      job.state.status = JobStatus::Failed;
      job.state.error = step.error;
    }
  }

  ServiceOptions opt_;
  std::shared_ptr<const DenoiserBackend> backend_;
  std::shared_ptr<const LatentCodec> codec_;
  std::mutex backend_mu_;

  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;

  mutable std::mutex jobs_mu_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::shared_ptr<Job>> queue_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace stylectl
