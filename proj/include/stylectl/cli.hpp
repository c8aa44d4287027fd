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

// The stylectl command line: stylize, chain, train-toy, metrics and serve.
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stylectl/checkpoint.hpp"
#include "stylectl/config_json.hpp"
#include "stylectl/cop.hpp"
#include "stylectl/image_io.hpp"
#include "stylectl/masking.hpp"
#include "stylectl/metrics.hpp"
#include "stylectl/pipeline.hpp"
#include "stylectl/service.hpp"
#include "stylectl/toy_data.hpp"
#include "stylectl/toy_unet.hpp"
#include "stylectl/trainer.hpp"

// After the Eigen users: resolv.h defines a _res macro.
#include <httplib.h>

namespace stylectl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Everything the subcommands read from flags. Control defaults are the
// ControlConfig defaults.
struct CliConfig {
  ControlConfig control;
  std::string layer_gate = "default";
  std::string window = "early";

  std::string source, reference, source_mask, reference_mask, out, debug_dir;
  bool cop = false;

  std::string backend = "toy";
  std::string checkpoint;
  int image_size = 64;
  std::uint64_t seed = 0;
  bool json = false;

  std::string session;
  int to_index = -1;

  // train-toy
  int train_steps = 2000;
  int batch = 4;
  double learning_rate = 1e-3;
  int dataset_size = 512;
  std::string resume;
  int log_every = 100;

  // metrics
  std::string pairs;
  std::string output_image;
  std::string extractor = "pixel-pyramid";
  std::string embedder = "thumbnail";
  bool gram = false;

  // serve
  std::string root = "sessions";
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 1;
};

namespace cli_detail {

struct Usage : Error {
  using Error::Error;
};

inline void add_control_flags(CLI::App* app, CliConfig& c) {
  app->add_option("--omega", c.control.omega, "Style guidance scale")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  app->add_option("--sac-start", c.control.sac_start, "Countdown step S where guidance switches")
      ->capture_default_str();
  app->add_option("--steps", c.control.steps, "DDIM steps T")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app->add_option("--layer-gate", c.layer_gate,
                  "Controlled sites: default | none | all | from:N | indices:a,b")
      ->capture_default_str();
  app->add_option("--guidance-window", c.window, "early (t >= S) or inverted (t < S)")
      ->capture_default_str()
      ->check(CLI::IsMember({"early", "inverted"}));
  app->add_flag("--renormalize-masked-rows", c.control.renormalize_masked_rows,
                "Rescale partially masked attention rows to sum to one");
  app->add_option("--prompt", c.control.prompt, "Conditioning prompt")->capture_default_str();
  app->add_option("--guidance-scale", c.control.guidance_scale, "Classifier-free guidance scale")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  app->add_option("--schedule", c.control.schedule, "scaled-linear | linear | cosine")
      ->capture_default_str()
      ->check(CLI::IsMember({"scaled-linear", "linear", "cosine"}));
}

inline void add_backend_flags(CLI::App* app, CliConfig& c) {
  app->add_option("--backend", c.backend, "Denoiser backend")
      ->capture_default_str()
      ->check(CLI::IsMember({"toy", "external"}));
  app->add_option("--checkpoint", c.checkpoint, "Toy backend checkpoint")
      ->check(CLI::ExistingFile);
  app->add_option("--image-size", c.image_size, "Toy backend resolution without a checkpoint")
      ->capture_default_str()
      ->check(CLI::IsMember({32, 64}));
}

inline ControlConfig finish_control(const CliConfig& c) {
  ControlConfig cfg = c.control;
  cfg.layer_gate = LayerGate::parse(c.layer_gate);
  cfg.window = parse_window(c.window);
  try {
    cfg.validate();
  } catch (const ArgumentError& e) {
    throw Usage(e.what());
  }
  return cfg;
}

struct LoadedBackend {
  std::shared_ptr<DenoiserBackend> backend;
  std::shared_ptr<const LatentCodec> codec;
};

inline LoadedBackend make_backend(const CliConfig& c, std::ostream& err) {
  if (c.backend != "toy")
    throw CapabilityError("backend '" + c.backend + "' is not built in; attach it through the "
                          "DenoiserBackend adapter");
  std::shared_ptr<ToyUNet> model;
  if (!c.checkpoint.empty()) {
    model = std::make_shared<ToyUNet>(load_checkpoint(c.checkpoint).model);
  } else {
    err << "warning: no --checkpoint given, using an untrained toy backend (seed " << c.seed
        << ")\n";
    model = std::make_shared<ToyUNet>(toy_backend(c.image_size, 3, c.seed));
  }
  return {model, model->codec()};
}

inline ProgressCallback progress_printer(const CliConfig& c, std::ostream& out) {
  if (!c.json) return {};
  return [&out](int done, int total) {
    out << nlohmann::json{{"event", "progress"}, {"completed", done}, {"total", total}}.dump()
        << "\n";
  };
}

inline std::optional<Mask> optional_mask(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_mask(path);
}

inline int cmd_stylize(const CliConfig& c, std::ostream& out, std::ostream& err) {
  const ControlConfig cfg = finish_control(c);
  const auto [backend, codec] = make_backend(c, err);
  StylizeRequest req;
  req.source = read_image(c.source);
  req.reference = read_image(c.reference);
  req.cfg = cfg;
  req.source_mask = optional_mask(c.source_mask);
  req.reference_mask = optional_mask(c.reference_mask);
  req.cop_mode = c.cop;
  if (!c.debug_dir.empty()) req.debug_dir = c.debug_dir;
  req.on_progress = progress_printer(c, out);
  const StylizeResult r = stylize_fitted(req, *backend, *codec);
  write_png(c.out, r.output);
  if (c.json)
    out << nlohmann::json{{"event", "result"},
                          {"output", c.out},
                          {"wall_time", r.wall_time},
                          {"config", config_to_json(cfg)},
                          {"weights_digest", backend->weights_digest()}}
               .dump()
        << "\n";
  else
    out << "wrote " << c.out << "\nwall time: " << r.wall_time << " s\n";
  return kExitOk;
}

inline void print_session(const Session& s, const CliConfig& c, std::ostream& out) {
  if (c.json) {
    out << session_to_json(s).dump() << "\n";
    return;
  }
  out << "session " << s.id << " (" << s.dir.string() << ")\n"
      << "steps: " << s.steps.size() << "\nhead: " << s.head_ref() << "\n";
  for (const auto& st : s.steps)
    out << "  [" << st.index << "] " << status_name(st.status) << " omega=" << st.cfg.omega
        << " S=" << st.cfg.sac_start << (st.mask_ref ? " masked" : "") << " -> "
        << st.output_ref.value_or("-") << "\n";
}

inline std::string add_file_asset(Session& s, const std::string& path, AssetKind kind) {
  const Bytes bytes = read_file_bytes(path);
  return add_asset(s, bytes, kind);
}

inline int cmd_chain(const std::string& sub, const CliConfig& c, std::ostream& out,
                     std::ostream& err) {
  if (sub == "init") {
    const Session s = create_session(c.session, read_file_bytes(c.source));
    print_session(s, c, out);
    return kExitOk;
  }
  Session s = load_session(c.session);
  if (sub == "step") {
    const ControlConfig cfg = finish_control(c);
    const auto [backend, codec] = make_backend(c, err);
    StepRequest req;
    req.cfg = cfg;
    req.reference_ref = add_file_asset(s, c.reference, AssetKind::Image);
    if (!c.source_mask.empty()) req.mask_ref = add_file_asset(s, c.source_mask, AssetKind::Mask);
    if (!c.reference_mask.empty())
      req.reference_mask_ref = add_file_asset(s, c.reference_mask, AssetKind::Mask);
    const SessionStep st = run_step(s, req, *backend, *codec, progress_printer(c, out));
    if (st.status != StepStatus::Done) {
      err << "error: step failed: " << st.error << "\n";
      return kExitFailure;
    }
    if (!c.out.empty()) write_file_atomic(c.out, read_asset(s, *st.output_ref));
    print_session(s, c, out);
    return kExitOk;
  }
  if (sub == "revert") {
    revert(s, c.to_index);
    print_session(s, c, out);
    return kExitOk;
  }
  if (sub == "status") {
    print_session(s, c, out);
    return kExitOk;
  }
  if (sub == "export") {
    write_file_atomic(c.out, read_asset(s, s.head_ref()));
    if (c.json)
      out << nlohmann::json{{"head", s.head_ref()}, {"output", c.out}}.dump() << "\n";
    else
      out << "wrote " << c.out << "\n";
    return kExitOk;
  }
  throw Usage("unknown chain subcommand '" + sub + "'");
}

inline int cmd_train_toy(const CliConfig& c, std::ostream& out) {
  ToyUNet model = toy_backend(c.image_size, 3, c.seed);
  TrainState state;
  if (!c.resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(c.resume);
    model = std::move(ck.model);
    state = std::move(ck.state);
  }
  const int size = model.config().image_size;
  const auto data = make_face_dataset(c.dataset_size, size, c.seed + 1);
  TrainOptions opt;
  opt.steps = c.train_steps;
  opt.batch = c.batch;
  opt.learning_rate = c.learning_rate;
  opt.seed = c.seed;
  opt.on_step = [&](int step, double loss) {
    if (c.log_every > 0 && step % c.log_every == 0) {
      if (c.json)
        out << nlohmann::json{{"event", "train"}, {"step", step}, {"loss", loss}}.dump() << "\n";
      else
        out << "step " << step << " loss " << loss << "\n";
      out.flush();
    }
  };
  const TrainResult r = train_toy(model, data, opt, &state);
  save_checkpoint(c.out, model, &state);
  if (c.json)
    out << nlohmann::json{{"event", "result"},
                          {"checkpoint", c.out},
                          {"trainer_step", state.step},
                          {"initial_loss", r.initial_smoothed},
                          {"final_loss", r.final_smoothed},
                          {"weights_digest", model.weights_digest()}}
               .dump()
        << "\n";
  else
    out << "final loss " << r.final_smoothed << " (first " << opt.smoothing_window
        << "-step mean " << r.initial_smoothed << ", trainer step " << state.step << ")\n"
        << "wrote " << c.out << "\n";
  return kExitOk;
}

// Pair list: one "id,output,source,reference" line per pair; blank lines and
// lines starting with '#' are skipped. Relative paths resolve against the
// list's directory.
inline std::vector<MetricPair> read_pair_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<MetricPair> pairs;
  std::string line;
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 4) throw Usage("pair list line needs 4 fields: '" + line + "'");
    pairs.push_back({cols[0], read_image(resolve(cols[1])), read_image(resolve(cols[2])),
                     read_image(resolve(cols[3]))});
  }
  return pairs;
}

inline int cmd_metrics(const CliConfig& c, std::ostream& out) {
  std::vector<MetricPair> pairs;
  if (!c.pairs.empty()) {
    pairs = read_pair_list(c.pairs);
  } else {
    if (c.output_image.empty() || c.source.empty() || c.reference.empty())
      throw Usage("give --pairs or all of --output-image, --source and --reference");
    pairs.push_back({"0", read_image(c.output_image), read_image(c.source), read_image(c.reference)});
  }
  if (pairs.empty()) throw Usage("pair list is empty");
  if (c.extractor != "pixel-pyramid")
    throw CapabilityError("feature extractor '" + c.extractor + "' is not built in");
  if (c.embedder != "thumbnail")
    throw CapabilityError("identity embedder '" + c.embedder + "' is not built in");
  PixelPyramidExtractor extractor;
  ThumbnailEmbedder embedder;
  const MetricReport r = evaluate_batch(pairs, &extractor, &embedder,
                                        c.gram ? StyleDistance::Gram : StyleDistance::MeanStd);
  const std::string csv = report_to_csv(r);
  if (!c.out.empty()) write_file_atomic(c.out, csv);
  if (c.json) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
      rows.push_back({{"pair_id", row.pair_id},
                      {"style_loss", row.style_loss},
                      {"id_similarity", row.id_similarity}});
    out << nlohmann::json{{"rows", rows},
                          {"mean_style_loss", r.mean_style_loss},
                          {"mean_id_similarity", r.mean_id_similarity},
                          {"layers", r.layers}}
               .dump()
        << "\n";
  } else {
    out << csv;
  }
  return kExitOk;
}

inline httplib::Server* g_server = nullptr;

inline int cmd_serve(const CliConfig& c, std::ostream& out, std::ostream& err) {
  const auto [backend, codec] = make_backend(c, err);
  ServiceOptions opt;
  opt.root = c.root;
  opt.workers = c.workers;
  Service service(opt, backend, codec);
  httplib::Server srv;
  service.mount(srv);
  g_server = &srv;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  out << "listening on http://" << c.host << ":" << c.port << " (sessions in " << c.root << ")\n";
  out.flush();
  const bool ok = srv.listen(c.host, c.port);
  g_server = nullptr;
  if (!ok) {
    err << "error: cannot listen on " << c.host << ":" << c.port << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CliConfig c;
  CLI::App app{"Training-free diffusion style transfer with style attention control", "stylectl"};
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.require_subcommand(1);
  app.add_flag("--json", c.json, "Machine-readable JSON lines on stdout");
  app.add_option("--seed", c.seed, "Seed for toy backend initialization and training")
      ->capture_default_str();

  auto* stylize = app.add_subcommand("stylize", "Stylize one source image with a reference");
  stylize->add_option("--source", c.source, "Source image")->required()->check(CLI::ExistingFile);
  stylize->add_option("--reference", c.reference, "Reference style image")
      ->required()
      ->check(CLI::ExistingFile);
  stylize->add_option("--out", c.out, "Output PNG")->required();
  stylize->add_option("--source-mask", c.source_mask, "Source region mask")
      ->check(CLI::ExistingFile);
  stylize->add_option("--reference-mask", c.reference_mask, "Reference region mask")
      ->check(CLI::ExistingFile);
  stylize->add_flag("--cop", c.cop, "Keep the source outside the mask");
  stylize->add_option("--debug-dir", c.debug_dir, "Write per-step attention snapshots here");
  add_control_flags(stylize, c);
  add_backend_flags(stylize, c);

  auto* chain = app.add_subcommand("chain", "Chain-of-Painting sessions");
  chain->require_subcommand(1);
  auto* chain_init = chain->add_subcommand("init", "Create a session from a source image");
  chain_init->add_option("--session", c.session, "Session directory")->required();
  chain_init->add_option("--source", c.source, "Source image")->required()->check(CLI::ExistingFile);
  auto* chain_step = chain->add_subcommand("step", "Run one step from the current head");
  chain_step->add_option("--session", c.session, "Session directory")->required();
  chain_step->add_option("--reference", c.reference, "Reference style image")
      ->required()
      ->check(CLI::ExistingFile);
  chain_step->add_option("--mask", c.source_mask, "Region to redraw")->check(CLI::ExistingFile);
  chain_step->add_option("--reference-mask", c.reference_mask, "Reference region mask")
      ->check(CLI::ExistingFile);
  chain_step->add_option("--out", c.out, "Also write the new head here");
  add_control_flags(chain_step, c);
  add_backend_flags(chain_step, c);
  auto* chain_revert = chain->add_subcommand("revert", "Truncate the chain after a step");
  chain_revert->add_option("--session", c.session, "Session directory")->required();
  chain_revert->add_option("--to", c.to_index, "Step index that becomes the head")->required();
  auto* chain_status = chain->add_subcommand("status", "Show the chain");
  chain_status->add_option("--session", c.session, "Session directory")->required();
  auto* chain_export = chain->add_subcommand("export", "Write the head image");
  chain_export->add_option("--session", c.session, "Session directory")->required();
  chain_export->add_option("--out", c.out, "Output PNG")->required();

  auto* train = app.add_subcommand("train-toy", "Train the toy backend on synthetic faces");
  train->add_option("--out", c.out, "Checkpoint to write")->required();
  train->add_option("--steps", c.train_steps, "Optimizer steps")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--batch", c.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--learning-rate", c.learning_rate, "Adam learning rate")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--dataset-size", c.dataset_size, "Synthetic images")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--image-size", c.image_size, "Resolution")
      ->capture_default_str()
      ->check(CLI::IsMember({32, 64}));
  train->add_option("--resume", c.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--log-every", c.log_every, "Print the loss every N steps")->capture_default_str();

  auto* metrics = app.add_subcommand("metrics", "Style loss and identity similarity report");
  metrics->add_option("--pairs", c.pairs, "Pair list: id,output,source,reference per line")
      ->check(CLI::ExistingFile);
  metrics->add_option("--output-image", c.output_image, "Single stylized output")
      ->check(CLI::ExistingFile);
  metrics->add_option("--source", c.source, "Single source")->check(CLI::ExistingFile);
  metrics->add_option("--reference", c.reference, "Single reference")->check(CLI::ExistingFile);
  metrics->add_option("--out", c.out, "Write the CSV report here");
  metrics->add_option("--extractor", c.extractor, "Feature extractor")->capture_default_str();
  metrics->add_option("--embedder", c.embedder, "Identity embedder")->capture_default_str();
  metrics->add_flag("--gram", c.gram, "Gram-matrix style distance");

  auto* serve = app.add_subcommand("serve", "HTTP API for chain sessions");
  serve->add_option("--root", c.root, "Directory holding session directories")
      ->capture_default_str()
      ->envname("STYLECTL_ROOT");
  serve->add_option("--host", c.host, "Bind address")->capture_default_str()->envname("STYLECTL_HOST");
  serve->add_option("--port", c.port, "Port")->capture_default_str()->envname("STYLECTL_PORT");
  serve->add_option("--workers", c.workers, "Step execution threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  add_backend_flags(serve, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = &app;
    for (auto* s : app.get_subcommands()) {
      sub = s;
      for (auto* s2 : s->get_subcommands()) sub = s2;
    }
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (stylize->parsed()) return cmd_stylize(c, out, err);
    if (chain->parsed()) {
      for (auto* s : chain->get_subcommands()) return cmd_chain(s->get_name(), c, out, err);
    }
    if (train->parsed()) return cmd_train_toy(c, out);
    if (metrics->parsed()) return cmd_metrics(c, out);
    if (serve->parsed()) return cmd_serve(c, out, err);
  } catch (const Usage& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigurationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace stylectl
