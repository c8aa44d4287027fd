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

// Acceptance run: one PASS/FAIL line per criterion P1..P10.
//
// Usage: stylectl_acceptance [--checkpoint PATH] [--save-checkpoint PATH]
// Without --checkpoint the toy backend is trained from scratch (P7 budget
// includes that training).

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "stylectl/checkpoint.hpp"
#include "stylectl/cop.hpp"
#include "stylectl/metrics.hpp"
#include "stylectl/pipeline.hpp"
#include "stylectl/schedule.hpp"
#include "stylectl/service.hpp"
#include "stylectl/toy_data.hpp"
#include "stylectl/toy_unet.hpp"
#include "stylectl/trainer.hpp"

#include <httplib.h>

namespace {

using namespace stylectl;
using Clock = std::chrono::steady_clock;

// Pinned at 90% of the values measured on the model this binary trains
// (measured values in the trailing comments).
constexpr double kReconPsnrDb = 29.4;         // P7 min over pairs, 32.73 dB
constexpr double kMeanShiftFraction = 0.32;   // P8 mean move toward reference, 35.9%
constexpr double kEdgeF1 = 0.72;              // P8 mean edge F1(source, output), 0.805
constexpr double kCopZeroMaskPsnrDb = 29.4;   // P8 zero-mask step vs head, min 32.69 dB

constexpr int kToyPairs = 12;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel_err(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    den += b.data[i] * b.data[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

Tensor random_tensor(std::mt19937_64& rng, int c, int h, int w) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(c, h, w);
  for (double& v : t.data) v = n(rng);
  return t;
}

Matrix random_matrix(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = n(rng);
  return m;
}

MaskVector random_bits(std::mt19937_64& rng, int n) {
  MaskVector m(static_cast<std::size_t>(n));
  for (auto& b : m) b = rng() & 1;
  return m;
}

// ---------------------------------------------------------------------------

Outcome p1() {
  std::mt19937_64 rng(101);
  const std::array<const char*, 3> presets = {"scaled-linear", "linear", "cosine"};
  double worst_z0 = 0.0, worst_inv = 0.0;
  bool monotone = true;
  const int instances = 240;
  for (int i = 0; i < instances; ++i) {
    const int steps = 10 + static_cast<int>(rng() % 91);
    const NoiseSchedule sched = build_schedule(steps, presets[i % 3]);
    for (int t = 1; t <= steps; ++t)
      monotone = monotone && sched.alpha_bar(t) < sched.alpha_bar(t - 1) && sched.alpha_bar(t) > 0.0;
    const int c = 1 + static_cast<int>(rng() % 4), h = 2 + static_cast<int>(rng() % 7),
              w = 2 + static_cast<int>(rng() % 7);
    const int t = 1 + static_cast<int>(rng() % steps);
    const LatentCode z0{random_tensor(rng, c, h, w), 0};
    const Tensor eps = random_tensor(rng, c, h, w);
    const LatentCode zt = add_noise(z0, t, eps, sched);
    worst_z0 = std::max(worst_z0, rel_err(predict_z0(zt, eps, t, sched).data, z0.data));
    const LatentCode down = ddim_step(zt, eps, t, sched);
    worst_inv = std::max(worst_inv, rel_err(ddim_inverse_step(down, eps, t - 1, sched).data, zt.data));
    const LatentCode up = ddim_inverse_step(down, eps, t - 1, sched);
    worst_inv = std::max(worst_inv, rel_err(ddim_step(up, eps, t, sched).data, down.data));
  }
  Outcome o;
  o.pass = worst_z0 <= 1e-6 && worst_inv <= 1e-5 && monotone;
  o.detail = std::to_string(instances) + " instances, z0 rel " + fmt("%.2e", worst_z0) +
             ", inverse rel " + fmt("%.2e", worst_inv) + (monotone ? ", monotone" : ", NOT monotone");
  return o;
}

Outcome p2() {
  std::mt19937_64 rng(202);
  int exact0 = 0, exact1 = 0;
  double worst_affine = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int lq = 1 + static_cast<int>(rng() % 12), lr = 1 + static_cast<int>(rng() % 12),
              d = 1 + static_cast<int>(rng() % 8), dv = 1 + static_cast<int>(rng() % 8);
    const Matrix qt = random_matrix(rng, lq, d), qs = random_matrix(rng, lq, d);
    const Matrix k = random_matrix(rng, lr, d), v = random_matrix(rng, lr, dv);
    const Matrix ot = attention(qt, k, v), os = attention(qs, k, v);
    exact0 += style_attention(qt, qs, k, v, 0.0) == os;
    exact1 += style_attention(qt, qs, k, v, 1.0) == ot;
    std::uniform_real_distribution<double> u(-2.0, 3.0);
    const double w = u(rng);
    const Matrix expect = os + w * (ot - os);
    const double scale = std::max({1.0, ot.cwiseAbs().maxCoeff(), os.cwiseAbs().maxCoeff()});
    worst_affine = std::max(worst_affine,
                            (style_attention(qt, qs, k, v, w) - expect).cwiseAbs().maxCoeff() / scale);
  }
  Outcome o;
  o.pass = exact0 == 100 && exact1 == 100 && worst_affine <= 1e-6;
  o.detail = "100 instances, omega=0 exact " + std::to_string(exact0) + "/100, omega=1 exact " +
             std::to_string(exact1) + "/100, affine dev " + fmt("%.2e", worst_affine);
  return o;
}

Outcome p3() {
  ControlConfig cfg;  // defaults: omega 1.2, S 35, T 50
  int ok = 0;
  for (int t = 1; t <= 50; ++t) ok += effective_omega(t, cfg) == (t >= 35 ? 1.2 : 0.0);
  Outcome o;
  o.pass = ok == 50 && cfg.omega == 1.2 && cfg.sac_start == 35 && cfg.steps == 50;
  o.detail = std::to_string(ok) + "/50 countdown indices";
  return o;
}

// Scalar triple loop: softmax over all keys, masked entries zeroed.
Matrix loop_masked_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                             const MaskVector& ms, const MaskVector& mr) {
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<double> s(static_cast<std::size_t>(k.rows()));
    double mx = -1e300;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      s[j] = dot / std::sqrt(static_cast<double>(q.cols()));
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (double& x : s) z += (x = std::exp(x - mx));
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      const double w = ms[i] && mr[j] ? s[j] / z : 0.0;
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += w * v(j, c);
    }
  }
  return out;
}

Outcome p4() {
  std::mt19937_64 rng(404);
  double worst = 0.0, worst_ones = 0.0;
  for (int i = 0; i < 500; ++i) {
    const int ls = 1 + static_cast<int>(rng() % 6), lr = 1 + static_cast<int>(rng() % 6),
              d = 1 + static_cast<int>(rng() % 6);
    const Matrix q = random_matrix(rng, ls, d), k = random_matrix(rng, lr, d),
                 v = random_matrix(rng, lr, d);
    const MaskVector ms = random_bits(rng, ls), mr = random_bits(rng, lr);
    const Matrix got = masked_attention(q, k, v, cross_mask(ms, mr));
    worst = std::max(worst, (got - loop_masked_attention(q, k, v, ms, mr)).cwiseAbs().maxCoeff());
    const MaskVector os(static_cast<std::size_t>(ls), 1), orr(static_cast<std::size_t>(lr), 1);
    worst_ones = std::max(
        worst_ones, (masked_attention(q, k, v, cross_mask(os, orr)) - attention(q, k, v)).cwiseAbs().maxCoeff());
  }
  Outcome o;
  o.pass = worst <= 1e-6 && worst_ones <= 1e-12;
  o.detail = "500 draws, max dev " + fmt("%.2e", worst) + ", all-ones dev " + fmt("%.2e", worst_ones);
  return o;
}

Outcome p5() {
  std::mt19937_64 rng(505);
  int checked = 0, bad = 0;
  for (int i = 0; i < 200; ++i) {
    const int rows = 1 + static_cast<int>(rng() % 16), cols = 1 + static_cast<int>(rng() % 8);
    const Matrix a = random_matrix(rng, rows, cols), b = random_matrix(rng, rows, cols);
    const MaskVector m = random_bits(rng, rows);
    const Matrix bg = background_mix(a, b, m), cop = cop_mix(a, b, m);
    for (int r = 0; r < rows; ++r) {
      ++checked;
      const Matrix& want = m[r] ? a : b;
      bad += !(bg.row(r) == want.row(r)) || !(cop.row(r) == want.row(r));
    }
  }
  Outcome o;
  o.pass = bad == 0;
  o.detail = std::to_string(checked) + " rows over 200 random masks, " + std::to_string(bad) + " wrong";
  return o;
}

// ---------------------------------------------------------------------------
// Toy end to end

struct ToyPair {
  Image source, reference;
  StyleFamily family;
};

std::vector<ToyPair> toy_pairs(int size) {
  std::mt19937_64 rng(99);
  std::vector<ToyPair> out;
  for (int i = 0; i < kToyPairs; ++i) {
    const FaceParams fs = random_face(StyleFamily::Photo, rng);
    const FaceParams fr = random_face(kStyleFamilies[1 + i % 3], rng);
    out.push_back({render_face(fs, size), render_face(fr, size), fr.family});
  }
  return out;
}

std::array<double, 3> channel_means(const Image& img) {
  std::array<double, 3> m{};
  const int n = img.width() * img.height();
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) m[c] += img.at(c, y, x);
    m[c] /= n;
  }
  return m;
}

double mean_l1(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

Outcome p6(const ToyUNet& model) {
  const std::string before = model.weights_digest();
  const auto pairs = toy_pairs(model.config().image_size);
  StylizeRequest req;
  req.source = pairs[0].source;
  req.reference = pairs[0].reference;
  stylize(req, model, *model.codec());
  const std::string after = model.weights_digest();
  Outcome o;
  o.pass = before == after;
  o.detail = "weights sha256 " + before.substr(0, 12) + (o.pass ? " unchanged" : " CHANGED");
  return o;
}

// loss_drop < 0 when the model came from --checkpoint.
Outcome p7(const ToyUNet& model, double train_seconds, double loss_drop) {
  const auto pairs = toy_pairs(model.config().image_size);
  double worst = 1e9, sum = 0.0;
  for (const auto& p : pairs) {
    StylizeRequest req;
    req.source = p.source;
    req.reference = p.reference;
    req.cfg.layer_gate = LayerGate::none();
    const double db = psnr(p.source, stylize(req, model, *model.codec()).output);
    worst = std::min(worst, db);
    sum += db;
  }
  Outcome o;
  o.pass = worst >= kReconPsnrDb && (loss_drop < 0.0 || loss_drop >= 0.5);
  o.detail = std::to_string(pairs.size()) + " pairs, min PSNR " + fmt("%.2f", worst) + " dB, mean " +
             fmt("%.2f", sum / pairs.size()) + " dB (threshold " + fmt("%.1f", kReconPsnrDb) +
             "), training " + fmt("%.0f", train_seconds) + " s";
  if (loss_drop >= 0.0) o.detail += ", smoothed loss down " + fmt("%.1f%%", 100 * loss_drop);
  return o;
}

Outcome p8(const ToyUNet& model) {
  const auto codec = model.codec();
  const int size = model.config().image_size;
  const auto pairs = toy_pairs(size);
  double shift_sum = 0.0, f1_sum = 0.0, f1_min = 1.0, cop_min = 1e9, cop_max_abs = 0.0;
  int moved = 0;
  for (const auto& p : pairs) {
    StylizeRequest req;
    req.source = p.source;
    req.reference = p.reference;  // defaults: omega 1.2, S 35, T 50, default gate
    const Image out = stylize(req, model, *codec).output;
    const auto ms = channel_means(p.source), mr = channel_means(p.reference),
               mo = channel_means(out);
    const double before = mean_l1(ms, mr), after = mean_l1(mo, mr);
    moved += after < before;
    shift_sum += (before - after) / before;
    const double f1 = edge_overlap(p.source, out);
    f1_sum += f1;
    f1_min = std::min(f1_min, f1);

    // Zero-mask Chain-of-Painting step from the quantized head.
    StylizeRequest cop;
    cop.source = quantize8(out);
    cop.reference = p.reference;
    cop.cop_mode = true;
    cop.source_mask = Mask(size, size, 0);
    const Image again = stylize(cop, model, *codec).output;
    cop_min = std::min(cop_min, psnr(cop.source, again));
    for (std::size_t i = 0; i < again.planes.size(); ++i)
      cop_max_abs = std::max(cop_max_abs, std::abs(again.planes.data[i] - cop.source.planes.data[i]));
  }
  const double n = static_cast<double>(pairs.size());

  // Two disjoint masked steps through a session.
  const auto dir = std::filesystem::temp_directory_path() /
                   ("stylectl-accept-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  Session s = create_session(dir / "s", pairs[0].source);
  Mask top(size, size), bottom(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) (y < size / 2 ? top : bottom).at(y, x) = 1;
  bool chain_ok = true;
  std::string before_head = s.head_ref();
  for (int i = 0; i < 2; ++i) {
    StepRequest r;
    r.reference_ref = add_image_asset(s, pairs[1 + i].reference);
    r.mask_ref = add_asset(s, encode_png(mask_to_image(i == 0 ? top : bottom)), AssetKind::Mask);
    const SessionStep st = run_step(s, r, model, *codec);
    chain_ok = chain_ok && st.status == StepStatus::Done && st.source_ref == before_head;
    if (!st.output_ref) break;
    // The step must change the image inside its own mask.
    const Image prev = load_asset_image(s, before_head), next = load_asset_image(s, *st.output_ref);
    const Mask& region = i == 0 ? top : bottom;
    double inside = 0.0;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          if (region.at(y, x)) inside = std::max(inside, std::abs(next.at(c, y, x) - prev.at(c, y, x)));
    chain_ok = chain_ok && inside > 0.0;
    before_head = *st.output_ref;
  }
  chain_ok = chain_ok && s.steps.size() == 2 && load_session(s.dir) == s;
  std::filesystem::remove_all(dir);

  Outcome o;
  const double shift = shift_sum / n, f1 = f1_sum / n;
  o.pass = shift >= kMeanShiftFraction && moved == kToyPairs && f1 >= kEdgeF1 &&
           cop_min >= kCopZeroMaskPsnrDb && chain_ok;
  o.detail = "mean shift toward reference " + fmt("%.1f%%", 100 * shift) + " (" +
             std::to_string(moved) + "/" + std::to_string(kToyPairs) + " pairs moved), edge F1 mean " +
             fmt("%.3f", f1) + " min " + fmt("%.3f", f1_min) + ", zero-mask step min PSNR " +
             fmt("%.2f", cop_min) + " dB max abs " + fmt("%.3f", cop_max_abs) +
             ", two disjoint masked steps " + (chain_ok ? "differ inside their masks" : "FAILED");
  return o;
}

// ---------------------------------------------------------------------------

class FixtureExtractor final : public FeatureExtractor {
 public:
  std::string name() const override { return "fixture"; }
  std::vector<std::string> layers() const override { return {"only"}; }
  std::vector<FeatureMap> extract(const Image& image) const override {
    FeatureMap f(2, 2);
    if (image.planes.data[0] < 0.5) f << 1, 3, 2, 2;
    else f << 0, 0, 4, 0;
    return {f};
  }
};

Outcome p9() {
  PixelPyramidExtractor ex;
  ThumbnailEmbedder em;
  std::mt19937_64 rng(909);
  const Image img = render_face(random_face(StyleFamily::Comic, rng), 64);
  const double self_loss = style_loss(img, img, &ex);
  const double self_id = id_similarity(img, img, &em);
  FixtureExtractor fx;
  const Image dark(2, 1, 1, 0.0), light(2, 1, 1, 1.0);
  const double mean_std = style_loss(dark, light, &fx);
  const double gram = style_loss(dark, light, &fx, StyleDistance::Gram);
  const std::vector<double> a = {1.0, 0.0}, b = {std::sqrt(0.5), std::sqrt(0.5)};
  const double cos = cosine_similarity(a, b);
  const double dev = std::max({std::abs(mean_std - (2.0 + std::sqrt(5.0))),
                               std::abs(gram - std::sqrt(73.0)), std::abs(cos - std::sqrt(0.5))});
  Outcome o;
  o.pass = self_loss == 0.0 && std::abs(self_id - 1.0) <= 1e-12 && dev <= 1e-6;
  o.detail = "self style loss " + fmt("%.1g", self_loss) + ", self id " + fmt("%.12f", self_id) +
             ", fixture dev " + fmt("%.1e", dev);
  return o;
}

Outcome p10(const ToyUNet& model) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("stylectl-accept-p10-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::mt19937_64 rng(1010);
  const int size = model.config().image_size;
  const Image src = render_face(random_face(StyleFamily::Photo, rng), size);
  const Image ref = render_face(random_face(StyleFamily::Ink, rng), size);
  ControlConfig fast;
  fast.steps = 10;
  fast.sac_start = 7;

  // Library round trip.
  Session s = create_session(dir / "lib", src);
  for (int i = 0; i < 3; ++i) {
    StepRequest r;
    r.reference_ref = add_image_asset(s, ref);
    r.cfg = fast;
    r.cfg.omega = 0.8 + 0.2 * i;
    run_step(s, r, model, *model.codec());
  }
  revert(s, 1);
  bool lossless = load_session(s.dir) == s;
  save_session(s, dir / "copy");
  lossless = lossless && load_session(dir / "copy") == s;

  // HTTP session vs library view of the same directory.
  bool http_ok = false;
  {
    auto shared = std::make_shared<ToyUNet>(model);
    ServiceOptions opt;
    opt.root = dir / "http";
    Service service(opt, shared, shared->codec());
    httplib::Server srv;
    service.mount(srv);
    const int port = srv.bind_to_any_port("127.0.0.1");
    std::thread th([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(120, 0);
    const Bytes sb = encode_png(quantize8(src)), rb = encode_png(quantize8(ref));
    auto created = cli.Post("/sessions", std::string(sb.begin(), sb.end()), "image/png");
    if (created && created->status == 201) {
      const std::string sid = nlohmann::json::parse(created->body).at("session_id");
      auto up = cli.Post("/sessions/" + sid + "/assets", std::string(rb.begin(), rb.end()), "image/png");
      nlohmann::json body = config_to_json(fast);
      body["reference"] = nlohmann::json::parse(up->body).at("asset_id");
      auto sub = cli.Post("/sessions/" + sid + "/steps", body.dump(), "application/json");
      const std::string job = nlohmann::json::parse(sub->body).at("job_id");
      std::string status;
      const auto deadline = Clock::now() + std::chrono::seconds(120);
      while (Clock::now() < deadline) {
        auto j = cli.Get("/jobs/" + job);
        status = nlohmann::json::parse(j->body).at("status");
        if (status == "done" || status == "failed") break;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
      auto man = cli.Get("/sessions/" + sid);
      const Session disk = load_session(opt.root / sid);
      http_ok = status == "done" && man && nlohmann::json::parse(man->body) == session_to_json(disk) &&
                disk.steps.size() == 1;
    }
    srv.stop();
    th.join();
  }
  std::filesystem::remove_all(dir);

  Outcome o;
  o.pass = lossless && http_ok;
  o.detail = std::string("save/load ") + (lossless ? "lossless" : "LOSSY") + ", HTTP session " +
             (http_ok ? "matches library load" : "MISMATCH") + ", no UI target in this build";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::string checkpoint, save_to;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--checkpoint") checkpoint = argv[i + 1];
    else if (flag == "--save-checkpoint") save_to = argv[i + 1];
  }

  int failures = 0;
  auto report = [&](const char* id, double budget, const std::function<Outcome()>& fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = seconds_since(t0);
    const bool in_time = budget <= 0.0 || dt <= budget;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %s (%.2f s%s) %s\n", pass ? "PASS" : "FAIL", id, dt,
                in_time ? "" : ", over budget", o.detail.c_str());
    std::fflush(stdout);
  };

  report("P1", 10.0, p1);
  report("P2", 5.0, p2);
  report("P3", 1.0, p3);
  report("P4", 30.0, p4);
  report("P5", 5.0, p5);

  // P7 owns the toy training time.
  const auto t_train = Clock::now();
  ToyUNet model = toy_backend(64, 3, 0);
  double loss_drop = -1.0;
  if (!checkpoint.empty()) {
    model = load_checkpoint(checkpoint).model;
  } else {
    TrainOptions opt;  // 2000 steps, batch 4
    TrainState state;
    const TrainResult r = train_toy(model, make_face_dataset(512, 64, 1), opt, &state);
    loss_drop = 1.0 - r.final_smoothed / r.initial_smoothed;
    if (!save_to.empty()) save_checkpoint(save_to, model, &state);
  }
  const double train_seconds = seconds_since(t_train);

  report("P6", 30.0, [&] { return p6(model); });
  report("P7", 900.0 - train_seconds, [&] { return p7(model, train_seconds, loss_drop); });
  report("P8", 0.0, [&] { return p8(model); });
  report("P9", 5.0, p9);
  report("P10", 0.0, [&] { return p10(model); });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
