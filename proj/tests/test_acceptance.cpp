// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "gradcheck.hpp"
#include "signal_oracles.hpp"
#include "v2eg/dataset_io.hpp"
#include "v2eg/errors.hpp"
#include "v2eg/graph_da.hpp"
#include "v2eg/pipeline.hpp"

using namespace v2eg;
using v2eg::testing::grad_check;
using v2eg::testing::head;
using v2eg::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

// Failures collected by one criterion; empty means PASS.
struct Verdict {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int digits = 4) {
  char b[64];
  std::snprintf(b, sizeof b, "%.*g", digits, v);
  return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const fs::path& work_dir() {
  static const fs::path p = fs::temp_directory_path() / ("v2eg_acceptance_" + std::to_string(::getpid()));
  return p;
}

RunConfig toy_config() {
  RunConfig cfg = load_run_config(fs::path(V2EG_PROJECT_DIR) / "configs" / "toy.cfg");
  cfg.validate();
  return cfg;
}

// Fixture plus preprocessing for one seed, cached across criteria.
fs::path toy_corpus(std::uint64_t seed) {
  const fs::path dir = work_dir() / ("corpus_" + std::to_string(seed));
  if (fs::exists(dir / "pre" / "corpus" / "manifest.json")) return dir / "pre" / "corpus";
  RunConfig cfg = toy_config();
  cfg.seed = seed;
  cmd_fixture(cfg, dir / "fx");
  cmd_preprocess(cfg, dir / "fx" / "corpus", dir / "pre");
  return dir / "pre" / "corpus";
}

// ---- 1 ----
void gradient_integrity(Verdict& v) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double worst_op = 0.0;
  std::string worst_name;
  const v2eg::testing::GradCheckOptions opt{.coords = 20, .directions = 2};
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor({4, 5}, rng);
    auto b = random_tensor({4, 5}, rng);
    auto c = random_tensor({5, 3}, rng);
    auto row = random_tensor({1, 5}, rng);
    auto s = random_tensor({1, 1}, rng);
    auto col_a = random_tensor({4, 1}, rng);
    auto col_b = random_tensor({3, 1}, rng);
    auto wts = random_tensor({1, 2}, rng);
    const auto w45 = random_tensor({4, 5}, rng, false);
    const auto w43 = random_tensor({4, 3}, rng, false);
    const auto w54 = random_tensor({5, 4}, rng, false);
    const auto w15 = random_tensor({1, 5}, rng, false);
    const auto lags = random_tensor({4, 3}, rng, false);
    std::vector<double> mask_v(20, 0.0);
    for (std::size_t i = 0; i < 4; ++i) mask_v[i * 5 + i] = mask_v[i * 5 + (i + 2) % 5] = 1.0;
    const auto mask = Tensor::from({4, 5}, mask_v);
    std::vector<double> pv(20);
    for (auto& x : pv) x = 0.5 + rng.uniform();
    auto pos = Tensor::from({4, 5}, pv, true);

    auto check = [&](const char* name, std::function<Tensor()> f, std::vector<Tensor*> leaves) {
      const double err = grad_check(f, leaves, rng, opt);
      if (err > worst_op) worst_op = err, worst_name = name;
      v.require(err < 1e-4, std::string(name) + " trial " + std::to_string(trial) + " err " + fmt(err));
    };
    check("matmul", [&] { return head(matmul(a, c), w43); }, {&a, &c});
    check("transpose", [&] { return head(transpose(a), w54); }, {&a});
    check("add", [&] { return head(add(a, b), w45); }, {&a, &b});
    check("sub", [&] { return head(sub(a, b), w45); }, {&a, &b});
    check("mul", [&] { return head(mul(a, b), w45); }, {&a, &b});
    check("scale", [&] { return head(scale(a, -1.7), w45); }, {&a});
    check("add_scalar", [&] { return head(add_scalar(a, 0.3), w45); }, {&a});
    check("square", [&] { return head(square(a), w45); }, {&a});
    check("log", [&] { return head(log(pos), w45); }, {&pos});
    check("silu", [&] { return head(silu(a), w45); }, {&a});
    check("sigmoid", [&] { return head(sigmoid(a), w45); }, {&a});
    check("leaky_relu", [&] { return head(leaky_relu(a, 0.2), w45); }, {&a});
    check("clamp_max", [&] { return head(clamp_max(a, 0.1), w45); }, {&a});
    check("add_row", [&] { return head(add_row(a, row), w45); }, {&a, &row});
    check("mul_scalar", [&] { return head(mul_scalar(a, s), w45); }, {&a, &s});
    check("outer_sum", [&] { return head(outer_sum(col_a, col_b), w43); }, {&col_a, &col_b});
    check("element", [&] { return mul(element(a, 7), element(b, 3)); }, {&a, &b});
    check("mean", [&] { return mean(mul(a, w45)); }, {&a});
    check("mean_rows", [&] { return head(mean_rows(a), w15); }, {&a});
    check("reshape", [&] { return head(reshape(a, {5, 4}), w54); }, {&a});
    check("softmax_rows", [&] { return head(softmax_rows(a), w45); }, {&a});
    check("masked_softmax_rows", [&] { return head(masked_softmax_rows(a, mask), w45); }, {&a});
    check("center_rows", [&] { return head(center_rows(a), w45); }, {&a});
    check("normalize_rows", [&] { return head(normalize_rows(a, 1e-8), w45); }, {&a});
    check("autocorrelation", [&] { return head(autocorrelation(a, 3, 1e-8), lags); }, {&a});
    check("weighted_sum", [&] { return head(weighted_sum({a, b}, wts), w45); }, {&a, &b, &wts});
  }

  // Toy denoiser: 8 channels x 64 samples, hidden 32, 2 layers.
  SpgnConfig cfg;
  cfg.channels = 8;
  cfg.samples = 64;
  cfg.hidden = 32;
  cfg.layers = 2;
  cfg.cond_dim = 16;
  double worst_net = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore ps;
    init_spgn_params(ps, cfg, rng);
    for (auto& p : ps.items())
      for (auto& x : p.value.mutable_data()) x = 0.15 * rng.normal();
    GraphOperators ops;
    for (int g = 0; g < 6; ++g) {
      Graph gr;
      gr.nodes = 8;
      gr.adjacency.assign(64, 0.0);
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = i + 1; j < 8; ++j)
          if (rng.bernoulli(0.5)) gr.adjacency[i * 8 + j] = gr.adjacency[j * 8 + i] = rng.uniform(0.1, 1.0);
      ops.a_hat.push_back(Tensor::from({8, 8}, normalized_adjacency(gr)));
    }
    std::vector<double> m;
    for (double x : ops.a_hat.front().data()) m.push_back(x != 0.0 ? 1.0 : 0.0);
    ops.attention_mask = Tensor::from({8, 8}, m);
    auto x = random_tensor({8, 64}, rng);
    auto cond = random_tensor({1, 16}, rng);
    const auto hw = random_tensor({8, 64}, rng, false);
    std::vector<Tensor*> leaves;
    for (auto& p : ps.items()) leaves.push_back(&p.value);
    leaves.push_back(&x);
    leaves.push_back(&cond);
    const long t = static_cast<long>(rng.below(1000));
    const double err =
        grad_check([&] { return head(denoise(x, t, cond, ops, ps, cfg), hw); }, leaves, rng, {1e-5, 2, 1});
    worst_net = std::max(worst_net, err);
    v.require(err < 1e-4, "denoiser trial " + std::to_string(trial) + " err " + fmt(err));
  }
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + fmt(secs) + " s");
  v.note("worst op err " + fmt(worst_op) + " (" + worst_name + "), denoiser " + fmt(worst_net) + ", " + fmt(secs, 3) +
         " s");
}

// ---- 2 ----
void schedule_correctness(Verdict& v) {
  const auto s = make_schedule(ScheduleKind::linear, 1000);
  v.require(s.beta.front() == 1e-4, "beta_0");
  v.require(s.beta.back() == 0.02, "beta_T-1");
  double prod = 1.0, worst = 0.0;
  for (std::size_t t = 0; t < 1000; ++t) {
    prod *= 1.0 - s.beta[t];
    worst = std::max(worst, std::abs(s.alpha_bar[t] - prod));
    if (t > 0) v.require(s.alpha_bar[t] < s.alpha_bar[t - 1], "alpha_bar not decreasing at " + std::to_string(t));
  }
  v.require(worst <= 1e-12, "alpha_bar product err " + fmt(worst));
  const auto c = make_schedule(ScheduleKind::cosine, 1000);
  for (std::size_t t = 1; t < 1000; ++t)
    v.require(c.alpha_bar[t] <= c.alpha_bar[t - 1], "cosine not monotone at " + std::to_string(t));
  v.require(c.alpha_bar.back() < 0.01, "cosine alpha_bar_T-1 " + fmt(c.alpha_bar.back()));
  v.note("product err " + fmt(worst) + ", cosine alpha_bar_T-1 " + fmt(c.alpha_bar.back()));
}

// ---- 3 ----
void forward_statistics(Verdict& v) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = make_schedule(ScheduleKind::linear, 1000);
  Rng rng(3);
  // x_t is linear in x0; at t = T-1 the mean is sqrt(alpha_bar) ~ 0.006 of x0, so
  // x0 = 50 keeps a 2% relative bound above the Monte Carlo standard error.
  const double level = 50.0;
  const auto x0 = Tensor::full({1, 64}, level);
  std::ostringstream note;
  for (std::size_t t : {std::size_t{0}, std::size_t{500}, std::size_t{999}}) {
    const double mu = std::sqrt(s.alpha_bar[t]) * level, sd2 = 1.0 - s.alpha_bar[t];
    double m = 0, m2 = 0;
    const double n = 10000.0 * 64.0;
    for (int d = 0; d < 10000; ++d) {
      const auto r = forward_diffuse(x0, t, s, rng);
      for (double x : r.x_t.data()) m += x - mu, m2 += (x - mu) * (x - mu);
    }
    m /= n;
    const double var = m2 / n - m * m;
    m += mu;
    v.require(std::abs(m - mu) <= 0.02 * mu, "t " + std::to_string(t) + " mean " + fmt(m) + " vs " + fmt(mu));
    v.require(std::abs(var - sd2) <= 0.02 * sd2, "t " + std::to_string(t) + " var " + fmt(var) + " vs " + fmt(sd2));
    note << "t" << t << " mean " << fmt(m / mu, 5) << "x var " << fmt(var / sd2, 5) << "x; ";
  }
  const double secs = seconds_since(t0);
  v.require(secs < 30.0, "runtime " + fmt(secs) + " s");
  v.note(note.str() + fmt(secs, 3) + " s");
}

// ---- 4 ----
void filter_probes(Verdict& v) {
  using v2eg::testing::make_segment;
  using v2eg::testing::sine;
  const auto s10 = make_segment({sine(10.0, 200.0, 800)}, 200.0);
  const double g10 = v2eg::testing::steady_gain_db(s10, bandpass(s10, 0.5, 40.0), 100);
  v.require(std::abs(g10) <= 1.0, "10 Hz gain " + fmt(g10) + " dB");
  const auto s50 = make_segment({sine(50.0, 200.0, 800)}, 200.0);
  const double g50 = v2eg::testing::steady_gain_db(s50, bandpass(s50, 0.5, 40.0), 100);
  v.require(g50 <= -20.0, "50 Hz gain " + fmt(g50) + " dB");
  const auto dc = make_segment({std::vector<double>(800, 3.0)}, 200.0);
  double dc_peak = 0.0;
  for (double x : bandpass(dc, 0.5, 40.0).data) dc_peak = std::max(dc_peak, std::abs(x));
  const double gdc = 20 * std::log10(std::max(dc_peak, 1e-300) / 3.0);
  v.require(gdc <= -20.0, "DC gain " + fmt(gdc) + " dB");

  std::vector<double> tone(800);
  for (std::size_t i = 0; i < 800; ++i) {
    const double t = i / 200.0;
    tone[i] = std::sin(2 * M_PI * 7 * t) + 0.5 * std::sin(2 * M_PI * 11.3 * t + 0.4);
  }
  const auto in = make_segment({tone}, 200.0);
  const int lag = v2eg::testing::peak_lag(in.data, bandpass(in, 0.5, 40.0).data, 20);
  v.require(lag == 0, "lag " + std::to_string(lag));

  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> w(2000);
    for (auto& x : w) x = rng.normal();
    const auto seg = make_segment({w}, 200.0);
    double band_sum = 0.0;
    for (const auto& b : filter_bank(seg, default_bands(200.0))) band_sum += v2eg::testing::mean_power(b.data);
    const double ratio = band_sum / v2eg::testing::mean_power(bandpass(seg, 0.5, 45.0).data);
    worst = std::max(worst, std::abs(ratio - 1.0));
  }
  v.require(worst <= 0.25, "filter-bank power deviation " + fmt(worst));
  v.note("10 Hz " + fmt(g10, 3) + " dB, 50 Hz " + fmt(g50, 3) + " dB, DC " + fmt(gdc, 3) + " dB, lag 0, power dev " +
         fmt(worst, 3));
}

// ---- 5 ----
void graph_properties(Verdict& v) {
  auto check_adjacency = [&](const Graph& g, const std::string& what) {
    for (std::size_t i = 0; i < g.nodes; ++i) {
      v.require(g.at(i, i) == 0.0, what + " diagonal");
      for (std::size_t j = 0; j < g.nodes; ++j) v.require(g.at(i, j) == g.at(j, i), what + " asymmetric");
    }
  };
  Rng rng(12);
  double lo = 1e9, hi = -1e9;
  for (int trial = 0; trial < 20; ++trial) {
    Graph g;
    g.nodes = 10;
    g.adjacency.assign(100, 0.0);
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = i + 1; j < 10; ++j)
        if (rng.bernoulli(0.4)) g.adjacency[i * 10 + j] = g.adjacency[j * 10 + i] = rng.uniform(0.01, 3.0);
    check_adjacency(g, "random graph");
    const auto a = normalized_adjacency(g);
    Eigen::MatrixXd l = Eigen::MatrixXd::Identity(10, 10);
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j) l(i, j) -= a[i * 10 + j];
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(l).eigenvalues();
    lo = std::min(lo, ev.minCoeff());
    hi = std::max(hi, ev.maxCoeff());
  }
  v.require(lo >= -1e-9 && hi <= 2.0 + 1e-9, "eigenvalues in [" + fmt(lo) + ", " + fmt(hi) + "]");

  // E-Graph and S-Graphs of a noisy multichannel signal.
  auto sig = EegSegment::zeros(62, 800, 200.0);
  for (auto& x : sig.data) x = rng.normal();
  for (std::size_t t = 0; t < 800; ++t) sig.at(5, t) += 0.7 * sig.at(4, t);
  const auto set = build_graph_set(standard_layout_62(), 4, sig, default_bands(200.0), 0.1);
  for (const Graph* g : set.all()) check_adjacency(*g, g->band.empty() ? "e-graph" : "s-graph " + g->band);

  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    auto s = EegSegment::zeros(6, 100, 200.0);
    for (auto& x : s.data) x = rng.normal();
    for (std::size_t t = 0; t < 100; ++t) s.at(3, t) += 0.8 * s.at(1, t);
    auto r = s;
    for (std::size_t c = 0; c < 6; ++c) {
      const double sa = (c % 2 ? -1.0 : 1.0) * rng.uniform(0.1, 50.0), sb = rng.uniform(-100, 100);
      for (auto& x : r.channel(c)) x = sa * x + sb;
    }
    const auto g1 = build_s_graph(s, 0.0), g2 = build_s_graph(r, 0.0);
    for (std::size_t i = 0; i < g1.adjacency.size(); ++i)
      worst = std::max(worst, std::abs(g1.adjacency[i] - g2.adjacency[i]));
  }
  v.require(worst <= 1e-9, "affine invariance err " + fmt(worst));
  v.note("spectrum [" + fmt(lo, 3) + ", " + fmt(hi, 5) + "], affine err " + fmt(worst));
}

// ---- 6 ----
void augmentation_statistics(Verdict& v) {
  Rng rng(3);
  std::vector<EegSegment> batch;
  for (int i = 0; i < 10000; ++i) {
    auto s = EegSegment::zeros(8, 16, 200.0);
    for (auto& x : s.data) x = rng.uniform(-0.9, 0.9);
    s.normalized = true;
    batch.push_back(std::move(s));
  }
  const auto out = augment_batch(batch, AugmentationConfig{}, rng);
  const double frac = static_cast<double>(out.augmented.size()) / 10000.0;
  v.require(std::abs(frac - 0.3) <= 0.015, "augmented fraction " + fmt(frac));

  // Dropout is checked against the drawn channel list directly.
  std::size_t dropped = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> chans;
    for (std::size_t c = 0; c < 8; ++c)
      if (rng.bernoulli(0.4)) chans.push_back(c);
    const auto y = drop_channels(batch[trial], chans);
    for (std::size_t c = 0; c < 8; ++c) {
      const bool drawn = std::find(chans.begin(), chans.end(), c) != chans.end();
      for (std::size_t t = 0; t < 16; ++t)
        v.require(drawn ? y.at(c, t) == 0.0 : y.at(c, t) == batch[trial].at(c, t),
                  "dropout channel " + std::to_string(c) + " trial " + std::to_string(trial));
    }
    dropped += chans.size();
  }
  // Inside augment_batch every dropout zeroes exactly the configured count.
  std::size_t dropouts = 0;
  for (std::size_t i = 0; i < out.segments.size(); ++i) {
    if (out.kinds[i] != Perturbation::channel_dropout) continue;
    ++dropouts;
    std::size_t zero = 0;
    for (std::size_t c = 0; c < 8; ++c) {
      bool all = true;
      for (double x : out.segments[i].channel(c)) all = all && x == 0.0;
      zero += all;
      if (!all)
        for (std::size_t t = 0; t < 16; ++t)
          v.require(out.segments[i].at(c, t) == batch[i].at(c, t), "kept channel altered in segment " + std::to_string(i));
    }
    v.require(zero == 3, "segment " + std::to_string(i) + " zeroed " + std::to_string(zero) + " channels");
  }
  v.note("fraction " + fmt(frac) + ", " + std::to_string(dropouts) + " batch dropouts, " + std::to_string(dropped) +
         " explicit channels");
}

// ---- 7 ----
void toy_training(Verdict& v) {
  const RunConfig cfg = toy_config();
  const auto root = toy_corpus(cfg.seed);
  const auto split = split_corpus(load_manifest(root), cfg);
  const auto train = load_examples(cfg, root, split.train);
  v.require(train.examples.size() == 500, "segments " + std::to_string(train.examples.size()));
  const auto graphs = corpus_graphs(cfg, train.examples);
  auto run = [&] {
    Rng init = Rng(cfg.seed).derive(1), trng = Rng(cfg.seed).derive(2);
    auto model = build_model(cfg, variant_of(cfg), graphs, init);
    return train_model(model, cfg, train.examples, trng);
  };
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = run();
  const double secs = seconds_since(t0);
  const auto b = run();
  const auto& e = a.epoch_diffusion;
  v.require(e.size() == 30, "epochs " + std::to_string(e.size()));
  double last5 = 0.0;
  for (std::size_t i = e.size() - 5; i < e.size(); ++i) last5 += e[i] / 5.0;
  const double ratio = last5 / e.front();
  v.require(ratio <= 0.5, "last5/first " + fmt(ratio));
  v.require(secs < 300.0, "runtime " + fmt(secs) + " s");
  bool same = a.history.size() == b.history.size() && a.epoch_diffusion == b.epoch_diffusion &&
              a.epoch_total == b.epoch_total;
  for (std::size_t i = 0; same && i < a.history.size(); ++i) {
    const auto &x = a.history[i], &y = b.history[i];
    same = x.total == y.total && x.diffusion == y.diffusion && x.adversarial == y.adversarial &&
           x.frequency == y.frequency && x.spatial == y.spatial && x.temporal == y.temporal &&
           x.discriminator == y.discriminator;
  }
  v.require(same, "rerun loss history differs");
  v.note("first " + fmt(e.front()) + ", last5 " + fmt(last5) + ", ratio " + fmt(ratio, 3) + ", " + fmt(secs, 3) +
         " s, rerun identical");
}

// ---- 8 ----
unsigned worker_threads() { return std::max(1u, std::min(8u, std::thread::hardware_concurrency())); }

fs::path train_variant(std::uint64_t seed, Variant variant) {
  RunConfig cfg = toy_config();
  cfg.seed = seed;
  cfg.disable_spgn = variant == Variant::baseline;
  cfg.disable_spatial_attention = variant == Variant::no_attention;
  const fs::path out = work_dir() / ("train_" + std::to_string(seed) + "_" + variant_name(variant));
  if (!fs::exists(out / "checkpoint" / "checkpoint.json")) cmd_train(cfg, toy_corpus(seed), out);
  return out;
}

double eval_mse(std::uint64_t seed, const fs::path& run) {
  RunConfig cfg = toy_config();
  cfg.seed = seed;
  const fs::path gen = run / "generated", ev = run / "evaluated";
  cmd_generate(cfg, run, toy_corpus(seed), gen, 0, worker_threads());
  return cmd_evaluate(cfg, gen, toy_corpus(seed), ev).aggregates.at("mse").mean;
}

void conditioning_effectiveness(Verdict& v) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream note;
  int wins = 0;
  for (std::uint64_t seed : {7, 11, 23}) {
    const double full = eval_mse(seed, train_variant(seed, Variant::full));
    const double base = eval_mse(seed, train_variant(seed, Variant::baseline));
    const double gain = (base - full) / base;
    wins += gain >= 0.10;
    v.require(gain >= 0.10, "seed " + std::to_string(seed) + " full " + fmt(full) + " baseline " + fmt(base));
    note << "seed " << seed << ": full " << fmt(full) << " baseline " << fmt(base) << " (" << fmt(100 * gain, 3)
         << "% better); ";
  }
  const double secs = seconds_since(t0);
  v.require(secs < 900.0, "runtime " + fmt(secs) + " s");
  note << wins << "/3 seeds, " << fmt(secs, 3) << " s";
  v.note(note.str());
}

// ---- 9 ----
void ablation_harness(Verdict& v) {
  const RunConfig cfg = toy_config();
  AblateOptions opt;
  opt.train_each = false;
  opt.full_run = train_variant(cfg.seed, Variant::full);
  opt.baseline_run = train_variant(cfg.seed, Variant::baseline);
  opt.no_attention_run = train_variant(cfg.seed, Variant::no_attention);
  opt.threads = 1;
  const auto res = cmd_ablate(cfg, toy_corpus(cfg.seed), work_dir() / "ablate", opt);
  const std::vector<std::string> expected{"Full SPGN",    "Baseline",     "No Spatial Attention",
                                          "Diffusion 25", "Diffusion 50", "Diffusion 100"};
  std::vector<std::string> names;
  for (const auto& r : res.rows) names.push_back(r.name);
  v.require(names == expected, "configuration rows differ");
  if (res.rows.size() == 6) {
    const double t25 = res.rows[3].inference_time_s, t50 = res.rows[4].inference_time_s,
                 t100 = res.rows[5].inference_time_s;
    v.require(t25 <= t50 && t50 <= t100, "timing " + fmt(t25) + ", " + fmt(t50) + ", " + fmt(t100));
    v.note("median s/sample 25/50/100: " + fmt(t25, 3) + " " + fmt(t50, 3) + " " + fmt(t100, 3));
  }
  const auto table = res.table();
  v.require(table.find("(mse-full)/full %") != std::string::npos, "vs-full column missing");
  v.require(table.find("(mse-full)/config %") != std::string::npos, "vs-config column missing");
  for (const auto& d : published_ablation().degradation()) {
    if (d.name != "Baseline") continue;
    v.require(std::abs(100 * d.vs_config - 24.0) <= 0.1, "published baseline vs config " + fmt(100 * d.vs_config));
    v.note("published baseline: " + fmt(100 * d.vs_config, 3) + "% by config denominator, " +
           fmt(100 * d.vs_full, 3) + "% by full denominator");
  }
}

// ---- 10 ----
void metric_identities(Verdict& v) {
  Rng rng(10);
  auto x = EegSegment::zeros(8, 400, 200.0);
  for (auto& s : x.data) s = rng.normal();
  const auto bands = default_bands(200.0);
  v.require(mse(x, x) == 0.0, "mse(x,x)");
  v.require(mae(x, x) == 0.0, "mae(x,x)");
  v.require(std::abs(pearson(x, x).value - 1.0) <= 1e-12, "corr(x,x)");
  for (const auto& [name, sim] : band_similarity(x, x, bands))
    v.require(std::abs(sim - 1.0) <= 1e-12, "band " + name + " " + fmt(sim));
  v.require(snr_db(x, x) == 99.0, "snr cap " + fmt(snr_db(x, x)));

  auto y = EegSegment::zeros(8, 400, 200.0);
  for (auto& s : y.data) s = rng.normal();
  v.require(mse(x, y) == mse(y, x) && mae(x, y) == mae(y, x), "mse/mae symmetry");
  v.require(std::abs(pearson(x, y).value - pearson(y, x).value) <= 1e-12, "corr symmetry");
  const auto bxy = band_similarity(x, y, bands), byx = band_similarity(y, x, bands);
  for (const auto& [name, sim] : bxy) v.require(std::abs(sim - byx.at(name)) <= 1e-12, "band symmetry " + name);

  // Correlation pools every channel, so it is invariant to one global affine
  // map; band similarity is per channel, so to positive per-channel gains.
  auto ya = y, ys = y;
  for (auto& s : ya.data) s = 7.5 * s - 3.0;
  for (std::size_t c = 0; c < 8; ++c)
    for (auto& s : ys.channel(c)) s *= 0.01 + 3.0 * c;
  double worst = std::abs(pearson(x, y).value - pearson(x, ya).value);
  const auto bs = band_similarity(x, ys, bands);
  for (const auto& [name, sim] : bxy) worst = std::max(worst, std::abs(sim - bs.at(name)));
  v.require(worst <= 1e-9, "scale invariance err " + fmt(worst));
  v.note("identities exact, scale invariance err " + fmt(worst));
}

// ---- 11 ----
void container_integrity(Verdict& v) {
  const fs::path root = work_dir() / "container";
  fs::remove_all(root);
  Rng rng(11);
  std::vector<AlignedSample> written;
  {
    CorpusWriter w(root);
    for (int i = 0; i < 1000; ++i) {
      AlignedSample s;
      char id[32];
      std::snprintf(id, sizeof id, "toy%04d", i);
      s.id = id;
      s.subject_id = 1 + i % 15;
      s.video_id = 1 + i % 72;
      s.start_time_s = 0.5 * i;
      s.emotion = static_cast<Emotion>(i % 4);
      s.video.frames = 2;
      s.video.height = s.video.width = 16;
      s.video.frame_rate_hz = 6.25;
      s.video.pixels.resize(2 * 16 * 16 * 3);
      for (auto& p : s.video.pixels) p = static_cast<std::uint8_t>(rng.below(256));
      s.eeg = EegSegment::zeros(4, 64, 200.0);
      for (auto& x : s.eeg.data) x = static_cast<float>(rng.normal());
      s.duration_s = 0.32;
      w.add(s, false);
      written.push_back(std::move(s));
    }
    w.commit();
  }
  auto cur = load_corpus(root);
  std::size_t same = 0;
  for (const auto& s : written) {
    const auto r = cur.next();
    if (r && r->id == s.id && r->video.pixels == s.video.pixels && r->eeg.data == s.eeg.data &&
        r->start_time_s == s.start_time_s && r->emotion == s.emotion && r->subject_id == s.subject_id)
      ++same;
  }
  v.require(same == 1000, "round trip " + std::to_string(same) + "/1000");

  // Flip one byte in each file of one sample.
  const auto m = load_manifest(root);
  const auto& entry = m.samples[417];
  std::size_t detected = 0;
  for (const auto& f : entry.files) {
    const fs::path p = root / f.path;
    auto bytes = read_file(p);
    const auto orig = bytes;
    bytes[bytes.size() / 2] ^= 0x01;
    write_file_atomic(p, std::string(bytes.begin(), bytes.end()));
    try {
      read_sample(root, entry);
    } catch (const IoError&) {
      ++detected;
    }
    write_file_atomic(p, std::string(orig.begin(), orig.end()));
  }
  v.require(detected == entry.files.size(),
            "corruption detected in " + std::to_string(detected) + "/" + std::to_string(entry.files.size()) + " files");

  const fs::path t1 = work_dir() / "published_rows";
  fs::remove_all(t1);
  std::vector<AlignedSample> rows;
  for (int row = 1; row <= 2; ++row) {
    AlignedSample s;
    s.id = "published_" + std::to_string(row);
    s.subject_id = row == 1 ? 1 : 2;
    s.video_id = row == 1 ? 2 : 1;
    s.start_time_s = row == 1 ? 117.61 : 404.79;
    s.duration_s = 5.0;
    s.video.frames = 60;
    s.video.height = s.video.width = 224;
    s.video.frame_rate_hz = 12.0;
    s.video.pixels.assign(60 * 224 * 224 * 3, static_cast<std::uint8_t>(row * 40));
    s.eeg = EegSegment::zeros(62, 200, 200.0);
    for (std::size_t i = 0; i < s.eeg.data.size(); ++i) s.eeg.data[i] = static_cast<float>(std::sin(0.01 * i * row));
    rows.push_back(std::move(s));
  }
  {
    CorpusWriter w(t1);
    for (const auto& s : rows) w.add(s);
  }
  auto c1 = load_corpus(t1);
  for (const auto& s : rows) {
    const auto r = c1.next();
    v.require(r && r->eeg.data == s.eeg.data && r->video.pixels == s.video.pixels && r->duration_s == 5.0 &&
                  r->start_time_s == s.start_time_s,
              s.id + " not verbatim");
    v.require(r && !r->consistent() && !validate_alignment(*r).passed(), s.id + " inconsistency not flagged");
  }
  v.note("1000/1000 bit-exact, " + std::to_string(detected) + "/" + std::to_string(entry.files.size()) +
         " corruptions caught, published sample rows stored and flagged");
}

// ---- 12 ----
int cli(const std::string& args) {
  const std::string cmd = std::string("V2EG_LOG=error '") + V2EG_CLI + "' " + args + " > /dev/null";
  return std::system(cmd.c_str());
}

// Byte comparison of every regular file under two directories.
bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) {
    why = "file lists differ under " + a.string();
    return false;
  }
  for (const auto& f : fa)
    if (read_file(a / f) != read_file(b / f)) {
      why = (a / f).string() + " differs";
      return false;
    }
  return true;
}

void determinism(Verdict& v) {
  const fs::path w = work_dir() / "cli";
  fs::remove_all(w);
  fs::create_directories(w);
  const std::string cfg = "--config '" + (fs::path(V2EG_PROJECT_DIR) / "configs" / "toy.cfg").string() + "'";
  const std::string small = " --set train.epochs=2 --set train.max_segments=64";
  auto d = [&](const char* n) { return "'" + (w / n).string() + "'"; };
  auto run = [&](const std::string& args, const std::string& what) {
    const int rc = cli(args);
    v.require(rc == 0, what + " exit " + std::to_string(rc));
    return rc == 0;
  };
  if (!run(cfg + " --out " + d("fx") + " fixture", "fixture")) return;
  if (!run(cfg + " --out " + d("pre") + " preprocess --in " + d("fx"), "preprocess")) return;
  if (!run(cfg + small + " --out " + d("train") + " train --data " + d("pre"), "train")) return;
  for (const char* out : {"gen_a", "gen_b"})
    if (!run("--seed 7 --threads 3 --out " + d(out) + " generate --run " + d("train") + " --data " + d("pre") +
                 " --count 12",
             out))
      return;
  std::string why;
  v.require(same_tree(w / "gen_a" / "corpus", w / "gen_b" / "corpus", why), "generate --seed 7: " + why);

  // Each run directory rebuilt from nothing but its embedded config.cfg.
  auto embedded = [&](const char* n) { return "--config '" + (w / n / "config.cfg").string() + "'"; };
  run(embedded("fx") + " --out " + d("fx_r") + " fixture", "fixture rerun");
  run(embedded("pre") + " --out " + d("pre_r") + " preprocess --in " + d("fx"), "preprocess rerun");
  run(embedded("train") + " --out " + d("train_r") + " train --data " + d("pre"), "train rerun");
  run(embedded("gen_a") + " --threads 1 --out " + d("gen_r") + " generate --run " + d("train") + " --data " + d("pre") +
          " --count 12",
      "generate rerun");
  const std::pair<const char*, const char*> pairs[] = {
      {"fx", "fx_r"}, {"pre", "pre_r"}, {"train", "train_r"}, {"gen_a", "gen_r"}};
  for (const auto& [a, b] : pairs) {
    for (const char* sub : {"corpus", "checkpoint"}) {
      if (!fs::exists(w / a / sub)) continue;
      v.require(fs::exists(w / b / sub) && same_tree(w / a / sub, w / b / sub, why), std::string(b) + ": " + why);
    }
    for (const char* file : {"config.cfg", "loss_history.csv", "graphs.v2a"}) {
      if (!fs::exists(w / a / file)) continue;
      v.require(fs::exists(w / b / file) && read_file(w / a / file) == read_file(w / b / file),
                std::string(b) + "/" + file + " differs");
    }
  }
  v.note("generate twice byte-identical; fixture, preprocess, train and generate reproduced from config.cfg");
}

}  // namespace

int main() {
  set_log_level(LogLevel::error);
  fs::remove_all(work_dir());
  fs::create_directories(work_dir());

  const std::pair<const char*, void (*)(Verdict&)> criteria[] = {
      {"gradient integrity", gradient_integrity},
      {"schedule correctness", schedule_correctness},
      {"forward-process statistics", forward_statistics},
      {"filter probes", filter_probes},
      {"graph properties", graph_properties},
      {"augmentation statistics", augmentation_statistics},
      {"toy training convergence", toy_training},
      {"conditioning effectiveness", conditioning_effectiveness},
      {"ablation harness", ablation_harness},
      {"metric identities", metric_identities},
      {"container integrity", container_integrity},
      {"determinism", determinism},
  };
  int failed = 0, n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(v);
    } catch (const std::exception& e) {
      v.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = v.failures.empty();
    failed += !ok;
    std::printf("%s %2d %s (%.1f s)", ok ? "PASS" : "FAIL", n, name, seconds_since(t0));
    for (const auto& s : v.notes) std::printf(" | %s", s.c_str());
    std::printf("\n");
    const std::size_t shown = std::min<std::size_t>(v.failures.size(), 5);
    for (std::size_t i = 0; i < shown; ++i) std::printf("     - %s\n", v.failures[i].c_str());
    if (v.failures.size() > shown) std::printf("     - ... %zu more\n", v.failures.size() - shown);
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", n - failed, n);
  if (!std::getenv("V2EG_KEEP_WORK")) fs::remove_all(work_dir());
  return failed ? 1 : 0;
}
