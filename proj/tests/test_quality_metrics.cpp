#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "v2eg/errors.hpp"
#include "v2eg/quality_metrics.hpp"
#include "v2eg/rng.hpp"

using namespace v2eg;

namespace {

EegSegment noise(std::size_t ch, std::size_t n, Rng& rng, double sd = 1.0, double fs = 200.0) {
  auto s = EegSegment::zeros(ch, n, fs);
  for (auto& v : s.data) v = sd * rng.normal();
  return s;
}

EegSegment scaled(EegSegment s, double k) {
  for (auto& v : s.data) v *= k;
  return s;
}

// Hand-rolled Welch: periodic Hann, 1 s segments, half overlap, mean removal.
std::vector<double> welch_oracle(const std::vector<double>& x, std::size_t fs) {
  const std::size_t L = fs, hop = L / 2;
  std::vector<double> w(L), acc(L / 2 + 1, 0.0);
  for (std::size_t i = 0; i < L; ++i) w[i] = 0.5 - 0.5 * std::cos(2 * M_PI * i / L);
  std::size_t segs = 0;
  for (std::size_t s = 0; s + L <= x.size(); s += hop, ++segs) {
    double m = 0;
    for (std::size_t i = 0; i < L; ++i) m += x[s + i];
    m /= L;
    for (std::size_t k = 0; k <= L / 2; ++k) {
      double re = 0, im = 0;
      for (std::size_t i = 0; i < L; ++i) {
        re += w[i] * (x[s + i] - m) * std::cos(2 * M_PI * k * i / L);
        im -= w[i] * (x[s + i] - m) * std::sin(2 * M_PI * k * i / L);
      }
      acc[k] += re * re + im * im;
    }
  }
  for (auto& v : acc) v /= segs;
  return acc;  // unscaled: cosine ignores constant factors except the one-sided doubling
}

}  // namespace

TEST_CASE("identities") {
  Rng rng(1);
  const auto x = noise(4, 800, rng);
  CHECK(mse(x, x) == 0.0);
  CHECK(mae(x, x) == 0.0);
  CHECK(pearson(x, x).value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pearson(x, scaled(x, -1.0)).value == doctest::Approx(-1.0).epsilon(1e-14));
  for (const auto& [band, v] : band_similarity(x, x, default_bands(200.0))) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& [band, v] : band_similarity(x, scaled(x, 2.0), default_bands(200.0)))
    CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(snr_db(x, x) == 99.0);
}

TEST_CASE("SNR arithmetic") {
  auto ref = EegSegment::zeros(1, 4, 200.0);
  ref.data = {1, -1, 1, -1};  // unit power
  auto sig = ref;
  for (auto& v : sig.data) v *= 2.0;  // residual = reference
  CHECK(snr_db(sig, ref) == doctest::Approx(0.0));
  sig = ref;
  for (std::size_t i = 0; i < 4; ++i) sig.data[i] += (i % 2 ? -0.1 : 0.1);  // residual power 0.01
  CHECK(snr_db(sig, ref) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("MSE of independent standard normals") {
  Rng rng(2);
  const auto a = noise(100, 10000, rng), b = noise(100, 10000, rng);
  CHECK(std::abs(mse(a, b) - 2.0) <= 0.02);
}

TEST_CASE("Pearson null distribution on 62x200 noise") {
  Rng rng(3);
  int within = 0;
  for (int trial = 0; trial < 1000; ++trial)
    within += std::abs(pearson(noise(62, 200, rng), noise(62, 200, rng)).value) < 0.03;
  INFO("within " << within);
  CHECK(within >= 950);
}

TEST_CASE("symmetry, power-mean inequality and degenerate correlation") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = noise(3, 300, rng, rng.uniform(0.1, 3)), b = noise(3, 300, rng, rng.uniform(0.1, 3));
    CHECK(std::abs(mse(a, b) - mse(b, a)) <= 1e-12);
    CHECK(std::abs(mae(a, b) - mae(b, a)) <= 1e-12);
    CHECK(std::abs(pearson(a, b).value - pearson(b, a).value) <= 1e-12);
    CHECK(mae(a, b) <= std::sqrt(mse(a, b)) + 1e-15);
  }
  auto flat = EegSegment::zeros(2, 50, 200.0);
  for (auto& v : flat.data) v = 0.4;
  const auto c = pearson(flat, noise(2, 50, rng));
  CHECK(c.value == 0.0);
  CHECK(c.degenerate);
  CHECK_THROWS_AS(mse(noise(2, 50, rng), noise(3, 50, rng)), MetricError);
  CHECK_THROWS_AS(mae(noise(2, 50, rng), noise(2, 50, rng, 1.0, 100.0)), MetricError);
  CHECK_THROWS_AS(band_similarity(noise(2, 400, rng), noise(2, 400, rng), {{"hi", 90, 120}}), ParameterError);
}

TEST_CASE("band similarity is invariant to positive per-channel rescaling") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = noise(4, 600, rng), b = noise(4, 600, rng);
    auto r = a;
    for (std::size_t c = 0; c < 4; ++c) {
      const double k = rng.uniform(0.05, 20.0);
      for (auto& v : r.channel(c)) v *= k;
    }
    const auto s1 = band_similarity(a, b, default_bands(200.0));
    const auto s2 = band_similarity(r, b, default_bands(200.0));
    for (const auto& [band, v] : s1) {
      CHECK(std::abs(v - s2.at(band)) <= 1e-9);
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("10 Hz against 40 Hz in the alpha band") {
  Rng rng(6);
  auto a = EegSegment::zeros(1, 2000, 200.0), b = a;
  for (std::size_t t = 0; t < 2000; ++t) {
    a.data[t] = std::sin(2 * M_PI * 10.0 * t / 200.0) + 1e-3 * rng.normal();
    b.data[t] = std::sin(2 * M_PI * 40.0 * t / 200.0) + 1e-3 * rng.normal();
  }
  const double sim = band_similarity(a, b, default_bands(200.0)).at("alpha");
  // Oracle: cosine over bins 8..12 Hz of a direct Welch computation.
  const auto pa = welch_oracle(a.data, 200), pb = welch_oracle(b.data, 200);
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 8; k < 13; ++k) {
    ab += pa[k] * pb[k];
    aa += pa[k] * pa[k];
    bb += pb[k] * pb[k];
  }
  const double oracle = ab / std::sqrt(aa * bb);
  INFO("similarity " << sim << " oracle " << oracle);
  CHECK(sim == doctest::Approx(oracle).epsilon(1e-9));
  // A non-negative 5-bin vector against a flat one has cosine >= 1/sqrt(5).
  CHECK(sim >= 1.0 / std::sqrt(5.0) - 0.05);
  CHECK(sim < 0.8);
  auto c = a;
  for (auto& v : c.data) v += 1e-3 * rng.normal();
  CHECK(band_similarity(a, c, default_bands(200.0)).at("alpha") > 0.999);
}

TEST_CASE("report aggregates") {
  Rng rng(7);
  const auto g1 = noise(2, 400, rng), r1 = noise(2, 400, rng);
  const auto single = build_report({{&g1, &r1, 0.5, "s0", 1, 2}}, default_bands(200.0));
  for (const auto& [k, a] : single.aggregates) {
    CHECK(a.mean == a.min);
    CHECK(a.mean == a.max);
    CHECK(a.std == 0.0);
  }
  CHECK(single.subjects == std::vector<int>{1});

  // Two samples with known metrics: reference zero-mean alternating, generated offset copies.
  auto ref = EegSegment::zeros(1, 400, 200.0);
  for (std::size_t t = 0; t < 400; ++t) ref.data[t] = std::sin(2 * M_PI * 10.0 * t / 200.0);
  auto ga = ref, gb = ref;
  for (auto& v : ga.data) v += 0.1;
  for (auto& v : gb.data) v -= 0.3;
  const auto two = build_report({{&ga, &ref, 1.0, "a", 1, 2}, {&gb, &ref, 3.0, "b", 2, 1}}, default_bands(200.0));
  // mse 0.01 and 0.09; mae 0.1 and 0.3; times 1 and 3.
  CHECK(two.aggregates.at("mse").mean == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(two.aggregates.at("mse").std == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(two.aggregates.at("mae").min == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(two.aggregates.at("mae").max == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(two.aggregates.at("inference_time_s").mean == 2.0);
  CHECK(two.aggregates.at("inference_time_s").std == 1.0);
  CHECK(two.aggregates.at("correlation").mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(two.subjects == std::vector<int>{1, 2});
  CHECK(two.videos == std::vector<int>{1, 2});
  CHECK(two.corpus_band_similarity.at("alpha") == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& [k, a] : two.aggregates) {
    CHECK(a.min <= a.mean);
    CHECK(a.mean <= a.max);
    CHECK(a.std >= 0.0);
  }

  const auto back = QualityReport::from_json(two.to_json());
  CHECK(back.to_json() == two.to_json());
  CHECK(back.samples[1].mse == two.samples[1].mse);
  const auto csv = two.to_csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.rfind("id,subject_id,video_id,mse", 0) == 0);

  CHECK_THROWS_AS(build_report({}, default_bands(200.0)), ReportError);
  CHECK_THROWS_AS(QualityReport::from_json("{\"schema\": 3}"), ReportError);
}
