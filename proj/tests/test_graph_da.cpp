#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "v2eg/errors.hpp"
#include "v2eg/graph_da.hpp"

using namespace v2eg;

namespace {

EegSegment random_unit_segment(std::size_t channels, std::size_t samples, Rng& rng) {
  auto s = EegSegment::zeros(channels, samples, 200.0);
  for (auto& v : s.data) v = rng.uniform(-0.9, 0.9);
  s.normalized = true;
  return s;
}

std::vector<EegSegment> random_batch(std::size_t n, Rng& rng, std::size_t channels = 8, std::size_t samples = 32) {
  std::vector<EegSegment> b;
  for (std::size_t i = 0; i < n; ++i) b.push_back(random_unit_segment(channels, samples, rng));
  return b;
}

std::size_t zero_channels(const EegSegment& s) {
  std::size_t n = 0;
  for (std::size_t c = 0; c < s.channels; ++c) {
    bool all = true;
    for (double v : s.channel(c)) all = all && v == 0.0;
    n += all;
  }
  return n;
}

}  // namespace

TEST_CASE("ratio 0 is the identity") {
  Rng rng(1);
  const auto batch = random_batch(50, rng);
  AugmentationConfig cfg;
  cfg.ratio = 0.0;
  const auto out = augment_batch(batch, cfg, rng);
  CHECK(out.augmented.empty());
  REQUIRE(out.segments.size() == batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(out.segments[i].data == batch[i].data);
}

TEST_CASE("ratio 1 with dropout drawn zeroes exactly three channels") {
  Rng rng(2);
  const auto batch = random_batch(400, rng);
  AugmentationConfig cfg;
  cfg.ratio = 1.0;
  const auto out = augment_batch(batch, cfg, rng);
  CHECK(out.augmented.size() == batch.size());
  int dropouts = 0;
  int seen[5] = {0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& y = out.segments[i];
    CHECK(y.channels == batch[i].channels);
    CHECK(y.samples == batch[i].samples);
    for (double v : y.data) CHECK(std::abs(v) <= 1.0);
    ++seen[static_cast<int>(out.kinds[i])];
    if (out.kinds[i] != Perturbation::channel_dropout) continue;
    ++dropouts;
    CHECK(zero_channels(y) == 3);
    for (std::size_t c = 0; c < y.channels; ++c) {
      bool zero = true;
      for (double v : y.channel(c)) zero = zero && v == 0.0;
      if (zero) continue;
      for (std::size_t t = 0; t < y.samples; ++t) CHECK(y.at(c, t) == batch[i].at(c, t));
    }
  }
  CHECK(dropouts > 0);
  CHECK(seen[0] == 0);
  // Uniform over four kinds: 100 expected each, sd ~8.7.
  for (int k = 1; k <= 4; ++k) {
    CHECK(seen[k] > 60);
    CHECK(seen[k] < 140);
  }
}

TEST_CASE("selection fraction over 10 000 segments at ratio 0.3") {
  Rng rng(3);
  const auto batch = random_batch(10000, rng, 2, 8);
  AugmentationConfig cfg;
  const auto out = augment_batch(batch, cfg, rng);
  const double frac = static_cast<double>(out.augmented.size()) / 10000.0;
  INFO("fraction " << frac);
  CHECK(frac >= 0.285);
  CHECK(frac <= 0.315);
}

TEST_CASE("amplitude scale at most one is exact multiplication") {
  Rng rng(4);
  const auto batch = random_batch(100, rng);
  AugmentationConfig cfg;
  cfg.ratio = 1.0;
  cfg.scale_low = 0.5;
  cfg.scale_high = 1.0;
  const auto out = augment_batch(batch, cfg, rng);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (out.kinds[i] != Perturbation::amplitude_scale) continue;
    // Recover s from the largest-magnitude entry, then check every entry.
    std::size_t arg = 0;
    for (std::size_t k = 0; k < batch[i].data.size(); ++k)
      if (std::abs(batch[i].data[k]) > std::abs(batch[i].data[arg])) arg = k;
    const double s = out.segments[i].data[arg] / batch[i].data[arg];
    CHECK(s >= 0.5);
    CHECK(s <= 1.0);
    for (std::size_t k = 0; k < batch[i].data.size(); ++k)
      CHECK(out.segments[i].data[k] == doctest::Approx(s * batch[i].data[k]).epsilon(1e-12));
  }
}

TEST_CASE("time offset examples") {
  Rng rng(5);
  const auto x = random_unit_segment(4, 40, rng);
  CHECK(time_offset(x, 0).data == x.data);
  for (long s : {1L, 7L, -13L, 39L, -39L}) CHECK(time_offset(time_offset(x, s), -s).data == x.data);

  auto imp = EegSegment::zeros(3, 40, 200.0);
  for (std::size_t c = 0; c < 3; ++c) imp.at(c, 10) = 1.0;
  const auto y = time_offset(imp, 5);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 40; ++t) CHECK(y.at(c, t) == (t == 15 ? 1.0 : 0.0));

  CHECK_THROWS_AS(time_offset(x, 40), ParameterError);
  CHECK_THROWS_AS(time_offset(x, -40), ParameterError);
}

TEST_CASE("augmentation is deterministic under a fixed seed") {
  Rng data_rng(6);
  const auto batch = random_batch(64, data_rng);
  AugmentationConfig cfg;
  cfg.ratio = 0.7;
  Rng a(42), b(42);
  const auto oa = augment_batch(batch, cfg, a);
  const auto ob = augment_batch(batch, cfg, b);
  CHECK(oa.augmented == ob.augmented);
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(oa.segments[i].data == ob.segments[i].data);
  // A second call on the same generator draws fresh perturbations.
  const auto oc = augment_batch(batch, cfg, a);
  CHECK(oc.augmented != oa.augmented);
}

TEST_CASE("config validation") {
  AugmentationConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.ratio = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = {};
  cfg.scale_low = 1.3;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = {};
  cfg.dropout_channels = -1;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
}
