#include "v2eg/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "v2eg/errors.hpp"

namespace v2eg {

using cd = std::complex<double>;

EegSegment EegSegment::zeros(std::size_t channels, std::size_t samples, double rate_hz) {
  EegSegment s;
  s.channels = channels;
  s.samples = samples;
  s.sampling_rate_hz = rate_hz;
  s.data.assign(channels * samples, 0.0);
  return s;
}

void EegSegment::validate() const {
  if (channels == 0 || samples == 0) throw ValidationError("EEG segment must have channels and samples");
  if (data.size() != channels * samples) {
    throw ValidationError("EEG data length " + std::to_string(data.size()) + " != " + std::to_string(channels) +
                          " x " + std::to_string(samples));
  }
  if (!(sampling_rate_hz > 0.0)) throw ValidationError("EEG sampling rate must be positive");
  if (!channel_names.empty() && channel_names.size() != channels) {
    throw ValidationError("EEG channel name count does not match channel count");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw ValidationError("EEG segment holds a non-finite value");
    if (normalized && (v < -1.0 || v > 1.0)) throw ValidationError("normalized EEG value outside [-1, 1]");
  }
}

std::vector<BandDefinition> default_bands(double sampling_rate_hz) {
  const double gamma_hi = std::min(45.0, 0.95 * sampling_rate_hz / 2.0);
  return {{"delta", 0.5, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 13.0}, {"beta", 13.0, 30.0}, {"gamma", 30.0, gamma_hi}};
}

void validate_band(const BandDefinition& band, double sampling_rate_hz) {
  const double nyq = sampling_rate_hz / 2.0;
  if (!(band.low_hz > 0.0 && band.low_hz < band.high_hz && band.high_hz < nyq)) {
    throw ParameterError("band '" + band.name + "' [" + std::to_string(band.low_hz) + ", " +
                         std::to_string(band.high_hz) + "] Hz must satisfy 0 < low < high < " + std::to_string(nyq));
  }
}

// ---------------------------------------------------------------------------
// filter design

namespace {

double prewarp(double f_hz, double fs_hz) { return 2.0 * fs_hz * std::tan(std::numbers::pi * f_hz / fs_hz); }

cd bilinear(cd s, double fs_hz) { return (2.0 * fs_hz + s) / (2.0 * fs_hz - s); }

// Left-half-plane Butterworth prototype poles with positive imaginary part.
std::vector<cd> prototype_upper_poles(int order) {
  std::vector<cd> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    cd p = std::polar(1.0, theta);
    if (p.imag() > 0) poles.push_back(p);
  }
  return poles;
}

Biquad section_from_pole(cd z_pole, double b0, double b1, double b2) {
  return {b0, b1, b2, -2.0 * z_pole.real(), std::norm(z_pole)};
}

void require_even_order(int order) {
  if (order < 2 || order % 2 != 0) throw ParameterError("filter order must be even and >= 2");
}

void scale_cascade(std::vector<Biquad>& sos, double target_gain_at, double fs_hz) {
  const double g = cascade_gain(sos, target_gain_at, fs_hz);
  const double per = std::pow(1.0 / g, 1.0 / static_cast<double>(sos.size()));
  for (auto& s : sos) {
    s.b0 *= per;
    s.b1 *= per;
    s.b2 *= per;
  }
}

}  // namespace

double cascade_gain(std::span<const Biquad> sos, double f_hz, double fs_hz) {
  const cd z1 = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs_hz);
  const cd z2 = z1 * z1;
  cd h = 1.0;
  for (const auto& s : sos) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return std::abs(h);
}

std::vector<Biquad> butterworth_bandpass(double low_hz, double high_hz, double fs_hz, int order) {
  require_even_order(order);
  validate_band({"bandpass", low_hz, high_hz}, fs_hz);
  const double wl = prewarp(low_hz, fs_hz);
  const double wh = prewarp(high_hz, fs_hz);
  const double w0sq = wl * wh;
  const double bw = wh - wl;

  // Each prototype pole p maps to s = p*bw/2 +- sqrt((p*bw/2)^2 - w0^2); the
  // conjugate prototype pole gives the conjugates, so keep the upper half.
  std::vector<cd> upper;
  for (const cd p : prototype_upper_poles(order)) {
    for (const cd lp : {p, std::conj(p)}) {
      const cd half = lp * bw / 2.0;
      const cd root = std::sqrt(half * half - w0sq);
      for (const cd s : {half + root, half - root}) {
        if (s.imag() > 0) upper.push_back(bilinear(s, fs_hz));
      }
    }
  }
  std::vector<Biquad> sos;
  for (const cd zp : upper) sos.push_back(section_from_pole(zp, 1.0, 0.0, -1.0));
  const double center_digital =
      fs_hz / std::numbers::pi * std::atan(std::sqrt(w0sq) / (2.0 * fs_hz));
  scale_cascade(sos, center_digital, fs_hz);
  return sos;
}

std::vector<Biquad> butterworth_lowpass(double cutoff_hz, double fs_hz, int order) {
  require_even_order(order);
  if (!(cutoff_hz > 0.0 && cutoff_hz < fs_hz / 2.0)) throw ParameterError("lowpass cutoff must be in (0, Nyquist)");
  const double wc = prewarp(cutoff_hz, fs_hz);
  std::vector<Biquad> sos;
  for (const cd p : prototype_upper_poles(order)) sos.push_back(section_from_pole(bilinear(p * wc, fs_hz), 1.0, 2.0, 1.0));
  scale_cascade(sos, 0.0, fs_hz);
  return sos;
}

// ---------------------------------------------------------------------------
// filtering

namespace {

// Direct form II transposed, with state primed to the steady state for a
// constant input equal to x[0].
void sosfilt_steady(std::span<const Biquad> sos, std::vector<double>& x) {
  if (x.empty()) return;
  double level = x[0];
  for (const auto& s : sos) {
    const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double y_ss = dc * level;
    double z2 = s.b2 * level - s.a2 * y_ss;
    double z1 = y_ss - s.b0 * level;
    for (double& v : x) {
      const double in = v;
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      v = y;
    }
    level = y_ss;
  }
}

}  // namespace

std::vector<double> filtfilt(std::span<const Biquad> sos, std::span<const double> x, std::size_t pad) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  pad = std::min(pad, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(x[n - 1 - i]);

  sosfilt_steady(sos, ext);
  std::reverse(ext.begin(), ext.end());
  sosfilt_steady(sos, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

EegSegment bandpass(const EegSegment& x, double low_hz, double high_hz) {
  if (x.normalized) throw ParameterError("bandpass expects an unnormalized segment");
  const auto sos = butterworth_bandpass(low_hz, high_hz, x.sampling_rate_hz);
  const auto pad = static_cast<std::size_t>(std::llround(x.sampling_rate_hz));
  EegSegment out = x;
  for (std::size_t c = 0; c < x.channels; ++c) {
    const auto y = filtfilt(sos, x.channel(c), pad);
    std::copy(y.begin(), y.end(), out.channel(c).begin());
  }
  return out;
}

std::vector<EegSegment> filter_bank(const EegSegment& x, const std::vector<BandDefinition>& bands) {
  if (bands.empty()) throw ParameterError("filter_bank needs at least one band");
  for (const auto& b : bands) validate_band(b, x.sampling_rate_hz);
  std::vector<EegSegment> out;
  out.reserve(bands.size());
  for (const auto& b : bands) out.push_back(bandpass(x, b.low_hz, b.high_hz));
  return out;
}

// ---------------------------------------------------------------------------
// normalization

bool ScaleRecord::is_identity() const {
  return std::all_of(channels.begin(), channels.end(),
                     [](const ChannelScale& c) { return !c.constant && c.center == 0.0 && c.half_range == 1.0; });
}

Normalized normalize(const EegSegment& x) {
  Normalized out{x, {}};
  out.segment.normalized = true;
  out.scale.channels.resize(x.channels);
  for (std::size_t c = 0; c < x.channels; ++c) {
    const auto ch = x.channel(c);
    const auto [lo, hi] = std::minmax_element(ch.begin(), ch.end());
    ChannelScale sc;
    auto dst = out.segment.channel(c);
    if (*hi == *lo) {
      sc = {*lo, 1.0, true};
      std::fill(dst.begin(), dst.end(), 0.0);
    } else {
      sc.center = (*hi + *lo) / 2.0;
      sc.half_range = (*hi - *lo) / 2.0;
      for (std::size_t t = 0; t < ch.size(); ++t) {
        dst[t] = std::clamp((ch[t] - sc.center) / sc.half_range, -1.0, 1.0);
      }
    }
    out.scale.channels[c] = sc;
  }
  return out;
}

EegSegment denormalize(const EegSegment& y, const ScaleRecord& scale) {
  if (scale.channels.size() != y.channels) throw ParameterError("scale record does not match channel count");
  EegSegment out = y;
  out.normalized = false;
  for (std::size_t c = 0; c < y.channels; ++c) {
    const auto& sc = scale.channels[c];
    auto dst = out.channel(c);
    for (double& v : dst) v = sc.constant ? sc.center : v * sc.half_range + sc.center;
  }
  return out;
}

// ---------------------------------------------------------------------------
// segmentation / resampling

std::vector<EegSegment> segment(const EegSegment& recording, double window_s, double hop_s) {
  if (!(hop_s > 0.0)) throw ParameterError("segment hop must be positive");
  if (!(window_s > 0.0)) throw ParameterError("segment window must be positive");
  const auto win = static_cast<std::size_t>(std::llround(window_s * recording.sampling_rate_hz));
  const auto hop = static_cast<std::size_t>(std::llround(hop_s * recording.sampling_rate_hz));
  if (win == 0 || hop == 0) throw ParameterError("segment window and hop must span at least one sample");
  if (win > recording.samples) {
    throw ParameterError("segment window of " + std::to_string(window_s) + " s exceeds recording duration " +
                         std::to_string(recording.duration_s()) + " s");
  }
  std::vector<EegSegment> out;
  for (std::size_t start = 0; start + win <= recording.samples; start += hop) {
    EegSegment s = EegSegment::zeros(recording.channels, win, recording.sampling_rate_hz);
    s.channel_names = recording.channel_names;
    s.normalized = recording.normalized;
    for (std::size_t c = 0; c < recording.channels; ++c) {
      const auto src = recording.channel(c).subspan(start, win);
      std::copy(src.begin(), src.end(), s.channel(c).begin());
    }
    out.push_back(std::move(s));
  }
  return out;
}

EegSegment decimate(const EegSegment& x, int factor) {
  if (factor < 1) throw ParameterError("decimation factor must be >= 1");
  if (factor == 1) return x;
  const double new_rate = x.sampling_rate_hz / factor;
  const auto sos = butterworth_lowpass(0.8 * new_rate / 2.0, x.sampling_rate_hz);
  const std::size_t n = (x.samples + factor - 1) / factor;
  EegSegment out = EegSegment::zeros(x.channels, n, new_rate);
  out.channel_names = x.channel_names;
  const auto pad = static_cast<std::size_t>(std::llround(x.sampling_rate_hz));
  for (std::size_t c = 0; c < x.channels; ++c) {
    const auto y = filtfilt(sos, x.channel(c), pad);
    for (std::size_t t = 0; t < n; ++t) out.at(c, t) = y[t * factor];
  }
  return out;
}

}  // namespace v2eg
