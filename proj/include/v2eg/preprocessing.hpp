#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace v2eg {

// channels x samples window, row-major (one row per channel).
struct EegSegment {
  std::size_t channels{0};
  std::size_t samples{0};
  std::vector<double> data;
  double sampling_rate_hz{0.0};
  std::vector<std::string> channel_names;
  bool normalized{false};

  static EegSegment zeros(std::size_t channels, std::size_t samples, double rate_hz);

  std::span<double> channel(std::size_t c) { return {data.data() + c * samples, samples}; }
  std::span<const double> channel(std::size_t c) const { return {data.data() + c * samples, samples}; }
  double& at(std::size_t c, std::size_t t) { return data[c * samples + t]; }
  double at(std::size_t c, std::size_t t) const { return data[c * samples + t]; }
  double duration_s() const { return static_cast<double>(samples) / sampling_rate_hz; }

  // Throws ValidationError when data length, rate or names are inconsistent.
  void validate() const;
};

struct BandDefinition {
  std::string name;
  double low_hz{0.0};
  double high_hz{0.0};
};

// delta 0.5-4, theta 4-8, alpha 8-13, beta 13-30, gamma 30-min(45, 0.95 Nyquist).
std::vector<BandDefinition> default_bands(double sampling_rate_hz);
// Throws ParameterError unless 0 < low < high < rate/2.
void validate_band(const BandDefinition& band, double sampling_rate_hz);

// One second-order section, normalized so a0 = 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

// Butterworth designs via bilinear transform with prewarped edges. An order-N
// bandpass has 2N poles (N sections) and zeros at DC and Nyquist.
inline constexpr int kBandpassOrder = 4;

std::vector<Biquad> butterworth_bandpass(double low_hz, double high_hz, double fs_hz, int order = kBandpassOrder);
std::vector<Biquad> butterworth_lowpass(double cutoff_hz, double fs_hz, int order = 4);

// Magnitude response of a cascade at frequency f.
double cascade_gain(std::span<const Biquad> sos, double f_hz, double fs_hz);

// Forward-backward filtering of one channel with mirror padding (no edge
// repeat) of
// pad samples (clamped to n-1) and steady-state initial conditions.
std::vector<double> filtfilt(std::span<const Biquad> sos, std::span<const double> x, std::size_t pad);

// Zero-phase bandpass of every channel; pads by one second.
EegSegment bandpass(const EegSegment& x, double low_hz, double high_hz);

std::vector<EegSegment> filter_bank(const EegSegment& x, const std::vector<BandDefinition>& bands);

struct ChannelScale {
  double center{0.0};
  double half_range{1.0};
  bool constant{false};
};

struct ScaleRecord {
  std::vector<ChannelScale> channels;
  bool is_identity() const;
};

struct Normalized {
  EegSegment segment;
  ScaleRecord scale;
};

// Per-channel affine map of [min, max] onto [-1, 1]; constant channels map to
// zero and are flagged in the record.
Normalized normalize(const EegSegment& x);
EegSegment denormalize(const EegSegment& y, const ScaleRecord& scale);

// Fixed windows of round(window_s * rate) samples every round(hop_s * rate);
// a trailing partial window is dropped.
std::vector<EegSegment> segment(const EegSegment& recording, double window_s, double hop_s);

// Anti-alias lowpass at 0.8 * new Nyquist, then keep every factor-th sample.
EegSegment decimate(const EegSegment& x, int factor);

}  // namespace v2eg
