#pragma once

#include <span>
#include <vector>

namespace v2eg {

struct Psd {
  std::vector<double> freqs_hz;
  std::vector<double> density;  // one-sided, signal_unit^2 / Hz
};

// Welch estimate: Hann (periodic) windows of segment_len samples, the given
// overlap fraction, per-segment mean removal, one-sided density scaling.
// segment_len is clamped to the signal length.
Psd welch_psd(std::span<const double> x, double fs_hz, std::size_t segment_len, double overlap = 0.5);

// Welch with 1 s segments and 50% overlap, the setting used throughout.
Psd welch_psd_1s(std::span<const double> x, double fs_hz);

// Integral of the density over [low, high) by the rectangle rule on the bins.
double band_power(const Psd& psd, double low_hz, double high_hz);

// Periodic Hann window of length n.
std::vector<double> hann_periodic(std::size_t n);

// |DFT|^2 of a real sequence at bins 0..n/2 (inclusive).
std::vector<double> power_spectrum(std::span<const double> x);

}  // namespace v2eg
