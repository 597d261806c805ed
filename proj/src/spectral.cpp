#include "v2eg/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "v2eg/errors.hpp"

namespace v2eg {

std::vector<double> hann_periodic(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

std::vector<double> power_spectrum(std::span<const double> x) {
  const std::size_t n = x.size();
  const std::size_t bins = n / 2 + 1;
  // Twiddles indexed by (k * t) mod n keep the direct DFT exact enough.
  std::vector<double> c(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    c[i] = std::cos(ang);
    s[i] = std::sin(ang);
  }
  std::vector<double> out(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    double re = 0.0, im = 0.0;
    std::size_t idx = 0;
    for (std::size_t t = 0; t < n; ++t) {
      re += x[t] * c[idx];
      im -= x[t] * s[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    out[k] = re * re + im * im;
  }
  return out;
}

Psd welch_psd(std::span<const double> x, double fs_hz, std::size_t segment_len, double overlap) {
  if (x.empty()) throw ParameterError("welch_psd: empty signal");
  if (!(fs_hz > 0.0)) throw ParameterError("welch_psd: sampling rate must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ParameterError("welch_psd: overlap must be in [0, 1)");
  const std::size_t nseg = std::clamp<std::size_t>(segment_len, 1, x.size());
  const std::size_t step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(nseg * (1.0 - overlap))));
  const auto win = hann_periodic(nseg);
  double wss = 0.0;
  for (double w : win) wss += w * w;
  if (wss == 0.0) wss = 1.0;  // length-1 Hann is all zeros

  const std::size_t bins = nseg / 2 + 1;
  Psd out;
  out.density.assign(bins, 0.0);
  out.freqs_hz.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) out.freqs_hz[k] = fs_hz * static_cast<double>(k) / static_cast<double>(nseg);

  std::size_t count = 0;
  std::vector<double> buf(nseg);
  for (std::size_t start = 0; start + nseg <= x.size(); start += step) {
    double mu = 0.0;
    for (std::size_t i = 0; i < nseg; ++i) mu += x[start + i];
    mu /= static_cast<double>(nseg);
    for (std::size_t i = 0; i < nseg; ++i) buf[i] = (x[start + i] - mu) * win[i];
    const auto p = power_spectrum(buf);
    for (std::size_t k = 0; k < bins; ++k) out.density[k] += p[k];
    ++count;
  }
  const double norm = 1.0 / (fs_hz * wss * static_cast<double>(count));
  for (std::size_t k = 0; k < bins; ++k) {
    out.density[k] *= norm;
    const bool nyquist = (nseg % 2 == 0) && k == bins - 1;
    if (k != 0 && !nyquist) out.density[k] *= 2.0;
  }
  return out;
}

Psd welch_psd_1s(std::span<const double> x, double fs_hz) {
  return welch_psd(x, fs_hz, static_cast<std::size_t>(std::llround(fs_hz)), 0.5);
}

double band_power(const Psd& psd, double low_hz, double high_hz) {
  if (psd.freqs_hz.size() < 2) return 0.0;
  const double df = psd.freqs_hz[1] - psd.freqs_hz[0];
  double acc = 0.0;
  for (std::size_t k = 0; k < psd.freqs_hz.size(); ++k) {
    if (psd.freqs_hz[k] >= low_hz && psd.freqs_hz[k] < high_hz) acc += psd.density[k];
  }
  return acc * df;
}

}  // namespace v2eg
