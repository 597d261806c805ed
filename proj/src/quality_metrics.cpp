#include "v2eg/quality_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"

#include "v2eg/errors.hpp"
#include "v2eg/spectral.hpp"

namespace v2eg {

namespace {

void same_shape(const EegSegment& a, const EegSegment& b) {
  if (a.channels != b.channels || a.samples != b.samples || a.data.size() != b.data.size())
    throw MetricError("metric inputs differ in shape: " + std::to_string(a.channels) + "x" + std::to_string(a.samples) +
                      " vs " + std::to_string(b.channels) + "x" + std::to_string(b.samples));
  if (a.sampling_rate_hz != b.sampling_rate_hz) throw MetricError("metric inputs differ in sampling rate");
  if (a.data.empty()) throw MetricError("metric inputs are empty");
}

// Welch PSD of every channel restricted to [low, high).
std::vector<std::vector<double>> band_psd(const EegSegment& x, const BandDefinition& band) {
  std::vector<std::vector<double>> out(x.channels);
  for (std::size_t c = 0; c < x.channels; ++c) {
    const Psd p = welch_psd_1s(x.channel(c), x.sampling_rate_hz);
    for (std::size_t k = 0; k < p.freqs_hz.size(); ++k)
      if (p.freqs_hz[k] >= band.low_hz && p.freqs_hz[k] < band.high_hz) out[c].push_back(p.density[k]);
  }
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 && bb == 0.0) return 1.0;  // both silent in this band
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

double mean_channel_cosine(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  double s = 0;
  for (std::size_t c = 0; c < a.size(); ++c) s += cosine(a[c], b[c]);
  return s / static_cast<double>(a.size());
}

}  // namespace

double mse(const EegSegment& a, const EegSegment& b) {
  same_shape(a, b);
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

double mae(const EegSegment& a, const EegSegment& b) {
  same_shape(a, b);
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

Correlation pearson(const EegSegment& a, const EegSegment& b) {
  same_shape(a, b);
  // Rounding in the centered sum leaves ~1e-17 residue on constant input, so test constancy directly.
  const auto constant = [](const std::vector<double>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
  };
  if (constant(a.data) || constant(b.data)) return {0.0, true};
  const double n = static_cast<double>(a.data.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    ma += a.data[i];
    mb += b.data[i];
  }
  ma /= n;
  mb /= n;
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double da = a.data[i] - ma, db = b.data[i] - mb;
    ab += da * db;
    aa += da * da;
    bb += db * db;
  }
  if (aa == 0.0 || bb == 0.0) return {0.0, true};
  return {std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0), false};
}

std::map<std::string, double> band_similarity(const EegSegment& a, const EegSegment& b,
                                              const std::vector<BandDefinition>& bands) {
  same_shape(a, b);
  std::map<std::string, double> out;
  for (const auto& band : bands) {
    validate_band(band, a.sampling_rate_hz);
    out[band.name] = mean_channel_cosine(band_psd(a, band), band_psd(b, band));
  }
  return out;
}

double snr_db(const EegSegment& signal, const EegSegment& reference) {
  same_shape(signal, reference);
  double pr = 0, pe = 0;
  for (std::size_t i = 0; i < signal.data.size(); ++i) {
    pr += reference.data[i] * reference.data[i];
    const double e = signal.data[i] - reference.data[i];
    pe += e * e;
  }
  if (pe == 0.0) return kSnrCapDb;
  if (pr == 0.0) return -kSnrCapDb;
  return std::clamp(10.0 * std::log10(pr / pe), -kSnrCapDb, kSnrCapDb);
}

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw ReportError("cannot aggregate an empty list");
  Aggregate a;
  a.min = *std::min_element(values.begin(), values.end());
  a.max = *std::max_element(values.begin(), values.end());
  double s = 0;
  for (double v : values) s += v;
  a.mean = s / static_cast<double>(values.size());
  double v2 = 0;
  for (double v : values) v2 += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(v2 / static_cast<double>(values.size()));
  // Rounding can push the mean a hair outside [min, max] for equal values.
  a.mean = std::clamp(a.mean, a.min, a.max);
  return a;
}

QualityReport build_report(const std::vector<ReportInput>& inputs, const std::vector<BandDefinition>& bands) {
  if (inputs.empty()) throw ReportError("quality report needs at least one sample");
  QualityReport r;
  std::set<int> subjects, videos;
  std::map<std::string, std::vector<std::vector<double>>> sum_gen, sum_ref;
  for (const auto& in : inputs) {
    if (!in.generated || !in.reference) throw ReportError("report input '" + in.id + "' is missing a segment");
    SampleMetrics m;
    m.id = in.id;
    m.subject_id = in.subject_id;
    m.video_id = in.video_id;
    m.mse = mse(*in.generated, *in.reference);
    m.mae = mae(*in.generated, *in.reference);
    const auto c = pearson(*in.generated, *in.reference);
    m.correlation = c.value;
    m.correlation_degenerate = c.degenerate;
    m.band_similarity = band_similarity(*in.generated, *in.reference, bands);
    m.snr_db = snr_db(*in.generated, *in.reference);
    m.inference_time_s = in.inference_time_s;
    subjects.insert(in.subject_id);
    videos.insert(in.video_id);
    for (const auto& band : bands) {
      auto g = band_psd(*in.generated, band), f = band_psd(*in.reference, band);
      auto& sg = sum_gen[band.name];
      auto& sf = sum_ref[band.name];
      if (sg.empty()) {
        sg = g;
        sf = f;
      } else {
        if (sg.size() != g.size()) throw ReportError("report samples disagree on channel count");
        for (std::size_t ch = 0; ch < g.size(); ++ch)
          for (std::size_t k = 0; k < g[ch].size(); ++k) {
            sg[ch][k] += g[ch][k];
            sf[ch][k] += f[ch][k];
          }
      }
    }
    r.samples.push_back(std::move(m));
  }
  auto collect = [&](auto get) {
    std::vector<double> v;
    for (const auto& s : r.samples) v.push_back(get(s));
    return aggregate(v);
  };
  r.aggregates["mse"] = collect([](const SampleMetrics& s) { return s.mse; });
  r.aggregates["mae"] = collect([](const SampleMetrics& s) { return s.mae; });
  r.aggregates["correlation"] = collect([](const SampleMetrics& s) { return s.correlation; });
  r.aggregates["snr_db"] = collect([](const SampleMetrics& s) { return s.snr_db; });
  r.aggregates["inference_time_s"] = collect([](const SampleMetrics& s) { return s.inference_time_s; });
  for (const auto& band : bands) {
    r.aggregates["band." + band.name] = collect([&](const SampleMetrics& s) { return s.band_similarity.at(band.name); });
    r.corpus_band_similarity[band.name] = mean_channel_cosine(sum_gen[band.name], sum_ref[band.name]);
  }
  r.subjects.assign(subjects.begin(), subjects.end());
  r.videos.assign(videos.begin(), videos.end());
  return r;
}

namespace {

using nlohmann::json;

json agg_json(const Aggregate& a) { return {{"mean", a.mean}, {"std", a.std}, {"min", a.min}, {"max", a.max}}; }

}  // namespace

std::string QualityReport::to_json() const {
  json j;
  j["schema"] = "v2eg.quality_report";
  j["schema_version"] = 1;
  j["sample_count"] = samples.size();
  j["subjects"] = subjects;
  j["videos"] = videos;
  json rows = json::array();
  for (const auto& s : samples) {
    rows.push_back({{"id", s.id},
                    {"subject_id", s.subject_id},
                    {"video_id", s.video_id},
                    {"mse", s.mse},
                    {"mae", s.mae},
                    {"correlation", s.correlation},
                    {"correlation_degenerate", s.correlation_degenerate},
                    {"band_similarity", s.band_similarity},
                    {"snr_db", s.snr_db},
                    {"inference_time_s", s.inference_time_s}});
  }
  j["samples"] = rows;
  json aggs = json::object();
  for (const auto& [k, a] : aggregates) aggs[k] = agg_json(a);
  j["aggregates"] = aggs;
  j["corpus_band_similarity"] = corpus_band_similarity;
  return j.dump(2);
}

QualityReport QualityReport::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("schema") != "v2eg.quality_report" || j.at("schema_version") != 1)
      throw ReportError("unsupported report schema");
    QualityReport r;
    r.subjects = j.at("subjects").get<std::vector<int>>();
    r.videos = j.at("videos").get<std::vector<int>>();
    for (const auto& s : j.at("samples")) {
      SampleMetrics m;
      m.id = s.at("id");
      m.subject_id = s.at("subject_id");
      m.video_id = s.at("video_id");
      m.mse = s.at("mse");
      m.mae = s.at("mae");
      m.correlation = s.at("correlation");
      m.correlation_degenerate = s.at("correlation_degenerate");
      m.band_similarity = s.at("band_similarity").get<std::map<std::string, double>>();
      m.snr_db = s.at("snr_db");
      m.inference_time_s = s.at("inference_time_s");
      r.samples.push_back(std::move(m));
    }
    for (const auto& [k, a] : j.at("aggregates").items())
      r.aggregates[k] = Aggregate{a.at("mean"), a.at("std"), a.at("min"), a.at("max")};
    r.corpus_band_similarity = j.at("corpus_band_similarity").get<std::map<std::string, double>>();
    return r;
  } catch (const json::exception& e) {
    throw ReportError(std::string("malformed quality report: ") + e.what());
  }
}

std::string QualityReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "id,subject_id,video_id,mse,mae,correlation,correlation_degenerate,snr_db,inference_time_s";
  std::vector<std::string> bands;
  if (!samples.empty())
    for (const auto& [b, v] : samples.front().band_similarity) bands.push_back(b);
  for (const auto& b : bands) os << ",sim_" << b;
  os << "\n";
  for (const auto& s : samples) {
    os << s.id << "," << s.subject_id << "," << s.video_id << "," << s.mse << "," << s.mae << "," << s.correlation << ","
       << (s.correlation_degenerate ? 1 : 0) << "," << s.snr_db << "," << s.inference_time_s;
    for (const auto& b : bands) os << "," << s.band_similarity.at(b);
    os << "\n";
  }
  return os.str();
}

}  // namespace v2eg
