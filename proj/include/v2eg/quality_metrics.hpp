#pragma once

#include <map>
#include <string>
#include <vector>

#include "v2eg/preprocessing.hpp"

namespace v2eg {

// All metrics throw MetricError on shape or rate mismatch.
double mse(const EegSegment& a, const EegSegment& b);
double mae(const EegSegment& a, const EegSegment& b);

struct Correlation {
  double value{0.0};
  bool degenerate{false};  // a constant input; value is 0
};
Correlation pearson(const EegSegment& a, const EegSegment& b);

// Per band: cosine similarity of the two signals' Welch PSDs (1 s Hann
// segments, 50% overlap) over the band's bins, computed per channel and
// averaged over channels. Throws ParameterError for bands beyond Nyquist.
std::map<std::string, double> band_similarity(const EegSegment& a, const EegSegment& b,
                                              const std::vector<BandDefinition>& bands);

inline constexpr double kSnrCapDb = 99.0;
// 10 log10(P(reference) / P(signal - reference)), clamped to +-99 dB.
double snr_db(const EegSegment& signal, const EegSegment& reference);

struct SampleMetrics {
  std::string id;
  int subject_id{0};
  int video_id{0};
  double mse{0}, mae{0}, correlation{0};
  bool correlation_degenerate{false};
  std::map<std::string, double> band_similarity;
  double snr_db{0};
  double inference_time_s{0};
};

struct Aggregate {
  double mean{0}, std{0}, min{0}, max{0};  // std over samples, ddof 0
};

struct QualityReport {
  std::vector<SampleMetrics> samples;
  std::map<std::string, Aggregate> aggregates;  // mse, mae, correlation, snr_db, inference_time_s, band.<name>
  std::map<std::string, double> corpus_band_similarity;  // PSDs averaged over samples first
  std::vector<int> subjects;
  std::vector<int> videos;

  std::string to_json() const;
  static QualityReport from_json(const std::string& text);  // ReportError
  std::string to_csv() const;
};

struct ReportInput {
  const EegSegment* generated{nullptr};
  const EegSegment* reference{nullptr};
  double inference_time_s{0};
  std::string id;
  int subject_id{0};
  int video_id{0};
};

// Throws ReportError on an empty list.
QualityReport build_report(const std::vector<ReportInput>& inputs, const std::vector<BandDefinition>& bands);

Aggregate aggregate(const std::vector<double>& values);

}  // namespace v2eg
