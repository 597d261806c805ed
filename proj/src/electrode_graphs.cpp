#include "v2eg/electrode_graphs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "v2eg/errors.hpp"

namespace v2eg {

void ElectrodeLayout::validate() const {
  if (names.size() != positions.size()) throw ConstructionError("layout names and positions differ in count");
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw ConstructionError("duplicate electrode name " + n);
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& p = positions[i];
    const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (std::abs(norm - 1.0) > 1e-6) throw ConstructionError("electrode " + names[i] + " is not on the unit sphere");
    for (std::size_t j = 0; j < i; ++j) {
      const auto& q = positions[j];
      if (p == q) throw ConstructionError("electrodes " + names[j] + " and " + names[i] + " share a position");
    }
  }
}

ElectrodeLayout standard_layout_62() {
  struct Site {
    const char* name;
    double row;  // polar angle along the midline arc, degrees, front positive
    int lateral;  // 0 midline, 1..4 outward; sign = left(+)/right(-)
  };
  // Left hemisphere carries odd numbers and +y.
  static const Site sites[] = {
      {"FP1", 72, 1},   {"FPZ", 72, 0},  {"FP2", 72, -1},  {"AF3", 54, 2},   {"AF4", 54, -2},  {"F7", 36, 4},
      {"F5", 36, 3},    {"F3", 36, 2},   {"F1", 36, 1},    {"FZ", 36, 0},    {"F2", 36, -1},   {"F4", 36, -2},
      {"F6", 36, -3},   {"F8", 36, -4},  {"FT7", 18, 4},   {"FC5", 18, 3},   {"FC3", 18, 2},   {"FC1", 18, 1},
      {"FCZ", 18, 0},   {"FC2", 18, -1}, {"FC4", 18, -2},  {"FC6", 18, -3},  {"FT8", 18, -4},  {"T7", 0, 4},
      {"C5", 0, 3},     {"C3", 0, 2},    {"C1", 0, 1},     {"CZ", 0, 0},     {"C2", 0, -1},    {"C4", 0, -2},
      {"C6", 0, -3},    {"T8", 0, -4},   {"TP7", -18, 4},  {"CP5", -18, 3},  {"CP3", -18, 2},  {"CP1", -18, 1},
      {"CPZ", -18, 0},  {"CP2", -18, -1}, {"CP4", -18, -2}, {"CP6", -18, -3}, {"TP8", -18, -4}, {"P7", -36, 4},
      {"P5", -36, 3},   {"P3", -36, 2},  {"P1", -36, 1},   {"PZ", -36, 0},   {"P2", -36, -1},  {"P4", -36, -2},
      {"P6", -36, -3},  {"P8", -36, -4}, {"PO7", -54, 4},  {"PO5", -54, 3},  {"PO3", -54, 2},  {"POZ", -54, 0},
      {"PO4", -54, -2}, {"PO6", -54, -3}, {"PO8", -54, -4}, {"CB1", -90, 2},  {"O1", -72, 1},   {"OZ", -72, 0},
      {"O2", -72, -1},  {"CB2", -90, -2},
  };
  ElectrodeLayout layout;
  const double deg = std::numbers::pi / 180.0;
  for (const auto& s : sites) {
    // Azimuthal-equidistant placement: (u, v) in degrees from the vertex.
    const double u = s.row;
    double v;
    if (std::abs(s.row) >= 90.0) {
      v = 15.0 * s.lateral;  // cerebellar sites sit below the inion line
    } else {
      v = s.lateral / 4.0 * std::sqrt(90.0 * 90.0 - u * u);
    }
    const double polar = std::hypot(u, v) * deg;
    const double azimuth = std::atan2(v, u);
    layout.names.emplace_back(s.name);
    layout.positions.push_back(
        {std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth), std::cos(polar)});
  }
  return layout;
}

ElectrodeLayout load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open layout file " + path);
  ElectrodeLayout layout;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name)) continue;
    std::array<double, 3> p{};
    if (!(ls >> p[0] >> p[1] >> p[2])) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected `name x y z`");
    }
    layout.names.push_back(name);
    layout.positions.push_back(p);
  }
  layout.validate();
  return layout;
}

void save_layout(const ElectrodeLayout& layout, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write layout file " + path);
  out << "# name x y z (unit sphere; +x nose, +y left ear, +z vertex)\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& p = layout.positions[i];
    out << layout.names[i] << ' ' << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  }
}

ElectrodeLayout layout_subset(const ElectrodeLayout& layout, std::size_t count) {
  if (count == 0 || count > layout.size()) {
    throw ConfigError("cannot take " + std::to_string(count) + " channels from a " +
                      std::to_string(layout.size()) + "-channel layout");
  }
  ElectrodeLayout out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t idx = i * layout.size() / count;
    out.names.push_back(layout.names[idx]);
    out.positions.push_back(layout.positions[idx]);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t Graph::nonzeros_in_row(std::size_t i) const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < nodes; ++j) n += at(i, j) != 0.0;
  return n;
}

void Graph::validate() const {
  if (adjacency.size() != nodes * nodes) throw ConstructionError("adjacency size does not match node count");
  for (std::size_t i = 0; i < nodes; ++i) {
    if (at(i, i) != 0.0) throw ConstructionError("graph has a nonzero diagonal at node " + std::to_string(i));
    for (std::size_t j = 0; j < nodes; ++j) {
      const double w = at(i, j);
      if (!std::isfinite(w) || w < 0.0) throw ConstructionError("graph weight must be finite and >= 0");
      if (w != at(j, i)) throw ConstructionError("graph adjacency is not symmetric");
    }
  }
}

std::vector<const Graph*> GraphSet::all() const {
  std::vector<const Graph*> out{&e_graph};
  for (const auto& g : s_graphs) out.push_back(&g);
  return out;
}

void GraphSet::validate() const {
  for (const Graph* g : all()) {
    g->validate();
    if (g->nodes != e_graph.nodes) throw ConstructionError("graphs in a set must share the node count");
  }
}

Graph build_e_graph(const ElectrodeLayout& layout, int k) {
  layout.validate();
  const std::size_t n = layout.size();
  if (k <= 0) throw ParameterError("E-Graph neighbor count k must be positive");
  if (static_cast<std::size_t>(k) >= n) throw ParameterError("E-Graph neighbor count k must be below the channel count");

  std::vector<double> dist(n * n, 0.0);
  std::vector<double> pairwise;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = layout.positions[i];
      const auto& b = layout.positions[j];
      const double d = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                                 (a[2] - b[2]) * (a[2] - b[2]));
      dist[i * n + j] = dist[j * n + i] = d;
      pairwise.push_back(d);
    }
  }
  std::sort(pairwise.begin(), pairwise.end());
  const std::size_t m = pairwise.size();
  const double sigma = m % 2 ? pairwise[m / 2] : 0.5 * (pairwise[m / 2 - 1] + pairwise[m / 2]);

  Graph g;
  g.nodes = n;
  g.kind = GraphKind::electrode;
  g.adjacency.assign(n * n, 0.0);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) {
      w[j] = i == j ? -1.0 : std::exp(-dist[i * n + j] * dist[i * n + j] / (2.0 * sigma * sigma));
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    for (int r = 0; r < k; ++r) g.adjacency[i * n + order[r]] = w[order[r]];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = std::max(g.adjacency[i * n + j], g.adjacency[j * n + i]);
      g.adjacency[i * n + j] = g.adjacency[j * n + i] = s;
    }
  }
  return g;
}

Graph build_s_graph(const EegSegment& band_signal, double threshold, const std::string& band_name) {
  const std::size_t n = band_signal.channels;
  if (n < 2) throw ParameterError("S-Graph needs at least two channels");
  if (band_signal.samples < 8) throw ParameterError("S-Graph needs at least 8 samples per channel");
  if (!(threshold >= 0.0 && threshold < 1.0)) throw ParameterError("S-Graph threshold must be in [0, 1)");

  // Centered, unit-norm rows; constant rows stay zero.
  std::vector<double> z(band_signal.data.size(), 0.0);
  std::vector<bool> constant(n, false);
  for (std::size_t c = 0; c < n; ++c) {
    const auto ch = band_signal.channel(c);
    const double mu = std::accumulate(ch.begin(), ch.end(), 0.0) / static_cast<double>(ch.size());
    double ss = 0.0;
    for (double v : ch) ss += (v - mu) * (v - mu);
    // Relative floor: rows that are constant up to rounding count as constant.
    double scale = 0.0;
    for (double v : ch) scale = std::max(scale, std::abs(v));
    if (ss <= 1e-24 * std::max(1.0, scale * scale) * static_cast<double>(ch.size())) {
      constant[c] = true;
      continue;
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t t = 0; t < ch.size(); ++t) z[c * band_signal.samples + t] = (ch[t] - mu) * inv;
  }

  Graph g;
  g.nodes = n;
  g.kind = GraphKind::signal_band;
  g.band = band_name;
  g.adjacency.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (constant[i]) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (constant[j]) continue;
      double r = 0.0;
      for (std::size_t t = 0; t < band_signal.samples; ++t) {
        r += z[i * band_signal.samples + t] * z[j * band_signal.samples + t];
      }
      const double w = std::min(1.0, std::abs(r));
      if (w >= threshold) g.adjacency[i * n + j] = g.adjacency[j * n + i] = w;
    }
  }
  return g;
}

GraphSet build_graph_set(const ElectrodeLayout& layout, int k, const EegSegment& signal,
                         const std::vector<BandDefinition>& bands, double threshold) {
  if (signal.channels != layout.size()) {
    throw ConfigError("signal has " + std::to_string(signal.channels) + " channels but layout has " +
                      std::to_string(layout.size()));
  }
  GraphSet set;
  set.e_graph = build_e_graph(layout, k);
  EegSegment raw = signal;
  raw.normalized = false;
  const auto banded = filter_bank(raw, bands);
  for (std::size_t b = 0; b < bands.size(); ++b) {
    set.s_graphs.push_back(build_s_graph(banded[b], threshold, bands[b].name));
  }
  set.validate();
  return set;
}

std::vector<double> normalized_adjacency(const Graph& g) {
  const std::size_t n = g.nodes;
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (std::size_t j = 0; j < n; ++j) d += g.at(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = g.at(i, j) + (i == j ? 1.0 : 0.0);
      out[i * n + j] = inv_sqrt_deg[i] * a * inv_sqrt_deg[j];
    }
  }
  // Enforce exact symmetry (the two products can round differently).
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out[j * n + i] = out[i * n + j];
  return out;
}

}  // namespace v2eg
