#pragma once

#include <array>
#include <string>
#include <vector>

#include "v2eg/preprocessing.hpp"

namespace v2eg {

struct ElectrodeLayout {
  std::vector<std::string> names;
  std::vector<std::array<double, 3>> positions;  // unit sphere, head-model units

  std::size_t size() const { return names.size(); }
  // Throws ConstructionError: names unique, positions distinct and unit norm.
  void validate() const;
};

// 62-channel 10-10 layout in the channel order of the SEED recordings.
// Positions come from an idealized spherical head: rows sit at fixed polar
// angles along the nasion-inion arc and lateral sites are spread evenly to
// the equator.
ElectrodeLayout standard_layout_62();

// Layout file: UTF-8, one `name x y z` per line, '#' starts a comment.
ElectrodeLayout load_layout(const std::string& path);
void save_layout(const ElectrodeLayout& layout, const std::string& path);

// count evenly spaced channels of layout (all of them when count == size).
ElectrodeLayout layout_subset(const ElectrodeLayout& layout, std::size_t count);

enum class GraphKind { electrode, signal_band };

struct Graph {
  std::size_t nodes{0};
  std::vector<double> adjacency;  // nodes x nodes, symmetric, zero diagonal
  GraphKind kind{GraphKind::electrode};
  std::string band;  // band name for signal graphs

  double at(std::size_t i, std::size_t j) const { return adjacency[i * nodes + j]; }
  std::size_t nonzeros_in_row(std::size_t i) const;
  // Throws ConstructionError when symmetry, zero diagonal or sign fail.
  void validate() const;
};

struct GraphSet {
  Graph e_graph;
  std::vector<Graph> s_graphs;

  std::size_t nodes() const { return e_graph.nodes; }
  // e_graph followed by s_graphs.
  std::vector<const Graph*> all() const;
  void validate() const;
};

// Gaussian kernel on chord distance with sigma = median pairwise distance,
// keep each node's k largest weights, symmetrize with max.
Graph build_e_graph(const ElectrodeLayout& layout, int k);

// |Pearson r| between channels where it reaches threshold, else 0.
Graph build_s_graph(const EegSegment& band_signal, double threshold, const std::string& band_name = {});

// E-Graph plus one S-Graph per band computed from the filter bank of signal.
GraphSet build_graph_set(const ElectrodeLayout& layout, int k, const EegSegment& signal,
                         const std::vector<BandDefinition>& bands, double threshold);

// D^{-1/2} (A + I) D^{-1/2}, row-major nodes x nodes.
std::vector<double> normalized_adjacency(const Graph& g);

}  // namespace v2eg
