#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coevo/tensor.hpp"

namespace coevo {

struct ModalityInfo {
	std::string name;
	int dim = 0;
};

enum class SplitKind { node, edge };

struct Splits {
	SplitKind kind = SplitKind::node;
	std::vector<int> train, val, test;
};

/**
 * A graph whose nodes carry one feature matrix per modality over a shared
 * undirected edge set. Edges are stored canonically: i < j, sorted, no
 * duplicates, no self loops. Feature matrices are N x dim, float32.
 */
struct MultimodalGraph {
	int node_count = 0;
	std::vector<ModalityInfo> modalities;
	std::vector<MatF> features;             // one per modality, N x dim
	std::vector<std::pair<int, int>> edges; // canonical order
	std::optional<std::vector<int>> labels; // length N when present
	int n_classes = 0;                      // 0 means unknown
	std::optional<Splits> splits;

	int modality_count() const { return static_cast<int>(modalities.size()); }
	int edge_count() const { return static_cast<int>(edges.size()); }
	void validate() const; // throws Error on any violated invariant
};

/// Canonicalize an arbitrary undirected edge list: order endpoints, drop
/// self loops and duplicates, sort lexicographically.
std::vector<std::pair<int, int>> canonical_edges(std::vector<std::pair<int, int>> edges);

struct LoadOptions {
	bool allow_missing_edges = false; // tolerated only for knn input datasets
};

MultimodalGraph load_dataset(const std::string& dir, const LoadOptions& opt = {});
void save_dataset(const std::string& dir, const MultimodalGraph& g);

/// D^{-1/2} A D^{-1/2} over the stored edge set. Isolated nodes yield zero
/// rows rather than NaN. The Laplacian I - A~ is derived where needed, never
/// stored.
template <typename S>
SpMat<S> normalized_adjacency(const MultimodalGraph& g);

template <typename S>
SpMat<S> normalized_adjacency_from_edges(int n, const std::vector<std::pair<int, int>>& edges);

/// Mutual-similarity graph over node features: per node the k most similar
/// others by cosine on the average of per-modality L2-row-normalized feature
/// matrices (zero-padded to a common width when dims differ), ties broken by
/// ascending node index, symmetrized by union. k in [1, N-1].
std::vector<std::pair<int, int>> build_knn_edges(const std::vector<MatF>& features, int k);

struct NoiseSpec {
	enum class Mode { add, remove };
	Mode mode = Mode::add;
	double ratio = 0.0; // floor(ratio * |E|) edges inserted or deleted
	std::uint64_t seed = 0;
};

/// Copy of g with floor(ratio*|E|) uniformly sampled non-edges inserted
/// (add) or edges deleted (remove). Deterministic in (g, spec).
MultimodalGraph inject_noise(const MultimodalGraph& g, const NoiseSpec& spec);

struct SbmModalitySpec {
	std::string name;
	int dim = 0;
	double center_separation = 1.0; // scale of block centers
	double noise_scale = 1.0;       // per-coordinate feature noise
};

struct SbmMagSpec {
	int blocks = 4;
	int nodes_per_block = 100;
	double p_in = 0.1;
	double p_out = 0.01;
	std::vector<SbmModalitySpec> modalities;
	double flip_rate = 0.0; // per modality, chance a node draws features from another block
	std::uint64_t seed = 0;
};

/// Stochastic block model with per-modality Gaussian features around block
/// centers. Labels are block ids. Edge coins are keyed per pair so generation
/// is order independent and fully reproducible.
MultimodalGraph generate_sbm_mag(const SbmMagSpec& spec);

/// Deterministic node split (shuffle then cut) or edge split over the
/// canonical edge order. Fractions are train and val; the rest is test.
Splits make_node_splits(int n, double train_frac, double val_frac, std::uint64_t seed);
Splits make_edge_splits(int edge_count, double train_frac, double val_frac, std::uint64_t seed);

/// Mean of per-modality feature matrices zero-padded to the widest modality.
/// The fused raw-feature source for round-1 affinity; equals the plain mean
/// when all dims agree.
MatF fused_raw_features(const MultimodalGraph& g);

/// Raw matrix blob IO in the feature-file layout (two u32 LE dimensions,
/// then row-major f32 data). Expected dimensions are enforced on read.
MatF read_f32_matrix(const std::string& path, int expect_rows, int expect_cols);
void write_f32_matrix(const std::string& path, const MatF& m);

// --- template implementation ---

template <typename S>
SpMat<S> normalized_adjacency_from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
	Vec<S> deg = Vec<S>::Zero(n);
	for (const auto& [a, b] : edges) {
		deg[a] += S(1);
		deg[b] += S(1);
	}
	Vec<S> dinv = deg.unaryExpr([](S d) { return d > S(0) ? S(1) / std::sqrt(d) : S(0); });
	std::vector<Eigen::Triplet<S>> trip;
	trip.reserve(edges.size() * 2);
	for (const auto& [a, b] : edges) {
		S w = dinv[a] * dinv[b];
		trip.emplace_back(a, b, w);
		trip.emplace_back(b, a, w);
	}
	SpMat<S> A(n, n);
	A.setFromTriplets(trip.begin(), trip.end());
	A.makeCompressed();
	return A;
}

template <typename S>
SpMat<S> normalized_adjacency(const MultimodalGraph& g) {
	return normalized_adjacency_from_edges<S>(g.node_count, g.edges);
}

} // namespace coevo
