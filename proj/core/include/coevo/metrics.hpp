#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coevo/tensor.hpp"

namespace coevo {

/// Named metric values plus the one used for model selection.
struct MetricSet {
	std::map<std::string, double> values;
	std::string primary_name;

	double primary() const {
		auto it = values.find(primary_name);
		return it == values.end() ? 0.0 : it->second;
	}
};

/// Fraction of exact matches.
double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

/// Unweighted mean of per-class F1; empty classes contribute 0 (zero-division
/// convention). n_classes == 0 infers the class count from the data.
double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int n_classes = 0);

/// Mean reciprocal rank; ranks are 1-based.
double mean_reciprocal_rank(const std::vector<int>& ranks);

/// Fraction of ranks <= k.
double hits_at_k(const std::vector<int>& ranks, int k);

/// Normalized mutual information 2 I(a,b) / (H(a) + H(b)) with natural-log
/// entropies. Two trivial single-cluster partitions score 1 by convention.
double normalized_mutual_information(const std::vector<int>& a, const std::vector<int>& b);

/// Adjusted Rand index via pair counting. Degenerate zero denominator
/// (both partitions trivial and identical) scores 1 by convention.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

/// Lloyd k-means with greedy distance-weighted seeding, several restarts,
/// best inertia kept. Assignment ties go to the lowest center index. Fully
/// deterministic in (points, k, restarts, seed).
std::vector<int> kmeans(const MatD& points, int k, int restarts, int max_iters, std::uint64_t seed);

} // namespace coevo
