#include "coevo/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "coevo/graph.hpp"

namespace coevo {

namespace {

void require_aligned(const std::vector<int>& a, const std::vector<int>& b, const char* who) {
	if (a.size() != b.size())
		throw Error(std::string(who) + ": label vectors differ in length");
	if (a.empty())
		throw Error(std::string(who) + ": empty label vectors");
}

int infer_classes(const std::vector<int>& pred, const std::vector<int>& truth) {
	int hi = 0;
	for (int v : pred) hi = std::max(hi, v + 1);
	for (int v : truth) hi = std::max(hi, v + 1);
	return hi;
}

// Contingency counts keyed by (label_a, label_b), plus marginals.
struct Contingency {
	std::map<std::pair<int, int>, double> joint;
	std::map<int, double> ma, mb;
	double n = 0;
};

Contingency cross_tabulate(const std::vector<int>& a, const std::vector<int>& b) {
	Contingency c;
	for (std::size_t i = 0; i < a.size(); ++i) {
		c.joint[{a[i], b[i]}] += 1.0;
		c.ma[a[i]] += 1.0;
		c.mb[b[i]] += 1.0;
	}
	c.n = static_cast<double>(a.size());
	return c;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

} // namespace

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
	require_aligned(pred, truth, "accuracy");
	std::size_t hit = 0;
	for (std::size_t i = 0; i < pred.size(); ++i)
		if (pred[i] == truth[i]) ++hit;
	return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int n_classes) {
	require_aligned(pred, truth, "macro_f1");
	if (n_classes <= 0) n_classes = infer_classes(pred, truth);
	if (n_classes <= 0) throw Error("macro_f1: no classes");
	double total = 0;
	for (int c = 0; c < n_classes; ++c) {
		double tp = 0, fp = 0, fn = 0;
		for (std::size_t i = 0; i < pred.size(); ++i) {
			if (pred[i] == c && truth[i] == c) ++tp;
			else if (pred[i] == c) ++fp;
			else if (truth[i] == c) ++fn;
		}
		const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
		const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
		total += prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
	}
	return total / n_classes;
}

double mean_reciprocal_rank(const std::vector<int>& ranks) {
	if (ranks.empty()) throw Error("mean_reciprocal_rank: no ranks");
	double acc = 0;
	for (int r : ranks) {
		if (r < 1) throw Error("mean_reciprocal_rank: ranks are 1-based");
		acc += 1.0 / r;
	}
	return acc / static_cast<double>(ranks.size());
}

double hits_at_k(const std::vector<int>& ranks, int k) {
	if (ranks.empty()) throw Error("hits_at_k: no ranks");
	if (k < 1) throw Error("hits_at_k: k must be positive");
	double acc = 0;
	for (int r : ranks) {
		if (r < 1) throw Error("hits_at_k: ranks are 1-based");
		if (r <= k) acc += 1.0;
	}
	return acc / static_cast<double>(ranks.size());
}

double normalized_mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
	require_aligned(a, b, "normalized_mutual_information");
	const Contingency c = cross_tabulate(a, b);
	auto entropy = [&](const std::map<int, double>& marg) {
		double h = 0;
		for (const auto& [label, cnt] : marg) {
			(void)label;
			const double p = cnt / c.n;
			if (p > 0) h -= p * std::log(p);
		}
		return h;
	};
	const double ha = entropy(c.ma), hb = entropy(c.mb);
	if (ha + hb == 0.0) return 1.0; // both partitions trivial
	if (ha == 0.0 || hb == 0.0) return 0.0;
	double mi = 0;
	for (const auto& [key, cnt] : c.joint) {
		const double pij = cnt / c.n;
		const double pi = c.ma.at(key.first) / c.n;
		const double pj = c.mb.at(key.second) / c.n;
		if (pij > 0) mi += pij * std::log(pij / (pi * pj));
	}
	mi = std::max(0.0, mi);
	return 2.0 * mi / (ha + hb);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
	require_aligned(a, b, "adjusted_rand_index");
	const Contingency c = cross_tabulate(a, b);
	double idx = 0, suma = 0, sumb = 0;
	for (const auto& [key, cnt] : c.joint) {
		(void)key;
		idx += comb2(cnt);
	}
	for (const auto& [label, cnt] : c.ma) {
		(void)label;
		suma += comb2(cnt);
	}
	for (const auto& [label, cnt] : c.mb) {
		(void)label;
		sumb += comb2(cnt);
	}
	const double pairs = comb2(c.n);
	const double expected = pairs > 0 ? suma * sumb / pairs : 0.0;
	const double maximum = 0.5 * (suma + sumb);
	const double denom = maximum - expected;
	if (denom == 0.0) return 1.0;
	return (idx - expected) / denom;
}

} // namespace coevo
