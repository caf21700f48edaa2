#pragma once

#include <cstdint>
#include <vector>

#include "coevo/autodiff.hpp"
#include "coevo/rng.hpp"
#include "coevo/warn.hpp"

namespace coevo::topo {

using ad::Tape;
using ad::Var;

struct AnchorSet {
	std::vector<int> indices; // distinct node ids, ascending
	std::uint64_t seed = 0;
};

inline AnchorSet sample_anchors(int n, int size, std::uint64_t seed) {
	if (size < 1 || size > n) {
		throw Error("anchors: size " + std::to_string(size) + " outside [1, " + std::to_string(n) + "]");
	}
	return AnchorSet{rng::sample_without_replacement(n, size, seed), seed};
}

/**
 * Node-to-anchor affinity R (N x U) after thresholding, with its two degree
 * diagonals. Entries are nonnegative; a column of zeros means no node kept
 * that anchor, and the operator treats it as dropped (pseudo-inverse of the
 * zero mass). Rows keep at least their maximum entry whenever it is positive.
 */
template <typename S>
struct AffinityState {
	Mat<S> R;
	Vec<S> anchor_mass; // column sums, the Lambda diagonal
	Vec<S> node_mass;   // row sums, the Delta diagonal
	std::vector<int> anchors;

	int kept_columns() const {
		int c = 0;
		for (Eigen::Index j = 0; j < anchor_mass.size(); ++j) {
			if (anchor_mass[j] > S(0)) ++c;
		}
		return c;
	}
};

template <typename S>
AffinityState<S> make_affinity_state(Mat<S> R, std::vector<int> anchors) {
	if (R.cols() != static_cast<Eigen::Index>(anchors.size())) {
		throw Error("affinity: R has " + std::to_string(R.cols()) + " columns for " +
		            std::to_string(anchors.size()) + " anchors");
	}
	if ((R.array() < S(0)).any()) throw Error("affinity: negative entries");
	AffinityState<S> st;
	st.anchor_mass = R.colwise().sum().transpose();
	st.node_mass = R.rowwise().sum();
	st.R = std::move(R);
	st.anchors = std::move(anchors);
	return st;
}

/// Per-round similarity learner state as tape vars: one weight vector per
/// (source, perspective) and one mixing logit vector across sources. Sources
/// are the modalities plus the fused matrix, in that order.
struct LearnerVars {
	std::vector<std::vector<Var>> weights;
	Var mix_logits;
};

/**
 * Multi-perspective weighted-cosine affinity against the anchor columns:
 * per source and perspective, cosine of (w .* x_i, w .* x_u), averaged over
 * perspectives, mixed across sources by softmax weights, then sparsified by
 * threshold-with-rowmax-retention. Differentiable in the weights, the mixing
 * logits, and (in latent rounds) the source matrices.
 */
template <typename S>
Var affinity_matrix(Tape<S>& t, const std::vector<Var>& sources, const LearnerVars& learner,
                    const AnchorSet& anchors, S epsilon) {
	const std::size_t n_sources = sources.size();
	if (n_sources == 0) throw Error("affinity: no sources");
	if (learner.weights.size() != n_sources) {
		throw Error("affinity: " + std::to_string(learner.weights.size()) + " weight groups for " +
		            std::to_string(n_sources) + " sources");
	}
	const Mat<S>& logits = t.value(learner.mix_logits);
	if (logits.rows() != static_cast<Eigen::Index>(n_sources) || logits.cols() != 1) {
		throw Error("affinity: mixing logits must be " + std::to_string(n_sources) + "x1");
	}
	const std::size_t perspectives = learner.weights[0].size();
	if (perspectives == 0) throw Error("affinity: at least one perspective required");

	for (std::size_t m = 0; m < n_sources; ++m) {
		const Mat<S>& X = t.value(sources[m]);
		for (Eigen::Index i = 0; i < X.rows(); ++i) {
			if (X.row(i).norm() <= Tape<S>::tiny()) {
				warn("affinity: zero feature row " + std::to_string(i) + " in source " + std::to_string(m) +
				     ", its similarities are 0");
				break;
			}
		}
	}

	Var mix = t.softmax(learner.mix_logits);
	Var acc{};
	for (std::size_t m = 0; m < n_sources; ++m) {
		if (learner.weights[m].size() != perspectives) {
			throw Error("affinity: source " + std::to_string(m) + " has a different perspective count");
		}
		Var sm{};
		for (std::size_t p = 0; p < perspectives; ++p) {
			Var xw = t.col_scale(sources[m], learner.weights[m][p]);
			Var xn = t.l2_normalize_rows(xw);
			Var an = t.gather_rows(xn, anchors.indices);
			Var c = t.matmul(xn, an, false, true);
			sm = (p == 0) ? c : t.add(sm, c);
		}
		sm = t.scale(sm, S(1) / static_cast<S>(perspectives));
		Var mix_m = t.gather_rows(mix, {static_cast<int>(m)});
		Var term = t.scalar_mul(sm, mix_m);
		acc = (m == 0) ? term : t.add(acc, term);
	}
	return t.threshold_keep_rowmax(acc, epsilon);
}

/// Evolved topology as used on a tape: the fixed normalized adjacency plus
/// (when lambda < 1) a live affinity var. symmetrize averages the anchor
/// operator with its transpose inside the application.
template <typename S>
struct EvolvedTopologyVars {
	S lambda = S(1);
	const SpMat<S>* base = nullptr;
	Var affinity{};
	bool symmetrize = false;
};

/// Plain-value counterpart for oracles and dense recovery.
template <typename S>
struct EvolvedTopology {
	S lambda = S(1);
	const SpMat<S>* base = nullptr;
	const AffinityState<S>* affinity = nullptr;
	bool symmetrize = false;
};

/**
 * Anchor-factorized application Delta^{-1} (R (Lambda^{-1} (R^T X))) in that
 * association order. The N x N recovered matrix is never materialized; cost
 * is O(N U d). Empty anchor columns and (pathological) empty rows contribute
 * nothing via the safe reciprocal.
 */
template <typename S>
Var apply_anchor_operator(Tape<S>& t, Var R, Var x, bool symmetrize = false) {
	Var lam_inv = t.reciprocal_safe(t.col_sum(R));
	Var del_inv = t.reciprocal_safe(t.row_sum(R));
	Var z = t.matmul(R, x, true, false);
	z = t.row_scale(z, lam_inv);
	z = t.matmul(R, z);
	z = t.row_scale(z, del_inv);
	if (!symmetrize) return z;
	Var w = t.row_scale(x, del_inv);
	w = t.matmul(R, w, true, false);
	w = t.row_scale(w, lam_inv);
	w = t.matmul(R, w);
	return t.scale(t.add(z, w), S(0.5));
}

/// Q X = lambda A~ X + (1 - lambda) A^E X. Inert branches are skipped
/// entirely: with lambda == 1 the affinity is never touched (and may be
/// invalid), with lambda == 0 the base adjacency is not applied.
template <typename S>
Var apply_evolved(Tape<S>& t, const EvolvedTopologyVars<S>& top, Var x) {
	if (top.lambda < S(0) || top.lambda > S(1)) throw Error("apply_evolved: lambda outside [0,1]");
	Var out{};
	bool have = false;
	if (top.lambda > S(0)) {
		if (top.base == nullptr) throw Error("apply_evolved: missing base adjacency");
		out = t.scale(t.spmm(top.base, x), top.lambda);
		have = true;
	}
	if (top.lambda < S(1)) {
		if (!top.affinity.valid()) throw Error("apply_evolved: affinity required when lambda < 1");
		Var e = apply_anchor_operator(t, top.affinity, x, top.symmetrize);
		e = t.scale(e, S(1) - top.lambda);
		out = have ? t.add(out, e) : e;
		have = true;
	}
	return out;
}

/**
 * Dense recovery oracle: materializes Delta^{-1} R Lambda^{-1} R^T (row
 * stochastic wherever the row has mass). Quadratic memory; guarded to
 * N <= 2000. Exists for verification, never for the training path.
 */
template <typename S>
Mat<S> dense_recover(const AffinityState<S>& a, bool symmetrize = false) {
	const Eigen::Index n = a.R.rows();
	if (n > 2000) throw Error("dense_recover: N = " + std::to_string(n) + " exceeds the 2000-node guard");
	auto inv = [](S v) { return std::abs(v) > Tape<S>::tiny() ? S(1) / v : S(0); };
	Vec<S> linv = a.anchor_mass.unaryExpr(inv);
	Vec<S> dinv = a.node_mass.unaryExpr(inv);
	Mat<S> m = a.R * linv.asDiagonal() * a.R.transpose();
	Mat<S> rec = dinv.asDiagonal() * m;
	if (symmetrize) rec = ((rec + rec.transpose()) * S(0.5)).eval();
	return rec;
}

/// Relative squared change ||R_t - R_{t-1}||_F^2 / ||R_t||_F^2 between two
/// rounds of the same epoch. Accumulated in double regardless of S.
template <typename S>
double topology_delta(const AffinityState<S>& cur, const AffinityState<S>& prev) {
	if (cur.anchors != prev.anchors || cur.R.rows() != prev.R.rows() || cur.R.cols() != prev.R.cols()) {
		throw Error("topology_delta: states disagree on anchors or shape (driver bug)");
	}
	double num = (cur.R.template cast<double>() - prev.R.template cast<double>()).squaredNorm();
	double den = cur.R.template cast<double>().squaredNorm();
	if (den <= 0.0) {
		if (num == 0.0) return 0.0;
		throw Error("topology_delta: current affinity has zero norm");
	}
	return num / den;
}

} // namespace coevo::topo
