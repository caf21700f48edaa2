#pragma once

#include <vector>

#include "coevo/autodiff.hpp"
#include "coevo/topology.hpp"

namespace coevo::mod {

using ad::Tape;
using ad::Var;

template <typename S>
struct SmoothingConfig {
	S alpha = S(1); // fidelity-vs-smoothness tradeoff, > 0
	int steps = 10; // truncation order T, >= 0

	S contraction() const { return alpha / (alpha + S(1)); }
};

/// Per-modality projection H^(m) = X^(m) Phi^(m).
template <typename S>
std::vector<Var> project(Tape<S>& t, const std::vector<Var>& features, const std::vector<Var>& projections) {
	if (features.size() != projections.size()) throw Error("project: feature/projection count mismatch");
	std::vector<Var> out;
	out.reserve(features.size());
	for (std::size_t m = 0; m < features.size(); ++m) out.push_back(t.matmul(features[m], projections[m]));
	return out;
}

/// Cross-modality mean in the shared latent space.
template <typename S>
Var mean_latent(Tape<S>& t, const std::vector<Var>& latents) {
	if (latents.empty()) throw Error("mean_latent: no latents");
	Var acc = latents[0];
	for (std::size_t m = 1; m < latents.size(); ++m) acc = t.add(acc, latents[m]);
	return t.scale(acc, S(1) / static_cast<S>(latents.size()));
}

/**
 * Truncated smoothing: hhat = (1/(alpha+1)) sum_{t=0..T} M^t hbar where
 * M X = (alpha/(alpha+1)) (lambda A~ + (1-lambda) A^E) X, realized as the
 * contraction-scaled evolved-topology application. steps == 0 degenerates to
 * hbar / (alpha + 1) exactly. Never forms the recovered matrix.
 */
template <typename S>
Var smooth(Tape<S>& t, Var hbar, const topo::EvolvedTopologyVars<S>& top, const SmoothingConfig<S>& cfg) {
	if (!(cfg.alpha > S(0))) throw Error("smooth: alpha must be > 0");
	if (cfg.steps < 0) throw Error("smooth: negative step count");
	const S c = cfg.contraction();
	Var h = hbar;
	Var acc = hbar;
	for (int step = 0; step < cfg.steps; ++step) {
		h = t.scale(topo::apply_evolved(t, top, h), c);
		acc = t.add(acc, h);
	}
	return t.scale(acc, S(1) / (cfg.alpha + S(1)));
}

/**
 * Dense closed-form reference: hhat* = (1/(alpha+1)) (I - c Q)^{-1} hbar with
 * Q assembled densely (LU solve). Verification oracle only; refuses N > 2000.
 */
template <typename S>
Mat<S> exact_solve(const Mat<S>& hbar, const topo::EvolvedTopology<S>& top, const SmoothingConfig<S>& cfg) {
	if (!(cfg.alpha > S(0))) throw Error("exact_solve: alpha must be > 0");
	const Eigen::Index n = hbar.rows();
	if (n > 2000) throw Error("exact_solve: N = " + std::to_string(n) + " exceeds the 2000-node guard");
	Mat<S> q = Mat<S>::Zero(n, n);
	if (top.lambda > S(0)) {
		if (top.base == nullptr) throw Error("exact_solve: missing base adjacency");
		if (top.base->rows() != n || top.base->cols() != n) throw Error("exact_solve: adjacency shape mismatch");
		q += top.lambda * Mat<S>(*top.base);
	}
	if (top.lambda < S(1)) {
		if (top.affinity == nullptr) throw Error("exact_solve: affinity required when lambda < 1");
		q += (S(1) - top.lambda) * topo::dense_recover(*top.affinity, top.symmetrize);
	}
	Mat<S> lhs = Mat<S>::Identity(n, n) - cfg.contraction() * q;
	Mat<S> sol = lhs.partialPivLu().solve(hbar);
	return sol / (cfg.alpha + S(1));
}

/// Forward-value snapshot of one evolution round.
template <typename S>
struct LatentState {
	std::vector<Mat<S>> latents; // H^(m), one per modality
	Mat<S> hbar;                 // cross-modality mean
	Mat<S> hhat;                 // smoothed fused embedding
	int round = 0;
};

template <typename S>
struct AlignmentConfig {
	S tau = S(0.07);        // contrastive temperature, > 0
	std::vector<int> batch; // denominator population; queries iterate over it
};

/**
 * Cross-modality alignment: every modality queries every other source
 * (remaining modalities plus the fused embedding) with an in-batch softmax
 * over cosine similarities at temperature tau. The fused target enters as a
 * plain value (conditioned stop-gradient): identical numbers to detaching a
 * live var, and it keeps the finite-difference view of the loss aligned with
 * the tape's. Modality-to-modality terms propagate into both sides. The
 * fused embedding is never a query. Sum over ordered pairs, mean over batch.
 *
 * fused_values is taken by value: callers hand in t.value(...) references
 * into tape storage, which new ops below would invalidate.
 */
template <typename S>
Var alignment_loss(Tape<S>& t, const std::vector<Var>& modality_latents, Mat<S> fused_values,
                   const AlignmentConfig<S>& cfg) {
	if (modality_latents.empty()) throw Error("alignment: no modality latents");
	if (cfg.batch.empty()) throw Error("alignment: empty batch");
	if (!(cfg.tau > S(0))) throw Error("alignment: tau must be > 0");

	const std::size_t n_mod = modality_latents.size();
	const S inv_tau = S(1) / cfg.tau;
	const S batch_size = static_cast<S>(cfg.batch.size());

	std::vector<Var> q(n_mod);
	for (std::size_t m = 0; m < n_mod; ++m) {
		q[m] = t.l2_normalize_rows(t.gather_rows(modality_latents[m], cfg.batch));
	}
	Var fused = t.l2_normalize_rows(t.gather_rows(t.constant(fused_values), cfg.batch));

	Var loss{};
	bool first = true;
	for (std::size_t m = 0; m < n_mod; ++m) {
		for (std::size_t n = 0; n <= n_mod; ++n) {
			if (n == m) continue;
			Var target = (n == n_mod) ? fused : q[n];
			Var logits = t.scale(t.matmul(q[m], target, false, true), inv_tau);
			Var lse = ad::logsumexp_rows(t, logits);
			Var term = t.sub(t.sum(lse), t.sum_diag(logits));
			loss = first ? term : t.add(loss, term);
			first = false;
		}
	}
	return t.scale(loss, S(1) / batch_size);
}

} // namespace coevo::mod
