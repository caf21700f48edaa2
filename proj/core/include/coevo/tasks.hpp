#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "coevo/autodiff.hpp"
#include "coevo/graph.hpp"
#include "coevo/rng.hpp"

namespace coevo {

enum class TaskKind { node_classification, link_prediction, node_clustering, modality_retrieval };

inline const char* task_name(TaskKind k) {
	switch (k) {
		case TaskKind::node_classification: return "node_classification";
		case TaskKind::link_prediction: return "link_prediction";
		case TaskKind::node_clustering: return "node_clustering";
		case TaskKind::modality_retrieval: return "modality_retrieval";
	}
	return "?";
}

inline TaskKind parse_task(const std::string& s) {
	if (s == "node_classification") return TaskKind::node_classification;
	if (s == "link_prediction") return TaskKind::link_prediction;
	if (s == "node_clustering") return TaskKind::node_clustering;
	if (s == "modality_retrieval") return TaskKind::modality_retrieval;
	throw Error("unknown task '" + s + "'");
}

/// Static task description resolved once per run.
struct TaskSpec {
	TaskKind kind = TaskKind::node_classification;
	int classes = 0;          // classification / clustering
	int query_modality = 0;   // retrieval: modality index whose rows query
	int target_modality = 1;  // retrieval: modality searched over
	double tau = 0.07;        // retrieval temperature

	bool needs_head() const { return kind == TaskKind::node_classification; }
	bool has_loss() const { return kind != TaskKind::node_clustering; }
};

/// Supervision drawn for one optimization step.
struct TaskBatch {
	std::vector<int> nodes;                    // classification / retrieval rows
	std::vector<int> labels;                   // aligned with nodes
	std::vector<std::pair<int, int>> pos;      // link prediction positives
	std::vector<std::pair<int, int>> neg;      // matched negatives, same length
};

namespace detail {

inline std::vector<int> pick_subset(const std::vector<int>& pool, int want, std::uint64_t key) {
	if (pool.empty()) throw Error("task batch: empty training pool");
	const int take = std::min<int>(want, static_cast<int>(pool.size()));
	auto order = rng::sample_without_replacement(static_cast<int>(pool.size()), take, key);
	std::vector<int> out(order.size());
	for (std::size_t i = 0; i < order.size(); ++i) out[i] = pool[order[i]];
	return out;
}

} // namespace detail

/// Uniform non-edges, one per positive. Membership is checked against the
/// full edge set so no sampled pair is a real edge anywhere in the graph.
inline std::vector<std::pair<int, int>> sample_negative_edges(
		const MultimodalGraph& g, std::size_t count, std::uint64_t key) {
	const std::int64_t n = g.node_count;
	if (n < 2) throw Error("negative sampling: need at least two nodes");
	std::unordered_set<std::uint64_t> taken;
	taken.reserve(g.edges.size() * 2 + count * 2);
	auto pack = [](int a, int b) {
		if (a > b) std::swap(a, b);
		return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
		       static_cast<std::uint32_t>(b);
	};
	for (const auto& e : g.edges) taken.insert(pack(e.first, e.second));
	const std::int64_t free_pairs = n * (n - 1) / 2 - static_cast<std::int64_t>(g.edges.size());
	if (static_cast<std::int64_t>(count) > free_pairs)
		throw Error("negative sampling: graph too dense for requested negatives");
	std::vector<std::pair<int, int>> out;
	out.reserve(count);
	auto eng = rng::engine(key);
	std::uniform_int_distribution<int> node(0, static_cast<int>(n) - 1);
	while (out.size() < count) {
		int a = node(eng), b = node(eng);
		if (a == b) continue;
		if (a > b) std::swap(a, b);
		const std::uint64_t id = pack(a, b);
		if (taken.count(id)) continue;
		taken.insert(id);
		out.emplace_back(a, b);
	}
	return out;
}

/// Draws the supervision for one step. `train_nodes` / `train_edge_rows`
/// come from the active split; `epoch_negatives` is the per-epoch pool
/// aligned index-for-index with `train_edge_rows`.
inline TaskBatch make_task_batch(const TaskSpec& spec, const MultimodalGraph& g,
		const std::vector<int>& train_nodes, const std::vector<int>& train_edge_rows,
		const std::vector<std::pair<int, int>>& epoch_negatives,
		int batch_size, std::uint64_t key) {
	TaskBatch b;
	switch (spec.kind) {
		case TaskKind::node_classification: {
			b.nodes = detail::pick_subset(train_nodes, batch_size, rng::derive(key, "nodes"));
			if (!g.labels) throw Error("node_classification: dataset has no labels");
			b.labels.reserve(b.nodes.size());
			for (int v : b.nodes) b.labels.push_back((*g.labels)[static_cast<std::size_t>(v)]);
			break;
		}
		case TaskKind::link_prediction: {
			if (epoch_negatives.size() != train_edge_rows.size())
				throw Error("task batch: negative pool out of sync with training edges");
			std::vector<int> rows(train_edge_rows.size());
			for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
			auto picked = detail::pick_subset(rows, batch_size, rng::derive(key, "edges"));
			for (int i : picked) {
				b.pos.push_back(g.edges[static_cast<std::size_t>(train_edge_rows[static_cast<std::size_t>(i)])]);
				b.neg.push_back(epoch_negatives[static_cast<std::size_t>(i)]);
			}
			break;
		}
		case TaskKind::modality_retrieval: {
			b.nodes = detail::pick_subset(train_nodes, batch_size, rng::derive(key, "nodes"));
			break;
		}
		case TaskKind::node_clustering:
			break; // unsupervised, no batch
	}
	return b;
}

/// Cross-entropy over the batch for classification. Logits come from a
/// linear head on the smoothed embedding rows.
template <typename S>
ad::Var classification_loss(ad::Tape<S>& t, ad::Var hhat, const TaskBatch& batch,
		ad::Var head_w, ad::Var head_b, int classes) {
	const auto bsz = static_cast<Eigen::Index>(batch.nodes.size());
	if (bsz == 0) throw Error("classification_loss: empty batch");
	ad::Var rows = t.gather_rows(hhat, batch.nodes);
	ad::Var logits = t.add_row_vector(t.matmul(rows, head_w), head_b);
	ad::Var lse = ad::logsumexp_rows(t, logits);
	Mat<S> onehot = Mat<S>::Zero(bsz, classes);
	for (Eigen::Index i = 0; i < bsz; ++i) {
		const int y = batch.labels[static_cast<std::size_t>(i)];
		if (y < 0 || y >= classes) throw Error("classification_loss: label outside class range");
		onehot(i, y) = S(1);
	}
	ad::Var picked = t.sum(t.hadamard(logits, t.constant(onehot)));
	return t.scale(t.sub(t.sum(lse), picked), S(1) / static_cast<S>(bsz));
}

/// Logistic loss on inner-product edge scores, positives against matched
/// uniform non-edge negatives.
template <typename S>
ad::Var link_loss(ad::Tape<S>& t, ad::Var hhat, const TaskBatch& batch) {
	const std::size_t p = batch.pos.size();
	if (p == 0 || batch.neg.size() != p) throw Error("link_loss: malformed batch");
	std::vector<int> us, vs;
	us.reserve(2 * p); vs.reserve(2 * p);
	for (const auto& e : batch.pos) { us.push_back(e.first); vs.push_back(e.second); }
	for (const auto& e : batch.neg) { us.push_back(e.first); vs.push_back(e.second); }
	ad::Var hu = t.gather_rows(hhat, us);
	ad::Var hv = t.gather_rows(hhat, vs);
	ad::Var scores = t.row_sum(t.hadamard(hu, hv));
	Mat<S> sign(static_cast<Eigen::Index>(2 * p), 1);
	for (std::size_t i = 0; i < p; ++i) sign(static_cast<Eigen::Index>(i), 0) = S(-1);
	for (std::size_t i = p; i < 2 * p; ++i) sign(static_cast<Eigen::Index>(i), 0) = S(1);
	// softplus(-s) for positives, softplus(s) for negatives
	return t.mean(t.softplus(t.hadamard(scores, t.constant(sign))));
}

/// Symmetric in-batch contrastive loss between two modality embeddings:
/// matching rows of the query and target modality attract, other batch rows
/// repel, both directions averaged.
template <typename S>
ad::Var retrieval_loss(ad::Tape<S>& t, const std::vector<ad::Var>& modality_latents,
		const TaskBatch& batch, const TaskSpec& spec) {
	const auto bsz = static_cast<Eigen::Index>(batch.nodes.size());
	if (bsz == 0) throw Error("retrieval_loss: empty batch");
	const int m = static_cast<int>(modality_latents.size());
	if (spec.query_modality < 0 || spec.query_modality >= m ||
	    spec.target_modality < 0 || spec.target_modality >= m ||
	    spec.query_modality == spec.target_modality)
		throw Error("retrieval_loss: bad modality pair");
	ad::Var q = t.l2_normalize_rows(t.gather_rows(modality_latents[static_cast<std::size_t>(spec.query_modality)], batch.nodes));
	ad::Var k = t.l2_normalize_rows(t.gather_rows(modality_latents[static_cast<std::size_t>(spec.target_modality)], batch.nodes));
	const S inv_tau = S(1) / static_cast<S>(spec.tau);
	ad::Var logits_qk = t.scale(t.matmul(q, k, false, true), inv_tau);
	ad::Var logits_kq = t.scale(t.matmul(k, q, false, true), inv_tau);
	ad::Var term_qk = t.sub(t.sum(ad::logsumexp_rows(t, logits_qk)), t.sum_diag(logits_qk));
	ad::Var term_kq = t.sub(t.sum(ad::logsumexp_rows(t, logits_kq)), t.sum_diag(logits_kq));
	return t.scale(t.add(term_qk, term_kq), S(1) / static_cast<S>(2 * bsz));
}

/// Dispatch. Clustering has no training loss and returns an invalid Var;
/// callers skip the task term in that case.
template <typename S>
ad::Var task_loss(ad::Tape<S>& t, const TaskSpec& spec, const TaskBatch& batch,
		ad::Var hhat, const std::vector<ad::Var>& modality_latents,
		ad::Var head_w, ad::Var head_b) {
	switch (spec.kind) {
		case TaskKind::node_classification:
			return classification_loss(t, hhat, batch, head_w, head_b, spec.classes);
		case TaskKind::link_prediction:
			return link_loss(t, hhat, batch);
		case TaskKind::modality_retrieval:
			return retrieval_loss(t, modality_latents, batch, spec);
		case TaskKind::node_clustering:
			return ad::Var{};
	}
	return ad::Var{};
}

/// Row-wise argmax with ties resolved to the lowest index.
template <typename S>
std::vector<int> argmax_rows(const Mat<S>& m) {
	std::vector<int> out(static_cast<std::size_t>(m.rows()));
	for (Eigen::Index i = 0; i < m.rows(); ++i) {
		int arg = 0;
		S best = m(i, 0);
		for (Eigen::Index j = 1; j < m.cols(); ++j)
			if (m(i, j) > best) { best = m(i, j); arg = static_cast<int>(j); }
		out[static_cast<std::size_t>(i)] = arg;
	}
	return out;
}

/// 1-based rank of `target_score` among candidates, optimistic under ties:
/// rank = 1 + number of strictly greater candidate scores.
inline int rank_of(double target_score, const std::vector<double>& candidate_scores) {
	int greater = 0;
	for (double s : candidate_scores)
		if (s > target_score) ++greater;
	return 1 + greater;
}

} // namespace coevo
