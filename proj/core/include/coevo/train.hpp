#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "coevo/graph.hpp"
#include "coevo/metrics.hpp"
#include "coevo/modality.hpp"
#include "coevo/optim.hpp"
#include "coevo/tasks.hpp"
#include "coevo/topology.hpp"
#include "coevo/warn.hpp"

namespace coevo {

/// full: the whole method. one_shot_te: a single evolution round per epoch.
/// only_me: structure frozen at the observed adjacency (lambda pinned to 1).
/// task_agnostic: co-evolution without the task term; a classification head
/// is fitted afterwards on frozen embeddings.
enum class AblationMode { full, one_shot_te, only_me, task_agnostic };

inline const char* mode_name(AblationMode m) {
	switch (m) {
		case AblationMode::full: return "full";
		case AblationMode::one_shot_te: return "one_shot_te";
		case AblationMode::only_me: return "only_me";
		case AblationMode::task_agnostic: return "task_agnostic";
	}
	return "?";
}

inline AblationMode parse_mode(const std::string& s) {
	if (s == "full") return AblationMode::full;
	if (s == "one_shot_te") return AblationMode::one_shot_te;
	if (s == "only_me") return AblationMode::only_me;
	if (s == "task_agnostic") return AblationMode::task_agnostic;
	throw Error("unknown mode '" + s + "'");
}

enum class Precision { f32, f64 };

inline const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

inline Precision parse_precision(const std::string& s) {
	if (s == "f32") return Precision::f32;
	if (s == "f64") return Precision::f64;
	throw Error("unknown precision '" + s + "' (f32 or f64)");
}

struct TrainConfig {
	TaskKind task = TaskKind::node_classification;
	AblationMode mode = AblationMode::full;
	Precision precision = Precision::f32;

	int epochs = 100;
	int latent_dim = 256;
	double lambda = 0.8;       // observed-vs-evolved tradeoff in Q
	double epsilon = 0.1;      // affinity sparsification threshold
	int perspectives = 4;      // weight vectors per similarity source
	int anchors = 0;           // explicit anchor count; 0 defers to the fraction
	double anchor_fraction = 0.1;
	double alpha = 1.0;        // smoothing fidelity weight
	int t_smooth = 10;         // propagation truncation order
	int t_evo = 10;            // max evolution rounds per epoch
	double delta = 1e-5;       // relative topology-change stop threshold
	double eta = 0.1;          // task loss weight
	double tau = 0.07;         // contrastive temperature
	int batch_size = 512;
	double learning_rate = 5e-3;
	double weight_decay = 1e-5;
	std::uint64_t seed = 1;
	int finetune_epochs = 50;  // head fit after task-agnostic training
	bool symmetrize = false;   // average the evolved operator with its transpose
	int eval_negatives = 100;  // negatives per ranking query
	int hits_k = 3;
	std::string retrieval_query;  // modality names; empty = first two
	std::string retrieval_target;
	std::string tag;           // free-form run label carried into reports

	void validate() const {
		if (epochs < 1) throw Error("config: epochs must be >= 1");
		if (latent_dim < 1) throw Error("config: latent_dim must be >= 1");
		if (lambda < 0.0 || lambda > 1.0) throw Error("config: lambda outside [0,1]");
		if (epsilon < 0.0) throw Error("config: epsilon must be >= 0");
		if (perspectives < 1) throw Error("config: perspectives must be >= 1");
		if (anchors < 0) throw Error("config: anchors must be >= 0");
		if (anchors == 0 && (anchor_fraction <= 0.0 || anchor_fraction > 1.0))
			throw Error("config: anchor_fraction outside (0,1]");
		if (alpha <= 0.0) throw Error("config: alpha must be > 0");
		if (t_smooth < 0) throw Error("config: t_smooth must be >= 0");
		if (t_evo < 1) throw Error("config: t_evo must be >= 1");
		if (delta <= 0.0) throw Error("config: delta must be > 0");
		if (eta < 0.0) throw Error("config: eta must be >= 0");
		if (tau <= 0.0) throw Error("config: tau must be > 0");
		if (batch_size < 1) throw Error("config: batch_size must be >= 1");
		if (learning_rate < 0.0) throw Error("config: learning_rate must be >= 0");
		if (weight_decay < 0.0) throw Error("config: weight_decay must be >= 0");
		if (finetune_epochs < 0) throw Error("config: finetune_epochs must be >= 0");
		if (eval_negatives < 1) throw Error("config: eval_negatives must be >= 1");
		if (hits_k < 1) throw Error("config: hits_k must be >= 1");
	}
};

/// One epoch of the evolution loop as recorded for reports.
struct EpochTrace {
	std::uint64_t anchor_seed = 0;
	int rounds = 0;
	std::vector<double> deltas;     // relative topology change, round 2 onward
	std::vector<double> loss_mod;   // per round
	std::vector<double> loss_task;
	std::vector<double> loss_total;
	double val_metric = 0;
};

struct EvolutionTrace {
	std::vector<EpochTrace> epochs;
	std::string val_metric_name;
	int best_epoch = -1;
	double best_val = 0;
};

/// All learned state. w/beta drive the raw-feature affinity of round 1,
/// theta/gamma the latent-space affinity of later rounds, phi the per-modality
/// projections; the linear head exists for classification only.
template <typename S>
struct Model {
	std::vector<std::vector<ad::Parameter<S>>> w;     // [M+1][K]
	ad::Parameter<S> beta;                            // (M+1) x 1
	std::vector<std::vector<ad::Parameter<S>>> theta; // [M+1][K]
	ad::Parameter<S> gamma;                           // (M+1) x 1
	std::vector<ad::Parameter<S>> phi;                // [M], d_m x latent
	ad::Parameter<S> head_w, head_b;
	bool has_head = false;

	static Model init(const MultimodalGraph& g, const TrainConfig& cfg, int classes) {
		Model m;
		const int n_mod = g.modality_count();
		int d_max = 0;
		for (const auto& info : g.modalities) d_max = std::max(d_max, info.dim);
		auto gauss = [](std::mt19937_64& eng) {
			std::normal_distribution<double> d(0.0, 1.0);
			return d(eng);
		};
		auto weight_vec = [&](int dim, std::uint64_t key) {
			auto eng = rng::engine(key);
			Mat<S> v(dim, 1);
			for (int i = 0; i < dim; ++i) v(i, 0) = S(1) + S(0.01) * static_cast<S>(gauss(eng));
			return v;
		};
		m.w.resize(static_cast<std::size_t>(n_mod) + 1);
		m.theta.resize(static_cast<std::size_t>(n_mod) + 1);
		for (int src = 0; src <= n_mod; ++src) {
			const int raw_dim = src < n_mod ? g.modalities[static_cast<std::size_t>(src)].dim : d_max;
			for (int p = 0; p < cfg.perspectives; ++p) {
				const auto su = static_cast<std::uint64_t>(src), pu = static_cast<std::uint64_t>(p);
				m.w[static_cast<std::size_t>(src)].emplace_back(
						"w." + std::to_string(src) + "." + std::to_string(p),
						weight_vec(raw_dim, rng::derive(cfg.seed, "init.w", su, pu)));
				m.theta[static_cast<std::size_t>(src)].emplace_back(
						"theta." + std::to_string(src) + "." + std::to_string(p),
						weight_vec(cfg.latent_dim, rng::derive(cfg.seed, "init.theta", su, pu)));
			}
		}
		m.beta = ad::Parameter<S>("beta", Mat<S>::Zero(n_mod + 1, 1));
		m.gamma = ad::Parameter<S>("gamma", Mat<S>::Zero(n_mod + 1, 1));
		for (int src = 0; src < n_mod; ++src) {
			const int dim = g.modalities[static_cast<std::size_t>(src)].dim;
			auto eng = rng::engine(rng::derive(cfg.seed, "init.phi", static_cast<std::uint64_t>(src)));
			Mat<S> p(dim, cfg.latent_dim);
			const S scale = S(1) / std::sqrt(static_cast<S>(dim));
			for (int i = 0; i < dim; ++i)
				for (int j = 0; j < cfg.latent_dim; ++j) p(i, j) = scale * static_cast<S>(gauss(eng));
			m.phi.emplace_back("phi." + std::to_string(src), std::move(p));
		}
		if (classes > 0 && cfg.task == TaskKind::node_classification) {
			auto eng = rng::engine(rng::derive(cfg.seed, "init.head"));
			Mat<S> hw(cfg.latent_dim, classes);
			const S scale = S(1) / std::sqrt(static_cast<S>(cfg.latent_dim));
			for (int i = 0; i < cfg.latent_dim; ++i)
				for (int j = 0; j < classes; ++j) hw(i, j) = scale * static_cast<S>(gauss(eng));
			m.head_w = ad::Parameter<S>("head.weight", std::move(hw));
			m.head_b = ad::Parameter<S>("head.bias", Mat<S>::Zero(1, classes));
			m.has_head = true;
		}
		return m;
	}

	std::vector<ad::Parameter<S>*> all_params() {
		std::vector<ad::Parameter<S>*> out;
		for (auto& grp : w)
			for (auto& p : grp) out.push_back(&p);
		out.push_back(&beta);
		for (auto& grp : theta)
			for (auto& p : grp) out.push_back(&p);
		out.push_back(&gamma);
		for (auto& p : phi) out.push_back(&p);
		if (has_head) {
			out.push_back(&head_w);
			out.push_back(&head_b);
		}
		return out;
	}

	std::vector<ad::Parameter<S>*> head_params() {
		std::vector<ad::Parameter<S>*> out;
		if (has_head) {
			out.push_back(&head_w);
			out.push_back(&head_b);
		}
		return out;
	}

	std::vector<Mat<S>> snapshot_values() {
		std::vector<Mat<S>> out;
		for (auto* p : all_params()) out.push_back(p->value);
		return out;
	}

	void restore_values(const std::vector<Mat<S>>& vals) {
		auto ps = all_params();
		if (vals.size() != ps.size()) throw Error("model restore: parameter count mismatch");
		for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = vals[i];
	}

	std::vector<std::pair<std::string, MatF>> named_values_f32() {
		std::vector<std::pair<std::string, MatF>> out;
		for (auto* p : all_params()) out.emplace_back(p->name, p->value.template cast<float>());
		return out;
	}

	/// Overwrites parameter values from checkpoint blobs, matching by name.
	void load_values(const std::vector<std::pair<std::string, MatF>>& blobs) {
		auto ps = all_params();
		if (blobs.size() != ps.size())
			throw Error("checkpoint: holds " + std::to_string(blobs.size()) + " parameters, model has " +
					std::to_string(ps.size()));
		std::map<std::string, ad::Parameter<S>*> by_name;
		for (auto* p : ps) by_name[p->name] = p;
		for (const auto& [name, m] : blobs) {
			auto it = by_name.find(name);
			if (it == by_name.end()) throw Error("checkpoint: unknown parameter '" + name + "'");
			if (m.rows() != it->second->value.rows() || m.cols() != it->second->value.cols())
				throw Error("checkpoint: parameter '" + name + "' has the wrong shape");
			it->second->value = m.template cast<S>();
		}
	}
};

/// Immutable per-run numeric state derived from the dataset.
template <typename S>
struct GraphCache {
	std::vector<Mat<S>> raw; // one per modality
	Mat<S> fused_raw;        // zero-padded mean
	SpMat<S> base;           // normalized adjacency (training edges only for LP)
};

template <typename S>
GraphCache<S> make_graph_cache(const MultimodalGraph& g, const std::vector<std::pair<int, int>>& base_edges) {
	GraphCache<S> gc;
	gc.raw.reserve(g.features.size());
	for (const auto& f : g.features) gc.raw.push_back(f.cast<S>());
	gc.fused_raw = fused_raw_features(g).cast<S>();
	gc.base = normalized_adjacency_from_edges<S>(g.node_count, base_edges);
	return gc;
}

/// Tape vars of one evolution round.
template <typename S>
struct RoundVars {
	ad::Var affinity{}; // invalid when lambda == 1
	std::vector<ad::Var> latents;
	ad::Var hbar{}, hhat{};
};

/**
 * Builds one round's forward graph. Round 1 scores affinity on raw features
 * with the (w, beta) learner; later rounds score the previous round's
 * detached latents (modalities plus the smoothed embedding as the fused
 * source) with (theta, gamma). Latents are always re-projected from raw
 * features through phi. With a null binder all parameters enter as constants
 * (inference). prev must be non-null from round 2 on.
 */
template <typename S>
RoundVars<S> build_round(ad::Tape<S>& t, ad::Binder<S>* binder, Model<S>& model,
		const GraphCache<S>& gc, const TrainConfig& cfg, const topo::AnchorSet& anchors,
		int round, const mod::LatentState<S>* prev) {
	auto take = [&](ad::Parameter<S>& p) { return binder ? binder->bind(p) : t.constant(p.value); };

	RoundVars<S> rv;
	if (cfg.lambda < 1.0) {
		std::vector<ad::Var> sources;
		topo::LearnerVars learner;
		if (round <= 1) {
			for (const auto& x : gc.raw) sources.push_back(t.constant(x));
			sources.push_back(t.constant(gc.fused_raw));
			learner.weights.resize(model.w.size());
			for (std::size_t m = 0; m < model.w.size(); ++m)
				for (auto& p : model.w[m]) learner.weights[m].push_back(take(p));
			learner.mix_logits = take(model.beta);
		} else {
			if (prev == nullptr) throw Error("build_round: missing previous state");
			for (const auto& h : prev->latents) sources.push_back(t.constant(h));
			sources.push_back(t.constant(prev->hhat));
			learner.weights.resize(model.theta.size());
			for (std::size_t m = 0; m < model.theta.size(); ++m)
				for (auto& p : model.theta[m]) learner.weights[m].push_back(take(p));
			learner.mix_logits = take(model.gamma);
		}
		rv.affinity = topo::affinity_matrix(t, sources, learner, anchors, S(cfg.epsilon));
	}

	std::vector<ad::Var> raw_vars;
	raw_vars.reserve(gc.raw.size());
	for (const auto& x : gc.raw) raw_vars.push_back(t.constant(x));
	std::vector<ad::Var> projections;
	projections.reserve(model.phi.size());
	for (auto& p : model.phi) projections.push_back(take(p));
	rv.latents = mod::project(t, raw_vars, projections);
	rv.hbar = mod::mean_latent(t, rv.latents);

	topo::EvolvedTopologyVars<S> top;
	top.lambda = S(cfg.lambda);
	top.base = &gc.base;
	top.affinity = rv.affinity;
	top.symmetrize = cfg.symmetrize;
	mod::SmoothingConfig<S> scfg;
	scfg.alpha = S(cfg.alpha);
	scfg.steps = cfg.t_smooth;
	rv.hhat = mod::smooth(t, rv.hbar, top, scfg);
	return rv;
}

template <typename S>
mod::LatentState<S> snapshot_state(ad::Tape<S>& t, const RoundVars<S>& rv, int round) {
	mod::LatentState<S> st;
	st.latents.reserve(rv.latents.size());
	for (ad::Var v : rv.latents) st.latents.push_back(t.value(v));
	st.hbar = t.value(rv.hbar);
	st.hhat = t.value(rv.hhat);
	st.round = round;
	return st;
}

/**
 * Runs the evolution loop with frozen parameters and returns the final
 * latent state. Follows the same stop rule as training; with lambda == 1 the
 * rounds are identical so one suffices.
 */
template <typename S>
mod::LatentState<S> infer(Model<S>& model, const GraphCache<S>& gc, const TrainConfig& cfg,
		const topo::AnchorSet& anchors) {
	mod::LatentState<S> state;
	std::optional<topo::AffinityState<S>> prev_aff;
	const int rounds = cfg.lambda >= 1.0 ? 1 : cfg.t_evo;
	for (int k = 1; k <= rounds; ++k) {
		ad::Tape<S> t;
		RoundVars<S> rv = build_round(t, static_cast<ad::Binder<S>*>(nullptr), model, gc, cfg,
				anchors, k, state.round > 0 ? &state : nullptr);
		state = snapshot_state(t, rv, k);
		if (cfg.lambda < 1.0) {
			auto cur = topo::make_affinity_state(t.value(rv.affinity), anchors.indices);
			if (k >= 2 && topo::topology_delta(cur, *prev_aff) <= cfg.delta) break;
			prev_aff = std::move(cur);
		}
	}
	return state;
}

/// Resolved once per run from the dataset and config.
inline TaskSpec make_task_spec(const MultimodalGraph& g, const TrainConfig& cfg) {
	TaskSpec spec;
	spec.kind = cfg.task;
	spec.tau = cfg.tau;
	if (cfg.task == TaskKind::node_classification || cfg.task == TaskKind::node_clustering) {
		if (g.n_classes < 2) throw Error(std::string(task_name(cfg.task)) + ": dataset must declare n_classes >= 2");
		if (!g.labels) throw Error(std::string(task_name(cfg.task)) + ": dataset has no labels");
		spec.classes = g.n_classes;
	}
	if (cfg.task == TaskKind::modality_retrieval) {
		if (g.modality_count() < 2) throw Error("modality_retrieval: need at least two modalities");
		auto find_mod = [&](const std::string& name, int fallback) {
			if (name.empty()) return fallback;
			for (int m = 0; m < g.modality_count(); ++m)
				if (g.modalities[static_cast<std::size_t>(m)].name == name) return m;
			throw Error("modality_retrieval: no modality named '" + name + "'");
		};
		spec.query_modality = find_mod(cfg.retrieval_query, 0);
		spec.target_modality = find_mod(cfg.retrieval_target, 1);
		if (spec.query_modality == spec.target_modality)
			throw Error("modality_retrieval: query and target modality coincide");
	}
	return spec;
}

/// Splits of the kind the task needs: the dataset's own when compatible,
/// synthesized 60/20/20 otherwise.
inline Splits ensure_splits(const MultimodalGraph& g, const TrainConfig& cfg) {
	const SplitKind want = cfg.task == TaskKind::link_prediction ? SplitKind::edge : SplitKind::node;
	if (g.splits && g.splits->kind == want) return *g.splits;
	if (g.splits) warn("dataset splits have the wrong kind for this task; synthesizing new ones");
	const auto key = rng::derive(cfg.seed, "splits");
	return want == SplitKind::edge ? make_edge_splits(g.edge_count(), 0.6, 0.2, key)
	                               : make_node_splits(g.node_count, 0.6, 0.2, key);
}

namespace detail {

inline std::vector<int> lp_negative_ranks(const MultimodalGraph& g, const MatD& hhat,
		const std::vector<int>& edge_rows, int n_negatives, std::uint64_t part_key) {
	std::vector<std::unordered_set<int>> adj(static_cast<std::size_t>(g.node_count));
	for (const auto& e : g.edges) {
		adj[static_cast<std::size_t>(e.first)].insert(e.second);
		adj[static_cast<std::size_t>(e.second)].insert(e.first);
	}
	std::vector<int> ranks;
	ranks.reserve(edge_rows.size());
	for (std::size_t qi = 0; qi < edge_rows.size(); ++qi) {
		const auto& e = g.edges[static_cast<std::size_t>(edge_rows[qi])];
		const int u = e.first, v = e.second;
		std::vector<int> pool;
		pool.reserve(static_cast<std::size_t>(g.node_count));
		for (int w = 0; w < g.node_count; ++w)
			if (w != u && !adj[static_cast<std::size_t>(u)].count(w)) pool.push_back(w);
		const int want = std::min<int>(n_negatives, static_cast<int>(pool.size()));
		auto picked = rng::sample_without_replacement(static_cast<int>(pool.size()), want,
				rng::derive(part_key, "query", qi));
		std::vector<double> scores;
		scores.reserve(picked.size());
		for (int idx : picked) scores.push_back(hhat.row(u).dot(hhat.row(pool[static_cast<std::size_t>(idx)])));
		ranks.push_back(rank_of(hhat.row(u).dot(hhat.row(v)), scores));
	}
	return ranks;
}

inline std::vector<int> retrieval_ranks(const MatD& query_lat, const MatD& target_lat,
		const std::vector<int>& part) {
	MatD q(static_cast<Eigen::Index>(part.size()), query_lat.cols());
	MatD k(static_cast<Eigen::Index>(part.size()), target_lat.cols());
	for (std::size_t i = 0; i < part.size(); ++i) {
		q.row(static_cast<Eigen::Index>(i)) = query_lat.row(part[i]);
		k.row(static_cast<Eigen::Index>(i)) = target_lat.row(part[i]);
	}
	for (Eigen::Index i = 0; i < q.rows(); ++i) {
		const double qn = q.row(i).norm(), kn = k.row(i).norm();
		if (qn > 0) q.row(i) /= qn;
		if (kn > 0) k.row(i) /= kn;
	}
	MatD sims = q * k.transpose();
	std::vector<int> ranks;
	ranks.reserve(part.size());
	for (Eigen::Index i = 0; i < sims.rows(); ++i) {
		int greater = 0;
		for (Eigen::Index j = 0; j < sims.cols(); ++j)
			if (sims(i, j) > sims(i, i)) ++greater;
		ranks.push_back(1 + greater);
	}
	return ranks;
}

} // namespace detail

/**
 * Task metrics on one split part from a frozen latent state. Ranking tasks
 * follow the sampled-negative protocol: each positive is ranked against
 * eval_negatives sampled non-neighbors (optimistic ties). Clustering runs
 * seeded k-means on all embeddings and scores the part's nodes.
 */
template <typename S>
MetricSet evaluate_state(const MultimodalGraph& g, const mod::LatentState<S>& state,
		Model<S>& model, const TaskSpec& spec, const TrainConfig& cfg,
		const std::vector<int>& part, std::uint64_t part_key) {
	MetricSet ms;
	if (part.empty()) throw Error("evaluate: empty split part");
	const MatD hhat = state.hhat.template cast<double>();
	switch (spec.kind) {
		case TaskKind::node_classification: {
			if (!model.has_head) throw Error("evaluate: classification model has no head");
			MatD logits = hhat * model.head_w.value.template cast<double>();
			logits.rowwise() += model.head_b.value.template cast<double>().row(0);
			const auto all_pred = argmax_rows(logits);
			std::vector<int> pred, truth;
			pred.reserve(part.size());
			truth.reserve(part.size());
			for (int v : part) {
				pred.push_back(all_pred[static_cast<std::size_t>(v)]);
				truth.push_back((*g.labels)[static_cast<std::size_t>(v)]);
			}
			ms.values["accuracy"] = accuracy(pred, truth);
			ms.values["macro_f1"] = macro_f1(pred, truth, spec.classes);
			ms.primary_name = "accuracy";
			break;
		}
		case TaskKind::link_prediction: {
			const auto ranks = detail::lp_negative_ranks(g, hhat, part, cfg.eval_negatives, part_key);
			ms.values["mrr"] = mean_reciprocal_rank(ranks);
			ms.values["hits_at_" + std::to_string(cfg.hits_k)] = hits_at_k(ranks, cfg.hits_k);
			ms.primary_name = "mrr";
			break;
		}
		case TaskKind::node_clustering: {
			const auto assign = kmeans(hhat, spec.classes, 10, 100, rng::derive(part_key, "kmeans"));
			std::vector<int> pred, truth;
			pred.reserve(part.size());
			truth.reserve(part.size());
			for (int v : part) {
				pred.push_back(assign[static_cast<std::size_t>(v)]);
				truth.push_back((*g.labels)[static_cast<std::size_t>(v)]);
			}
			ms.values["nmi"] = normalized_mutual_information(pred, truth);
			ms.values["ari"] = adjusted_rand_index(pred, truth);
			ms.primary_name = "nmi";
			break;
		}
		case TaskKind::modality_retrieval: {
			const MatD q = state.latents[static_cast<std::size_t>(spec.query_modality)].template cast<double>();
			const MatD k = state.latents[static_cast<std::size_t>(spec.target_modality)].template cast<double>();
			const auto ranks = detail::retrieval_ranks(q, k, part);
			ms.values["mrr"] = mean_reciprocal_rank(ranks);
			ms.values["hits_at_" + std::to_string(cfg.hits_k)] = hits_at_k(ranks, cfg.hits_k);
			ms.primary_name = "mrr";
			break;
		}
	}
	return ms;
}

/// The ablation mode's config overrides, applied before training starts.
inline TrainConfig ablation_config(TrainConfig cfg) {
	if (cfg.mode == AblationMode::one_shot_te) cfg.t_evo = 1;
	if (cfg.mode == AblationMode::only_me) cfg.lambda = 1.0;
	return cfg;
}

template <typename S>
struct TrainResult {
	Model<S> model;
	EvolutionTrace trace;
	MetricSet val_metrics, test_metrics;
	std::vector<MetricSet> epoch_val; // full validation metrics per epoch
	TaskSpec spec;
	Splits splits;
	TrainConfig effective; // after the ablation mode's overrides
};

namespace detail {

/// Full-batch cross-entropy head fit on frozen embeddings, best head by
/// validation accuracy.
template <typename S>
void finetune_head(Model<S>& model, const mod::LatentState<S>& state, const MultimodalGraph& g,
		const TaskSpec& spec, const TrainConfig& cfg, const Splits& splits) {
	if (!model.has_head || cfg.finetune_epochs == 0) return;
	ad::AdamConfig<S> ocfg;
	ocfg.lr = S(cfg.learning_rate);
	ocfg.weight_decay = S(cfg.weight_decay);
	ad::Adam<S> opt(model.head_params(), ocfg);
	TaskBatch full;
	full.nodes = splits.train;
	full.labels.reserve(full.nodes.size());
	for (int v : full.nodes) full.labels.push_back((*g.labels)[static_cast<std::size_t>(v)]);
	double best = -1.0;
	Mat<S> best_w = model.head_w.value, best_b = model.head_b.value;
	for (int e = 0; e < cfg.finetune_epochs; ++e) {
		ad::Tape<S> t;
		ad::Binder<S> b(t);
		ad::Var hhat = t.constant(state.hhat);
		ad::Var loss = classification_loss(t, hhat, full, b.bind(model.head_w), b.bind(model.head_b), spec.classes);
		t.backward(loss);
		b.pull_grads();
		opt.step();
		MetricSet val = evaluate_state(g, state, model, spec, cfg, splits.val, rng::derive(cfg.seed, "eval.val"));
		if (val.primary() > best) {
			best = val.primary();
			best_w = model.head_w.value;
			best_b = model.head_b.value;
		}
	}
	model.head_w.value = best_w;
	model.head_b.value = best_b;
}

} // namespace detail

/**
 * The co-evolution driver. Per epoch: sample anchors, then alternate
 * evolution rounds (affinity from the previous round's detached latents,
 * projection, smoothing, loss, one optimizer step) until the relative
 * topology change drops below delta or t_evo rounds ran. Validation follows
 * each epoch; the best-validation parameters are restored at the end
 * (task-agnostic runs keep the final ones and fit the head afterwards).
 */
template <typename S>
TrainResult<S> train(const MultimodalGraph& g, const TrainConfig& user_cfg) {
	user_cfg.validate();
	g.validate();

	TrainConfig cfg = ablation_config(user_cfg);
	const double eta_used = cfg.mode == AblationMode::task_agnostic ? 0.0 : cfg.eta;

	TaskSpec spec = make_task_spec(g, cfg);
	Splits splits = ensure_splits(g, cfg);
	if (splits.train.empty() || splits.val.empty() || splits.test.empty())
		throw Error("train: every split part must be non-empty");

	std::vector<std::pair<int, int>> base_edges;
	if (spec.kind == TaskKind::link_prediction) {
		base_edges.reserve(splits.train.size());
		for (int row : splits.train) base_edges.push_back(g.edges[static_cast<std::size_t>(row)]);
	} else {
		base_edges = g.edges;
	}
	GraphCache<S> gc = make_graph_cache<S>(g, base_edges);

	const int n = g.node_count;
	int n_anchors = cfg.anchors > 0 ? cfg.anchors
			: static_cast<int>(std::ceil(cfg.anchor_fraction * n));
	n_anchors = std::clamp(n_anchors, 1, n);
	if (cfg.anchors > n) throw Error("config: more anchors than nodes");

	TrainResult<S> res;
	res.model = Model<S>::init(g, cfg, spec.classes);
	res.spec = spec;
	res.splits = splits;
	res.effective = cfg;
	Model<S>& model = res.model;

	ad::AdamConfig<S> ocfg;
	ocfg.lr = S(cfg.learning_rate);
	ocfg.weight_decay = S(cfg.weight_decay);
	ad::Adam<S> opt(model.all_params(), ocfg);

	const bool track_best = cfg.mode != AblationMode::task_agnostic;
	std::vector<Mat<S>> best_values = model.snapshot_values();
	res.trace.val_metric_name.clear();

	const topo::AnchorSet eval_anchors = topo::sample_anchors(n, n_anchors, rng::derive(cfg.seed, "anchors.eval"));
	const std::vector<int> all_nodes = [n] {
		std::vector<int> v(static_cast<std::size_t>(n));
		for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
		return v;
	}();
	const std::vector<int>& train_nodes = splits.kind == SplitKind::node ? splits.train : all_nodes;

	for (int e = 0; e < cfg.epochs; ++e) {
		const auto eu = static_cast<std::uint64_t>(e);
		const auto anchor_key = rng::derive(cfg.seed, "anchors.train", eu);
		const topo::AnchorSet anchors = topo::sample_anchors(n, n_anchors, anchor_key);
		EpochTrace et;
		et.anchor_seed = anchor_key;

		std::vector<std::pair<int, int>> epoch_negatives;
		if (spec.kind == TaskKind::link_prediction && eta_used > 0.0) {
			epoch_negatives = sample_negative_edges(g, splits.train.size(), rng::derive(cfg.seed, "negatives", eu));
		}

		mod::LatentState<S> state;
		std::optional<topo::AffinityState<S>> prev_aff;
		for (int k = 1; k <= cfg.t_evo; ++k) {
			const auto ku = static_cast<std::uint64_t>(k);
			bool stop = false;
			try {
				ad::Tape<S> t;
				ad::Binder<S> b(t);
				RoundVars<S> rv = build_round(t, &b, model, gc, cfg, anchors, k,
						state.round > 0 ? &state : nullptr);

				mod::AlignmentConfig<S> acfg;
				acfg.tau = S(cfg.tau);
				acfg.batch = detail::pick_subset(all_nodes, cfg.batch_size, rng::derive(cfg.seed, "align", eu, ku));
				ad::Var loss = mod::alignment_loss(t, rv.latents, t.value(rv.hhat), acfg);
				const double lmod = static_cast<double>(t.value(loss)(0, 0));
				double ltask = 0.0;
				if (eta_used > 0.0 && spec.has_loss()) {
					TaskBatch batch = make_task_batch(spec, g, train_nodes, splits.train, epoch_negatives,
							cfg.batch_size, rng::derive(cfg.seed, "batch", eu, ku));
					ad::Var head_w{}, head_b{};
					if (model.has_head) {
						head_w = b.bind(model.head_w);
						head_b = b.bind(model.head_b);
					}
					ad::Var task = task_loss(t, spec, batch, rv.hhat, rv.latents, head_w, head_b);
					if (task.valid()) {
						ltask = static_cast<double>(t.value(task)(0, 0));
						loss = t.add(loss, t.scale(task, S(eta_used)));
					}
				}
				const double ltotal = static_cast<double>(t.value(loss)(0, 0));
				if (!std::isfinite(ltotal)) throw Error("non-finite loss");
				et.loss_mod.push_back(lmod);
				et.loss_task.push_back(ltask);
				et.loss_total.push_back(ltotal);

				t.backward(loss);
				b.pull_grads();
				opt.step();

				state = snapshot_state(t, rv, k);
				et.rounds = k;
				if (cfg.lambda < 1.0) {
					auto cur = topo::make_affinity_state(t.value(rv.affinity), anchors.indices);
					if (k >= 2) {
						const double d = topo::topology_delta(cur, *prev_aff);
						et.deltas.push_back(d);
						prev_aff = std::move(cur);
						if (d <= cfg.delta) stop = true;
					} else {
						prev_aff = std::move(cur);
					}
				} else if (k >= 2) {
					et.deltas.push_back(0.0);
					stop = true; // frozen topology cannot change further
				}
			} catch (const Error& err) {
				throw Error("train: epoch " + std::to_string(e) + " round " + std::to_string(k) +
						": " + err.what());
			}
			if (stop) break;
		}

		mod::LatentState<S> val_state = infer(model, gc, cfg, eval_anchors);
		MetricSet val = evaluate_state(g, val_state, model, spec, cfg, splits.val, rng::derive(cfg.seed, "eval.val"));
		et.val_metric = val.primary();
		res.trace.val_metric_name = val.primary_name;
		res.trace.epochs.push_back(et);
		res.epoch_val.push_back(std::move(val));
		if (track_best && (res.trace.best_epoch < 0 || et.val_metric > res.trace.best_val)) {
			res.trace.best_val = et.val_metric;
			res.trace.best_epoch = e;
			best_values = model.snapshot_values();
		}
	}

	if (track_best && res.trace.best_epoch >= 0) {
		model.restore_values(best_values);
	} else if (!track_best) {
		res.trace.best_epoch = cfg.epochs - 1;
		res.trace.best_val = res.trace.epochs.empty() ? 0.0 : res.trace.epochs.back().val_metric;
	}

	mod::LatentState<S> final_state = infer(model, gc, cfg, eval_anchors);
	if (cfg.mode == AblationMode::task_agnostic && spec.needs_head()) {
		detail::finetune_head(model, final_state, g, spec, cfg, splits);
	}
	res.val_metrics = evaluate_state(g, final_state, model, spec, cfg, splits.val, rng::derive(cfg.seed, "eval.val"));
	res.test_metrics = evaluate_state(g, final_state, model, spec, cfg, splits.test, rng::derive(cfg.seed, "eval.test"));
	return res;
}

} // namespace coevo
