#include <doctest.h>

#include <string>

#include "coevo/report.hpp"
#include "coevo/train.hpp"
#include "util.hpp"

using namespace coevo;

namespace {

TrainConfig tiny_config() {
	TrainConfig cfg;
	cfg.task = TaskKind::node_classification;
	cfg.epochs = 3;
	cfg.latent_dim = 16;
	cfg.perspectives = 2;
	cfg.t_smooth = 4;
	cfg.t_evo = 3;
	cfg.batch_size = 32;
	cfg.anchors = 8;
	cfg.seed = 11;
	return cfg;
}

} // namespace

TEST_CASE("config validation") {
	TrainConfig cfg = tiny_config();
	CHECK_NOTHROW(cfg.validate());

	TrainConfig bad = cfg;
	bad.delta = 0.0;
	CHECK_THROWS_AS(bad.validate(), Error);

	bad = cfg;
	bad.learning_rate = -1e-3;
	CHECK_THROWS_AS(bad.validate(), Error);
	bad.learning_rate = 0.0; // frozen parameters are allowed
	CHECK_NOTHROW(bad.validate());

	bad = cfg;
	bad.t_evo = 0;
	CHECK_THROWS_AS(bad.validate(), Error);

	bad = cfg;
	bad.lambda = 1.2;
	CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("mode and precision names roundtrip") {
	for (AblationMode m : {AblationMode::full, AblationMode::one_shot_te, AblationMode::only_me,
			AblationMode::task_agnostic}) {
		CHECK(parse_mode(mode_name(m)) == m);
	}
	CHECK_THROWS_AS(parse_mode("bogus"), Error);
	CHECK(parse_precision("f32") == Precision::f32);
	CHECK(parse_precision("f64") == Precision::f64);
	CHECK_THROWS_AS(parse_precision("f16"), Error);
}

TEST_CASE("ablation overrides") {
	TrainConfig cfg = tiny_config();
	cfg.mode = AblationMode::one_shot_te;
	CHECK(ablation_config(cfg).t_evo == 1);
	cfg.mode = AblationMode::only_me;
	CHECK(ablation_config(cfg).lambda == 1.0);
	cfg.mode = AblationMode::full;
	CHECK(ablation_config(cfg).t_evo == tiny_config().t_evo);
}

TEST_CASE("make_task_spec enforces dataset requirements") {
	MultimodalGraph g = testutil::small_sbm(51, 15);
	TrainConfig cfg = tiny_config();
	const TaskSpec spec = make_task_spec(g, cfg);
	CHECK(spec.kind == TaskKind::node_classification);
	CHECK(spec.classes == 3);
	CHECK(spec.needs_head());

	MultimodalGraph unlabeled = g;
	unlabeled.labels.reset();
	unlabeled.n_classes = 0;
	CHECK_THROWS_AS(make_task_spec(unlabeled, cfg), Error);

	TrainConfig r = cfg;
	r.task = TaskKind::modality_retrieval;
	r.retrieval_query = "image";
	r.retrieval_target = "text";
	const TaskSpec rs = make_task_spec(g, r);
	CHECK(rs.query_modality == 1);
	CHECK(rs.target_modality == 0);
	r.retrieval_target = "image";
	CHECK_THROWS_AS(make_task_spec(g, r), Error);
	r.retrieval_target = "audio";
	CHECK_THROWS_AS(make_task_spec(g, r), Error);
}

TEST_CASE("ensure_splits prefers stored splits and synthesizes otherwise") {
	MultimodalGraph g = testutil::small_sbm(52, 15);
	TrainConfig cfg = tiny_config();
	const Splits stored = ensure_splits(g, cfg);
	CHECK(stored.train == g.splits->train);

	MultimodalGraph bare = g;
	bare.splits.reset();
	const Splits made = ensure_splits(bare, cfg);
	CHECK(made.kind == SplitKind::node);
	CHECK(made.train.size() + made.val.size() + made.test.size() ==
			static_cast<std::size_t>(g.node_count));

	TrainConfig lp = cfg;
	lp.task = TaskKind::link_prediction;
	const Splits edges = ensure_splits(g, lp); // stored node splits have the wrong kind
	CHECK(edges.kind == SplitKind::edge);
}

TEST_CASE("training is deterministic for identical inputs") {
	const MultimodalGraph g = testutil::small_sbm(53, 20);
	const TrainConfig cfg = tiny_config();
	const auto a = train<float>(g, cfg);
	const auto b = train<float>(g, cfg);
	CHECK(to_json(a.trace) == to_json(b.trace));
	CHECK(a.test_metrics.values == b.test_metrics.values);

	TrainConfig other = cfg;
	other.seed = 12;
	const auto c = train<float>(g, other);
	CHECK(to_json(a.trace) != to_json(c.trace));
}

TEST_CASE("inner loop respects t_evo and the stop rule") {
	const MultimodalGraph g = testutil::small_sbm(54, 20);
	TrainConfig cfg = tiny_config();
	const auto res = train<float>(g, cfg);
	for (const auto& e : res.trace.epochs) {
		CHECK(e.rounds >= 1);
		CHECK(e.rounds <= cfg.t_evo);
		CHECK(e.deltas.size() == static_cast<std::size_t>(std::max(0, e.rounds - 1)));
	}

	TrainConfig lazy = cfg;
	lazy.delta = 1e9; // any change counts as converged, stops after round 2
	const auto quick = train<float>(g, lazy);
	for (const auto& e : quick.trace.epochs) {
		CHECK(e.rounds == 2);
		CHECK(e.deltas.size() == 1);
	}
}

TEST_CASE("zero learning rate freezes parameters") {
	const MultimodalGraph g = testutil::small_sbm(55, 20);
	TrainConfig cfg = tiny_config();
	cfg.learning_rate = 0.0;
	cfg.epochs = 2;
	auto res = train<float>(g, cfg);

	Model<float> fresh = Model<float>::init(g, ablation_config(cfg), res.spec.classes);
	const auto trained = res.model.named_values_f32();
	const auto initial = fresh.named_values_f32();
	REQUIRE(trained.size() == initial.size());
	for (std::size_t i = 0; i < trained.size(); ++i) {
		CHECK(trained[i].first == initial[i].first);
		CHECK(testutil::same_matrix(trained[i].second, initial[i].second));
	}
	// Frozen parameters mean the validation metric cannot move between epochs.
	CHECK(res.trace.epochs[0].val_metric == res.trace.epochs[1].val_metric);
}

TEST_CASE("frozen topology records zero deltas under lambda = 1") {
	const MultimodalGraph g = testutil::small_sbm(56, 20);
	TrainConfig cfg = tiny_config();
	cfg.mode = AblationMode::only_me;
	const auto res = train<float>(g, cfg);
	CHECK(res.effective.lambda == 1.0);
	for (const auto& e : res.trace.epochs) {
		CHECK(e.rounds == 2);
		REQUIRE(e.deltas.size() == 1);
		CHECK(e.deltas[0] == 0.0);
	}
}

TEST_CASE("task_agnostic keeps final parameters and fits the head afterwards") {
	const MultimodalGraph g = testutil::small_sbm(57, 25);
	TrainConfig cfg = tiny_config();
	cfg.mode = AblationMode::task_agnostic;
	cfg.epochs = 4;
	cfg.finetune_epochs = 30;
	const auto res = train<float>(g, cfg);
	CHECK(res.trace.best_epoch == cfg.epochs - 1);
	CHECK(res.test_metrics.primary_name == "accuracy");
	CHECK(res.test_metrics.primary() > 1.0 / 3.0); // above chance on 3 blocks
	for (const auto& e : res.trace.epochs) CHECK(e.loss_task == std::vector<double>(e.loss_task.size(), 0.0));
}

TEST_CASE("clustering and retrieval evaluations produce their metric sets") {
	const MultimodalGraph g = testutil::small_sbm(58, 20);
	TrainConfig cfg = tiny_config();
	cfg.epochs = 2;

	cfg.task = TaskKind::node_clustering;
	const auto cl = train<float>(g, cfg);
	CHECK(cl.test_metrics.primary_name == "nmi");
	CHECK(cl.test_metrics.values.count("ari") == 1);

	cfg.task = TaskKind::modality_retrieval;
	const auto mr = train<float>(g, cfg);
	CHECK(mr.test_metrics.primary_name == "mrr");
	CHECK(mr.test_metrics.values.count("hits_at_3") == 1);
	CHECK(mr.test_metrics.primary() > 0.0);
}

TEST_CASE("link prediction evaluation stays inside [0, 1]") {
	const MultimodalGraph g = testutil::small_sbm(59, 25);
	TrainConfig cfg = tiny_config();
	cfg.task = TaskKind::link_prediction;
	cfg.epochs = 2;
	cfg.eval_negatives = 20;
	const auto res = train<float>(g, cfg);
	for (const auto& [name, v] : res.test_metrics.values) {
		INFO(name);
		CHECK(v >= 0.0);
		CHECK(v <= 1.0);
	}
	CHECK(res.splits.kind == SplitKind::edge);
}

TEST_CASE("anchor count larger than the graph is rejected") {
	const MultimodalGraph g = testutil::small_sbm(60, 10);
	TrainConfig cfg = tiny_config();
	cfg.anchors = 1000;
	CHECK_THROWS_AS(train<float>(g, cfg), Error);
}

TEST_CASE("exploding runs abort with epoch and round coordinates") {
	const MultimodalGraph g = testutil::small_sbm(61, 15);
	TrainConfig cfg = tiny_config();
	cfg.learning_rate = 1e30; // large enough to overflow float32 squares
	cfg.epochs = 2;
	try {
		train<float>(g, cfg);
		FAIL("expected a non-finite abort");
	} catch (const Error& e) {
		const std::string msg = e.what();
		CHECK(msg.find("train: epoch") != std::string::npos);
		CHECK(msg.find("round") != std::string::npos);
	}
}

TEST_CASE("checkpoint blobs restore the trained parameters exactly") {
	const MultimodalGraph g = testutil::small_sbm(62, 20);
	TrainConfig cfg = tiny_config();
	cfg.epochs = 2;
	auto res = train<float>(g, cfg);

	Model<float> fresh = Model<float>::init(g, res.effective, res.spec.classes);
	fresh.load_values(res.model.named_values_f32());
	const auto a = res.model.named_values_f32();
	const auto b = fresh.named_values_f32();
	REQUIRE(a.size() == b.size());
	for (std::size_t i = 0; i < a.size(); ++i) CHECK(testutil::same_matrix(a[i].second, b[i].second));
}
