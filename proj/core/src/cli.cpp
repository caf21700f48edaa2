#include "coevo/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coevo/report.hpp"
#include "coevo/theorems.hpp"
#include "coevo/train.hpp"

namespace fs = std::filesystem;

namespace coevo::cli {

namespace {

#if defined(__GNUC__)
__attribute__((format(printf, 1, 2)))
#endif
std::string format(const char* fmt, ...) {
	char buf[1024];
	va_list args;
	va_start(args, fmt);
	std::vsnprintf(buf, sizeof buf, fmt, args);
	va_end(args);
	return buf;
}

std::vector<int> parse_dims(const std::string& text, int count) {
	std::vector<int> dims;
	std::string cur;
	std::stringstream ss(text);
	while (std::getline(ss, cur, ',')) {
		std::size_t used = 0;
		int d = 0;
		try {
			d = std::stoi(cur, &used);
		} catch (const std::exception&) {
			throw Error("gen: bad --dims entry '" + cur + "'");
		}
		if (used != cur.size() || d <= 0) throw Error("gen: bad --dims entry '" + cur + "'");
		dims.push_back(d);
	}
	if (dims.empty()) throw Error("gen: --dims is empty");
	if (dims.size() == 1) dims.resize(static_cast<std::size_t>(count), dims[0]);
	if (static_cast<int>(dims.size()) != count)
		throw Error("gen: --dims lists " + std::to_string(dims.size()) + " sizes for "
				+ std::to_string(count) + " modalities");
	return dims;
}

std::string protocol_note_for(const TaskSpec& spec, const TrainConfig& cfg) {
	switch (spec.kind) {
	case TaskKind::node_classification:
		return "accuracy and macro-F1 on the held-out node split; macro-F1 averages "
		       "per-class F1 with zero-division classes scored 0";
	case TaskKind::link_prediction:
		return "each held-out edge (u, v) is scored against " + std::to_string(cfg.eval_negatives)
				+ " sampled non-neighbors of u; MRR and hits@" + std::to_string(cfg.hits_k)
				+ " over those candidate lists, ties resolved optimistically";
	case TaskKind::node_clustering:
		return "embeddings are clustered by seeded k-means (10 restarts) into the known "
		       "class count; NMI uses natural logarithms, ARI uses pair counting";
	case TaskKind::modality_retrieval:
		return "each query embedding is ranked against every target embedding in the "
		       "split by cosine; MRR and hits@" + std::to_string(cfg.hits_k);
	}
	return "";
}

void print_metrics(const char* label, const MetricSet& ms) {
	std::cout << label;
	for (const auto& [name, value] : ms.values)
		std::cout << format(" %s=%.6f", name.c_str(), value);
	std::cout << "\n";
}

template <typename S>
RunReport run_training(const MultimodalGraph& g, const TrainConfig& cfg,
		const std::string& dataset, const std::string& out_dir) {
	const auto t0 = std::chrono::steady_clock::now();
	TrainResult<S> res = train<S>(g, cfg);
	const auto t1 = std::chrono::steady_clock::now();

	RunReport rep;
	rep.config = res.effective;
	rep.dataset = dataset;
	rep.trace = res.trace;
	rep.epoch_val = res.epoch_val;
	rep.val_metrics = res.val_metrics;
	rep.test_metrics = res.test_metrics;
	rep.protocol_note = protocol_note_for(res.spec, res.effective);
	rep.train_seconds = std::chrono::duration<double>(t1 - t0).count();

	Checkpoint ck;
	ck.config = res.effective;
	ck.dataset = dataset;
	ck.best_epoch = res.trace.best_epoch;
	ck.best_val = res.trace.best_val;
	ck.val_metric_name = res.trace.val_metric_name;
	ck.params = res.model.named_values_f32();
	save_checkpoint((fs::path(out_dir) / "checkpoint").string(), ck);
	return rep;
}

template <typename S>
MetricSet run_eval(const Checkpoint& ck, const MultimodalGraph& g, const std::string& split) {
	const TrainConfig& cfg = ck.config;
	TaskSpec spec = make_task_spec(g, cfg);
	Splits splits = ensure_splits(g, cfg);

	std::vector<std::pair<int, int>> base_edges;
	if (spec.kind == TaskKind::link_prediction) {
		base_edges.reserve(splits.train.size());
		for (int row : splits.train) base_edges.push_back(g.edges[static_cast<std::size_t>(row)]);
	} else {
		base_edges = g.edges;
	}
	GraphCache<S> gc = make_graph_cache<S>(g, base_edges);

	int n_anchors = cfg.anchors > 0 ? cfg.anchors
			: static_cast<int>(std::ceil(cfg.anchor_fraction * g.node_count));
	n_anchors = std::clamp(n_anchors, 1, g.node_count);
	const topo::AnchorSet anchors =
			topo::sample_anchors(g.node_count, n_anchors, rng::derive(cfg.seed, "anchors.eval"));

	Model<S> model = Model<S>::init(g, cfg, spec.classes);
	model.load_values(ck.params);
	mod::LatentState<S> state = infer(model, gc, cfg, anchors);

	const std::vector<int>& part =
			split == "train" ? splits.train : split == "val" ? splits.val : splits.test;
	return evaluate_state(g, state, model, spec, cfg, part, rng::derive(cfg.seed, "eval." + split));
}

void print_theorems(const std::vector<verify::TheoremReport>& reps) {
	for (const auto& r : reps) {
		std::cout << format("%-22s %s  measured=%.6g bound=%.6g margin=%.6g  (%s)\n",
				r.check.c_str(), r.pass ? "PASS" : "FAIL", r.measured, r.bound, r.margin,
				r.instance.c_str());
	}
}

} // namespace

int run(int argc, const char* const* argv) {
	CLI::App app{"anchored topology and multimodal embedding co-evolution"};
	app.require_subcommand(1);

	// gen
	auto* gen_cmd = app.add_subcommand("gen", "generate a block-model multimodal dataset");
	std::string gen_out;
	SbmMagSpec sbm;
	int gen_modalities = 2;
	std::string gen_dims = "64";
	double gen_separation = 1.0, gen_noise = 1.0;
	double gen_train_frac = 0.6, gen_val_frac = 0.2;
	gen_cmd->add_option("--out", gen_out, "output dataset directory")->required();
	gen_cmd->add_option("--blocks", sbm.blocks, "community count");
	gen_cmd->add_option("--nodes-per-block", sbm.nodes_per_block, "nodes per community");
	gen_cmd->add_option("--p-in", sbm.p_in, "within-block edge probability");
	gen_cmd->add_option("--p-out", sbm.p_out, "cross-block edge probability");
	gen_cmd->add_option("--modalities", gen_modalities, "modality count");
	gen_cmd->add_option("--dims", gen_dims, "per-modality feature sizes, comma separated");
	gen_cmd->add_option("--separation", gen_separation, "block center scale");
	gen_cmd->add_option("--noise", gen_noise, "feature noise scale");
	gen_cmd->add_option("--flip-rate", sbm.flip_rate, "chance a node draws features from another block");
	gen_cmd->add_option("--seed", sbm.seed, "generator seed");
	gen_cmd->add_option("--train-frac", gen_train_frac, "train fraction of the node split");
	gen_cmd->add_option("--val-frac", gen_val_frac, "validation fraction of the node split");

	// knn
	auto* knn_cmd = app.add_subcommand("knn", "derive edges from feature similarity");
	std::string knn_data, knn_out;
	int knn_k = 10;
	knn_cmd->add_option("--data", knn_data, "input dataset directory")->required();
	knn_cmd->add_option("--out", knn_out, "output dataset directory")->required();
	knn_cmd->add_option("--k", knn_k, "neighbors per node");

	// noise
	auto* noise_cmd = app.add_subcommand("noise", "perturb the edge set");
	std::string noise_data, noise_out, noise_mode = "add";
	double noise_ratio = 0.0;
	std::uint64_t noise_seed = 0;
	noise_cmd->add_option("--data", noise_data, "input dataset directory")->required();
	noise_cmd->add_option("--out", noise_out, "output dataset directory")->required();
	noise_cmd->add_option("--mode", noise_mode, "add or remove")
			->check(CLI::IsMember({"add", "remove"}));
	noise_cmd->add_option("--ratio", noise_ratio, "fraction of |E| to insert or delete")->required();
	noise_cmd->add_option("--seed", noise_seed, "perturbation seed");

	// train
	auto* train_cmd = app.add_subcommand("train", "run the co-evolution driver");
	std::string train_data, train_out, train_config;
	bool train_verify = false;
	train_cmd->add_option("--data", train_data, "dataset directory")->required();
	train_cmd->add_option("--out", train_out, "output directory")->required();
	train_cmd->add_option("--config", train_config, "key = value config file");
	train_cmd->add_flag("--verify", train_verify, "embed the theorem battery in the run report");
	const auto& keys = config_keys();
	std::vector<std::string> override_values(keys.size());
	std::vector<CLI::Option*> override_opts(keys.size());
	for (std::size_t i = 0; i < keys.size(); ++i) {
		override_opts[i] = train_cmd->add_option("--" + keys[i], override_values[i],
				"override config key " + keys[i]);
	}

	// eval
	auto* eval_cmd = app.add_subcommand("eval", "score a saved checkpoint");
	std::string eval_ck, eval_data, eval_split = "test";
	eval_cmd->add_option("--checkpoint", eval_ck, "checkpoint directory")->required();
	eval_cmd->add_option("--data", eval_data, "dataset directory (defaults to the one recorded)");
	eval_cmd->add_option("--split", eval_split, "train, val, or test")
			->check(CLI::IsMember({"train", "val", "test"}));

	// verify
	auto* verify_cmd = app.add_subcommand("verify", "run the theorem check battery");
	std::uint64_t verify_seed = 0;
	std::string verify_json;
	verify_cmd->add_option("--seed", verify_seed, "battery seed");
	verify_cmd->add_option("--json", verify_json, "also write the reports as JSON");

	// report
	auto* report_cmd = app.add_subcommand("report", "turn run reports into CSV plot tables");
	std::string report_out;
	std::vector<std::string> report_runs;
	report_cmd->add_option("--out", report_out, "output directory for the CSV files")->required();
	report_cmd->add_option("runs", report_runs, "run.json files")->required();

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		const int code = app.exit(e);
		return code == 0 ? 0 : 2;
	}

	try {
		if (*gen_cmd) {
			const std::vector<int> dims = parse_dims(gen_dims, gen_modalities);
			for (int m = 0; m < gen_modalities; ++m) {
				SbmModalitySpec ms;
				ms.name = "m" + std::to_string(m);
				ms.dim = dims[static_cast<std::size_t>(m)];
				ms.center_separation = gen_separation;
				ms.noise_scale = gen_noise;
				sbm.modalities.push_back(std::move(ms));
			}
			MultimodalGraph g = generate_sbm_mag(sbm);
			g.splits = make_node_splits(g.node_count, gen_train_frac, gen_val_frac, sbm.seed);
			save_dataset(gen_out, g);
			std::cout << format("gen: %d nodes, %d edges, %d modalities, %d classes -> %s\n",
					g.node_count, static_cast<int>(g.edge_count()), g.modality_count(),
					g.n_classes, gen_out.c_str());
		} else if (*knn_cmd) {
			LoadOptions opt;
			opt.allow_missing_edges = true;
			MultimodalGraph g = load_dataset(knn_data, opt);
			g.edges = build_knn_edges(g.features, knn_k);
			g.validate();
			save_dataset(knn_out, g);
			std::cout << format("knn: %d edges at k=%d -> %s\n", static_cast<int>(g.edge_count()), knn_k,
					knn_out.c_str());
		} else if (*noise_cmd) {
			MultimodalGraph g = load_dataset(noise_data);
			NoiseSpec spec;
			spec.mode = noise_mode == "add" ? NoiseSpec::Mode::add : NoiseSpec::Mode::remove;
			spec.ratio = noise_ratio;
			spec.seed = noise_seed;
			MultimodalGraph out = inject_noise(g, spec);
			save_dataset(noise_out, out);
			std::cout << format("noise: %d -> %d edges -> %s\n", static_cast<int>(g.edge_count()),
					static_cast<int>(out.edge_count()), noise_out.c_str());
		} else if (*train_cmd) {
			TrainConfig cfg;
			if (!train_config.empty()) cfg = parse_config_file(train_config);
			for (std::size_t i = 0; i < keys.size(); ++i)
				if (override_opts[i]->count() > 0) config_set(cfg, keys[i], override_values[i]);
			MultimodalGraph g = load_dataset(train_data);
			fs::create_directories(train_out);

			RunReport rep = cfg.precision == Precision::f64
					? run_training<double>(g, cfg, train_data, train_out)
					: run_training<float>(g, cfg, train_data, train_out);
			bool ok = true;
			if (train_verify) {
				rep.theorems = verify::default_battery(cfg.seed);
				for (const auto& r : rep.theorems) ok = ok && r.pass;
			}
			write_text_file_atomic((fs::path(train_out) / "run.json").string(), to_json(rep));
			write_text_file_atomic((fs::path(train_out) / "trace.json").string(), to_json(rep.trace));

			std::cout << format("best epoch %d, val %s=%.6f\n", rep.trace.best_epoch,
					rep.trace.val_metric_name.c_str(), rep.trace.best_val);
			print_metrics("val:", rep.val_metrics);
			print_metrics("test:", rep.test_metrics);
			if (train_verify) print_theorems(rep.theorems);
			std::cout << format("wrote %s\n", (fs::path(train_out) / "run.json").string().c_str());
			if (!ok) return 1;
		} else if (*eval_cmd) {
			Checkpoint ck = load_checkpoint(eval_ck);
			const std::string data_dir = eval_data.empty() ? ck.dataset : eval_data;
			MultimodalGraph g = load_dataset(data_dir);
			MetricSet ms = ck.config.precision == Precision::f64
					? run_eval<double>(ck, g, eval_split)
					: run_eval<float>(ck, g, eval_split);
			print_metrics((eval_split + ":").c_str(), ms);
		} else if (*verify_cmd) {
			std::vector<verify::TheoremReport> reps = verify::default_battery(verify_seed);
			print_theorems(reps);
			if (!verify_json.empty()) write_text_file_atomic(verify_json, to_json(reps));
			for (const auto& r : reps)
				if (!r.pass) return 1;
		} else if (*report_cmd) {
			std::vector<RunReport> runs;
			runs.reserve(report_runs.size());
			for (const auto& path : report_runs) runs.push_back(run_report_from_json(read_text_file(path)));
			write_report_csvs(runs, report_out);
			for (const char* name : {"summary.csv", "epochs.csv", "deltas.csv"})
				std::cout << format("wrote %s\n", (fs::path(report_out) / name).string().c_str());
		}
	} catch (const Error& e) {
		std::cerr << format("error: %s\n", e.what());
		return 1;
	}
	return 0;
}

int run(const std::vector<std::string>& args) {
	std::vector<const char*> argv;
	argv.reserve(args.size() + 1);
	argv.push_back("coevo");
	for (const auto& a : args) argv.push_back(a.c_str());
	return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace coevo::cli
