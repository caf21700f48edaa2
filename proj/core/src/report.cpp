#include "coevo/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace coevo {

namespace {

std::string trim(const std::string& s) {
	const auto a = s.find_first_not_of(" \t\r\n");
	if (a == std::string::npos) return "";
	const auto b = s.find_last_not_of(" \t\r\n");
	return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
	std::size_t used = 0;
	long long out = 0;
	try {
		out = std::stoll(v, &used);
	} catch (const std::exception&) {
		throw Error("config: " + key + ": '" + v + "' is not an integer");
	}
	if (used != v.size()) throw Error("config: " + key + ": '" + v + "' is not an integer");
	return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
	std::size_t used = 0;
	std::uint64_t out = 0;
	try {
		out = std::stoull(v, &used);
	} catch (const std::exception&) {
		throw Error("config: " + key + ": '" + v + "' is not an unsigned integer");
	}
	if (used != v.size() || (!v.empty() && v[0] == '-'))
		throw Error("config: " + key + ": '" + v + "' is not an unsigned integer");
	return out;
}

double parse_real(const std::string& key, const std::string& v) {
	std::size_t used = 0;
	double out = 0;
	try {
		out = std::stod(v, &used);
	} catch (const std::exception&) {
		throw Error("config: " + key + ": '" + v + "' is not a number");
	}
	if (used != v.size()) throw Error("config: " + key + ": '" + v + "' is not a number");
	return out;
}

bool parse_flag(const std::string& key, const std::string& v) {
	if (v == "true" || v == "1") return true;
	if (v == "false" || v == "0") return false;
	throw Error("config: " + key + ": '" + v + "' is not a boolean");
}

std::string real_str(double v) {
	char buf[64];
	std::snprintf(buf, sizeof buf, "%.17g", v);
	return buf;
}

std::string csv_num(double v) {
	char buf[64];
	std::snprintf(buf, sizeof buf, "%.10g", v);
	return buf;
}

std::string csv_escape(const std::string& s) {
	if (s.find_first_of(",\"\n") == std::string::npos) return s;
	std::string out = "\"";
	for (char c : s) {
		if (c == '"') out += '"';
		out += c;
	}
	out += '"';
	return out;
}

json metric_set_to_json(const MetricSet& ms) {
	json j;
	j["primary"] = ms.primary_name;
	j["values"] = json::object();
	for (const auto& [name, value] : ms.values) j["values"][name] = value;
	return j;
}

MetricSet metric_set_from_json(const json& j) {
	MetricSet ms;
	ms.primary_name = j.at("primary").get<std::string>();
	for (const auto& [name, value] : j.at("values").items()) ms.values[name] = value.get<double>();
	return ms;
}

json trace_to_json(const EvolutionTrace& trace) {
	json j;
	j["val_metric_name"] = trace.val_metric_name;
	j["best_epoch"] = trace.best_epoch;
	j["best_val"] = trace.best_val;
	j["epochs"] = json::array();
	for (const auto& e : trace.epochs) {
		json je;
		je["anchor_seed"] = e.anchor_seed;
		je["rounds"] = e.rounds;
		je["deltas"] = e.deltas;
		je["loss_mod"] = e.loss_mod;
		je["loss_task"] = e.loss_task;
		je["loss_total"] = e.loss_total;
		je["val_metric"] = e.val_metric;
		j["epochs"].push_back(std::move(je));
	}
	return j;
}

EvolutionTrace trace_from_json(const json& j) {
	EvolutionTrace trace;
	trace.val_metric_name = j.at("val_metric_name").get<std::string>();
	trace.best_epoch = j.at("best_epoch").get<int>();
	trace.best_val = j.at("best_val").get<double>();
	for (const auto& je : j.at("epochs")) {
		EpochTrace e;
		e.anchor_seed = je.at("anchor_seed").get<std::uint64_t>();
		e.rounds = je.at("rounds").get<int>();
		e.deltas = je.at("deltas").get<std::vector<double>>();
		e.loss_mod = je.at("loss_mod").get<std::vector<double>>();
		e.loss_task = je.at("loss_task").get<std::vector<double>>();
		e.loss_total = je.at("loss_total").get<std::vector<double>>();
		e.val_metric = je.at("val_metric").get<double>();
		trace.epochs.push_back(std::move(e));
	}
	return trace;
}

json config_to_json_obj(const TrainConfig& c) {
	json j;
	j["task"] = task_name(c.task);
	j["mode"] = mode_name(c.mode);
	j["precision"] = precision_name(c.precision);
	j["epochs"] = c.epochs;
	j["latent_dim"] = c.latent_dim;
	j["lambda"] = c.lambda;
	j["epsilon"] = c.epsilon;
	j["perspectives"] = c.perspectives;
	j["anchors"] = c.anchors;
	j["anchor_fraction"] = c.anchor_fraction;
	j["alpha"] = c.alpha;
	j["t_smooth"] = c.t_smooth;
	j["t_evo"] = c.t_evo;
	j["delta"] = c.delta;
	j["eta"] = c.eta;
	j["tau"] = c.tau;
	j["batch_size"] = c.batch_size;
	j["learning_rate"] = c.learning_rate;
	j["weight_decay"] = c.weight_decay;
	j["seed"] = c.seed;
	j["finetune_epochs"] = c.finetune_epochs;
	j["symmetrize"] = c.symmetrize;
	j["eval_negatives"] = c.eval_negatives;
	j["hits_k"] = c.hits_k;
	j["retrieval_query"] = c.retrieval_query;
	j["retrieval_target"] = c.retrieval_target;
	j["tag"] = c.tag;
	return j;
}

TrainConfig config_from_json_obj(const json& j) {
	TrainConfig c;
	for (const auto& [key, value] : j.items()) {
		if (key == "task") c.task = parse_task(value.get<std::string>());
		else if (key == "mode") c.mode = parse_mode(value.get<std::string>());
		else if (key == "precision") c.precision = parse_precision(value.get<std::string>());
		else if (key == "epochs") c.epochs = value.get<int>();
		else if (key == "latent_dim") c.latent_dim = value.get<int>();
		else if (key == "lambda") c.lambda = value.get<double>();
		else if (key == "epsilon") c.epsilon = value.get<double>();
		else if (key == "perspectives") c.perspectives = value.get<int>();
		else if (key == "anchors") c.anchors = value.get<int>();
		else if (key == "anchor_fraction") c.anchor_fraction = value.get<double>();
		else if (key == "alpha") c.alpha = value.get<double>();
		else if (key == "t_smooth") c.t_smooth = value.get<int>();
		else if (key == "t_evo") c.t_evo = value.get<int>();
		else if (key == "delta") c.delta = value.get<double>();
		else if (key == "eta") c.eta = value.get<double>();
		else if (key == "tau") c.tau = value.get<double>();
		else if (key == "batch_size") c.batch_size = value.get<int>();
		else if (key == "learning_rate") c.learning_rate = value.get<double>();
		else if (key == "weight_decay") c.weight_decay = value.get<double>();
		else if (key == "seed") c.seed = value.get<std::uint64_t>();
		else if (key == "finetune_epochs") c.finetune_epochs = value.get<int>();
		else if (key == "symmetrize") c.symmetrize = value.get<bool>();
		else if (key == "eval_negatives") c.eval_negatives = value.get<int>();
		else if (key == "hits_k") c.hits_k = value.get<int>();
		else if (key == "retrieval_query") c.retrieval_query = value.get<std::string>();
		else if (key == "retrieval_target") c.retrieval_target = value.get<std::string>();
		else if (key == "tag") c.tag = value.get<std::string>();
		else throw Error("config: unknown key '" + key + "'");
	}
	return c;
}

json theorem_to_json(const verify::TheoremReport& r) {
	json j;
	j["check"] = r.check;
	j["instance"] = r.instance;
	j["measured"] = r.measured;
	j["bound"] = r.bound;
	j["margin"] = r.margin;
	j["pass"] = r.pass;
	j["details"] = json::object();
	for (const auto& [name, value] : r.details) j["details"][name] = value;
	return j;
}

verify::TheoremReport theorem_from_json(const json& j) {
	verify::TheoremReport r;
	r.check = j.at("check").get<std::string>();
	r.instance = j.at("instance").get<std::string>();
	r.measured = j.at("measured").get<double>();
	r.bound = j.at("bound").get<double>();
	r.margin = j.at("margin").get<double>();
	r.pass = j.at("pass").get<bool>();
	for (const auto& [name, value] : j.at("details").items()) r.details[name] = value.get<double>();
	return r;
}

json parse_json(const std::string& text, const std::string& what) {
	json j = json::parse(text, nullptr, false);
	if (j.is_discarded()) throw Error(what + ": malformed JSON");
	return j;
}

} // namespace

const std::vector<std::string>& config_keys() {
	static const std::vector<std::string> keys = {
		"task", "mode", "precision", "epochs", "latent_dim", "lambda", "epsilon",
		"perspectives", "anchors", "anchor_fraction", "alpha", "t_smooth", "t_evo",
		"delta", "eta", "tau", "batch_size", "learning_rate", "weight_decay", "seed",
		"finetune_epochs", "symmetrize", "eval_negatives", "hits_k",
		"retrieval_query", "retrieval_target", "tag",
	};
	return keys;
}

std::string config_get(const TrainConfig& c, const std::string& key) {
	if (key == "task") return task_name(c.task);
	if (key == "mode") return mode_name(c.mode);
	if (key == "precision") return precision_name(c.precision);
	if (key == "epochs") return std::to_string(c.epochs);
	if (key == "latent_dim") return std::to_string(c.latent_dim);
	if (key == "lambda") return real_str(c.lambda);
	if (key == "epsilon") return real_str(c.epsilon);
	if (key == "perspectives") return std::to_string(c.perspectives);
	if (key == "anchors") return std::to_string(c.anchors);
	if (key == "anchor_fraction") return real_str(c.anchor_fraction);
	if (key == "alpha") return real_str(c.alpha);
	if (key == "t_smooth") return std::to_string(c.t_smooth);
	if (key == "t_evo") return std::to_string(c.t_evo);
	if (key == "delta") return real_str(c.delta);
	if (key == "eta") return real_str(c.eta);
	if (key == "tau") return real_str(c.tau);
	if (key == "batch_size") return std::to_string(c.batch_size);
	if (key == "learning_rate") return real_str(c.learning_rate);
	if (key == "weight_decay") return real_str(c.weight_decay);
	if (key == "seed") return std::to_string(c.seed);
	if (key == "finetune_epochs") return std::to_string(c.finetune_epochs);
	if (key == "symmetrize") return c.symmetrize ? "true" : "false";
	if (key == "eval_negatives") return std::to_string(c.eval_negatives);
	if (key == "hits_k") return std::to_string(c.hits_k);
	if (key == "retrieval_query") return c.retrieval_query;
	if (key == "retrieval_target") return c.retrieval_target;
	if (key == "tag") return c.tag;
	throw Error("config: unknown key '" + key + "'");
}

void config_set(TrainConfig& c, const std::string& key, const std::string& value) {
	if (key == "task") c.task = parse_task(value);
	else if (key == "mode") c.mode = parse_mode(value);
	else if (key == "precision") c.precision = parse_precision(value);
	else if (key == "epochs") c.epochs = static_cast<int>(parse_int(key, value));
	else if (key == "latent_dim") c.latent_dim = static_cast<int>(parse_int(key, value));
	else if (key == "lambda") c.lambda = parse_real(key, value);
	else if (key == "epsilon") c.epsilon = parse_real(key, value);
	else if (key == "perspectives") c.perspectives = static_cast<int>(parse_int(key, value));
	else if (key == "anchors") c.anchors = static_cast<int>(parse_int(key, value));
	else if (key == "anchor_fraction") c.anchor_fraction = parse_real(key, value);
	else if (key == "alpha") c.alpha = parse_real(key, value);
	else if (key == "t_smooth") c.t_smooth = static_cast<int>(parse_int(key, value));
	else if (key == "t_evo") c.t_evo = static_cast<int>(parse_int(key, value));
	else if (key == "delta") c.delta = parse_real(key, value);
	else if (key == "eta") c.eta = parse_real(key, value);
	else if (key == "tau") c.tau = parse_real(key, value);
	else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(key, value));
	else if (key == "learning_rate") c.learning_rate = parse_real(key, value);
	else if (key == "weight_decay") c.weight_decay = parse_real(key, value);
	else if (key == "seed") c.seed = parse_uint(key, value);
	else if (key == "finetune_epochs") c.finetune_epochs = static_cast<int>(parse_int(key, value));
	else if (key == "symmetrize") c.symmetrize = parse_flag(key, value);
	else if (key == "eval_negatives") c.eval_negatives = static_cast<int>(parse_int(key, value));
	else if (key == "hits_k") c.hits_k = static_cast<int>(parse_int(key, value));
	else if (key == "retrieval_query") c.retrieval_query = value;
	else if (key == "retrieval_target") c.retrieval_target = value;
	else if (key == "tag") c.tag = value;
	else throw Error("config: unknown key '" + key + "'");
}

TrainConfig parse_config_file(const std::string& path) {
	std::ifstream in(path);
	if (!in) throw Error("config file " + path + ": cannot open");
	TrainConfig cfg;
	std::string line;
	int lineno = 0;
	while (std::getline(in, line)) {
		++lineno;
		const auto hash = line.find('#');
		if (hash != std::string::npos) line = line.substr(0, hash);
		line = trim(line);
		if (line.empty()) continue;
		const auto eq = line.find('=');
		if (eq == std::string::npos)
			throw Error("config file " + path + " line " + std::to_string(lineno) + ": expected key = value");
		const std::string key = trim(line.substr(0, eq));
		const std::string value = trim(line.substr(eq + 1));
		if (key.empty())
			throw Error("config file " + path + " line " + std::to_string(lineno) + ": empty key");
		try {
			config_set(cfg, key, value);
		} catch (const Error& e) {
			throw Error("config file " + path + " line " + std::to_string(lineno) + ": " + e.what());
		}
	}
	return cfg;
}

std::string to_json(const TrainConfig& cfg) { return config_to_json_obj(cfg).dump(2) + "\n"; }

std::string to_json(const MetricSet& ms) { return metric_set_to_json(ms).dump(2) + "\n"; }

std::string to_json(const EvolutionTrace& trace) { return trace_to_json(trace).dump(2) + "\n"; }

std::string to_json(const std::vector<verify::TheoremReport>& reps) {
	json j = json::array();
	for (const auto& r : reps) j.push_back(theorem_to_json(r));
	return j.dump(2) + "\n";
}

std::string to_json(const RunReport& report) {
	json j;
	j["format"] = "coevo-run-1";
	j["dataset"] = report.dataset;
	j["config"] = config_to_json_obj(report.config);
	j["trace"] = trace_to_json(report.trace);
	j["epoch_val"] = json::array();
	for (const auto& ms : report.epoch_val) j["epoch_val"].push_back(metric_set_to_json(ms));
	j["val"] = metric_set_to_json(report.val_metrics);
	j["test"] = metric_set_to_json(report.test_metrics);
	j["theorems"] = json::array();
	for (const auto& r : report.theorems) j["theorems"].push_back(theorem_to_json(r));
	j["protocol_note"] = report.protocol_note;
	j["train_seconds"] = report.train_seconds;
	return j.dump(2) + "\n";
}

RunReport run_report_from_json(const std::string& text) {
	const json j = parse_json(text, "run report");
	if (!j.contains("format") || j.at("format").get<std::string>() != "coevo-run-1")
		throw Error("run report: missing or unsupported format marker");
	RunReport r;
	r.dataset = j.at("dataset").get<std::string>();
	r.config = config_from_json_obj(j.at("config"));
	r.trace = trace_from_json(j.at("trace"));
	for (const auto& ms : j.at("epoch_val")) r.epoch_val.push_back(metric_set_from_json(ms));
	r.val_metrics = metric_set_from_json(j.at("val"));
	r.test_metrics = metric_set_from_json(j.at("test"));
	for (const auto& tr : j.at("theorems")) r.theorems.push_back(theorem_from_json(tr));
	r.protocol_note = j.at("protocol_note").get<std::string>();
	r.train_seconds = j.at("train_seconds").get<double>();
	return r;
}

std::string read_text_file(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw Error(path + ": cannot open");
	std::ostringstream out;
	out << in.rdbuf();
	return out.str();
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
	const std::string tmp = path + ".tmp";
	{
		std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
		if (!out) throw Error(tmp + ": cannot open for writing");
		out.write(content.data(), static_cast<std::streamsize>(content.size()));
		if (!out) throw Error(tmp + ": write failed");
	}
	fs::rename(tmp, path);
}

void save_checkpoint(const std::string& dir, const Checkpoint& ck) {
	fs::create_directories(dir);
	json manifest;
	manifest["format"] = "coevo-checkpoint-1";
	manifest["dataset"] = ck.dataset;
	manifest["best_epoch"] = ck.best_epoch;
	manifest["best_val"] = ck.best_val;
	manifest["val_metric_name"] = ck.val_metric_name;
	manifest["config"] = config_to_json_obj(ck.config);
	manifest["params"] = json::array();
	for (const auto& [name, m] : ck.params) {
		const std::string file = name + ".f32";
		const std::string final_path = (fs::path(dir) / file).string();
		write_f32_matrix(final_path + ".tmp", m);
		fs::rename(final_path + ".tmp", final_path);
		json jp;
		jp["name"] = name;
		jp["rows"] = static_cast<int>(m.rows());
		jp["cols"] = static_cast<int>(m.cols());
		jp["file"] = file;
		manifest["params"].push_back(std::move(jp));
	}
	// The manifest lands last: its presence marks a complete checkpoint.
	write_text_file_atomic((fs::path(dir) / "checkpoint.json").string(), manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& dir) {
	const std::string manifest_path = (fs::path(dir) / "checkpoint.json").string();
	const json manifest = parse_json(read_text_file(manifest_path), manifest_path);
	if (!manifest.contains("format") || manifest.at("format").get<std::string>() != "coevo-checkpoint-1")
		throw Error(manifest_path + ": missing or unsupported format marker");
	Checkpoint ck;
	ck.dataset = manifest.at("dataset").get<std::string>();
	ck.best_epoch = manifest.at("best_epoch").get<int>();
	ck.best_val = manifest.at("best_val").get<double>();
	ck.val_metric_name = manifest.at("val_metric_name").get<std::string>();
	ck.config = config_from_json_obj(manifest.at("config"));
	for (const auto& jp : manifest.at("params")) {
		const std::string name = jp.at("name").get<std::string>();
		const int rows = jp.at("rows").get<int>();
		const int cols = jp.at("cols").get<int>();
		const std::string file = jp.at("file").get<std::string>();
		ck.params.emplace_back(name, read_f32_matrix((fs::path(dir) / file).string(), rows, cols));
	}
	return ck;
}

void write_report_csvs(const std::vector<RunReport>& runs, const std::string& out_dir) {
	fs::create_directories(out_dir);

	std::set<std::string> val_names, test_names;
	for (const auto& r : runs) {
		for (const auto& [name, value] : r.val_metrics.values) {
			(void)value;
			val_names.insert(name);
		}
		for (const auto& [name, value] : r.test_metrics.values) {
			(void)value;
			test_names.insert(name);
		}
	}

	std::ostringstream summary;
	summary << "tag,dataset,task,mode,seed,lambda,epsilon,best_epoch,best_val";
	for (const auto& name : val_names) summary << ",val_" << name;
	for (const auto& name : test_names) summary << ",test_" << name;
	summary << "\n";
	for (const auto& r : runs) {
		summary << csv_escape(r.config.tag) << ',' << csv_escape(r.dataset) << ','
		        << task_name(r.config.task) << ',' << mode_name(r.config.mode) << ','
		        << r.config.seed << ',' << csv_num(r.config.lambda) << ',' << csv_num(r.config.epsilon)
		        << ',' << r.trace.best_epoch << ',' << csv_num(r.trace.best_val);
		for (const auto& name : val_names) {
			auto it = r.val_metrics.values.find(name);
			summary << ',' << (it == r.val_metrics.values.end() ? "" : csv_num(it->second));
		}
		for (const auto& name : test_names) {
			auto it = r.test_metrics.values.find(name);
			summary << ',' << (it == r.test_metrics.values.end() ? "" : csv_num(it->second));
		}
		summary << "\n";
	}
	write_text_file_atomic((fs::path(out_dir) / "summary.csv").string(), summary.str());

	std::ostringstream epochs;
	epochs << "tag,seed,mode,epoch,rounds,loss_mod,loss_task,loss_total,val_metric\n";
	for (const auto& r : runs) {
		for (std::size_t e = 0; e < r.trace.epochs.size(); ++e) {
			const auto& et = r.trace.epochs[e];
			epochs << csv_escape(r.config.tag) << ',' << r.config.seed << ',' << mode_name(r.config.mode)
			       << ',' << e << ',' << et.rounds;
			epochs << ',' << (et.loss_mod.empty() ? "" : csv_num(et.loss_mod.back()));
			epochs << ',' << (et.loss_task.empty() ? "" : csv_num(et.loss_task.back()));
			epochs << ',' << (et.loss_total.empty() ? "" : csv_num(et.loss_total.back()));
			epochs << ',' << csv_num(et.val_metric) << "\n";
		}
	}
	write_text_file_atomic((fs::path(out_dir) / "epochs.csv").string(), epochs.str());

	std::ostringstream deltas;
	deltas << "tag,seed,epoch,round,delta\n";
	for (const auto& r : runs) {
		for (std::size_t e = 0; e < r.trace.epochs.size(); ++e) {
			const auto& et = r.trace.epochs[e];
			for (std::size_t d = 0; d < et.deltas.size(); ++d) {
				deltas << csv_escape(r.config.tag) << ',' << r.config.seed << ',' << e << ','
				       << (d + 2) << ',' << csv_num(et.deltas[d]) << "\n";
			}
		}
	}
	write_text_file_atomic((fs::path(out_dir) / "deltas.csv").string(), deltas.str());
}

} // namespace coevo
