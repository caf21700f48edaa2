#include "coevo/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "coevo/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace coevo {

namespace {

std::uint64_t pair_key(int a, int b, int n) {
	return static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(b);
}

void write_u32le(std::ostream& out, std::uint32_t v) {
	unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
	                      static_cast<unsigned char>((v >> 8) & 0xff),
	                      static_cast<unsigned char>((v >> 16) & 0xff),
	                      static_cast<unsigned char>((v >> 24) & 0xff)};
	out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(const unsigned char* p) {
	return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
	       (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

json read_json_file(const fs::path& path) {
	std::ifstream in(path);
	if (!in) throw Error(path.string() + ": cannot open");
	json j;
	try {
		in >> j;
	} catch (const std::exception& e) {
		throw Error(path.string() + ": invalid JSON: " + e.what());
	}
	return j;
}

MatF read_feature_file(const fs::path& path, int expect_rows, int expect_cols) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw Error(path.string() + ": cannot open");
	std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
	if (buf.size() < 8) throw Error(path.string() + ": truncated header");
	std::uint32_t rows = read_u32le(buf.data());
	std::uint32_t cols = read_u32le(buf.data() + 4);
	if (static_cast<int>(rows) != expect_rows || static_cast<int>(cols) != expect_cols) {
		throw Error(path.string() + ": header says " + std::to_string(rows) + "x" + std::to_string(cols) +
		            ", manifest expects " + std::to_string(expect_rows) + "x" + std::to_string(expect_cols));
	}
	std::size_t need = 8 + static_cast<std::size_t>(rows) * cols * 4;
	if (buf.size() != need) {
		throw Error(path.string() + ": payload size " + std::to_string(buf.size()) + " bytes, expected " +
		            std::to_string(need));
	}
	MatF m(rows, cols);
	const unsigned char* p = buf.data() + 8;
	for (std::uint32_t i = 0; i < rows; ++i) {
		for (std::uint32_t j = 0; j < cols; ++j) {
			float v;
			std::memcpy(&v, p, 4); // little-endian host assumed
			p += 4;
			if (!std::isfinite(v)) {
				throw Error(path.string() + ": non-finite value at row " + std::to_string(i) + ", col " +
				            std::to_string(j));
			}
			m(i, j) = v;
		}
	}
	return m;
}

void write_feature_file(const fs::path& path, const MatF& m) {
	std::ofstream out(path, std::ios::binary);
	if (!out) throw Error(path.string() + ": cannot write");
	write_u32le(out, static_cast<std::uint32_t>(m.rows()));
	write_u32le(out, static_cast<std::uint32_t>(m.cols()));
	for (Eigen::Index i = 0; i < m.rows(); ++i) {
		for (Eigen::Index j = 0; j < m.cols(); ++j) {
			float v = m(i, j);
			out.write(reinterpret_cast<const char*>(&v), 4);
		}
	}
	if (!out) throw Error(path.string() + ": write failed");
}

std::vector<int> read_index_array(const json& j, const std::string& where) {
	if (!j.is_array()) throw Error(where + ": expected an array");
	std::vector<int> out;
	out.reserve(j.size());
	for (const auto& v : j) {
		if (!v.is_number_integer()) throw Error(where + ": expected integer entries");
		out.push_back(v.get<int>());
	}
	return out;
}

} // namespace

MatF read_f32_matrix(const std::string& path, int expect_rows, int expect_cols) {
	return read_feature_file(fs::path(path), expect_rows, expect_cols);
}

void write_f32_matrix(const std::string& path, const MatF& m) {
	write_feature_file(fs::path(path), m);
}

std::vector<std::pair<int, int>> canonical_edges(std::vector<std::pair<int, int>> edges) {
	for (auto& [a, b] : edges) {
		if (a > b) std::swap(a, b);
	}
	std::sort(edges.begin(), edges.end());
	edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
	edges.erase(std::remove_if(edges.begin(), edges.end(), [](const auto& e) { return e.first == e.second; }),
	            edges.end());
	return edges;
}

void MultimodalGraph::validate() const {
	if (node_count < 0) throw Error("graph: negative node count");
	if (modalities.empty()) throw Error("graph: at least one modality required");
	if (features.size() != modalities.size()) throw Error("graph: feature matrix count != modality count");
	for (std::size_t m = 0; m < modalities.size(); ++m) {
		if (modalities[m].name.empty()) throw Error("graph: modality " + std::to_string(m) + " has empty name");
		if (modalities[m].dim <= 0) throw Error("graph: modality " + modalities[m].name + " has dim <= 0");
		if (features[m].rows() != node_count || features[m].cols() != modalities[m].dim) {
			throw Error("graph: features for modality " + modalities[m].name + " are " +
			            std::to_string(features[m].rows()) + "x" + std::to_string(features[m].cols()) +
			            ", expected " + std::to_string(node_count) + "x" + std::to_string(modalities[m].dim));
		}
		if (!features[m].allFinite()) throw Error("graph: non-finite features in modality " + modalities[m].name);
	}
	for (std::size_t m = 1; m < modalities.size(); ++m) {
		for (std::size_t l = 0; l < m; ++l) {
			if (modalities[m].name == modalities[l].name) {
				throw Error("graph: duplicate modality name " + modalities[m].name);
			}
		}
	}
	for (std::size_t e = 0; e < edges.size(); ++e) {
		auto [a, b] = edges[e];
		if (a < 0 || b < 0 || a >= node_count || b >= node_count) {
			throw Error("graph: edge " + std::to_string(e) + " endpoint out of range");
		}
		if (a >= b) throw Error("graph: edge " + std::to_string(e) + " not in canonical order (i < j)");
		if (e > 0 && !(edges[e - 1] < edges[e])) {
			throw Error("graph: edges not sorted or contain duplicates at position " + std::to_string(e));
		}
	}
	if (labels) {
		if (static_cast<int>(labels->size()) != node_count) {
			throw Error("graph: labels length " + std::to_string(labels->size()) + ", expected " +
			            std::to_string(node_count));
		}
		for (int i = 0; i < node_count; ++i) {
			int y = (*labels)[i];
			if (y < 0 || (n_classes > 0 && y >= n_classes)) {
				throw Error("graph: label " + std::to_string(y) + " at node " + std::to_string(i) + " out of range");
			}
		}
	}
	if (splits) {
		int limit = splits->kind == SplitKind::node ? node_count : edge_count();
		const char* what = splits->kind == SplitKind::node ? "node" : "edge";
		std::unordered_set<int> seen;
		for (const auto* part : {&splits->train, &splits->val, &splits->test}) {
			for (int idx : *part) {
				if (idx < 0 || idx >= limit) {
					throw Error(std::string("graph: split ") + what + " index " + std::to_string(idx) +
					            " out of range");
				}
				if (!seen.insert(idx).second) {
					throw Error("graph: split index " + std::to_string(idx) + " appears in more than one part");
				}
			}
		}
	}
}

MultimodalGraph load_dataset(const std::string& dir, const LoadOptions& opt) {
	fs::path root(dir);
	if (!fs::is_directory(root)) throw Error(dir + ": not a directory");

	json manifest = read_json_file(root / "manifest.json");
	MultimodalGraph g;
	if (!manifest.contains("n_nodes") || !manifest["n_nodes"].is_number_integer()) {
		throw Error("manifest.json: missing integer n_nodes");
	}
	g.node_count = manifest["n_nodes"].get<int>();
	if (g.node_count < 0) throw Error("manifest.json: n_nodes < 0");
	if (!manifest.contains("modalities") || !manifest["modalities"].is_array() || manifest["modalities"].empty()) {
		throw Error("manifest.json: missing nonempty modalities array");
	}
	for (const auto& m : manifest["modalities"]) {
		if (!m.contains("name") || !m["name"].is_string() || !m.contains("dim") || !m["dim"].is_number_integer()) {
			throw Error("manifest.json: each modality needs string name and integer dim");
		}
		g.modalities.push_back({m["name"].get<std::string>(), m["dim"].get<int>()});
	}
	if (manifest.contains("n_classes") && !manifest["n_classes"].is_null()) {
		if (!manifest["n_classes"].is_number_integer()) throw Error("manifest.json: n_classes must be int or null");
		g.n_classes = manifest["n_classes"].get<int>();
	}

	for (const auto& m : g.modalities) {
		fs::path fpath = root / ("features_" + m.name + ".f32");
		g.features.push_back(read_feature_file(fpath, g.node_count, m.dim));
	}

	fs::path epath = root / "edges.tsv";
	if (fs::exists(epath)) {
		std::ifstream in(epath);
		if (!in) throw Error(epath.string() + ": cannot open");
		std::string line;
		std::vector<std::pair<int, int>> raw;
		int lineno = 0;
		while (std::getline(in, line)) {
			++lineno;
			if (line.empty()) continue;
			std::istringstream ls(line);
			long a, b;
			char tab;
			if (!(ls >> a) || !ls.get(tab) || tab != '\t' || !(ls >> b)) {
				throw Error(epath.string() + ": line " + std::to_string(lineno) + ": expected two tab-separated ints");
			}
			if (a < 0 || b < 0 || a >= g.node_count || b >= g.node_count) {
				throw Error(epath.string() + ": line " + std::to_string(lineno) + ": node index out of range [0," +
				            std::to_string(g.node_count) + ")");
			}
			raw.emplace_back(static_cast<int>(a), static_cast<int>(b));
		}
		g.edges = canonical_edges(std::move(raw)); // strips self loops, dedups reverses
	} else if (!opt.allow_missing_edges) {
		throw Error(epath.string() + ": missing");
	}

	fs::path lpath = root / "labels.csv";
	if (fs::exists(lpath)) {
		std::ifstream in(lpath);
		if (!in) throw Error(lpath.string() + ": cannot open");
		std::vector<int> labels;
		std::string line;
		int lineno = 0;
		while (std::getline(in, line)) {
			++lineno;
			if (line.empty()) continue;
			try {
				labels.push_back(std::stoi(line));
			} catch (const std::exception&) {
				throw Error(lpath.string() + ": line " + std::to_string(lineno) + ": expected one integer");
			}
		}
		g.labels = std::move(labels);
	}

	fs::path spath = root / "splits.json";
	if (fs::exists(spath)) {
		json sj = read_json_file(spath);
		Splits s;
		if (sj.contains("kind")) {
			std::string k = sj["kind"].get<std::string>();
			if (k == "node") s.kind = SplitKind::node;
			else if (k == "edge") s.kind = SplitKind::edge;
			else throw Error(spath.string() + ": kind must be \"node\" or \"edge\"");
		}
		for (const char* part : {"train", "val", "test"}) {
			if (!sj.contains(part)) throw Error(spath.string() + ": missing \"" + std::string(part) + "\"");
		}
		s.train = read_index_array(sj["train"], spath.string() + ": train");
		s.val = read_index_array(sj["val"], spath.string() + ": val");
		s.test = read_index_array(sj["test"], spath.string() + ": test");
		g.splits = std::move(s);
	}

	g.validate();
	return g;
}

void save_dataset(const std::string& dir, const MultimodalGraph& g) {
	g.validate();
	fs::path root(dir);
	fs::create_directories(root);

	json manifest;
	manifest["n_nodes"] = g.node_count;
	manifest["modalities"] = json::array();
	for (const auto& m : g.modalities) {
		manifest["modalities"].push_back({{"name", m.name}, {"dim", m.dim}});
	}
	if (g.n_classes > 0) manifest["n_classes"] = g.n_classes;
	else manifest["n_classes"] = nullptr;
	{
		std::ofstream out(root / "manifest.json");
		if (!out) throw Error((root / "manifest.json").string() + ": cannot write");
		out << manifest.dump(2) << "\n";
	}

	for (std::size_t m = 0; m < g.modalities.size(); ++m) {
		write_feature_file(root / ("features_" + g.modalities[m].name + ".f32"), g.features[m]);
	}

	{
		std::ofstream out(root / "edges.tsv");
		if (!out) throw Error((root / "edges.tsv").string() + ": cannot write");
		for (const auto& [a, b] : g.edges) out << a << '\t' << b << '\n';
	}

	if (g.labels) {
		std::ofstream out(root / "labels.csv");
		if (!out) throw Error((root / "labels.csv").string() + ": cannot write");
		for (int y : *g.labels) out << y << '\n';
	}

	if (g.splits) {
		json sj;
		sj["kind"] = g.splits->kind == SplitKind::node ? "node" : "edge";
		sj["train"] = g.splits->train;
		sj["val"] = g.splits->val;
		sj["test"] = g.splits->test;
		std::ofstream out(root / "splits.json");
		if (!out) throw Error((root / "splits.json").string() + ": cannot write");
		out << sj.dump(2) << "\n";
	}
}

MatF fused_raw_features(const MultimodalGraph& g) {
	int dmax = 0;
	for (const auto& m : g.modalities) dmax = std::max(dmax, m.dim);
	MatF acc = MatF::Zero(g.node_count, dmax);
	for (std::size_t m = 0; m < g.features.size(); ++m) {
		acc.leftCols(g.modalities[m].dim) += g.features[m];
	}
	return acc / static_cast<float>(g.modality_count());
}

std::vector<std::pair<int, int>> build_knn_edges(const std::vector<MatF>& features, int k) {
	if (features.empty()) throw Error("knn: no feature matrices");
	int n = static_cast<int>(features[0].rows());
	for (const auto& f : features) {
		if (f.rows() != n) throw Error("knn: feature matrices disagree on node count");
	}
	if (k < 1 || k >= n) {
		throw Error("knn: k = " + std::to_string(k) + " outside [1, " + std::to_string(n - 1) + "]");
	}

	Eigen::Index dmax = 0;
	for (const auto& f : features) dmax = std::max(dmax, f.cols());
	MatD avg = MatD::Zero(n, dmax);
	for (const auto& f : features) {
		MatD fd = f.cast<double>();
		for (int i = 0; i < n; ++i) {
			double norm = fd.row(i).norm();
			if (norm > 0) avg.row(i).head(fd.cols()) += fd.row(i) / norm;
		}
	}
	avg /= static_cast<double>(features.size());
	for (int i = 0; i < n; ++i) {
		double norm = avg.row(i).norm();
		if (norm > 0) avg.row(i) /= norm;
	}

	MatD sim = avg * avg.transpose(); // cosine; zero rows give 0 against everyone
	std::vector<std::pair<int, int>> edges;
	edges.reserve(static_cast<std::size_t>(n) * k);
	std::vector<int> order(n);
	for (int i = 0; i < n; ++i) {
		order.clear();
		for (int j = 0; j < n; ++j) {
			if (j != i) order.push_back(j);
		}
		std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
			if (sim(i, a) != sim(i, b)) return sim(i, a) > sim(i, b);
			return a < b;
		});
		for (int t = 0; t < k; ++t) edges.emplace_back(i, order[t]);
	}
	return canonical_edges(std::move(edges)); // union symmetrization
}

MultimodalGraph inject_noise(const MultimodalGraph& g, const NoiseSpec& spec) {
	g.validate();
	if (spec.ratio < 0) throw Error("noise: ratio must be >= 0");
	MultimodalGraph out = g;
	auto count = static_cast<std::size_t>(spec.ratio * static_cast<double>(g.edge_count()));
	if (count == 0) return out;

	if (spec.mode == NoiseSpec::Mode::remove) {
		auto victims = rng::sample_without_replacement(g.edge_count(), static_cast<int>(count),
		                                               rng::derive(spec.seed, "noise.remove"));
		std::vector<std::pair<int, int>> kept;
		kept.reserve(g.edges.size() - count);
		std::size_t v = 0;
		for (std::size_t e = 0; e < g.edges.size(); ++e) {
			if (v < victims.size() && static_cast<int>(e) == victims[v]) {
				++v;
				continue;
			}
			kept.push_back(g.edges[e]);
		}
		out.edges = std::move(kept);
	} else {
		std::uint64_t n = g.node_count;
		std::uint64_t all_pairs = n * (n - 1) / 2;
		std::uint64_t available = all_pairs - g.edges.size();
		if (count > available) {
			throw Error("noise: cannot add " + std::to_string(count) + " edges, only " + std::to_string(available) +
			            " non-edges exist" + (available == 0 ? " (graph is complete)" : ""));
		}
		std::unordered_set<std::uint64_t> taken;
		taken.reserve(g.edges.size() + count);
		for (const auto& [a, b] : g.edges) taken.insert(pair_key(a, b, g.node_count));
		auto eng = rng::engine(rng::derive(spec.seed, "noise.add"));
		std::uniform_int_distribution<int> d(0, g.node_count - 1);
		std::vector<std::pair<int, int>> added;
		while (added.size() < count) {
			int a = d(eng), b = d(eng);
			if (a == b) continue;
			if (a > b) std::swap(a, b);
			if (taken.insert(pair_key(a, b, g.node_count)).second) added.emplace_back(a, b);
		}
		out.edges.insert(out.edges.end(), added.begin(), added.end());
		out.edges = canonical_edges(std::move(out.edges));
	}
	// Edge splits index the old canonical order and would dangle; node splits survive.
	if (out.splits && out.splits->kind == SplitKind::edge) out.splits.reset();
	return out;
}

MultimodalGraph generate_sbm_mag(const SbmMagSpec& spec) {
	if (spec.blocks < 1) throw Error("sbm: blocks must be >= 1");
	if (spec.nodes_per_block < 1) throw Error("sbm: nodes_per_block must be >= 1");
	if (spec.p_in < 0 || spec.p_in > 1 || spec.p_out < 0 || spec.p_out > 1) {
		throw Error("sbm: edge probabilities must lie in [0,1]");
	}
	if (spec.flip_rate < 0 || spec.flip_rate > 1) throw Error("sbm: flip_rate must lie in [0,1]");
	if (spec.modalities.empty()) throw Error("sbm: at least one modality required");

	int n = spec.blocks * spec.nodes_per_block;
	MultimodalGraph g;
	g.node_count = n;
	g.n_classes = spec.blocks;
	std::vector<int> labels(n);
	for (int i = 0; i < n; ++i) labels[i] = i / spec.nodes_per_block;
	g.labels = labels;

	for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
		const auto& ms = spec.modalities[m];
		if (ms.dim < 1) throw Error("sbm: modality dim must be >= 1");
		if (ms.name.empty()) throw Error("sbm: modality name must be nonempty");
		g.modalities.push_back({ms.name, ms.dim});

		MatD centers(spec.blocks, ms.dim);
		{
			auto eng = rng::engine(rng::derive(spec.seed, "sbm.centers", m));
			std::normal_distribution<double> gauss(0.0, 1.0);
			for (int b = 0; b < spec.blocks; ++b) {
				for (int d = 0; d < ms.dim; ++d) centers(b, d) = ms.center_separation * gauss(eng);
			}
		}

		MatF feat(n, ms.dim);
		for (int i = 0; i < n; ++i) {
			auto eng = rng::engine(rng::derive(spec.seed, "sbm.node", m, static_cast<std::uint64_t>(i)));
			std::uniform_real_distribution<double> unif(0.0, 1.0);
			int block = labels[i];
			if (spec.blocks > 1 && unif(eng) < spec.flip_rate) {
				std::uniform_int_distribution<int> other(0, spec.blocks - 2);
				int o = other(eng);
				block = o >= block ? o + 1 : o;
			}
			std::normal_distribution<double> gauss(0.0, 1.0);
			for (int d = 0; d < ms.dim; ++d) {
				feat(i, d) = static_cast<float>(centers(block, d) + ms.noise_scale * gauss(eng));
			}
		}
		g.features.push_back(std::move(feat));
	}

	// Per-pair keyed coins: order independent, reproducible, splittable.
	std::vector<std::pair<int, int>> edges;
	for (int i = 0; i < n; ++i) {
		for (int j = i + 1; j < n; ++j) {
			double p = labels[i] == labels[j] ? spec.p_in : spec.p_out;
			if (p <= 0) continue;
			double u = rng::uniform01(rng::derive(spec.seed, "sbm.edge", static_cast<std::uint64_t>(i),
			                                      static_cast<std::uint64_t>(j)));
			if (u < p) edges.emplace_back(i, j);
		}
	}
	g.edges = std::move(edges);
	g.validate();
	return g;
}

Splits make_node_splits(int n, double train_frac, double val_frac, std::uint64_t seed) {
	if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0) {
		throw Error("splits: fractions must be nonnegative and sum to <= 1");
	}
	auto idx = rng::shuffled_indices(n, rng::derive(seed, "splits.node"));
	int ntrain = static_cast<int>(train_frac * n);
	int nval = static_cast<int>(val_frac * n);
	Splits s;
	s.kind = SplitKind::node;
	s.train.assign(idx.begin(), idx.begin() + ntrain);
	s.val.assign(idx.begin() + ntrain, idx.begin() + ntrain + nval);
	s.test.assign(idx.begin() + ntrain + nval, idx.end());
	std::sort(s.train.begin(), s.train.end());
	std::sort(s.val.begin(), s.val.end());
	std::sort(s.test.begin(), s.test.end());
	return s;
}

Splits make_edge_splits(int edge_count, double train_frac, double val_frac, std::uint64_t seed) {
	if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0) {
		throw Error("splits: fractions must be nonnegative and sum to <= 1");
	}
	auto idx = rng::shuffled_indices(edge_count, rng::derive(seed, "splits.edge"));
	int ntrain = static_cast<int>(train_frac * edge_count);
	int nval = static_cast<int>(val_frac * edge_count);
	Splits s;
	s.kind = SplitKind::edge;
	s.train.assign(idx.begin(), idx.begin() + ntrain);
	s.val.assign(idx.begin() + ntrain, idx.begin() + ntrain + nval);
	s.test.assign(idx.begin() + ntrain + nval, idx.end());
	std::sort(s.train.begin(), s.train.end());
	std::sort(s.val.begin(), s.val.end());
	std::sort(s.test.begin(), s.test.end());
	return s;
}

} // namespace coevo
