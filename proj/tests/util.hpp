#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "coevo/graph.hpp"
#include "coevo/rng.hpp"

namespace coevo::testutil {

/// Unique scratch directory, removed on destruction.
struct TempDir {
	std::filesystem::path path;

	explicit TempDir(const std::string& stem = "coevo-test") {
		auto eng = rng::engine(std::random_device{}());
		path = std::filesystem::temp_directory_path() /
				(stem + "-" + std::to_string(eng()));
		std::filesystem::create_directories(path);
	}
	~TempDir() {
		std::error_code ec;
		std::filesystem::remove_all(path, ec);
	}
	TempDir(const TempDir&) = delete;
	TempDir& operator=(const TempDir&) = delete;

	std::string str() const { return path.string(); }
	std::string sub(const std::string& name) const { return (path / name).string(); }
};

template <class A, class B>
bool same_matrix(const A& a, const B& b) {
	return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

inline MultimodalGraph small_sbm(std::uint64_t seed = 7, int per_block = 30, double flip = 0.0) {
	SbmMagSpec spec;
	spec.blocks = 3;
	spec.nodes_per_block = per_block;
	spec.p_in = 0.15;
	spec.p_out = 0.01;
	spec.flip_rate = flip;
	spec.seed = seed;
	spec.modalities = {{"text", 12, 2.0, 1.0}, {"image", 8, 2.0, 1.0}};
	MultimodalGraph g = generate_sbm_mag(spec);
	g.splits = make_node_splits(g.node_count, 0.6, 0.2, seed);
	return g;
}

} // namespace coevo::testutil
