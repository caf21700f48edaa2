#include <doctest.h>

#include "coevo/graph.hpp"
#include "coevo/modality.hpp"
#include "coevo/rng.hpp"

using namespace coevo;
using ad::Var;
using Tape = ad::Tape<double>;

namespace {

MatD randn(int r, int c, std::uint64_t key) {
	auto eng = rng::engine(key);
	std::normal_distribution<double> d(0.0, 1.0);
	MatD m(r, c);
	for (int i = 0; i < r; ++i)
		for (int j = 0; j < c; ++j) m(i, j) = d(eng);
	return m;
}

MatD uniform_mat(int r, int c, std::uint64_t key) {
	MatD m(r, c);
	for (int i = 0; i < r; ++i)
		for (int j = 0; j < c; ++j)
			m(i, j) = 0.05 + 0.95 * rng::uniform01(rng::derive(key, "u",
					static_cast<std::uint64_t>(i * c + j)));
	return m;
}

struct SmallSetup {
	SpMat<double> base;
	topo::AffinityState<double> state;
	MatD hbar_value;

	SmallSetup() {
		base = normalized_adjacency_from_edges<double>(8,
				{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {0, 7}});
		state = topo::make_affinity_state(uniform_mat(8, 3, 21),
				rng::sample_without_replacement(8, 3, 21));
		hbar_value = randn(8, 4, 22);
	}
};

} // namespace

TEST_CASE("project and mean_latent shapes and values") {
	Tape t;
	std::vector<Var> feats = {t.constant(randn(5, 3, 1)), t.constant(randn(5, 2, 2))};
	std::vector<Var> projs = {t.constant(randn(3, 4, 3)), t.constant(randn(2, 4, 4))};
	const auto latents = mod::project(t, feats, projs);
	REQUIRE(latents.size() == 2);
	CHECK(t.value(latents[0]).rows() == 5);
	CHECK(t.value(latents[0]).cols() == 4);
	CHECK((t.value(latents[0]) - t.value(feats[0]) * t.value(projs[0])).norm() == 0.0);

	Var hbar = mod::mean_latent(t, latents);
	const MatD want = 0.5 * (t.value(latents[0]) + t.value(latents[1]));
	CHECK((t.value(hbar) - want).norm() < 1e-15);
}

TEST_CASE("smooth with zero steps is the scaled mean latent") {
	SmallSetup s;
	Tape t;
	Var hbar = t.constant(s.hbar_value);
	topo::EvolvedTopologyVars<double> top{0.6, &s.base, t.constant(s.state.R), false};
	mod::SmoothingConfig<double> cfg;
	cfg.alpha = 2.0;
	cfg.steps = 0;
	Var out = mod::smooth(t, hbar, top, cfg);
	const MatD expect = s.hbar_value * (1.0 / 3.0);
	CHECK((t.value(out) - expect).norm() == 0.0);
}

TEST_CASE("smooth converges to the exact solution as steps grow") {
	SmallSetup s;
	topo::EvolvedTopology<double> top;
	top.lambda = 0.6;
	top.base = &s.base;
	top.affinity = &s.state;
	top.symmetrize = false;
	mod::SmoothingConfig<double> cfg;
	cfg.alpha = 1.0; // beta_c = 0.5
	const MatD hstar = mod::exact_solve(s.hbar_value, top, cfg);

	double prev = std::numeric_limits<double>::infinity();
	for (int steps : {2, 8, 20, 40}) {
		Tape t;
		topo::EvolvedTopologyVars<double> tv{0.6, &s.base, t.constant(s.state.R), false};
		mod::SmoothingConfig<double> c2 = cfg;
		c2.steps = steps;
		Var out = mod::smooth(t, t.constant(s.hbar_value), tv, c2);
		const double gap = (t.value(out) - hstar).norm();
		CHECK(gap < prev);
		prev = gap;
	}
	CHECK(prev < 1e-11 * hstar.norm());
}

TEST_CASE("exact_solve satisfies the stationarity condition") {
	SmallSetup s;
	topo::EvolvedTopology<double> top;
	top.lambda = 0.6;
	top.base = &s.base;
	top.affinity = &s.state;
	top.symmetrize = true;
	mod::SmoothingConfig<double> cfg;
	cfg.alpha = 1.5;
	const MatD hstar = mod::exact_solve(s.hbar_value, top, cfg);

	const MatD q = 0.6 * MatD(s.base) + 0.4 * topo::dense_recover(s.state, true);
	const MatD grad = 2.0 * (hstar - s.hbar_value) +
			2.0 * cfg.alpha * ((MatD::Identity(8, 8) - q) * hstar);
	CHECK(grad.norm() < 1e-10 * s.hbar_value.norm());
}

TEST_CASE("alignment loss prefers aligned latents and ignores batch order") {
	const MatD shared = randn(10, 6, 31);
	mod::AlignmentConfig<double> cfg;
	cfg.tau = 0.1;
	cfg.batch = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

	Tape t;
	std::vector<Var> aligned = {t.constant(shared), t.constant(shared)};
	const double la = t.value(mod::alignment_loss(t, aligned, shared, cfg))(0, 0);

	std::vector<Var> scrambled = {t.constant(shared), t.constant(randn(10, 6, 32))};
	const double ls = t.value(mod::alignment_loss(t, scrambled, shared, cfg))(0, 0);
	CHECK(la < ls);

	mod::AlignmentConfig<double> rev = cfg;
	std::reverse(rev.batch.begin(), rev.batch.end());
	const double lr = t.value(mod::alignment_loss(t, aligned, shared, rev))(0, 0);
	CHECK(la == doctest::Approx(lr).epsilon(1e-12));
}

TEST_CASE("alignment loss drives gradients into every modality latent") {
	Tape t;
	ad::Binder<double> b(t);
	ad::Parameter<double> pa("a", randn(6, 4, 33)), pb("b", randn(6, 4, 34));
	std::vector<Var> latents = {b.bind(pa), b.bind(pb)};
	mod::AlignmentConfig<double> cfg;
	cfg.tau = 0.07;
	cfg.batch = {0, 1, 2, 3, 4, 5};
	Var loss = mod::alignment_loss(t, latents, randn(6, 4, 35), cfg);
	t.backward(loss);
	b.pull_grads();
	CHECK(pa.grad.norm() > 0.0);
	CHECK(pb.grad.norm() > 0.0);
	CHECK(std::isfinite(t.value(loss)(0, 0)));
}

TEST_CASE("exact_solve rejects oversized systems") {
	topo::EvolvedTopology<double> top;
	SpMat<double> big(2001, 2001);
	top.lambda = 1.0;
	top.base = &big;
	top.affinity = nullptr;
	mod::SmoothingConfig<double> cfg;
	CHECK_THROWS_AS(mod::exact_solve(MatD(MatD::Zero(2001, 2)), top, cfg), Error);
}
