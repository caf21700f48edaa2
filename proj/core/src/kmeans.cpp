#include <cmath>
#include <limits>
#include <random>

#include "coevo/graph.hpp"
#include "coevo/metrics.hpp"
#include "coevo/rng.hpp"

namespace coevo {

namespace {

// Squared Euclidean distance from each row of points to one center row.
VecD sq_dist_to(const MatD& points, const Eigen::RowVectorXd& center) {
	return (points.rowwise() - center).rowwise().squaredNorm();
}

MatD seed_centers(const MatD& points, int k, std::mt19937_64& rng) {
	const Eigen::Index n = points.rows();
	MatD centers(k, points.cols());
	std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
	centers.row(0) = points.row(first(rng));
	VecD best = sq_dist_to(points, centers.row(0));
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	for (int c = 1; c < k; ++c) {
		const double total = best.sum();
		Eigen::Index pick = 0;
		if (total > 0) {
			// Sample proportional to squared distance from the nearest center.
			double target = unit(rng) * total, run = 0;
			for (Eigen::Index i = 0; i < n; ++i) {
				run += best[i];
				if (run >= target) { pick = i; break; }
				pick = i;
			}
		} else {
			pick = first(rng);
		}
		centers.row(c) = points.row(pick);
		best = best.cwiseMin(sq_dist_to(points, centers.row(c)));
	}
	return centers;
}

double lloyd(const MatD& points, MatD& centers, std::vector<int>& assign, int max_iters) {
	const Eigen::Index n = points.rows();
	const int k = static_cast<int>(centers.rows());
	assign.assign(static_cast<std::size_t>(n), 0);
	double inertia = 0;
	for (int iter = 0; iter < max_iters; ++iter) {
		bool moved = false;
		inertia = 0;
		for (Eigen::Index i = 0; i < n; ++i) {
			int arg = 0;
			double best = std::numeric_limits<double>::infinity();
			for (int c = 0; c < k; ++c) {
				const double d = (points.row(i) - centers.row(c)).squaredNorm();
				if (d < best) { best = d; arg = c; }
			}
			if (assign[static_cast<std::size_t>(i)] != arg) {
				assign[static_cast<std::size_t>(i)] = arg;
				moved = true;
			}
			inertia += best;
		}
		if (!moved && iter > 0) break;
		MatD sums = MatD::Zero(k, points.cols());
		VecD counts = VecD::Zero(k);
		for (Eigen::Index i = 0; i < n; ++i) {
			sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
			counts[assign[static_cast<std::size_t>(i)]] += 1.0;
		}
		for (int c = 0; c < k; ++c)
			if (counts[c] > 0) centers.row(c) = sums.row(c) / counts[c];
		// Empty clusters keep their previous center.
	}
	return inertia;
}

} // namespace

std::vector<int> kmeans(const MatD& points, int k, int restarts, int max_iters, std::uint64_t seed) {
	if (points.rows() == 0) throw Error("kmeans: no points");
	if (k < 1 || k > points.rows()) throw Error("kmeans: k outside [1, n_points]");
	if (restarts < 1) throw Error("kmeans: restarts must be positive");
	std::vector<int> best_assign;
	double best_inertia = std::numeric_limits<double>::infinity();
	for (int r = 0; r < restarts; ++r) {
		auto eng = rng::engine(rng::derive(seed, "kmeans.restart", static_cast<std::uint64_t>(r)));
		MatD centers = seed_centers(points, k, eng);
		std::vector<int> assign;
		const double inertia = lloyd(points, centers, assign, max_iters);
		if (inertia < best_inertia) {
			best_inertia = inertia;
			best_assign = std::move(assign);
		}
	}
	return best_assign;
}

} // namespace coevo
