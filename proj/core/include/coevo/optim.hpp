#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coevo/autodiff.hpp"
#include "coevo/rng.hpp"

namespace coevo::ad {

template <typename S>
struct AdamConfig {
	S lr = S(5e-3);
	S beta1 = S(0.9);
	S beta2 = S(0.999);
	S eps = S(1e-8);
	S weight_decay = S(1e-5); // coupled L2, added to the gradient
};

/// Adaptive first-order optimizer with per-parameter second-moment scaling
/// and bias correction. step() consumes and clears accumulated gradients.
template <typename S>
class Adam {
public:
	Adam(std::vector<Parameter<S>*> params, AdamConfig<S> cfg = {})
	    : params_(std::move(params)), cfg_(cfg) {
		m_.reserve(params_.size());
		v_.reserve(params_.size());
		for (const auto* p : params_) {
			m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
			v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
		}
	}

	void step() {
		++t_;
		S bc1 = S(1) - std::pow(cfg_.beta1, static_cast<S>(t_));
		S bc2 = S(1) - std::pow(cfg_.beta2, static_cast<S>(t_));
		for (std::size_t i = 0; i < params_.size(); ++i) {
			Parameter<S>& p = *params_[i];
			if (!p.requires_grad) continue;
			Mat<S> g = p.grad + cfg_.weight_decay * p.value;
			m_[i] = cfg_.beta1 * m_[i] + (S(1) - cfg_.beta1) * g;
			v_[i] = cfg_.beta2 * v_[i] + (S(1) - cfg_.beta2) * g.cwiseProduct(g);
			Mat<S> mhat = m_[i] / bc1;
			Mat<S> vhat = v_[i] / bc2;
			Mat<S> denom = vhat.cwiseSqrt() + Mat<S>::Constant(vhat.rows(), vhat.cols(), cfg_.eps);
			p.value -= cfg_.lr * mhat.cwiseQuotient(denom);
			p.zero_grad();
		}
	}

	void zero_grad() {
		for (auto* p : params_) p->zero_grad();
	}

	long steps_taken() const { return t_; }

private:
	std::vector<Parameter<S>*> params_;
	std::vector<Mat<S>> m_, v_;
	AdamConfig<S> cfg_;
	long t_ = 0;
};

struct GradCheckReport {
	double max_rel_err = 0.0;
	double worst_analytic = 0.0;
	double worst_numeric = 0.0;
	std::string worst_param;
	int checked_coords = 0;
};

/**
 * Central-difference gradient verification.
 *
 * builder must construct the scalar loss on the given tape from the bound
 * parameter values, deterministically. Paths through stop-gradient must be
 * frozen snapshots inside the builder (take the value once, pass it as a
 * constant), so that the finite-difference probe sees the same function the
 * tape differentiates. Relative error per coordinate:
 * |a - n| / max(1e-8, |a| + |n|). At most max_coords coordinates per
 * parameter are probed, sampled without replacement.
 */
template <typename S = double>
GradCheckReport grad_check(const std::vector<Parameter<S>*>& params,
                           const std::function<Var(Tape<S>&, Binder<S>&)>& builder,
                           S step = S(1e-4), int max_coords = 64, std::uint64_t seed = 0) {
	for (auto* p : params) p->zero_grad();
	{
		Tape<S> t;
		Binder<S> b(t);
		Var loss = builder(t, b);
		if (t.value(loss).rows() != 1 || t.value(loss).cols() != 1) {
			throw Error("grad_check: loss must be scalar");
		}
		t.backward(loss);
		b.pull_grads();
	}
	auto eval = [&]() -> S {
		Tape<S> t;
		Binder<S> b(t);
		return t.value(builder(t, b))(0, 0);
	};

	GradCheckReport rep;
	for (std::size_t pi = 0; pi < params.size(); ++pi) {
		Parameter<S>& p = *params[pi];
		if (!p.requires_grad) continue;
		int numel = static_cast<int>(p.value.size());
		std::vector<int> coords;
		if (numel <= max_coords) {
			coords.resize(numel);
			for (int c = 0; c < numel; ++c) coords[c] = c;
		} else {
			coords = rng::sample_without_replacement(numel, max_coords,
			                                         rng::derive(seed, "gradcheck", pi));
		}
		for (int c : coords) {
			S saved = p.value.data()[c];
			p.value.data()[c] = saved + step;
			S lp = eval();
			p.value.data()[c] = saved - step;
			S lm = eval();
			p.value.data()[c] = saved;
			double numeric = static_cast<double>(lp - lm) / (2.0 * static_cast<double>(step));
			double analytic = static_cast<double>(p.grad.data()[c]);
			double rel = std::abs(analytic - numeric) /
			             std::max(1e-8, std::abs(analytic) + std::abs(numeric));
			++rep.checked_coords;
			if (rel > rep.max_rel_err) {
				rep.max_rel_err = rel;
				rep.worst_analytic = analytic;
				rep.worst_numeric = numeric;
				rep.worst_param = p.name;
			}
		}
	}
	return rep;
}

} // namespace coevo::ad
