#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "coevo/graph.hpp"
#include "coevo/tensor.hpp"

namespace coevo::ad {

/**
 * Reverse-mode differentiation over dense matrices.
 *
 * A Tape is a single-assignment sequence of nodes; backward() walks it in
 * reverse creation order, so each node's rule runs exactly once. Every
 * primitive validates shapes and checks its output for non-finite values,
 * reporting the primitive name on failure. Gradients are accumulated lazily:
 * a node's grad buffer exists only once something flows into it.
 *
 * Values with requires_grad == false act as constants; no backward rule is
 * recorded when no input requires gradients, so inference-style forwards pay
 * no differentiation cost beyond the value buffers.
 */

struct Var {
	std::int32_t id = -1;
	bool valid() const { return id >= 0; }
};

template <typename S>
class Tape {
public:
	Var leaf(Mat<S> value, bool requires_grad = false) {
		check_finite(value, "leaf");
		return push(std::move(value), requires_grad, nullptr);
	}

	Var constant(Mat<S> value) { return leaf(std::move(value), false); }

	Var scalar(S v) {
		Mat<S> m(1, 1);
		m(0, 0) = v;
		return leaf(std::move(m), false);
	}

	const Mat<S>& value(Var v) const { return at(v).value; }

	/// Gradient of the last backward() root w.r.t. v (zeros if nothing flowed).
	const Mat<S>& grad(Var v) {
		ensure_grad(v.id);
		return at(v).grad;
	}

	std::size_t node_count() const { return nodes_.size(); }

	/// Seed d(root) = 1 and run all recorded rules in reverse order.
	void backward(Var root) {
		auto& r = at(root);
		if (r.value.rows() != 1 || r.value.cols() != 1) {
			throw Error("autodiff backward: root must be 1x1, got " + shape_str(r.value));
		}
		ensure_grad(root.id);
		nodes_[root.id].grad(0, 0) += S(1);
		for (std::int32_t i = root.id; i >= 0; --i) {
			if (nodes_[i].grad_live && nodes_[i].back) nodes_[i].back();
		}
	}

	// ---- primitives ----

	Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
		const Mat<S>&A = val(a), &B = val(b);
		Eigen::Index ar = trans_a ? A.cols() : A.rows(), ac = trans_a ? A.rows() : A.cols();
		Eigen::Index br = trans_b ? B.cols() : B.rows(), bc = trans_b ? B.rows() : B.cols();
		if (ac != br) {
			throw Error("autodiff matmul: inner dims disagree, " + shape_str(A) + (trans_a ? "^T" : "") + " * " +
			            shape_str(B) + (trans_b ? "^T" : ""));
		}
		Mat<S> y(ar, bc);
		if (!trans_a && !trans_b) y.noalias() = A * B;
		else if (!trans_a && trans_b) y.noalias() = A * B.transpose();
		else if (trans_a && !trans_b) y.noalias() = A.transpose() * B;
		else y.noalias() = A.transpose() * B.transpose();
		check_finite(y, "matmul");
		return make(std::move(y), {a, b}, [this, a, b, trans_a, trans_b](Var out) {
			const Mat<S>& g = nodes_[out.id].grad;
			if (wants(a)) {
				if (!trans_a && !trans_b) gref(a).noalias() += g * val(b).transpose();
				else if (!trans_a && trans_b) gref(a).noalias() += g * val(b);
				else if (trans_a && !trans_b) gref(a).noalias() += val(b) * g.transpose();
				else gref(a).noalias() += val(b).transpose() * g.transpose();
			}
			if (wants(b)) {
				if (!trans_a && !trans_b) gref(b).noalias() += val(a).transpose() * g;
				else if (!trans_a && trans_b) gref(b).noalias() += g.transpose() * val(a);
				else if (trans_a && !trans_b) gref(b).noalias() += val(a) * g;
				else gref(b).noalias() += g.transpose() * val(a).transpose();
			}
		});
	}

	/// Constant sparse matrix times dense var. The sparse matrix must outlive
	/// the tape; it is treated as data, never differentiated.
	Var spmm(const SpMat<S>* A, Var x) {
		const Mat<S>& X = val(x);
		if (A->cols() != X.rows()) {
			throw Error("autodiff spmm: " + std::to_string(A->rows()) + "x" + std::to_string(A->cols()) + " * " +
			            shape_str(X));
		}
		Mat<S> y = (*A) * X;
		check_finite(y, "spmm");
		return make(std::move(y), {x}, [this, A, x](Var out) {
			if (wants(x)) gref(x).noalias() += A->transpose() * nodes_[out.id].grad;
		});
	}

	Var add(Var a, Var b) {
		same_shape(a, b, "add");
		Mat<S> y = val(a) + val(b);
		check_finite(y, "add");
		return make(std::move(y), {a, b}, [this, a, b](Var out) {
			if (wants(a)) gref(a) += nodes_[out.id].grad;
			if (wants(b)) gref(b) += nodes_[out.id].grad;
		});
	}

	Var sub(Var a, Var b) {
		same_shape(a, b, "sub");
		Mat<S> y = val(a) - val(b);
		check_finite(y, "sub");
		return make(std::move(y), {a, b}, [this, a, b](Var out) {
			if (wants(a)) gref(a) += nodes_[out.id].grad;
			if (wants(b)) gref(b) -= nodes_[out.id].grad;
		});
	}

	Var scale(Var a, S c) {
		Mat<S> y = val(a) * c;
		check_finite(y, "scale");
		return make(std::move(y), {a}, [this, a, c](Var out) {
			if (wants(a)) gref(a) += nodes_[out.id].grad * c;
		});
	}

	Var hadamard(Var a, Var b) {
		same_shape(a, b, "hadamard");
		Mat<S> y = val(a).cwiseProduct(val(b));
		check_finite(y, "hadamard");
		return make(std::move(y), {a, b}, [this, a, b](Var out) {
			const Mat<S>& g = nodes_[out.id].grad;
			if (wants(a)) gref(a) += g.cwiseProduct(val(b));
			if (wants(b)) gref(b) += g.cwiseProduct(val(a));
		});
	}

	/// y = s * X where s is a 1x1 var (e.g. one softmax mixing weight).
	Var scalar_mul(Var x, Var s) {
		const Mat<S>& sv = val(s);
		if (sv.rows() != 1 || sv.cols() != 1) throw Error("autodiff scalar_mul: scalar operand must be 1x1");
		Mat<S> y = val(x) * sv(0, 0);
		check_finite(y, "scalar_mul");
		return make(std::move(y), {x, s}, [this, x, s](Var out) {
			const Mat<S>& g = nodes_[out.id].grad;
			if (wants(x)) gref(x) += g * val(s)(0, 0);
			if (wants(s)) gref(s)(0, 0) += (g.cwiseProduct(val(x))).sum();
		});
	}

	/// y = X * diag(w), w a column vector of length cols(X).
	Var col_scale(Var x, Var w) {
		const Mat<S>&X = val(x), &W = val(w);
		if (W.cols() != 1 || W.rows() != X.cols()) {
			throw Error("autodiff col_scale: weight must be " + std::to_string(X.cols()) + "x1, got " + shape_str(W));
		}
		Mat<S> y = X.array().rowwise() * W.col(0).transpose().array();
		check_finite(y, "col_scale");
		return make(std::move(y), {x, w}, [this, x, w](Var out) {
			const Mat<S>& g = nodes_[out.id].grad;
			if (wants(x)) gref(x).array() += g.array().rowwise() * val(w).col(0).transpose().array();
			if (wants(w)) gref(w).col(0) += g.cwiseProduct(val(x)).colwise().sum().transpose();
		});
	}

	/// y = diag(r) * X, r a column vector of length rows(X).
	Var row_scale(Var x, Var r) {
		const Mat<S>&X = val(x), &R = val(r);
		if (R.cols() != 1 || R.rows() != X.rows()) {
			throw Error("autodiff row_scale: scale must be " + std::to_string(X.rows()) + "x1, got " + shape_str(R));
		}
		Mat<S> y = X.array().colwise() * R.col(0).array();
		check_finite(y, "row_scale");
		return make(std::move(y), {x, r}, [this, x, r](Var out) {
			const Mat<S>& g = nodes_[out.id].grad;
			if (wants(x)) gref(x).array() += g.array().colwise() * val(r).col(0).array();
			if (wants(r)) gref(r).col(0) += g.cwiseProduct(val(x)).rowwise().sum();
		});
	}

	/// y = X + 1 b, b a 1 x cols(X) row vector (bias broadcast).
	Var add_row_vector(Var x, Var b) {
		const Mat<S>&X = val(x), &B = val(b);
		if (B.rows() != 1 || B.cols() != X.cols()) {
			throw Error("autodiff add_row_vector: bias must be 1x" + std::to_string(X.cols()) + ", got " +
			            shape_str(B));
		}
		Mat<S> y = X.array().rowwise() + B.row(0).array();
		check_finite(y, "add_row_vector");
		return make(std::move(y), {x, b}, [this, x, b](Var out) {
			const Mat<S>& g = nodes_[out.id].grad;
			if (wants(x)) gref(x) += g;
			if (wants(b)) gref(b).row(0) += g.colwise().sum();
		});
	}

	/// y = X - v 1^T, v a rows(X) x 1 column vector (per-row shift).
	Var sub_col_vector(Var x, Var v) {
		const Mat<S>&X = val(x), &V = val(v);
		if (V.cols() != 1 || V.rows() != X.rows()) {
			throw Error("autodiff sub_col_vector: shift must be " + std::to_string(X.rows()) + "x1, got " +
			            shape_str(V));
		}
		Mat<S> y = X.array().colwise() - V.col(0).array();
		check_finite(y, "sub_col_vector");
		return make(std::move(y), {x, v}, [this, x, v](Var out) {
			const Mat<S>& g = nodes_[out.id].grad;
			if (wants(x)) gref(x) += g;
			if (wants(v)) gref(v).col(0) -= g.rowwise().sum();
		});
	}

	/// Row-wise x / ||x||. Zero rows stay zero and receive zero gradient,
	/// which realizes the "similarity of a zero vector is 0" contract.
	Var l2_normalize_rows(Var x) {
		const Mat<S>& X = val(x);
		Mat<S> y(X.rows(), X.cols());
		Vec<S> norms(X.rows());
		for (Eigen::Index i = 0; i < X.rows(); ++i) {
			S n = X.row(i).norm();
			norms[i] = n;
			if (n > tiny()) y.row(i) = X.row(i) / n;
			else y.row(i).setZero();
		}
		check_finite(y, "l2_normalize_rows");
		return make(std::move(y), {x}, [this, x, norms](Var out) {
			if (!wants(x)) return;
			const Mat<S>& g = nodes_[out.id].grad;
			const Mat<S>& y = nodes_[out.id].value;
			Mat<S>& gx = gref(x);
			for (Eigen::Index i = 0; i < g.rows(); ++i) {
				if (norms[i] <= tiny()) continue;
				S dot = y.row(i).dot(g.row(i));
				gx.row(i) += (g.row(i) - y.row(i) * dot) / norms[i];
			}
		});
	}

	/// Softmax over a column vector (max-shifted for stability).
	Var softmax(Var x) {
		const Mat<S>& X = val(x);
		if (X.cols() != 1) throw Error("autodiff softmax: expected a column vector, got " + shape_str(X));
		Vec<S> z = X.col(0);
		S mx = z.maxCoeff();
		Vec<S> e = (z.array() - mx).exp();
		Mat<S> y = e / e.sum();
		check_finite(y, "softmax");
		return make(std::move(y), {x}, [this, x](Var out) {
			if (!wants(x)) return;
			const Mat<S>& g = nodes_[out.id].grad;
			const Mat<S>& y = nodes_[out.id].value;
			S dot = y.col(0).dot(g.col(0));
			gref(x).col(0) += y.col(0).cwiseProduct((g.col(0).array() - dot).matrix());
		});
	}

	/**
	 * Sparsification: entries < eps become 0 except each row's maximum, which
	 * survives when positive (ties all survive; a row whose maximum is not
	 * positive is zeroed entirely). Straight-through gradient on the kept set:
	 * identity on survivors, zero on pruned entries.
	 */
	Var threshold_keep_rowmax(Var x, S eps) {
		if (eps < S(0)) throw Error("autodiff threshold_keep_rowmax: eps must be >= 0");
		const Mat<S>& X = val(x);
		Mat<S> mask = Mat<S>::Zero(X.rows(), X.cols());
		for (Eigen::Index i = 0; i < X.rows(); ++i) {
			S vmax = X.cols() > 0 ? X.row(i).maxCoeff() : S(0);
			for (Eigen::Index j = 0; j < X.cols(); ++j) {
				S v = X(i, j);
				if (v >= eps || (v == vmax && vmax > S(0))) mask(i, j) = S(1);
			}
		}
		Mat<S> y = X.cwiseProduct(mask);
		check_finite(y, "threshold_keep_rowmax");
		return make(std::move(y), {x}, [this, x, mask](Var out) {
			if (wants(x)) gref(x) += nodes_[out.id].grad.cwiseProduct(mask);
		});
	}

	Var log(Var x) {
		Mat<S> y = val(x).array().log();
		check_finite(y, "log");
		return make(std::move(y), {x}, [this, x](Var out) {
			if (wants(x)) gref(x).array() += nodes_[out.id].grad.array() / val(x).array();
		});
	}

	Var exp(Var x) {
		Mat<S> y = val(x).array().exp();
		check_finite(y, "exp");
		return make(std::move(y), {x}, [this, x](Var out) {
			if (wants(x)) gref(x) += nodes_[out.id].grad.cwiseProduct(nodes_[out.id].value);
		});
	}

	Var sigmoid(Var x) {
		Mat<S> y = val(x).unaryExpr([](S v) {
			return v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
		});
		check_finite(y, "sigmoid");
		return make(std::move(y), {x}, [this, x](Var out) {
			const Mat<S>& y = nodes_[out.id].value;
			if (wants(x)) gref(x) += nodes_[out.id].grad.cwiseProduct(y.cwiseProduct(Mat<S>::Ones(y.rows(), y.cols()) - y));
		});
	}

	Var softplus(Var x) {
		Mat<S> y = val(x).unaryExpr([](S v) { return std::max(v, S(0)) + std::log1p(std::exp(-std::abs(v))); });
		check_finite(y, "softplus");
		return make(std::move(y), {x}, [this, x](Var out) {
			if (!wants(x)) return;
			Mat<S> sig = val(x).unaryExpr([](S v) {
				return v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
			});
			gref(x) += nodes_[out.id].grad.cwiseProduct(sig);
		});
	}

	Var sum(Var x) {
		Mat<S> y(1, 1);
		y(0, 0) = val(x).sum();
		check_finite(y, "sum");
		return make(std::move(y), {x}, [this, x](Var out) {
			if (wants(x)) gref(x).array() += nodes_[out.id].grad(0, 0);
		});
	}

	Var mean(Var x) {
		S n = static_cast<S>(val(x).size());
		if (n == S(0)) throw Error("autodiff mean: empty input");
		Mat<S> y(1, 1);
		y(0, 0) = val(x).sum() / n;
		check_finite(y, "mean");
		return make(std::move(y), {x}, [this, x, n](Var out) {
			if (wants(x)) gref(x).array() += nodes_[out.id].grad(0, 0) / n;
		});
	}

	Var row_sum(Var x) {
		Mat<S> y = val(x).rowwise().sum();
		check_finite(y, "row_sum");
		return make(std::move(y), {x}, [this, x](Var out) {
			if (wants(x)) gref(x).array().colwise() += nodes_[out.id].grad.col(0).array();
		});
	}

	Var col_sum(Var x) {
		Mat<S> y = val(x).colwise().sum().transpose();
		check_finite(y, "col_sum");
		return make(std::move(y), {x}, [this, x](Var out) {
			if (wants(x)) gref(x).array().rowwise() += nodes_[out.id].grad.col(0).transpose().array();
		});
	}

	/// Row maxima as a column vector. Deliberately not differentiated (treated
	/// as a constant shift); use it only where the true gradient is invariant
	/// to the shift, e.g. inside a stabilized log-sum-exp.
	Var row_max(Var x) {
		Mat<S> y = val(x).rowwise().maxCoeff();
		check_finite(y, "row_max");
		return push(std::move(y), false, nullptr);
	}

	Var sum_diag(Var x) {
		const Mat<S>& X = val(x);
		if (X.rows() != X.cols()) throw Error("autodiff sum_diag: matrix must be square, got " + shape_str(X));
		Mat<S> y(1, 1);
		y(0, 0) = X.diagonal().sum();
		check_finite(y, "sum_diag");
		return make(std::move(y), {x}, [this, x](Var out) {
			if (wants(x)) gref(x).diagonal().array() += nodes_[out.id].grad(0, 0);
		});
	}

	Var gather_rows(Var x, std::vector<int> idx) {
		const Mat<S>& X = val(x);
		Mat<S> y(static_cast<Eigen::Index>(idx.size()), X.cols());
		for (std::size_t k = 0; k < idx.size(); ++k) {
			if (idx[k] < 0 || idx[k] >= X.rows()) {
				throw Error("autodiff gather_rows: index " + std::to_string(idx[k]) + " out of range [0," +
				            std::to_string(X.rows()) + ")");
			}
			y.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
		}
		check_finite(y, "gather_rows");
		return make(std::move(y), {x}, [this, x, idx = std::move(idx)](Var out) {
			if (!wants(x)) return;
			const Mat<S>& g = nodes_[out.id].grad;
			Mat<S>& gx = gref(x);
			for (std::size_t k = 0; k < idx.size(); ++k) gx.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
		});
	}

	/// Elementwise 1/x with a dead zone: entries with |x| <= tiny map to 0
	/// (and get zero gradient). Backs the pseudo-inverse of degree diagonals,
	/// where an empty row/column must contribute nothing instead of NaN.
	Var reciprocal_safe(Var x) {
		Mat<S> y = val(x).unaryExpr([](S v) { return std::abs(v) > tiny() ? S(1) / v : S(0); });
		check_finite(y, "reciprocal_safe");
		return make(std::move(y), {x}, [this, x](Var out) {
			if (!wants(x)) return;
			const Mat<S>& y = nodes_[out.id].value;
			gref(x) -= nodes_[out.id].grad.cwiseProduct(y.cwiseProduct(y));
		});
	}

	/// Value passes through, gradient does not.
	Var stop_gradient(Var x) { return push(val(x), false, nullptr); }

	static constexpr S tiny() { return S(1e-12); }

private:
	struct Node {
		Mat<S> value;
		Mat<S> grad;
		bool requires_grad = false;
		bool grad_live = false;
		std::function<void()> back;
	};

	std::vector<Node> nodes_;

	const Node& at(Var v) const {
		if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
			throw Error("autodiff: invalid var");
		}
		return nodes_[v.id];
	}

	const Mat<S>& val(Var v) const { return at(v).value; }

	bool wants(Var v) const { return nodes_[v.id].requires_grad; }

	void ensure_grad(std::int32_t id) {
		Node& n = nodes_[id];
		if (!n.grad_live) {
			n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
			n.grad_live = true;
		}
	}

	/// Gradient buffer of an input, allocated on first touch.
	Mat<S>& gref(Var v) {
		ensure_grad(v.id);
		return nodes_[v.id].grad;
	}

	Var push(Mat<S> value, bool requires_grad, std::function<void()> back) {
		Node n;
		n.value = std::move(value);
		n.requires_grad = requires_grad;
		n.back = std::move(back);
		nodes_.push_back(std::move(n));
		return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
	}

	/// Record an op node. rule(out) is wrapped so it only runs when gradients
	/// actually reached the output.
	Var make(Mat<S> value, std::initializer_list<Var> inputs, std::function<void(Var)> rule) {
		bool rg = false;
		for (Var v : inputs) rg = rg || at(v).requires_grad;
		if (!rg) return push(std::move(value), false, nullptr);
		Var out = push(std::move(value), true, nullptr);
		nodes_[out.id].back = [this, out, rule = std::move(rule)]() { rule(out); };
		return out;
	}

	static std::string shape_str(const Mat<S>& m) {
		return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
	}

	void same_shape(Var a, Var b, const char* op) const {
		const Mat<S>& A = val(a);
		const Mat<S>& B = val(b);
		if (A.rows() != B.rows() || A.cols() != B.cols())
			throw Error(std::string("autodiff ") + op + ": shapes disagree, " + shape_str(A) + " vs " + shape_str(B));
	}

	static void check_finite_impl(const Mat<S>& m, const char* op) {
		if (!m.allFinite()) throw Error(std::string("autodiff ") + op + ": non-finite result");
	}

	void check_finite(const Mat<S>& m, const char* op) const { check_finite_impl(m, op); }
};

// ---- compositions over the primitive set ----

/// Cosine similarity between every row of a and every row of b.
template <typename S>
Var cosine_rows(Tape<S>& t, Var a, Var b) {
	return t.matmul(t.l2_normalize_rows(a), t.l2_normalize_rows(b), false, true);
}

/// Row-wise log(sum(exp(x))), max-shifted. Exact gradients: log-sum-exp is
/// shift invariant, so treating the row max as a constant changes nothing.
template <typename S>
Var logsumexp_rows(Tape<S>& t, Var x) {
	Var m = t.row_max(x);
	Var shifted = t.sub_col_vector(x, m);
	Var lse = t.log(t.row_sum(t.exp(shifted)));
	return t.add(lse, m);
}

// ---- parameters ----

template <typename S>
struct Parameter {
	std::string name;
	Mat<S> value;
	Mat<S> grad;
	bool requires_grad = true;

	Parameter() = default;
	Parameter(std::string n, Mat<S> v) : name(std::move(n)), value(std::move(v)) {
		grad = Mat<S>::Zero(value.rows(), value.cols());
	}
	void zero_grad() { grad.setZero(); }
};

/// Leases parameters into a tape as leaves and pulls their gradients back out
/// after backward(). One binder per forward pass.
template <typename S>
class Binder {
public:
	explicit Binder(Tape<S>& t) : tape_(&t) {}

	Var bind(Parameter<S>& p) {
		Var v = tape_->leaf(p.value, p.requires_grad);
		bound_.emplace_back(&p, v);
		return v;
	}

	void pull_grads() {
		for (auto& [p, v] : bound_) {
			if (!p->requires_grad) continue;
			if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
				p->grad = Mat<S>::Zero(p->value.rows(), p->value.cols());
			}
			p->grad += tape_->grad(v);
		}
	}

private:
	Tape<S>* tape_;
	std::vector<std::pair<Parameter<S>*, Var>> bound_;
};

} // namespace coevo::ad
