#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dualvgr/mat.hpp"

namespace dualvgr::ad {

// Reverse-mode automatic differentiation over dense matrices. Each operation
// evaluates eagerly and, while gradients are enabled, records a closure that
// scatters the node's adjoint into its parents. Graphs are per-call values;
// nothing is shared between concurrent evaluations except leaf parameters.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Mat val;
    Mat grad;  // allocated lazily during backward; persistent for leaves
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents
    uint64_t visit_stamp = 0;

    Mat& ensure_grad() {
        if (grad.rows != val.rows || grad.cols != val.cols) grad = Mat(val.rows, val.cols);
        return grad;
    }
};

// Gradient recording switch for the current thread. Evaluation-only passes
// (validation, finite differences) run with recording off.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev); }
};

Var leaf(Mat m, bool requires_grad = true);
Var constant(Mat m);

// Elementwise / broadcast arithmetic
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var smul(const Var& a, double s);
Var add_rowvec(const Var& a, const Var& r);      // [m x n] + [1 x n]
Var mul_colvec(const Var& a, const Var& c);      // [m x n] rows scaled by [m x 1]
Var outer_sum(const Var& c, const Var& r);       // [m x 1] + [1 x n] -> [m x n]

// Linear algebra
Var matmul(const Var& a, const Var& b);          // [m x k] @ [k x n]
Var matmul_nt(const Var& a, const Var& b);       // [m x k] @ [n x k]^T -> [m x n]
Var transpose(const Var& a);

// Reductions ordered so that permuting rows of the attention operand permutes
// the outputs bitwise: addends are accumulated in sorted order, which makes
// the sum independent of the original row order.
Var softmax_rows(const Var& a);
Var attn_matmul(const Var& w, const Var& h);     // [m x n] @ [n x d], sorted accumulation

Var sum_all(const Var& a);                       // -> [1 x 1]
Var sqrt_scalar(const Var& a);                   // [1 x 1], eps-guarded derivative
Var block_sum_cols(const Var& a, int k);         // [m x k*n] -> [m x n]

// Shape ops
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(const Var& a, const Var& b);
Var slice_cols(const Var& a, int c0, int c1);

// Nonlinearities
Var sigmoid(const Var& a);
Var tanh_act(const Var& a);
Var elu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var signed_sqrt(const Var& a, double eps);       // sign(x) * sqrt(|x| + eps)
Var row_l2norm(const Var& a, double eps);        // rows divided by max(||row||, eps)

// Fused log-softmax negative log likelihood over a [1 x A] logit row.
Var cross_entropy_logits(const Var& logits, int label);

// Row gather with gradient scatter into the table.
Var embedding_rows(const Var& table, const std::vector<int>& ids);

// Composites
Var linear(const Var& x, const Var& w, const Var& b);  // x @ w^T + b, w is [out x in]
Var mean_all(const Var& a);

// Accumulates d(root)/d(leaf) into .grad of every reachable node that
// requires gradients. root must be 1x1.
void backward(const Var& root);

}  // namespace dualvgr::ad
