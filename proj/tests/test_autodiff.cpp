#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>

#include "dualvgr/autodiff.hpp"
#include "dualvgr/rng.hpp"

using namespace dualvgr;
using namespace dualvgr::ad;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
    Mat m(r, c);
    for (double& x : m.v) x = scale * rng.uniform(-1.0, 1.0);
    return m;
}

// Central finite differences of a scalar-valued graph builder w.r.t. each
// input, compared against reverse mode. Builder must be a pure function of
// the leaf values.
void check_gradients(std::vector<Var> leaves, const std::function<Var(const std::vector<Var>&)>& build,
                     double h = 1e-6, double tol = 1e-6) {
    Var loss = build(leaves);
    backward(loss);
    std::vector<Mat> analytic;
    for (auto& l : leaves) analytic.push_back(l->grad);

    for (size_t li = 0; li < leaves.size(); ++li) {
        for (size_t i = 0; i < leaves[li]->val.v.size(); ++i) {
            const double orig = leaves[li]->val.v[i];
            double fp, fm;
            {
                NoGradGuard ng;
                leaves[li]->val.v[i] = orig + h;
                fp = build(leaves)->val(0, 0);
                leaves[li]->val.v[i] = orig - h;
                fm = build(leaves)->val(0, 0);
                leaves[li]->val.v[i] = orig;
            }
            const double fd = (fp - fm) / (2 * h);
            const double ad = analytic[li].v[i];
            const double denom = std::max({std::fabs(fd), std::fabs(ad), 1.0});
            INFO("leaf ", li, " coord ", i, " fd=", fd, " ad=", ad);
            CHECK(std::fabs(fd - ad) / denom < tol);
        }
    }
}

Var weighted_sum(const Var& x, Rng& rng) {
    // fixed random projection to scalar so every entry matters
    Mat w = random_mat(rng, x->val.rows, x->val.cols);
    return sum_all(mul(x, constant(w)));
}

}  // namespace

TEST_CASE("matmul forward") {
    Var a = leaf(Mat{{1, 2}, {3, 4}}, false);
    Var b = leaf(Mat{{5, 6}, {7, 8}}, false);
    Var c = matmul(a, b);
    CHECK(c->val(0, 0) == 19);
    CHECK(c->val(0, 1) == 22);
    CHECK(c->val(1, 0) == 43);
    CHECK(c->val(1, 1) == 50);
    Var d = matmul_nt(a, b);  // a @ b^T
    CHECK(d->val(0, 0) == doctest::Approx(17));
    CHECK(d->val(1, 1) == doctest::Approx(53));
}

TEST_CASE("gradients: arithmetic and matmul ops") {
    Rng rng(42);
    auto a = leaf(random_mat(rng, 3, 4));
    auto b = leaf(random_mat(rng, 3, 4));
    auto m = leaf(random_mat(rng, 4, 2));

    check_gradients({a, b, m}, [&](const std::vector<Var>& ls) {
        Rng prng(7);
        Var s = add(ls[0], ls[1]);
        Var t = sub(mul(s, ls[0]), smul(ls[1], 0.3));
        Var u = matmul(t, ls[2]);
        Var w = matmul_nt(u, transpose(ls[2]));
        return weighted_sum(w, prng);
    });
}

TEST_CASE("gradients: broadcasts, slices, concats") {
    Rng rng(43);
    auto a = leaf(random_mat(rng, 3, 4));
    auto r = leaf(random_mat(rng, 1, 4));
    auto c = leaf(random_mat(rng, 3, 1));

    check_gradients({a, r, c}, [&](const std::vector<Var>& ls) {
        Rng prng(8);
        Var x = add_rowvec(ls[0], ls[1]);
        Var y = mul_colvec(x, ls[2]);
        Var z = outer_sum(ls[2], ls[1]);
        Var cc = concat_cols(y, z);
        Var rr = concat_rows(cc, cc);
        Var s = slice_cols(rr, 1, 7);
        return weighted_sum(s, prng);
    });
}

TEST_CASE("gradients: nonlinearities") {
    Rng rng(44);
    auto a = leaf(random_mat(rng, 2, 5));
    check_gradients({a}, [&](const std::vector<Var>& ls) {
        Rng prng(9);
        Var x = sigmoid(ls[0]);
        Var y = tanh_act(add(x, ls[0]));
        Var z = elu(sub(y, x));
        Var w = leaky_relu(z, 0.2);
        return weighted_sum(w, prng);
    });
}

TEST_CASE("gradients: signed sqrt away from zero") {
    Rng rng(45);
    Mat m = random_mat(rng, 2, 4);
    for (double& x : m.v) x += (x >= 0 ? 0.5 : -0.5);  // keep |x| >= 0.5
    auto a = leaf(m);
    check_gradients({a}, [&](const std::vector<Var>& ls) {
        Rng prng(10);
        return weighted_sum(signed_sqrt(ls[0], 1e-12), prng);
    });
}

TEST_CASE("gradients: row l2 normalize") {
    Rng rng(46);
    auto a = leaf(random_mat(rng, 3, 4));
    check_gradients({a}, [&](const std::vector<Var>& ls) {
        Rng prng(11);
        return weighted_sum(row_l2norm(ls[0], 1e-12), prng);
    });
}

TEST_CASE("gradients: softmax and attention aggregation") {
    Rng rng(47);
    auto a = leaf(random_mat(rng, 4, 4));
    auto h = leaf(random_mat(rng, 4, 3));
    check_gradients({a, h}, [&](const std::vector<Var>& ls) {
        Rng prng(12);
        Var sm = softmax_rows(ls[0]);
        Var agg = attn_matmul(sm, ls[1]);
        return weighted_sum(agg, prng);
    });
}

TEST_CASE("gradients: reductions, block pool, cross entropy") {
    Rng rng(48);
    auto a = leaf(random_mat(rng, 2, 6));
    auto l = leaf(random_mat(rng, 1, 5));
    check_gradients({a, l}, [&](const std::vector<Var>& ls) {
        Var pooled = block_sum_cols(ls[0], 3);
        Var sq = sqrt_scalar(add(sum_all(mul(pooled, pooled)), constant(Mat(1, 1, 0.1))));
        Var ce = cross_entropy_logits(ls[1], 2);
        return add(sq, ce);
    });
}

TEST_CASE("gradients: embedding scatter") {
    Rng rng(49);
    auto table = leaf(random_mat(rng, 6, 3));
    check_gradients({table}, [&](const std::vector<Var>& ls) {
        Rng prng(13);
        Var e = embedding_rows(ls[0], {1, 4, 1, 0});
        return weighted_sum(e, prng);
    });
}

TEST_CASE("softmax rows sum to one and are positive") {
    Rng rng(50);
    for (int trial = 0; trial < 20; ++trial) {
        int r = rng.range(1, 5), c = rng.range(1, 7);
        Var s = softmax_rows(constant(random_mat(rng, r, c, 3.0)));
        for (int i = 0; i < r; ++i) {
            double sum = 0;
            for (int j = 0; j < c; ++j) {
                CHECK(s->val(i, j) > 0.0);
                sum += s->val(i, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("sorted accumulation is permutation invariant bitwise") {
    Rng rng(51);
    const int n = 7, d = 5;
    Mat logits = random_mat(rng, n, n, 4.0);
    Mat feats = random_mat(rng, n, d);

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    // a fixed nontrivial permutation
    std::swap(perm[0], perm[4]);
    std::swap(perm[2], perm[6]);
    std::swap(perm[1], perm[3]);

    Mat plog(n, n), pfeat(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) plog(i, j) = logits(perm[i], perm[j]);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) pfeat(i, j) = feats(perm[i], j);

    Var base = attn_matmul(softmax_rows(constant(logits)), constant(feats));
    Var permuted = attn_matmul(softmax_rows(constant(plog)), constant(pfeat));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(permuted->val(i, j) == base->val(perm[i], j));
}

TEST_CASE("cross entropy exact values") {
    Var logits = leaf(Mat::row({0, 0, 0, 0}), false);
    CHECK(cross_entropy_logits(logits, 1)->val(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Var two = leaf(Mat::row({1, 0}), false);
    CHECK(cross_entropy_logits(two, 0)->val(0, 0) ==
          doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy_logits(two, 2), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy_logits(two, -1), std::invalid_argument);
}

TEST_CASE("no-grad mode records nothing") {
    auto a = leaf(Mat{{1, 2}});
    Var out;
    {
        NoGradGuard ng;
        out = smul(a, 2.0);
    }
    CHECK_FALSE(out->requires_grad);
    CHECK(out->parents.empty());
}

TEST_CASE("grad accumulation across backward calls on leaves") {
    auto a = leaf(Mat{{2.0}});
    backward(smul(a, 3.0));
    backward(smul(a, 3.0));
    CHECK(a->grad(0, 0) == doctest::Approx(6.0));
}
