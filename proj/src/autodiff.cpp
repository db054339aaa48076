#include "dualvgr/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace dualvgr::ad {

namespace {

thread_local bool g_grad_enabled = true;

Var make_node(Mat val) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    return n;
}

bool wants_grad(const Var& a) { return g_grad_enabled && a->requires_grad; }

// Registers the backward closure when any parent participates in the tape.
template <typename F>
Var record(Mat val, std::initializer_list<Var> parents, F&& fn) {
    Var out = make_node(std::move(val));
    bool track = false;
    if (g_grad_enabled)
        for (const auto& p : parents) track = track || p->requires_grad;
    if (track) {
        out->requires_grad = true;
        out->parents.assign(parents);
        out->backprop = std::forward<F>(fn);
    }
    return out;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->val.same_shape(b->val))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

// Sum in ascending value order. Floating-point addition is commutative, so
// any permutation of the inputs yields the same sorted sequence and therefore
// a bitwise-identical result.
double sorted_sum(std::vector<double>& buf) {
    std::sort(buf.begin(), buf.end());
    double s = 0.0;
    for (double x : buf) s += x;
    return s;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Var leaf(Mat m, bool requires_grad) {
    Var n = make_node(std::move(m));
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return n;
}

Var constant(Mat m) { return make_node(std::move(m)); }

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Mat out = a->val;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->val.v[i];
    return record(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node& n) {
        if (pa->requires_grad) {
            Mat& g = pa->ensure_grad();
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += n.grad.v[i];
        }
        if (pb->requires_grad) {
            Mat& g = pb->ensure_grad();
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += n.grad.v[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Mat out = a->val;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b->val.v[i];
    return record(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node& n) {
        if (pa->requires_grad) {
            Mat& g = pa->ensure_grad();
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += n.grad.v[i];
        }
        if (pb->requires_grad) {
            Mat& g = pb->ensure_grad();
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] -= n.grad.v[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Mat out = a->val;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b->val.v[i];
    return record(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node& n) {
        if (pa->requires_grad) {
            Mat& g = pa->ensure_grad();
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += n.grad.v[i] * pb->val.v[i];
        }
        if (pb->requires_grad) {
            Mat& g = pb->ensure_grad();
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += n.grad.v[i] * pa->val.v[i];
        }
    });
}

Var smul(const Var& a, double s) {
    Mat out = a->val;
    for (double& x : out.v) x *= s;
    return record(std::move(out), {a}, [pa = a.get(), s](Node& n) {
        Mat& g = pa->ensure_grad();
        for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += s * n.grad.v[i];
    });
}

Var add_rowvec(const Var& a, const Var& r) {
    if (r->val.rows != 1 || r->val.cols != a->val.cols)
        throw std::invalid_argument("add_rowvec: shape mismatch");
    Mat out = a->val;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) += r->val(0, j);
    return record(std::move(out), {a, r}, [pa = a.get(), pr = r.get()](Node& n) {
        if (pa->requires_grad) {
            Mat& g = pa->ensure_grad();
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += n.grad.v[i];
        }
        if (pr->requires_grad) {
            Mat& g = pr->ensure_grad();
            for (int i = 0; i < n.grad.rows; ++i)
                for (int j = 0; j < n.grad.cols; ++j) g(0, j) += n.grad(i, j);
        }
    });
}

Var mul_colvec(const Var& a, const Var& c) {
    if (c->val.cols != 1 || c->val.rows != a->val.rows)
        throw std::invalid_argument("mul_colvec: shape mismatch");
    Mat out = a->val;
    for (int i = 0; i < out.rows; ++i) {
        const double s = c->val(i, 0);
        for (int j = 0; j < out.cols; ++j) out(i, j) *= s;
    }
    return record(std::move(out), {a, c}, [pa = a.get(), pc = c.get()](Node& n) {
        if (pa->requires_grad) {
            Mat& g = pa->ensure_grad();
            for (int i = 0; i < n.grad.rows; ++i) {
                const double s = pc->val(i, 0);
                for (int j = 0; j < n.grad.cols; ++j) g(i, j) += n.grad(i, j) * s;
            }
        }
        if (pc->requires_grad) {
            Mat& g = pc->ensure_grad();
            for (int i = 0; i < n.grad.rows; ++i) {
                double s = 0.0;
                for (int j = 0; j < n.grad.cols; ++j) s += n.grad(i, j) * pa->val(i, j);
                g(i, 0) += s;
            }
        }
    });
}

Var outer_sum(const Var& c, const Var& r) {
    if (c->val.cols != 1 || r->val.rows != 1)
        throw std::invalid_argument("outer_sum: expects column and row vectors");
    Mat out(c->val.rows, r->val.cols);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) = c->val(i, 0) + r->val(0, j);
    return record(std::move(out), {c, r}, [pc = c.get(), pr = r.get()](Node& n) {
        if (pc->requires_grad) {
            Mat& g = pc->ensure_grad();
            for (int i = 0; i < n.grad.rows; ++i) {
                double s = 0.0;
                for (int j = 0; j < n.grad.cols; ++j) s += n.grad(i, j);
                g(i, 0) += s;
            }
        }
        if (pr->requires_grad) {
            Mat& g = pr->ensure_grad();
            for (int i = 0; i < n.grad.rows; ++i)
                for (int j = 0; j < n.grad.cols; ++j) g(0, j) += n.grad(i, j);
        }
    });
}

namespace {

void gemm_acc(const Mat& a, const Mat& b, Mat& out) {  // out += a @ b
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.v[static_cast<size_t>(i) * a.cols];
        double* orow = &out.v[static_cast<size_t>(i) * out.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.v[static_cast<size_t>(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

void gemm_nt_acc(const Mat& a, const Mat& b, Mat& out) {  // out += a @ b^T
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.v[static_cast<size_t>(i) * a.cols];
        double* orow = &out.v[static_cast<size_t>(i) * out.cols];
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = &b.v[static_cast<size_t>(j) * b.cols];
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            orow[j] += s;
        }
    }
}

void gemm_tn_acc(const Mat& a, const Mat& b, Mat& out) {  // out += a^T @ b
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = &a.v[static_cast<size_t>(k) * a.cols];
        const double* brow = &b.v[static_cast<size_t>(k) * b.cols];
        for (int i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = &out.v[static_cast<size_t>(i) * out.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    if (a->val.cols != b->val.rows) throw std::invalid_argument("matmul: inner dim mismatch");
    Mat out(a->val.rows, b->val.cols);
    gemm_acc(a->val, b->val, out);
    return record(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node& n) {
        if (pa->requires_grad) gemm_nt_acc(n.grad, pb->val, pa->ensure_grad());
        if (pb->requires_grad) gemm_tn_acc(pa->val, n.grad, pb->ensure_grad());
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    if (a->val.cols != b->val.cols) throw std::invalid_argument("matmul_nt: inner dim mismatch");
    Mat out(a->val.rows, b->val.rows);
    gemm_nt_acc(a->val, b->val, out);
    return record(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node& n) {
        if (pa->requires_grad) gemm_acc(n.grad, pb->val, pa->ensure_grad());
        if (pb->requires_grad) gemm_tn_acc(n.grad, pa->val, pb->ensure_grad());
    });
}

Var transpose(const Var& a) {
    Mat out(a->val.cols, a->val.rows);
    for (int i = 0; i < a->val.rows; ++i)
        for (int j = 0; j < a->val.cols; ++j) out(j, i) = a->val(i, j);
    return record(std::move(out), {a}, [pa = a.get()](Node& n) {
        Mat& g = pa->ensure_grad();
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) g(j, i) += n.grad(i, j);
    });
}

Var softmax_rows(const Var& a) {
    Mat out = a->val;
    std::vector<double> buf;
    for (int i = 0; i < out.rows; ++i) {
        double m = -HUGE_VAL;
        for (int j = 0; j < out.cols; ++j) m = std::max(m, out(i, j));
        buf.clear();
        for (int j = 0; j < out.cols; ++j) {
            out(i, j) = std::exp(out(i, j) - m);
            buf.push_back(out(i, j));
        }
        const double denom = sorted_sum(buf);
        for (int j = 0; j < out.cols; ++j) out(i, j) /= denom;
    }
    return record(std::move(out), {a}, [pa = a.get()](Node& n) {
        Mat& g = pa->ensure_grad();
        for (int i = 0; i < n.val.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n.val.cols; ++j) dot += n.grad(i, j) * n.val(i, j);
            for (int j = 0; j < n.val.cols; ++j)
                g(i, j) += (n.grad(i, j) - dot) * n.val(i, j);
        }
    });
}

Var attn_matmul(const Var& w, const Var& h) {
    if (w->val.cols != h->val.rows) throw std::invalid_argument("attn_matmul: dim mismatch");
    const int m = w->val.rows, n = w->val.cols, d = h->val.cols;
    Mat out(m, d);
    std::vector<double> buf(static_cast<size_t>(n));
    for (int i = 0; i < m; ++i)
        for (int c = 0; c < d; ++c) {
            for (int j = 0; j < n; ++j) buf[j] = w->val(i, j) * h->val(j, c);
            out(i, c) = sorted_sum(buf);
        }
    return record(std::move(out), {w, h}, [pw = w.get(), ph = h.get()](Node& nd) {
        if (pw->requires_grad) gemm_nt_acc(nd.grad, ph->val, pw->ensure_grad());
        if (ph->requires_grad) gemm_tn_acc(pw->val, nd.grad, ph->ensure_grad());
    });
}

Var sum_all(const Var& a) {
    Mat out(1, 1);
    double s = 0.0;
    for (double x : a->val.v) s += x;
    out(0, 0) = s;
    return record(std::move(out), {a}, [pa = a.get()](Node& n) {
        Mat& g = pa->ensure_grad();
        const double gs = n.grad(0, 0);
        for (double& x : g.v) x += gs;
    });
}

Var sqrt_scalar(const Var& a) {
    if (a->val.rows != 1 || a->val.cols != 1)
        throw std::invalid_argument("sqrt_scalar: expects 1x1");
    Mat out(1, 1);
    out(0, 0) = std::sqrt(a->val(0, 0));
    return record(std::move(out), {a}, [pa = a.get()](Node& n) {
        Mat& g = pa->ensure_grad();
        g(0, 0) += n.grad(0, 0) * 0.5 / std::max(n.val(0, 0), 1e-12);
    });
}

Var block_sum_cols(const Var& a, int k) {
    if (k <= 0 || a->val.cols % k != 0)
        throw std::invalid_argument("block_sum_cols: cols not divisible by block");
    const int n = a->val.cols / k;
    Mat out(a->val.rows, n);
    for (int i = 0; i < a->val.rows; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int u = 0; u < k; ++u) s += a->val(i, j * k + u);
            out(i, j) = s;
        }
    return record(std::move(out), {a}, [pa = a.get(), k](Node& nd) {
        Mat& g = pa->ensure_grad();
        for (int i = 0; i < nd.grad.rows; ++i)
            for (int j = 0; j < nd.grad.cols; ++j)
                for (int u = 0; u < k; ++u) g(i, j * k + u) += nd.grad(i, j);
    });
}

Var concat_cols(const Var& a, const Var& b) {
    if (a->val.rows != b->val.rows) throw std::invalid_argument("concat_cols: row mismatch");
    Mat out(a->val.rows, a->val.cols + b->val.cols);
    for (int i = 0; i < out.rows; ++i) {
        for (int j = 0; j < a->val.cols; ++j) out(i, j) = a->val(i, j);
        for (int j = 0; j < b->val.cols; ++j) out(i, a->val.cols + j) = b->val(i, j);
    }
    return record(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node& n) {
        const int ca = pa->val.cols;
        if (pa->requires_grad) {
            Mat& g = pa->ensure_grad();
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < ca; ++j) g(i, j) += n.grad(i, j);
        }
        if (pb->requires_grad) {
            Mat& g = pb->ensure_grad();
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) g(i, j) += n.grad(i, ca + j);
        }
    });
}

Var concat_rows(const Var& a, const Var& b) {
    if (a->val.cols != b->val.cols) throw std::invalid_argument("concat_rows: col mismatch");
    Mat out(a->val.rows + b->val.rows, a->val.cols);
    std::copy(a->val.v.begin(), a->val.v.end(), out.v.begin());
    std::copy(b->val.v.begin(), b->val.v.end(), out.v.begin() + a->val.v.size());
    return record(std::move(out), {a, b}, [pa = a.get(), pb = b.get()](Node& n) {
        const size_t na = pa->val.v.size();
        if (pa->requires_grad) {
            Mat& g = pa->ensure_grad();
            for (size_t i = 0; i < na; ++i) g.v[i] += n.grad.v[i];
        }
        if (pb->requires_grad) {
            Mat& g = pb->ensure_grad();
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += n.grad.v[na + i];
        }
    });
}

Var slice_cols(const Var& a, int c0, int c1) {
    if (c0 < 0 || c1 > a->val.cols || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range");
    Mat out(a->val.rows, c1 - c0);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) = a->val(i, c0 + j);
    return record(std::move(out), {a}, [pa = a.get(), c0](Node& n) {
        Mat& g = pa->ensure_grad();
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) g(i, c0 + j) += n.grad(i, j);
    });
}

namespace {
double stable_sigmoid(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

Var sigmoid(const Var& a) {
    Mat out = a->val;
    for (double& x : out.v) x = stable_sigmoid(x);
    return record(std::move(out), {a}, [pa = a.get()](Node& n) {
        Mat& g = pa->ensure_grad();
        for (size_t i = 0; i < g.v.size(); ++i) {
            const double y = n.val.v[i];
            g.v[i] += n.grad.v[i] * y * (1.0 - y);
        }
    });
}

Var tanh_act(const Var& a) {
    Mat out = a->val;
    for (double& x : out.v) x = std::tanh(x);
    return record(std::move(out), {a}, [pa = a.get()](Node& n) {
        Mat& g = pa->ensure_grad();
        for (size_t i = 0; i < g.v.size(); ++i) {
            const double y = n.val.v[i];
            g.v[i] += n.grad.v[i] * (1.0 - y * y);
        }
    });
}

Var elu(const Var& a) {
    Mat out = a->val;
    for (double& x : out.v) x = x > 0.0 ? x : std::expm1(x);
    return record(std::move(out), {a}, [pa = a.get()](Node& n) {
        Mat& g = pa->ensure_grad();
        for (size_t i = 0; i < g.v.size(); ++i) {
            const double d = pa->val.v[i] > 0.0 ? 1.0 : n.val.v[i] + 1.0;
            g.v[i] += n.grad.v[i] * d;
        }
    });
}

Var leaky_relu(const Var& a, double slope) {
    Mat out = a->val;
    for (double& x : out.v) x = x > 0.0 ? x : slope * x;
    return record(std::move(out), {a}, [pa = a.get(), slope](Node& n) {
        Mat& g = pa->ensure_grad();
        for (size_t i = 0; i < g.v.size(); ++i)
            g.v[i] += n.grad.v[i] * (pa->val.v[i] > 0.0 ? 1.0 : slope);
    });
}

Var signed_sqrt(const Var& a, double eps) {
    Mat out = a->val;
    for (double& x : out.v) {
        const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        x = s * std::sqrt(std::fabs(x) + eps);
    }
    return record(std::move(out), {a}, [pa = a.get(), eps](Node& n) {
        Mat& g = pa->ensure_grad();
        for (size_t i = 0; i < g.v.size(); ++i)
            g.v[i] += n.grad.v[i] * 0.5 / std::sqrt(std::fabs(pa->val.v[i]) + eps);
    });
}

Var row_l2norm(const Var& a, double eps) {
    Mat out = a->val;
    std::vector<double> norms(static_cast<size_t>(out.rows));
    for (int i = 0; i < out.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < out.cols; ++j) s += out(i, j) * out(i, j);
        const double nm = std::max(std::sqrt(s), eps);
        norms[static_cast<size_t>(i)] = nm;
        for (int j = 0; j < out.cols; ++j) out(i, j) /= nm;
    }
    return record(std::move(out), {a}, [pa = a.get(), norms = std::move(norms), eps](Node& n) {
        Mat& g = pa->ensure_grad();
        for (int i = 0; i < n.val.rows; ++i) {
            const double nm = norms[static_cast<size_t>(i)];
            double srow = 0.0;
            for (int j = 0; j < n.val.cols; ++j) srow += pa->val(i, j) * pa->val(i, j);
            if (std::sqrt(srow) <= eps) {
                for (int j = 0; j < n.val.cols; ++j) g(i, j) += n.grad(i, j) / eps;
            } else {
                double dot = 0.0;
                for (int j = 0; j < n.val.cols; ++j) dot += n.grad(i, j) * n.val(i, j);
                for (int j = 0; j < n.val.cols; ++j)
                    g(i, j) += (n.grad(i, j) - dot * n.val(i, j)) / nm;
            }
        }
    });
}

Var cross_entropy_logits(const Var& logits, int label) {
    if (logits->val.rows != 1) throw std::invalid_argument("cross_entropy_logits: expects a row");
    if (label < 0 || label >= logits->val.cols)
        throw std::invalid_argument("cross_entropy_logits: label out of range");
    const int n = logits->val.cols;
    double m = -HUGE_VAL;
    for (int j = 0; j < n; ++j) m = std::max(m, logits->val(0, j));
    double lse = 0.0;
    for (int j = 0; j < n; ++j) lse += std::exp(logits->val(0, j) - m);
    lse = m + std::log(lse);
    Mat out(1, 1);
    out(0, 0) = lse - logits->val(0, label);
    return record(std::move(out), {logits}, [pl = logits.get(), label, lse](Node& nd) {
        Mat& g = pl->ensure_grad();
        const double gs = nd.grad(0, 0);
        for (int j = 0; j < pl->val.cols; ++j) {
            double p = std::exp(pl->val(0, j) - lse);
            g(0, j) += gs * (p - (j == label ? 1.0 : 0.0));
        }
    });
}

Var embedding_rows(const Var& table, const std::vector<int>& ids) {
    for (int id : ids)
        if (id < 0 || id >= table->val.rows)
            throw std::invalid_argument("embedding_rows: id out of range");
    Mat out(static_cast<int>(ids.size()), table->val.cols);
    for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < out.cols; ++j) out(static_cast<int>(i), j) = table->val(ids[i], j);
    return record(std::move(out), {table}, [pt = table.get(), ids](Node& n) {
        Mat& g = pt->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < n.grad.cols; ++j)
                g(ids[i], j) += n.grad(static_cast<int>(i), j);
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    return add_rowvec(matmul_nt(x, w), b);
}

Var mean_all(const Var& a) {
    return smul(sum_all(a), 1.0 / static_cast<double>(a->val.size()));
}

void backward(const Var& root) {
    if (root->val.rows != 1 || root->val.cols != 1)
        throw std::invalid_argument("backward: root must be scalar");
    if (!root->requires_grad) return;

    static std::atomic<uint64_t> stamp_source{1};
    const uint64_t stamp = stamp_source.fetch_add(1);

    // Iterative post-order DFS over grad-requiring ancestry.
    std::vector<Node*> order;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    root->visit_stamp = stamp;
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && p->visit_stamp != stamp) {
                p->visit_stamp = stamp;
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Transient node grads start at zero for this pass; leaf grads accumulate
    // across passes until the caller clears them.
    for (Node* n : order)
        if (n->backprop) n->ensure_grad() = Mat(n->val.rows, n->val.cols);
    root->ensure_grad()(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

}  // namespace dualvgr::ad
