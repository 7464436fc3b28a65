#include "odevae/tape.hpp"

#include <algorithm>
#include <cmath>

namespace odevae::ad {

const Tensor& Var::value() const {
    if (!valid()) throw TensorError("Var: invalid handle");
    return tape->value(id);
}

Var Tape::leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), BackFn{}});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Tensor value, BackFn back) {
    nodes_.push_back(Node{std::move(value), std::move(back)});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(std::vector<Tensor>& adj, int id, const Tensor& g) {
    Tensor& slot = adj[static_cast<std::size_t>(id)];
    if (slot.size() == 0) {
        slot = g;
        return;
    }
    auto d = slot.data();
    auto s = g.data();
    for (int i = 0; i < slot.size(); ++i) d[static_cast<std::size_t>(i)] += s[static_cast<std::size_t>(i)];
}

GradResult Tape::backward(Var loss, const std::vector<Var>& params) {
    if (loss.tape != this) throw TensorError("backward: loss not on this tape");
    if (!value(loss.id).is_scalar()) throw TensorError("backward: loss must be scalar");
    for (const Var& p : params)
        if (p.tape != this) throw TensorError("backward: parameter not on this tape");

    std::vector<Tensor> adj(nodes_.size());
    adj[static_cast<std::size_t>(loss.id)] = Tensor::scalar(1.0);

    for (int id = loss.id; id >= 0; --id) {
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        const Tensor& g = adj[static_cast<std::size_t>(id)];
        if (g.size() == 0 || !node.back) continue;
        node.back(*this, g, adj);
    }

    GradResult out;
    out.loss = value(loss.id).item();
    out.grads.reserve(params.size());
    for (const Var& p : params) {
        Tensor& g = adj[static_cast<std::size_t>(p.id)];
        if (g.size() == 0) g = Tensor::zeros(p.value().shape());
        out.grads.push_back(std::move(g));
    }
    return out;
}

// ---- helpers ---------------------------------------------------------------

namespace {

void require_same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape)
        throw TensorError(std::string(op) + ": operands on different tapes");
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw TensorError(std::string(op) + ": shape mismatch " + Tensor::shape_str(a.shape()) +
                      " vs " + Tensor::shape_str(b.shape()));
}

/// Elementwise binary op with scalar broadcasting. dfa/dfb give local
/// derivatives per element as functions of (a_i, b_i).
template <class F, class Da, class Db>
Var binary_ew(const char* name, Var a, Var b, F f, Da dfa, Db dfb) {
    require_same_tape(a, b, name);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool a_scalar = av.is_scalar();
    const bool b_scalar = bv.is_scalar();
    if (!a_scalar && !b_scalar && !av.same_shape(bv)) shape_error(name, av, bv);

    const Tensor& big = a_scalar ? bv : av;
    Tensor out = Tensor::zeros(big.shape());
    for (int i = 0; i < out.size(); ++i) {
        const double x = a_scalar ? av.item() : av[i];
        const double y = b_scalar ? bv.item() : bv[i];
        out[i] = f(x, y);
    }

    const int aid = a.id, bid = b.id;
    return a.tape->push(std::move(out), [=](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        const Tensor& avv = t.value(aid);
        const Tensor& bvv = t.value(bid);
        Tensor ga = Tensor::zeros(avv.shape());
        Tensor gb = Tensor::zeros(bvv.shape());
        for (int i = 0; i < g.size(); ++i) {
            const double x = a_scalar ? avv.item() : avv[i];
            const double y = b_scalar ? bvv.item() : bvv[i];
            const double gi = g[i];
            ga[a_scalar ? 0 : i] += gi * dfa(x, y);
            gb[b_scalar ? 0 : i] += gi * dfb(x, y);
        }
        Tape::accumulate(adj, aid, ga);
        Tape::accumulate(adj, bid, gb);
    });
}

template <class F, class Df>
Var unary_ew(Var v, F f, Df df) {
    const Tensor& vv = v.value();
    Tensor out = Tensor::zeros(vv.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = f(vv[i]);
    const int vid = v.id;
    return v.tape->push(std::move(out), [=](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        const Tensor& x = t.value(vid);
        Tensor gv = Tensor::zeros(x.shape());
        for (int i = 0; i < g.size(); ++i) gv[i] = g[i] * df(x[i]);
        Tape::accumulate(adj, vid, gv);
    });
}

}  // namespace

// ---- ops -------------------------------------------------------------------

Var add(Var a, Var b) {
    return binary_ew("add", a, b, [](double x, double y) { return x + y; },
                     [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary_ew("sub", a, b, [](double x, double y) { return x - y; },
                     [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary_ew("mul", a, b, [](double x, double y) { return x * y; },
                     [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var div(Var a, Var b) {
    return binary_ew("div", a, b, [](double x, double y) { return x / y; },
                     [](double, double y) { return 1.0 / y; },
                     [](double x, double y) { return -x / (y * y); });
}

Var matmul(Var a, Var b) {
    require_same_tape(a, b, "matmul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.rank() != 2) shape_error("matmul (lhs must be rank 2)", A, B);
    if (B.rank() != 1 && B.rank() != 2) shape_error("matmul (rhs must be rank 1 or 2)", A, B);
    const int r = A.shape()[0];
    const int k = A.shape()[1];
    const bool vec = B.rank() == 1;
    const int bk = B.shape()[0];
    const int c = vec ? 1 : B.shape()[1];
    if (k != bk) shape_error("matmul (inner dimensions)", A, B);

    Tensor out = vec ? Tensor::zeros({r}) : Tensor::zeros({r, c});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
            double s = 0.0;
            for (int l = 0; l < k; ++l) s += A.at(i, l) * B[l * c + j];
            out[i * c + j] = s;
        }

    const int aid = a.id, bid = b.id;
    return a.tape->push(std::move(out), [=](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        const Tensor& Av = t.value(aid);
        const Tensor& Bv = t.value(bid);
        Tensor gA = Tensor::zeros(Av.shape());
        Tensor gB = Tensor::zeros(Bv.shape());
        // dA = g * B^T, dB = A^T * g
        for (int i = 0; i < r; ++i)
            for (int l = 0; l < k; ++l) {
                double s = 0.0;
                for (int j = 0; j < c; ++j) s += g[i * c + j] * Bv[l * c + j];
                gA.at(i, l) = s;
            }
        for (int l = 0; l < k; ++l)
            for (int j = 0; j < c; ++j) {
                double s = 0.0;
                for (int i = 0; i < r; ++i) s += Av.at(i, l) * g[i * c + j];
                gB[l * c + j] = s;
            }
        Tape::accumulate(adj, aid, gA);
        Tape::accumulate(adj, bid, gB);
    });
}

Var tanh(Var v) {
    return unary_ew(v, [](double x) { return std::tanh(x); },
                    [](double x) { const double t = std::tanh(x); return 1.0 - t * t; });
}

Var sigmoid(Var v) {
    return unary_ew(v, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double x) {
                        const double s = 1.0 / (1.0 + std::exp(-x));
                        return s * (1.0 - s);
                    });
}

Var exp(Var v) {
    return unary_ew(v, [](double x) { return std::exp(x); },
                    [](double x) { return std::exp(x); });
}

Var log(Var v) {
    return unary_ew(v, [](double x) { return std::log(x); },
                    [](double x) { return 1.0 / x; });
}

Var square(Var v) {
    return unary_ew(v, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sum(Var v) {
    const Tensor& vv = v.value();
    double s = 0.0;
    for (int i = 0; i < vv.size(); ++i) s += vv[i];
    const int vid = v.id;
    return v.tape->push(Tensor::scalar(s), [=](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        Tensor gv = Tensor::zeros(t.value(vid).shape());
        for (int i = 0; i < gv.size(); ++i) gv[i] = g.item();
        Tape::accumulate(adj, vid, gv);
    });
}

Var mean(Var v) {
    const int n = v.value().size();
    if (n == 0) throw TensorError("mean: empty tensor");
    return scale(sum(v), 1.0 / n);
}

Var scale(Var v, double c) {
    return unary_ew(v, [c](double x) { return c * x; }, [c](double) { return c; });
}

Var shift(Var v, double c) {
    return unary_ew(v, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Var slice(Var v, int i) {
    const Tensor& vv = v.value();
    if (vv.rank() != 1) throw TensorError("slice: expects rank-1 tensor");
    if (i < 0 || i >= vv.size()) throw TensorError("slice: index out of range");
    const int vid = v.id;
    return v.tape->push(Tensor::scalar(vv[i]), [=](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        Tensor gv = Tensor::zeros(t.value(vid).shape());
        gv[i] = g.item();
        Tape::accumulate(adj, vid, gv);
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw TensorError("concat: empty input");
    Tape* tape = parts[0].tape;
    std::vector<double> vals;
    std::vector<int> offsets;
    std::vector<int> sizes;
    std::vector<int> ids;
    for (const Var& p : parts) {
        if (p.tape != tape) throw TensorError("concat: operands on different tapes");
        const Tensor& pv = p.value();
        if (pv.rank() > 1) throw TensorError("concat: parts must be scalars or rank-1");
        offsets.push_back(static_cast<int>(vals.size()));
        sizes.push_back(pv.size());
        ids.push_back(p.id);
        for (int i = 0; i < pv.size(); ++i) vals.push_back(pv[i]);
    }
    return tape->push(Tensor::vector(std::move(vals)),
                      [=](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
                          for (std::size_t p = 0; p < ids.size(); ++p) {
                              Tensor gp = Tensor::zeros(t.value(ids[p]).shape());
                              for (int i = 0; i < sizes[p]; ++i) gp[i] = g[offsets[p] + i];
                              Tape::accumulate(adj, ids[p], gp);
                          }
                      });
}

Var reshape(Var v, std::vector<int> shape) {
    const Tensor& vv = v.value();
    if (Tensor::shape_size(shape) != vv.size()) throw TensorError("reshape: size mismatch");
    std::vector<double> vals(vv.data().begin(), vv.data().end());
    const int vid = v.id;
    return v.tape->push(Tensor(shape, std::move(vals)),
                        [=](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
                            Tensor gv = Tensor::zeros(t.value(vid).shape());
                            for (int i = 0; i < gv.size(); ++i) gv[i] = g[i];
                            Tape::accumulate(adj, vid, gv);
                        });
}

Var sqnorm(Var v) { return sum(square(v)); }

// ---- finite differences ----------------------------------------------------

FiniteDiffReport finite_diff_check(
    const std::function<Var(Tape&, const std::vector<Var>&)>& f,
    const std::vector<Tensor>& params, double step, double tol) {
    if (step <= 0.0) throw TensorError("finite_diff_check: step must be positive");

    auto eval = [&](const std::vector<Tensor>& p) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(p.size());
        for (const Tensor& t : p) vars.push_back(tape.leaf(t));
        return f(tape, vars).value().item();
    };

    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& t : params) vars.push_back(tape.leaf(t));
    GradResult gr = tape.backward(f(tape, vars), vars);

    FiniteDiffReport report;
    report.pass = true;
    std::vector<Tensor> work = params;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (int j = 0; j < params[k].size(); ++j) {
            const double orig = work[k][j];
            work[k][j] = orig + step;
            const double fp = eval(work);
            work[k][j] = orig - step;
            const double fm = eval(work);
            work[k][j] = orig;
            const double fd = (fp - fm) / (2.0 * step);
            const double an = gr.grads[k][j];
            const double denom = std::max(std::abs(fd), std::abs(an));
            // absolute fallback for near-zero gradients
            double err;
            if (denom < 1e-8) {
                err = std::abs(fd - an);
            } else {
                err = std::abs(fd - an) / denom;
            }
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst = "param " + std::to_string(k) + ", entry " + std::to_string(j);
            }
        }
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

}  // namespace odevae::ad
