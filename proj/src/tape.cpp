#include "navrep/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "navrep/error.hpp"
#include "navrep/kernels.hpp"

namespace navrep {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_same_tape(Var a, Var b) {
    require(a.tape != nullptr && a.tape == b.tape, "ops require vars on the same tape");
}

}  // namespace

const Tensor& Var::val() const { return tape->value(idx); }

double Var::scalar() const {
    const Tensor& t = val();
    require(t.numel() == 1, "Var::scalar on non-scalar tensor " + t.shape_str());
    return t.data[0];
}

Var Tape::emplace(Tensor value, std::function<void(Tape&)> back, const char* op_name) {
    if (!value.all_finite())
        throw NumericsError(std::string("non-finite values produced by op '") + op_name + "'");
    Node n;
    n.grad = Tensor::zeros(value.shape);
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) { return emplace(std::move(value), nullptr, "constant"); }

Var Tape::leaf(const Tensor& value, Tensor* sink) {
    Var v = emplace(value, nullptr, "leaf");
    if (sink) {
        require(sink->shape == value.shape, "leaf gradient sink shape mismatch");
        sinks_.emplace_back(v.idx, sink);
    }
    return v;
}

void Tape::backward(Var root) {
    require(root.tape == this, "backward: root from another tape");
    Tensor& g = grad(root.idx);
    require(g.numel() == 1, "backward: loss root must be scalar, got " + value(root.idx).shape_str());
    g.data[0] = 1.0;
    for (int i = root.idx; i >= 0; --i) {
        auto& node = nodes_[static_cast<std::size_t>(i)];
        if (node.back) node.back(*this);
    }
    for (auto& [idx, sink] : sinks_) {
        const Tensor& src = grad(idx);
        kern::add(src.data.size(), src.data.data(), sink->data.data(), sink->data.data());
    }
}

// ---- elementwise ----

namespace {

// Ops need their own output index inside the backward closure; the node is
// created first with an indirect closure, then the real one is patched in.
template <typename MakeBack>
Var make_op(Tape& tape, Tensor out, MakeBack make_back, const char* name) {
    auto slot = std::make_shared<std::function<void(Tape&)>>();
    Var v = tape.emplace(std::move(out), [slot](Tape& t) { (*slot)(t); }, name);
    *slot = make_back(v.idx);
    return v;
}

}  // namespace

Var add(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    require(ta.same_shape(tb), "add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = Tensor::zeros(ta.shape);
    kern::add(out.data.size(), ta.data.data(), tb.data.data(), out.data.data());
    int ia = a.idx, ib = b.idx;
    return make_op(*a.tape, std::move(out), [ia, ib](int o) {
        return [ia, ib, o](Tape& t) {
            const Tensor& g = t.grad(o);
            kern::add(g.data.size(), g.data.data(), t.grad(ia).data.data(), t.grad(ia).data.data());
            kern::add(g.data.size(), g.data.data(), t.grad(ib).data.data(), t.grad(ib).data.data());
        };
    }, "add");
}

Var sub(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    require(ta.same_shape(tb), "sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = Tensor::zeros(ta.shape);
    kern::sub(out.data.size(), ta.data.data(), tb.data.data(), out.data.data());
    int ia = a.idx, ib = b.idx;
    return make_op(*a.tape, std::move(out), [ia, ib](int o) {
        return [ia, ib, o](Tape& t) {
            const Tensor& g = t.grad(o);
            kern::add(g.data.size(), g.data.data(), t.grad(ia).data.data(), t.grad(ia).data.data());
            kern::axpy(g.data.size(), -1.0, g.data.data(), t.grad(ib).data.data());
        };
    }, "sub");
}

Var mul(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    require(ta.same_shape(tb), "mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = Tensor::zeros(ta.shape);
    kern::mul(out.data.size(), ta.data.data(), tb.data.data(), out.data.data());
    int ia = a.idx, ib = b.idx;
    return make_op(*a.tape, std::move(out), [ia, ib](int o) {
        return [ia, ib, o](Tape& t) {
            const Tensor& g = t.grad(o);
            const Tensor& va = t.value(ia);
            const Tensor& vb = t.value(ib);
            Tensor tmp = Tensor::zeros(g.shape);
            kern::mul(g.data.size(), g.data.data(), vb.data.data(), tmp.data.data());
            kern::add(g.data.size(), tmp.data.data(), t.grad(ia).data.data(), t.grad(ia).data.data());
            kern::mul(g.data.size(), g.data.data(), va.data.data(), tmp.data.data());
            kern::add(g.data.size(), tmp.data.data(), t.grad(ib).data.data(), t.grad(ib).data.data());
        };
    }, "mul");
}

Var div(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    require(ta.same_shape(tb), "div: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] / tb.data[i];
    int ia = a.idx, ib = b.idx;
    return make_op(*a.tape, std::move(out), [ia, ib](int o) {
        return [ia, ib, o](Tape& t) {
            const Tensor& g = t.grad(o);
            const Tensor& vb = t.value(ib);
            const Tensor& vo = t.value(o);
            Tensor& ga = t.grad(ia);
            Tensor& gb = t.grad(ib);
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                ga.data[i] += g.data[i] / vb.data[i];
                gb.data[i] -= g.data[i] * vo.data[i] / vb.data[i];
            }
        };
    }, "div");
}

Var scale(Var a, double c) {
    const Tensor& ta = a.val();
    Tensor out = Tensor::zeros(ta.shape);
    kern::scale(out.data.size(), c, ta.data.data(), out.data.data());
    int ia = a.idx;
    return make_op(*a.tape, std::move(out), [ia, c](int o) {
        return [ia, c, o](Tape& t) {
            const Tensor& g = t.grad(o);
            kern::axpy(g.data.size(), c, g.data.data(), t.grad(ia).data.data());
        };
    }, "scale");
}

Var neg(Var a) { return scale(a, -1.0); }

namespace {

template <typename F, typename DF>
Var unary_elementwise(Var a, F f, DF df_from_xy, const char* name) {
    const Tensor& ta = a.val();
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(ta.data[i]);
    int ia = a.idx;
    return make_op(*a.tape, std::move(out), [ia, df_from_xy](int o) {
        return [ia, df_from_xy, o](Tape& t) {
            const Tensor& g = t.grad(o);
            const Tensor& x = t.value(ia);
            const Tensor& y = t.value(o);
            Tensor& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.data.size(); ++i)
                ga.data[i] += g.data[i] * df_from_xy(x.data[i], y.data[i]);
        };
    }, name);
}

}  // namespace

Var relu(Var a) {
    return unary_elementwise(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

Var tanh_(Var a) {
    return unary_elementwise(
        a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Var sigmoid(Var a) {
    return unary_elementwise(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var sqrt_(Var a) {
    return unary_elementwise(
        a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; }, "sqrt");
}

Var exp_(Var a) {
    return unary_elementwise(
        a, [](double x) { return std::exp(x); },
        [](double, double y) { return y; }, "exp");
}

Var log_(Var a) {
    return unary_elementwise(
        a, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; }, "log");
}

Var dropout(Var a, double rate, Rng& rng) {
    require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1)");
    if (rate == 0.0) return a;
    const Tensor& ta = a.val();
    Tensor mask = Tensor::zeros(ta.shape);
    const double keep = 1.0 - rate;
    for (auto& m : mask.data) m = rng.coin(keep) ? 1.0 / keep : 0.0;
    Var mv = a.tape->constant(std::move(mask));
    return mul(a, mv);
}

// ---- matrix ops ----

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    require(ta.rank() == 2 && tb.rank() == 2, "matmul requires rank-2 operands");
    require(ta.shape[1] == tb.shape[0], "matmul: inner dims disagree " + ta.shape_str() + " x " + tb.shape_str());
    const std::int64_t n = ta.shape[0], k = ta.shape[1], m = tb.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (std::int64_t i = 0; i < n; ++i) {
        double* ci = out.row_ptr(i);
        for (std::int64_t l = 0; l < k; ++l)
            kern::axpy(static_cast<std::size_t>(m), ta.at(i, l), tb.row_ptr(l), ci);
    }
    int ia = a.idx, ib = b.idx;
    return make_op(*a.tape, std::move(out), [ia, ib, n, k, m](int o) {
        return [ia, ib, n, k, m, o](Tape& t) {
            const Tensor& g = t.grad(o);
            const Tensor& va = t.value(ia);
            const Tensor& vb = t.value(ib);
            Tensor& ga = t.grad(ia);
            Tensor& gb = t.grad(ib);
            for (std::int64_t i = 0; i < n; ++i) {
                const double* gi = g.row_ptr(i);
                for (std::int64_t l = 0; l < k; ++l) {
                    ga.at(i, l) += kern::dot(static_cast<std::size_t>(m), gi, vb.row_ptr(l));
                    kern::axpy(static_cast<std::size_t>(m), va.at(i, l), gi, gb.row_ptr(l));
                }
            }
        };
    }, "matmul");
}

Var matvec(Var a, Var x) {
    require_same_tape(a, x);
    const Tensor& ta = a.val();
    const Tensor& tx = x.val();
    require(ta.rank() == 2 && tx.rank() == 1, "matvec requires [n,m] and [m]");
    require(ta.shape[1] == tx.shape[0], "matvec: dims disagree " + ta.shape_str() + " x " + tx.shape_str());
    const std::int64_t n = ta.shape[0], m = ta.shape[1];
    Tensor out = Tensor::zeros({n});
    for (std::int64_t i = 0; i < n; ++i)
        out.at(i) = kern::dot(static_cast<std::size_t>(m), ta.row_ptr(i), tx.data.data());
    int ia = a.idx, ix = x.idx;
    return make_op(*a.tape, std::move(out), [ia, ix, n, m](int o) {
        return [ia, ix, n, m, o](Tape& t) {
            const Tensor& g = t.grad(o);
            const Tensor& va = t.value(ia);
            const Tensor& vx = t.value(ix);
            Tensor& ga = t.grad(ia);
            Tensor& gx = t.grad(ix);
            for (std::int64_t i = 0; i < n; ++i) {
                kern::axpy(static_cast<std::size_t>(m), g.at(i), vx.data.data(), ga.row_ptr(i));
                kern::axpy(static_cast<std::size_t>(m), g.at(i), va.row_ptr(i), gx.data.data());
            }
        };
    }, "matvec");
}

Var vecmat(Var x, Var a) {
    require_same_tape(x, a);
    const Tensor& tx = x.val();
    const Tensor& ta = a.val();
    require(tx.rank() == 1 && ta.rank() == 2, "vecmat requires [n] and [n,m]");
    require(tx.shape[0] == ta.shape[0], "vecmat: dims disagree " + tx.shape_str() + " x " + ta.shape_str());
    const std::int64_t n = ta.shape[0], m = ta.shape[1];
    Tensor out = Tensor::zeros({m});
    for (std::int64_t i = 0; i < n; ++i)
        kern::axpy(static_cast<std::size_t>(m), tx.at(i), ta.row_ptr(i), out.data.data());
    int ix = x.idx, ia = a.idx;
    return make_op(*x.tape, std::move(out), [ix, ia, n, m](int o) {
        return [ix, ia, n, m, o](Tape& t) {
            const Tensor& g = t.grad(o);
            const Tensor& vx = t.value(ix);
            const Tensor& va = t.value(ia);
            Tensor& gx = t.grad(ix);
            Tensor& ga = t.grad(ia);
            for (std::int64_t i = 0; i < n; ++i) {
                gx.at(i) += kern::dot(static_cast<std::size_t>(m), va.row_ptr(i), g.data.data());
                kern::axpy(static_cast<std::size_t>(m), vx.at(i), g.data.data(), ga.row_ptr(i));
            }
        };
    }, "vecmat");
}

Var transpose(Var a) {
    const Tensor& ta = a.val();
    require(ta.rank() == 2, "transpose requires rank-2");
    const std::int64_t n = ta.shape[0], m = ta.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) out.at(j, i) = ta.at(i, j);
    int ia = a.idx;
    return make_op(*a.tape, std::move(out), [ia, n, m](int o) {
        return [ia, n, m, o](Tape& t) {
            const Tensor& g = t.grad(o);
            Tensor& ga = t.grad(ia);
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < m; ++j) ga.at(i, j) += g.at(j, i);
        };
    }, "transpose");
}

Var linear(Var x, Var w, std::optional<Var> b) {
    require_same_tape(x, w);
    const Tensor& tx = x.val();
    const Tensor& tw = w.val();
    require(tw.rank() == 2, "linear: weight must be [out,in]");
    const std::int64_t in = tw.shape[1], out_dim = tw.shape[0];
    const bool vector_input = tx.rank() == 1;
    const std::int64_t n = vector_input ? 1 : tx.shape[0];
    require(tx.cols() == in, "linear: input dim " + tx.shape_str() + " does not match weight " + tw.shape_str());
    const double* bias = nullptr;
    if (b) {
        require_same_tape(x, *b);
        require(b->val().rank() == 1 && b->val().shape[0] == out_dim, "linear: bias dim mismatch");
        bias = b->val().data.data();
    }
    Tensor out = vector_input ? Tensor::zeros({out_dim}) : Tensor::zeros({n, out_dim});
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xi = tx.data.data() + i * in;
        double* yi = out.data.data() + i * out_dim;
        for (std::int64_t j = 0; j < out_dim; ++j)
            yi[j] = kern::dot(static_cast<std::size_t>(in), xi, tw.row_ptr(j)) + (bias ? bias[j] : 0.0);
    }
    int ix = x.idx, iw = w.idx, ib = b ? b->idx : -1;
    return make_op(*x.tape, std::move(out), [ix, iw, ib, n, in, out_dim](int o) {
        return [ix, iw, ib, n, in, out_dim, o](Tape& t) {
            const Tensor& g = t.grad(o);
            const Tensor& vx = t.value(ix);
            const Tensor& vw = t.value(iw);
            Tensor& gx = t.grad(ix);
            Tensor& gw = t.grad(iw);
            for (std::int64_t i = 0; i < n; ++i) {
                const double* gi = g.data.data() + i * out_dim;
                const double* xi = vx.data.data() + i * in;
                double* gxi = gx.data.data() + i * in;
                for (std::int64_t j = 0; j < out_dim; ++j) {
                    kern::axpy(static_cast<std::size_t>(in), gi[j], vw.row_ptr(j), gxi);
                    kern::axpy(static_cast<std::size_t>(in), gi[j], xi, gw.row_ptr(j));
                }
                if (ib >= 0) kern::add(static_cast<std::size_t>(out_dim), gi, t.grad(ib).data.data(), t.grad(ib).data.data());
            }
        };
    }, "linear");
}

// ---- gather / structure ----

Var embed(Var table, const std::vector<int>& ids) {
    const Tensor& tt = table.val();
    require(tt.rank() == 2, "embed: table must be [V,d]");
    const std::int64_t v = tt.shape[0], d = tt.shape[1];
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(ids.size()), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && ids[i] < v, "embed: id out of range");
        kern::add(static_cast<std::size_t>(d), tt.row_ptr(ids[i]), out.row_ptr(static_cast<std::int64_t>(i)),
                  out.row_ptr(static_cast<std::int64_t>(i)));
    }
    int it = table.idx;
    auto ids_copy = ids;
    return make_op(*table.tape, std::move(out), [it, ids_copy, d](int o) {
        return [it, ids_copy, d, o](Tape& t) {
            const Tensor& g = t.grad(o);
            Tensor& gt = t.grad(it);
            for (std::size_t i = 0; i < ids_copy.size(); ++i)
                kern::add(static_cast<std::size_t>(d), g.row_ptr(static_cast<std::int64_t>(i)),
                          gt.row_ptr(ids_copy[i]), gt.row_ptr(ids_copy[i]));
        };
    }, "embed");
}

Var gather_rows(Var a, const std::vector<int>& indices) {
    const Tensor& ta = a.val();
    require(ta.rank() == 2, "gather_rows requires rank-2");
    const std::int64_t n = ta.shape[0], m = ta.shape[1];
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(indices.size()), m});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] >= 0 && indices[i] < n, "gather_rows: index out of range");
        kern::add(static_cast<std::size_t>(m), ta.row_ptr(indices[i]), out.row_ptr(static_cast<std::int64_t>(i)),
                  out.row_ptr(static_cast<std::int64_t>(i)));
    }
    int ia = a.idx;
    auto idx_copy = indices;
    return make_op(*a.tape, std::move(out), [ia, idx_copy, m](int o) {
        return [ia, idx_copy, m, o](Tape& t) {
            const Tensor& g = t.grad(o);
            Tensor& ga = t.grad(ia);
            for (std::size_t i = 0; i < idx_copy.size(); ++i)
                kern::add(static_cast<std::size_t>(m), g.row_ptr(static_cast<std::int64_t>(i)),
                          ga.row_ptr(idx_copy[i]), ga.row_ptr(idx_copy[i]));
        };
    }, "gather_rows");
}

Var row(Var a, std::int64_t r) {
    const Tensor& ta = a.val();
    require(ta.rank() == 2, "row requires rank-2");
    require(r >= 0 && r < ta.shape[0], "row: index out of range");
    const std::int64_t m = ta.shape[1];
    Tensor out({m}, std::vector<double>(ta.row_ptr(r), ta.row_ptr(r) + m));
    int ia = a.idx;
    return make_op(*a.tape, std::move(out), [ia, r, m](int o) {
        return [ia, r, m, o](Tape& t) {
            const Tensor& g = t.grad(o);
            Tensor& ga = t.grad(ia);
            kern::add(static_cast<std::size_t>(m), g.data.data(), ga.row_ptr(r), ga.row_ptr(r));
        };
    }, "row");
}

Var slice(Var a, std::int64_t offset, std::int64_t len) {
    const Tensor& ta = a.val();
    require(ta.rank() == 1, "slice requires rank-1");
    require(offset >= 0 && len >= 0 && offset + len <= ta.shape[0], "slice out of range");
    Tensor out({len}, std::vector<double>(ta.data.begin() + offset, ta.data.begin() + offset + len));
    int ia = a.idx;
    return make_op(*a.tape, std::move(out), [ia, offset, len](int o) {
        return [ia, offset, len, o](Tape& t) {
            const Tensor& g = t.grad(o);
            Tensor& ga = t.grad(ia);
            kern::add(static_cast<std::size_t>(len), g.data.data(), ga.data.data() + offset,
                      ga.data.data() + offset);
        };
    }, "slice");
}

Var concat_vec(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_vec: empty input");
    Tape* tape = parts[0].tape;
    std::int64_t total = 0;
    for (const Var& p : parts) {
        require(p.tape == tape, "concat_vec: vars on different tapes");
        require(p.val().rank() == 1, "concat_vec requires rank-1 parts");
        total += p.val().shape[0];
    }
    Tensor out = Tensor::zeros({total});
    std::int64_t off = 0;
    std::vector<int> idxs;
    std::vector<std::int64_t> offs;
    for (const Var& p : parts) {
        const Tensor& tp = p.val();
        std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + off);
        idxs.push_back(p.idx);
        offs.push_back(off);
        off += tp.shape[0];
    }
    return make_op(*tape, std::move(out), [idxs, offs](int o) {
        return [idxs, offs, o](Tape& t) {
            const Tensor& g = t.grad(o);
            for (std::size_t i = 0; i < idxs.size(); ++i) {
                Tensor& gp = t.grad(idxs[i]);
                kern::add(gp.data.size(), g.data.data() + offs[i], gp.data.data(), gp.data.data());
            }
        };
    }, "concat_vec");
}

Var stack_rows(const std::vector<Var>& rows_in) {
    require(!rows_in.empty(), "stack_rows: empty input");
    Tape* tape = rows_in[0].tape;
    const std::int64_t m = rows_in[0].val().shape[0];
    for (const Var& r : rows_in) {
        require(r.tape == tape, "stack_rows: vars on different tapes");
        require(r.val().rank() == 1 && r.val().shape[0] == m, "stack_rows: row shape mismatch");
    }
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(rows_in.size()), m});
    std::vector<int> idxs;
    for (std::size_t i = 0; i < rows_in.size(); ++i) {
        const Tensor& tr = rows_in[i].val();
        std::copy(tr.data.begin(), tr.data.end(), out.row_ptr(static_cast<std::int64_t>(i)));
        idxs.push_back(rows_in[i].idx);
    }
    return make_op(*tape, std::move(out), [idxs, m](int o) {
        return [idxs, m, o](Tape& t) {
            const Tensor& g = t.grad(o);
            for (std::size_t i = 0; i < idxs.size(); ++i) {
                Tensor& gr = t.grad(idxs[i]);
                kern::add(static_cast<std::size_t>(m), g.row_ptr(static_cast<std::int64_t>(i)), gr.data.data(),
                          gr.data.data());
            }
        };
    }, "stack_rows");
}

Var vstack(const std::vector<Var>& blocks) {
    require(!blocks.empty(), "vstack: empty input");
    Tape* tape = blocks[0].tape;
    const std::int64_t m = blocks[0].val().cols();
    std::int64_t total = 0;
    for (const Var& b : blocks) {
        require(b.tape == tape, "vstack: vars on different tapes");
        require(b.val().rank() == 2 && b.val().shape[1] == m, "vstack: column mismatch");
        total += b.val().shape[0];
    }
    Tensor out = Tensor::zeros({total, m});
    std::vector<int> idxs;
    std::vector<std::int64_t> offs;
    std::int64_t off = 0;
    for (const Var& b : blocks) {
        const Tensor& tb = b.val();
        std::copy(tb.data.begin(), tb.data.end(), out.data.begin() + off * m);
        idxs.push_back(b.idx);
        offs.push_back(off);
        off += tb.shape[0];
    }
    return make_op(*tape, std::move(out), [idxs, offs, m](int o) {
        return [idxs, offs, m, o](Tape& t) {
            const Tensor& g = t.grad(o);
            for (std::size_t i = 0; i < idxs.size(); ++i) {
                Tensor& gb = t.grad(idxs[i]);
                kern::add(gb.data.size(), g.data.data() + offs[i] * m, gb.data.data(), gb.data.data());
            }
        };
    }, "vstack");
}

Var hstack(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    require(ta.rank() == 2 && tb.rank() == 2 && ta.shape[0] == tb.shape[0], "hstack: row mismatch");
    const std::int64_t n = ta.shape[0], p = ta.shape[1], q = tb.shape[1];
    Tensor out = Tensor::zeros({n, p + q});
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy(ta.row_ptr(i), ta.row_ptr(i) + p, out.row_ptr(i));
        std::copy(tb.row_ptr(i), tb.row_ptr(i) + q, out.row_ptr(i) + p);
    }
    int ia = a.idx, ib = b.idx;
    return make_op(*a.tape, std::move(out), [ia, ib, n, p, q](int o) {
        return [ia, ib, n, p, q, o](Tape& t) {
            const Tensor& g = t.grad(o);
            Tensor& ga = t.grad(ia);
            Tensor& gb = t.grad(ib);
            for (std::int64_t i = 0; i < n; ++i) {
                kern::add(static_cast<std::size_t>(p), g.row_ptr(i), ga.row_ptr(i), ga.row_ptr(i));
                kern::add(static_cast<std::size_t>(q), g.row_ptr(i) + p, gb.row_ptr(i), gb.row_ptr(i));
            }
        };
    }, "hstack");
}

Var reshape(Var a, std::vector<std::int64_t> shape) {
    const Tensor& ta = a.val();
    require(shape_numel(shape) == ta.numel(), "reshape: element count mismatch");
    Tensor out(shape, ta.data);
    int ia = a.idx;
    return make_op(*a.tape, std::move(out), [ia](int o) {
        return [ia, o](Tape& t) {
            const Tensor& g = t.grad(o);
            Tensor& ga = t.grad(ia);
            kern::add(g.data.size(), g.data.data(), ga.data.data(), ga.data.data());
        };
    }, "reshape");
}

// ---- normalization / reductions ----

namespace {

void softmax_rows(const Tensor& x, Tensor& y, bool log_form) {
    const std::int64_t n = x.rows(), m = x.cols();
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xi = x.data.data() + i * m;
        double* yi = y.data.data() + i * m;
        const double mx = kern::max_value(static_cast<std::size_t>(m), xi);
        double s = 0.0;
        for (std::int64_t j = 0; j < m; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            s += yi[j];
        }
        if (log_form) {
            const double ls = std::log(s);
            for (std::int64_t j = 0; j < m; ++j) yi[j] = xi[j] - mx - ls;
        } else {
            for (std::int64_t j = 0; j < m; ++j) yi[j] /= s;
        }
    }
}

Var softmax_lastaxis(Var a, bool log_form) {
    const Tensor& ta = a.val();
    Tensor out = Tensor::zeros(ta.shape);
    softmax_rows(ta, out, log_form);
    int ia = a.idx;
    const std::int64_t n = ta.rows(), m = ta.cols();
    const char* name = log_form ? "log_softmax" : "softmax";
    return make_op(*a.tape, std::move(out), [ia, n, m, log_form](int o) {
        return [ia, n, m, log_form, o](Tape& t) {
            const Tensor& g = t.grad(o);
            const Tensor& y = t.value(o);
            Tensor& ga = t.grad(ia);
            for (std::int64_t i = 0; i < n; ++i) {
                const double* gi = g.data.data() + i * m;
                const double* yi = y.data.data() + i * m;
                double* gai = ga.data.data() + i * m;
                if (log_form) {
                    const double gs = kern::sum(static_cast<std::size_t>(m), gi);
                    for (std::int64_t j = 0; j < m; ++j) gai[j] += gi[j] - std::exp(yi[j]) * gs;
                } else {
                    const double s = kern::dot(static_cast<std::size_t>(m), gi, yi);
                    for (std::int64_t j = 0; j < m; ++j) gai[j] += (gi[j] - s) * yi[j];
                }
            }
        };
    }, name);
}

}  // namespace

Var softmax(Var a, int axis) {
    const Tensor& ta = a.val();
    if (ta.rank() == 1 || axis == -1 || axis == 1) return softmax_lastaxis(a, false);
    require(axis == 0, "softmax: axis must be -1, 0 or 1");
    return transpose(softmax_lastaxis(transpose(a), false));
}

Var log_softmax(Var a, int axis) {
    const Tensor& ta = a.val();
    if (ta.rank() == 1 || axis == -1 || axis == 1) return softmax_lastaxis(a, true);
    require(axis == 0, "log_softmax: axis must be -1, 0 or 1");
    return transpose(softmax_lastaxis(transpose(a), true));
}

Var layer_norm(Var x, Var gain, Var bias) {
    require_same_tape(x, gain);
    require_same_tape(x, bias);
    const Tensor& tx = x.val();
    const std::int64_t n = tx.rows(), d = tx.cols();
    require(gain.val().rank() == 1 && gain.val().shape[0] == d, "layer_norm: gain dim mismatch");
    require(bias.val().rank() == 1 && bias.val().shape[0] == d, "layer_norm: bias dim mismatch");
    constexpr double kEps = 1e-5;
    Tensor out = Tensor::zeros(tx.shape);
    Tensor xhat = Tensor::zeros(tx.shape);   // stored for backward
    Tensor inv_sd = Tensor::zeros({n});
    const double* gv = gain.val().data.data();
    const double* bv = bias.val().data.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xi = tx.data.data() + i * d;
        const double mu = kern::sum(static_cast<std::size_t>(d), xi) / static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= static_cast<double>(d);
        const double isd = 1.0 / std::sqrt(var + kEps);
        inv_sd.at(i) = isd;
        double* hi = xhat.data.data() + i * d;
        double* oi = out.data.data() + i * d;
        for (std::int64_t j = 0; j < d; ++j) {
            hi[j] = (xi[j] - mu) * isd;
            oi[j] = gv[j] * hi[j] + bv[j];
        }
    }
    int ix = x.idx, ig = gain.idx, ib = bias.idx;
    auto xhat_p = std::make_shared<Tensor>(std::move(xhat));
    auto isd_p = std::make_shared<Tensor>(std::move(inv_sd));
    return make_op(*x.tape, std::move(out), [ix, ig, ib, n, d, xhat_p, isd_p](int o) {
        return [ix, ig, ib, n, d, xhat_p, isd_p, o](Tape& t) {
            const Tensor& g = t.grad(o);
            const Tensor& gv = t.value(ig);
            Tensor& gx = t.grad(ix);
            Tensor& gg = t.grad(ig);
            Tensor& gb = t.grad(ib);
            for (std::int64_t i = 0; i < n; ++i) {
                const double* gi = g.data.data() + i * d;
                const double* hi = xhat_p->data.data() + i * d;
                const double isd = isd_p->at(i);
                double mean_dh = 0.0, mean_dh_h = 0.0;
                for (std::int64_t j = 0; j < d; ++j) {
                    const double dh = gi[j] * gv.data[static_cast<std::size_t>(j)];
                    mean_dh += dh;
                    mean_dh_h += dh * hi[j];
                    gg.data[static_cast<std::size_t>(j)] += gi[j] * hi[j];
                    gb.data[static_cast<std::size_t>(j)] += gi[j];
                }
                mean_dh /= static_cast<double>(d);
                mean_dh_h /= static_cast<double>(d);
                double* gxi = gx.data.data() + i * d;
                for (std::int64_t j = 0; j < d; ++j) {
                    const double dh = gi[j] * gv.data[static_cast<std::size_t>(j)];
                    gxi[j] += isd * (dh - mean_dh - hi[j] * mean_dh_h);
                }
            }
        };
    }, "layer_norm");
}

Var sum(Var a) {
    const Tensor& ta = a.val();
    Tensor out = Tensor::scalar(kern::sum(ta.data.size(), ta.data.data()));
    int ia = a.idx;
    return make_op(*a.tape, std::move(out), [ia](int o) {
        return [ia, o](Tape& t) {
            const double g = t.grad(o).data[0];
            Tensor& ga = t.grad(ia);
            for (auto& x : ga.data) x += g;
        };
    }, "sum");
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.val().numel())); }

Var mean_rows(Var a) {
    const Tensor& ta = a.val();
    require(ta.rank() == 2, "mean_rows requires rank-2");
    const std::int64_t n = ta.shape[0], m = ta.shape[1];
    Tensor out = Tensor::zeros({m});
    for (std::int64_t i = 0; i < n; ++i)
        kern::axpy(static_cast<std::size_t>(m), 1.0 / static_cast<double>(n), ta.row_ptr(i), out.data.data());
    int ia = a.idx;
    return make_op(*a.tape, std::move(out), [ia, n, m](int o) {
        return [ia, n, m, o](Tape& t) {
            const Tensor& g = t.grad(o);
            Tensor& ga = t.grad(ia);
            for (std::int64_t i = 0; i < n; ++i)
                kern::axpy(static_cast<std::size_t>(m), 1.0 / static_cast<double>(n), g.data.data(), ga.row_ptr(i));
        };
    }, "mean_rows");
}

Var dot(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    require(ta.rank() == 1 && tb.rank() == 1 && ta.shape == tb.shape, "dot: requires equal-length vectors");
    Tensor out = Tensor::scalar(kern::dot(ta.data.size(), ta.data.data(), tb.data.data()));
    int ia = a.idx, ib = b.idx;
    return make_op(*a.tape, std::move(out), [ia, ib](int o) {
        return [ia, ib, o](Tape& t) {
            const double g = t.grad(o).data[0];
            const Tensor& va = t.value(ia);
            const Tensor& vb = t.value(ib);
            kern::axpy(vb.data.size(), g, vb.data.data(), t.grad(ia).data.data());
            kern::axpy(va.data.size(), g, va.data.data(), t.grad(ib).data.data());
        };
    }, "dot");
}

Var pick(Var a, std::int64_t index) {
    const Tensor& ta = a.val();
    require(index >= 0 && index < ta.numel(), "pick: index out of range");
    Tensor out = Tensor::scalar(ta.at(index));
    int ia = a.idx;
    return make_op(*a.tape, std::move(out), [ia, index](int o) {
        return [ia, index, o](Tape& t) { t.grad(ia).at(index) += t.grad(o).data[0]; };
    }, "pick");
}

Var norm(Var a) { return sqrt_(dot(a, a)); }

Var cosine_sim(Var a, Var b) {
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    require(ta.rank() == 1 && tb.rank() == 1 && ta.shape == tb.shape,
            "cosine_sim: requires equal-length vectors");
    const double na = kern::dot(ta.data.size(), ta.data.data(), ta.data.data());
    const double nb = kern::dot(tb.data.size(), tb.data.data(), tb.data.data());
    if (na == 0.0 || nb == 0.0) throw NumericsError("cosine_sim: zero-norm vector");
    return div(dot(a, b), mul(norm(a), norm(b)));
}

std::pair<Var, Var> lstm_step(Var input, Var h, Var c, Var wx, Var wh, Var bias) {
    const std::int64_t hidden = h.val().shape[0];
    require(wx.val().rank() == 2 && wx.val().shape[0] == 4 * hidden, "lstm_step: wx must be [4H,in]");
    require(wh.val().rank() == 2 && wh.val().shape[0] == 4 * hidden && wh.val().shape[1] == hidden,
            "lstm_step: wh must be [4H,H]");
    require(c.val().shape[0] == hidden, "lstm_step: cell state dim mismatch");
    Var z = add(linear(input, wx, std::nullopt), linear(h, wh, bias));
    Var in_gate = sigmoid(slice(z, 0, hidden));
    Var forget_gate = sigmoid(slice(z, hidden, hidden));
    Var candidate = tanh_(slice(z, 2 * hidden, hidden));
    Var out_gate = sigmoid(slice(z, 3 * hidden, hidden));
    Var c_next = add(mul(forget_gate, c), mul(in_gate, candidate));
    Var h_next = mul(out_gate, tanh_(c_next));
    return {h_next, c_next};
}

}  // namespace navrep
