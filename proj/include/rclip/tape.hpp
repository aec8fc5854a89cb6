#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "rclip/errors.hpp"
#include "rclip/kernels.hpp"
#include "rclip/tensor.hpp"

namespace rclip {

// Reverse-mode tape over dense tensors. Nodes are created in topological
// order; backward walks them in reverse. Gradients are accumulated only into
// nodes that require them, so frozen parameters cost nothing on the way back.
template <typename T>
class Tape {
  public:
    struct Var {
        int32_t id = -1;
        bool valid() const { return id >= 0; }
    };

    Var leaf(Tensor<T> v, bool requires_grad) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }

    Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

    const Tensor<T>& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }

    // Zero-size tensor if no gradient flowed into this node.
    const Tensor<T>& grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

    // y[..., n] = x[..., k] @ w[n, k]^T (+ b)
    Var linear(Var x, Var w, Var b = Var{}) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& wv = val(w);
        const int64_t k = xv.shape.back();
        const int64_t n = wv.dim(0);
        if (wv.dim(1) != k) throw ShapeMismatch("linear: weight/input feature dims");
        const int64_t m = xv.numel() / k;
        std::vector<int64_t> out_shape = xv.shape;
        out_shape.back() = n;
        Tensor<T> y(out_shape);
        kernels::linear_nt(xv.ptr(), wv.ptr(), b.valid() ? val(b).ptr() : nullptr, y.ptr(), m, n, k);
        return make_node(std::move(y), {x, w, b}, [this, x, w, b, m, n, k](Var self) {
            const Tensor<T>& dy = grad(self);
            if (wants(x)) {
                Tensor<T> dx(val(x).shape);
                kernels::matmul_nn(dy.ptr(), val(w).ptr(), dx.ptr(), m, n, k);
                acc_grad(x, dx);
            }
            if (wants(w)) {
                Tensor<T> dw(val(w).shape);
                kernels::matmul_tn(dy.ptr(), val(x).ptr(), dw.ptr(), m, n, k);
                acc_grad(w, dw);
            }
            if (b.valid() && wants(b)) {
                Tensor<T> db(val(b).shape);
                kernels::colsum(dy.ptr(), db.ptr(), m, n);
                acc_grad(b, db);
            }
        });
    }

    Var add(Var a, Var b) {
        const Tensor<T>& av = val(a);
        if (!av.same_shape(val(b))) throw ShapeMismatch("add: operand shapes");
        Tensor<T> y(av.shape);
        kernels::add(av.ptr(), val(b).ptr(), y.ptr(), av.numel());
        return make_node(std::move(y), {a, b}, [this, a, b](Var self) {
            const Tensor<T>& dy = grad(self);
            if (wants(a)) acc_grad(a, dy);
            if (wants(b)) acc_grad(b, dy);
        });
    }

    // x [B,T,W] + rows [T,W] broadcast over the leading dim
    Var add_rows(Var x, Var rows) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& rv = val(rows);
        const int64_t tw = rv.numel();
        if (xv.numel() % tw != 0) throw ShapeMismatch("add_rows: broadcast shapes");
        const int64_t bsz = xv.numel() / tw;
        Tensor<T> y(xv.shape);
        for (int64_t i = 0; i < bsz; ++i)
            kernels::add(xv.ptr() + i * tw, rv.ptr(), y.ptr() + i * tw, tw);
        return make_node(std::move(y), {x, rows}, [this, x, rows, bsz, tw](Var self) {
            const Tensor<T>& dy = grad(self);
            if (wants(x)) acc_grad(x, dy);
            if (wants(rows)) {
                Tensor<T> dr(val(rows).shape);
                for (int64_t i = 0; i < bsz; ++i)
                    kernels::serial::acc(dr.ptr(), dy.ptr() + i * tw, tw);
                acc_grad(rows, dr);
            }
        });
    }

    // row [W] prepended to every batch entry of x [B,T,W] -> [B,T+1,W]
    Var prepend_row(Var row, Var x) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& rv = val(row);
        if (xv.ndim() != 3 || rv.numel() != xv.dim(2)) throw ShapeMismatch("prepend_row");
        const int64_t bsz = xv.dim(0), t = xv.dim(1), w = xv.dim(2);
        Tensor<T> y({bsz, t + 1, w});
        for (int64_t i = 0; i < bsz; ++i) {
            std::copy(rv.ptr(), rv.ptr() + w, y.ptr() + i * (t + 1) * w);
            std::copy(xv.ptr() + i * t * w, xv.ptr() + (i + 1) * t * w,
                      y.ptr() + i * (t + 1) * w + w);
        }
        return make_node(std::move(y), {row, x}, [this, row, x, bsz, t, w](Var self) {
            const Tensor<T>& dy = grad(self);
            if (wants(row)) {
                Tensor<T> dr(val(row).shape);
                for (int64_t i = 0; i < bsz; ++i)
                    kernels::serial::acc(dr.ptr(), dy.ptr() + i * (t + 1) * w, w);
                acc_grad(row, dr);
            }
            if (wants(x)) {
                Tensor<T> dx(val(x).shape);
                for (int64_t i = 0; i < bsz; ++i)
                    std::copy(dy.ptr() + i * (t + 1) * w + w, dy.ptr() + (i + 1) * (t + 1) * w,
                              dx.ptr() + i * t * w);
                acc_grad(x, dx);
            }
        });
    }

    // layer norm over the trailing dim
    Var layernorm(Var x, Var g, Var b) {
        const Tensor<T>& xv = val(x);
        const int64_t n = xv.shape.back();
        const int64_t m = xv.numel() / n;
        if (val(g).numel() != n || val(b).numel() != n) throw ShapeMismatch("layernorm params");
        Tensor<T> y(xv.shape);
        auto mean = std::make_shared<Tensor<T>>(std::vector<int64_t>{m});
        auto rstd = std::make_shared<Tensor<T>>(std::vector<int64_t>{m});
        kernels::layernorm_fwd(xv.ptr(), val(g).ptr(), val(b).ptr(), y.ptr(), mean->ptr(),
                               rstd->ptr(), m, n, T(1e-5));
        return make_node(std::move(y), {x, g, b}, [this, x, g, b, m, n, mean, rstd](Var self) {
            const Tensor<T>& dy = grad(self);
            if (wants(x)) {
                Tensor<T> dx(val(x).shape);
                kernels::layernorm_bwd_dx(val(x).ptr(), val(g).ptr(), dy.ptr(), mean->ptr(),
                                          rstd->ptr(), dx.ptr(), m, n);
                acc_grad(x, dx);
            }
            if (wants(g) || wants(b)) {
                Tensor<T> dg({n}), db({n});
                const T* xp = val(x).ptr();
                const T* dyp = dy.ptr();
                for (int64_t i = 0; i < m; ++i) {
                    for (int64_t j = 0; j < n; ++j) {
                        T xhat = (xp[i * n + j] - (*mean)[i]) * (*rstd)[i];
                        dg[j] += dyp[i * n + j] * xhat;
                        db[j] += dyp[i * n + j];
                    }
                }
                if (wants(g)) acc_grad(g, dg);
                if (wants(b)) acc_grad(b, db);
            }
        });
    }

    Var quickgelu(Var x) {
        const Tensor<T>& xv = val(x);
        Tensor<T> y(xv.shape);
        kernels::quickgelu_fwd(xv.ptr(), y.ptr(), xv.numel());
        return make_node(std::move(y), {x}, [this, x](Var self) {
            const Tensor<T>& dy = grad(self);
            if (wants(x)) {
                Tensor<T> dx(val(x).shape);
                kernels::quickgelu_bwd(val(x).ptr(), dy.ptr(), dx.ptr(), dx.numel());
                acc_grad(x, dx);
            }
        });
    }

    // multi-head self attention; qkv [B,T,3W] packed as [q|k|v] -> [B,T,W]
    Var attention(Var qkv, int heads) {
        const Tensor<T>& qv = val(qkv);
        if (qv.ndim() != 3 || qv.dim(2) % 3 != 0) throw ShapeMismatch("attention: qkv shape");
        const int64_t bsz = qv.dim(0), t = qv.dim(1), w = qv.dim(2) / 3;
        if (w % heads != 0) throw ShapeMismatch("attention: width not divisible by heads");
        const int64_t dh = w / heads;
        const T scale = T(1) / std::sqrt(static_cast<T>(dh));

        // head-major contiguous copies kept for backward
        auto q = std::make_shared<Tensor<T>>(std::vector<int64_t>{bsz * heads, t, dh});
        auto k = std::make_shared<Tensor<T>>(std::vector<int64_t>{bsz * heads, t, dh});
        auto v = std::make_shared<Tensor<T>>(std::vector<int64_t>{bsz * heads, t, dh});
        auto probs = std::make_shared<Tensor<T>>(std::vector<int64_t>{bsz * heads, t, t});
        Tensor<T> y({bsz, t, w});

        const int64_t groups = bsz * heads;
#pragma omp parallel for schedule(static)
        for (int64_t g = 0; g < groups; ++g) {
            const int64_t b = g / heads, h = g % heads;
            T* qg = q->ptr() + g * t * dh;
            T* kg = k->ptr() + g * t * dh;
            T* vg = v->ptr() + g * t * dh;
            for (int64_t i = 0; i < t; ++i) {
                const T* row = qv.ptr() + (b * t + i) * 3 * w + h * dh;
                for (int64_t d = 0; d < dh; ++d) {
                    qg[i * dh + d] = row[d];
                    kg[i * dh + d] = row[w + d];
                    vg[i * dh + d] = row[2 * w + d];
                }
            }
            T* pg = probs->ptr() + g * t * t;
            kernels::serial::linear_nt(qg, kg, static_cast<const T*>(nullptr), pg, t, t, dh);
            kernels::serial::scale(pg, scale, pg, t * t);
            kernels::serial::softmax_rows(pg, pg, t, t);
            std::vector<T> ctx(static_cast<size_t>(t * dh));
            kernels::serial::matmul_nn(pg, vg, ctx.data(), t, t, dh);
            for (int64_t i = 0; i < t; ++i)
                std::copy(ctx.begin() + i * dh, ctx.begin() + (i + 1) * dh,
                          y.ptr() + (b * t + i) * w + h * dh);
        }

        return make_node(std::move(y), {qkv},
                         [this, qkv, heads, bsz, t, w, dh, scale, q, k, v, probs](Var self) {
            if (!wants(qkv)) return;
            const Tensor<T>& dy = grad(self);
            Tensor<T> dqkv(val(qkv).shape);
            const int64_t groups = bsz * heads;
#pragma omp parallel for schedule(static)
            for (int64_t g = 0; g < groups; ++g) {
                const int64_t b = g / heads, h = g % heads;
                const T* qg = q->ptr() + g * t * dh;
                const T* kg = k->ptr() + g * t * dh;
                const T* vg = v->ptr() + g * t * dh;
                const T* pg = probs->ptr() + g * t * t;
                std::vector<T> dctx(static_cast<size_t>(t * dh));
                for (int64_t i = 0; i < t; ++i) {
                    const T* row = dy.ptr() + (b * t + i) * w + h * dh;
                    std::copy(row, row + dh, dctx.begin() + i * dh);
                }
                std::vector<T> dp(static_cast<size_t>(t * t)), ds(static_cast<size_t>(t * t));
                std::vector<T> dq(static_cast<size_t>(t * dh)), dk(static_cast<size_t>(t * dh)),
                    dv(static_cast<size_t>(t * dh));
                kernels::serial::linear_nt(dctx.data(), vg, static_cast<const T*>(nullptr),
                                           dp.data(), t, t, dh);
                kernels::serial::matmul_tn(pg, dctx.data(), dv.data(), t, t, dh);
                kernels::serial::softmax_rows_bwd(pg, dp.data(), ds.data(), t, t);
                kernels::serial::scale(ds.data(), scale, ds.data(), t * t);
                kernels::serial::matmul_nn(ds.data(), kg, dq.data(), t, t, dh);
                kernels::serial::matmul_tn(ds.data(), qg, dk.data(), t, t, dh);
                for (int64_t i = 0; i < t; ++i) {
                    T* row = dqkv.ptr() + (b * t + i) * 3 * w + h * dh;
                    for (int64_t d = 0; d < dh; ++d) {
                        row[d] += dq[static_cast<size_t>(i * dh + d)];
                        row[w + d] += dk[static_cast<size_t>(i * dh + d)];
                        row[2 * w + d] += dv[static_cast<size_t>(i * dh + d)];
                    }
                }
            }
            acc_grad(qkv, dqkv);
        });
    }

    // rows of e [B,L,D] with mask 1 are replaced by action [B,D]; mask is 0/1
    Var inject(Var e, const Tensor<T>& mask, Var action) {
        const Tensor<T>& ev = val(e);
        const Tensor<T>& av = val(action);
        if (ev.ndim() != 3) throw ShapeMismatch("inject: embeddings must be [B,L,D]");
        const int64_t bsz = ev.dim(0), l = ev.dim(1), d = ev.dim(2);
        if (mask.numel() != bsz * l || av.dim(0) != bsz || av.dim(1) != d)
            throw ShapeMismatch("inject: mask/action shapes");
        Tensor<T> y = ev;
        for (int64_t b = 0; b < bsz; ++b)
            for (int64_t i = 0; i < l; ++i)
                if (mask[b * l + i] != T(0))
                    std::copy(av.ptr() + b * d, av.ptr() + (b + 1) * d, y.ptr() + (b * l + i) * d);
        auto mask_copy = std::make_shared<Tensor<T>>(mask);
        return make_node(std::move(y), {e, action},
                         [this, e, action, bsz, l, d, mask_copy](Var self) {
            const Tensor<T>& dy = grad(self);
            if (wants(action)) {
                Tensor<T> da(val(action).shape);
                for (int64_t b = 0; b < bsz; ++b)
                    for (int64_t i = 0; i < l; ++i)
                        if ((*mask_copy)[b * l + i] != T(0))
                            kernels::serial::acc(da.ptr() + b * d, dy.ptr() + (b * l + i) * d, d);
                acc_grad(action, da);
            }
            if (wants(e)) {
                Tensor<T> de(val(e).shape);
                for (int64_t b = 0; b < bsz; ++b)
                    for (int64_t i = 0; i < l; ++i)
                        if ((*mask_copy)[b * l + i] == T(0))
                            std::copy(dy.ptr() + (b * l + i) * d, dy.ptr() + (b * l + i + 1) * d,
                                      de.ptr() + (b * l + i) * d);
                acc_grad(e, de);
            }
        });
    }

    // y[b,:] = x[b, idx[b], :]
    Var gather_rows(Var x, std::vector<int64_t> idx) {
        const Tensor<T>& xv = val(x);
        if (xv.ndim() != 3 || static_cast<int64_t>(idx.size()) != xv.dim(0))
            throw ShapeMismatch("gather_rows");
        const int64_t bsz = xv.dim(0), t = xv.dim(1), w = xv.dim(2);
        Tensor<T> y({bsz, w});
        for (int64_t b = 0; b < bsz; ++b) {
            const int64_t i = idx[static_cast<size_t>(b)];
            if (i < 0 || i >= t) throw ShapeMismatch("gather_rows: index out of range");
            std::copy(xv.ptr() + (b * t + i) * w, xv.ptr() + (b * t + i + 1) * w, y.ptr() + b * w);
        }
        auto idx_copy = std::make_shared<std::vector<int64_t>>(std::move(idx));
        return make_node(std::move(y), {x}, [this, x, bsz, t, w, idx_copy](Var self) {
            if (!wants(x)) return;
            const Tensor<T>& dy = grad(self);
            Tensor<T> dx(val(x).shape);
            for (int64_t b = 0; b < bsz; ++b) {
                const int64_t i = (*idx_copy)[static_cast<size_t>(b)];
                kernels::serial::acc(dx.ptr() + (b * t + i) * w, dy.ptr() + b * w, w);
            }
            acc_grad(x, dx);
        });
    }

    Var mean2(Var a, Var b) {
        const Tensor<T>& av = val(a);
        if (!av.same_shape(val(b))) throw ShapeMismatch("mean2: operand shapes");
        Tensor<T> y(av.shape);
        const T* ap = av.ptr();
        const T* bp = val(b).ptr();
        for (int64_t i = 0; i < y.numel(); ++i) y[i] = (ap[i] + bp[i]) / T(2);
        return make_node(std::move(y), {a, b}, [this, a, b](Var self) {
            const Tensor<T>& dy = grad(self);
            Tensor<T> half(dy.shape);
            kernels::scale(dy.ptr(), T(0.5), half.ptr(), dy.numel());
            if (wants(a)) acc_grad(a, half);
            if (wants(b)) acc_grad(b, half);
        });
    }

    void backward(Var root, Tensor<T> seed) {
        Node& r = nodes_[static_cast<size_t>(root.id)];
        if (!seed.same_shape(r.value)) throw ShapeMismatch("backward: seed shape");
        if (!r.requires_grad) return;
        if (r.grad.numel() == 0)
            r.grad = std::move(seed);
        else
            kernels::acc(r.grad.ptr(), seed.ptr(), seed.numel());
        for (int32_t id = root.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.back && n.requires_grad && n.grad.numel() > 0) n.back(Var{id});
        }
    }

    size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        std::function<void(Var)> back;
    };

    std::vector<Node> nodes_;

    bool wants(Var v) const {
        return v.valid() && nodes_[static_cast<size_t>(v.id)].requires_grad;
    }

    void acc_grad(Var v, const Tensor<T>& contribution) {
        Node& n = nodes_[static_cast<size_t>(v.id)];
        if (n.grad.numel() == 0) {
            n.grad = contribution;
        } else {
            kernels::acc(n.grad.ptr(), contribution.ptr(), contribution.numel());
        }
    }

    template <typename F>
    Var make_node(Tensor<T> value, std::initializer_list<Var> parents, F&& back_fn) {
        Node n;
        n.value = std::move(value);
        for (Var p : parents)
            if (wants(p)) n.requires_grad = true;
        if (n.requires_grad) n.back = std::forward<F>(back_fn);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }
};

}  // namespace rclip
