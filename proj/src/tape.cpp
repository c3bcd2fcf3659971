#include "projcgan/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "projcgan/errors.hpp"

namespace projcgan {

namespace {

// Index plan for broadcast-aware elementwise loops: operand index of output
// element i is (i / div) % mod.
struct BcastPlan {
    std::int64_t div = 1;
    std::int64_t mod = 1;
    std::int64_t map(std::int64_t i) const { return (i / div) % mod; }
};

// Supported broadcasts: equal shapes, scalar vs tensor, per-channel [C] vs
// [N,C] or [N,C,H,W], and per-sample-channel [N,C] vs [N,C,H,W].
void resolve_broadcast(const Shape& a, const Shape& b, Shape& out, BcastPlan& pa, BcastPlan& pb) {
    const std::int64_t na = shape_numel(a);
    const std::int64_t nb = shape_numel(b);
    auto ident = [](std::int64_t n) { return BcastPlan{1, std::max<std::int64_t>(n, 1)}; };
    if (a == b) {
        out = a;
        pa = pb = ident(na);
        return;
    }
    if (na == 1) {
        out = b;
        pa = {1, 1};
        pb = ident(nb);
        return;
    }
    if (nb == 1) {
        out = a;
        pa = ident(na);
        pb = {1, 1};
        return;
    }
    auto chan_plan = [](const Shape& big) -> BcastPlan {
        std::int64_t inner = 1;
        for (std::size_t i = 2; i < big.size(); ++i) inner *= big[i];
        return BcastPlan{inner, big[1]};
    };
    if (a.size() == 1 && b.size() >= 2 && a[0] == b[1]) {
        out = b;
        pa = chan_plan(b);
        pb = ident(nb);
        return;
    }
    if (b.size() == 1 && a.size() >= 2 && b[0] == a[1]) {
        out = a;
        pa = ident(na);
        pb = chan_plan(a);
        return;
    }
    auto rows_plan = [](const Shape& big) -> BcastPlan {
        std::int64_t inner = 1;
        for (std::size_t i = 2; i < big.size(); ++i) inner *= big[i];
        return BcastPlan{inner, static_cast<std::int64_t>(big[0]) * big[1]};
    };
    if (a.size() == 2 && b.size() == 4 && a[0] == b[0] && a[1] == b[1]) {
        out = b;
        pa = rows_plan(b);
        pb = ident(nb);
        return;
    }
    if (b.size() == 2 && a.size() == 4 && b[0] == a[0] && b[1] == a[1]) {
        out = a;
        pa = ident(na);
        pb = rows_plan(a);
        return;
    }
    throw DimensionError("incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

void check_axes(const Shape& shape, std::vector<int>& axes) {
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    for (int ax : axes)
        if (ax < 0 || ax >= static_cast<int>(shape.size()))
            throw DimensionError("reduce axis out of range for shape " + shape_str(shape));
}

}  // namespace

template <typename T>
Tape<T>::Tape() {
#ifdef NDEBUG
    check_finite_ = false;
#else
    check_finite_ = true;
#endif
}

template <typename T>
void Tape<T>::reset() {
    nodes_.clear();
    bound_.clear();
    marks_.clear();
}

template <typename T>
const Tensor<T>& Tape<T>::grad(NodeId id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) throw ContractError("grad() on a node that does not require grad");
    return n.grad;
}

template <typename T>
NodeId Tape<T>::push(Tensor<T> value, bool needs_grad, NodeId p0, NodeId p1,
                     std::function<void(Tape&, NodeId)> back) {
    if (check_finite_ && !value.all_finite())
        throw DivergenceError("non-finite value produced by forward op");
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.grad = Tensor<T>(n.value.shape());
    n.parents[0] = p0;
    n.parents[1] = p1;
    n.n_parents = (p0 >= 0) + (p1 >= 0);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
NodeId Tape<T>::constant(Tensor<T> v) {
    return push(std::move(v), false, -1, -1, nullptr);
}

template <typename T>
NodeId Tape<T>::leaf(Tensor<T> v, bool requires_grad) {
    return push(std::move(v), requires_grad, -1, -1, nullptr);
}

template <typename T>
NodeId Tape<T>::use(Parameter<T>& p) {
    NodeId id = push(p.value, p.trainable, -1, -1, nullptr);
    if (p.trainable) bound_.emplace_back(&p, id);
    return id;
}

// ---- elementwise helpers -------------------------------------------------

template <typename T>
template <typename FwdF, typename BwdF>
NodeId Tape<T>::unary_op(NodeId a, const char*, FwdF f, BwdF df) {
    const Tensor<T>& av = val(a);
    Tensor<T> out(av.shape());
    const std::int64_t n = av.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = f(av[i]);
    bool ng = needs_grad(a);
    return push(std::move(out), ng, a, -1, [df](Tape& t, NodeId self) {
        Node& s = t.node(self);
        NodeId a_id = s.parents[0];
        Node& pa = t.node(a_id);
        if (!pa.needs_grad) return;
        const std::int64_t n = s.value.numel();
        for (std::int64_t i = 0; i < n; ++i)
            pa.grad[i] += s.grad[i] * df(pa.value[i], s.value[i]);
    });
}

template <typename T>
template <typename FwdF, typename DaF, typename DbF>
NodeId Tape<T>::binary_op(NodeId a, NodeId b, const char*, FwdF f, DaF dfda, DbF dfdb) {
    const Tensor<T>& av = val(a);
    const Tensor<T>& bv = val(b);
    Shape out_shape;
    BcastPlan pa, pb;
    resolve_broadcast(av.shape(), bv.shape(), out_shape, pa, pb);
    Tensor<T> out(out_shape);
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = f(av[pa.map(i)], bv[pb.map(i)]);
    bool ng = needs_grad(a) || needs_grad(b);
    return push(std::move(out), ng, a, b, [pa, pb, dfda, dfdb](Tape& t, NodeId self) {
        Node& s = t.node(self);
        Node& na = t.node(s.parents[0]);
        Node& nb = t.node(s.parents[1]);
        const std::int64_t n = s.value.numel();
        if (na.needs_grad) {
            for (std::int64_t i = 0; i < n; ++i) {
                const std::int64_t ia = pa.map(i), ib = pb.map(i);
                na.grad[ia] += s.grad[i] * dfda(na.value[ia], nb.value[ib], s.value[i]);
            }
        }
        if (nb.needs_grad) {
            for (std::int64_t i = 0; i < n; ++i) {
                const std::int64_t ia = pa.map(i), ib = pb.map(i);
                nb.grad[ib] += s.grad[i] * dfdb(na.value[ia], nb.value[ib], s.value[i]);
            }
        }
    });
}

template <typename T>
NodeId Tape<T>::add(NodeId a, NodeId b) {
    return binary_op(
        a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
        [](T, T, T) { return T(1); });
}

template <typename T>
NodeId Tape<T>::sub(NodeId a, NodeId b) {
    return binary_op(
        a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
        [](T, T, T) { return T(-1); });
}

template <typename T>
NodeId Tape<T>::mul(NodeId a, NodeId b) {
    return binary_op(
        a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
        [](T x, T, T) { return x; });
}

template <typename T>
NodeId Tape<T>::div(NodeId a, NodeId b) {
    return binary_op(
        a, b, "div", [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
        [](T, T y, T out) { return -out / y; });
}

template <typename T>
NodeId Tape<T>::relu(NodeId a) {
    return unary_op(
        a, "relu", [](T x) { return x > T(0) ? x : T(0); },
        [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
NodeId Tape<T>::sigmoid(NodeId a) {
    return unary_op(
        a, "sigmoid",
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
NodeId Tape<T>::tanh(NodeId a) {
    return unary_op(
        a, "tanh", [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
NodeId Tape<T>::exp(NodeId a) {
    return unary_op(
        a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
NodeId Tape<T>::log(NodeId a) {
    return unary_op(
        a, "log", [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
NodeId Tape<T>::sqrt(NodeId a) {
    return unary_op(
        a, "sqrt", [](T x) { return std::sqrt(x); },
        [](T, T y) { return T(0.5) / y; });
}

template <typename T>
NodeId Tape<T>::neg(NodeId a) {
    return unary_op(
        a, "neg", [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
NodeId Tape<T>::softplus(NodeId a) {
    return unary_op(
        a, "softplus",
        [](T x) {
            // max(x,0) + log1p(exp(-|x|)) never overflows
            const T ax = x > T(0) ? x : -x;
            return (x > T(0) ? x : T(0)) + std::log1p(std::exp(-ax));
        },
        [](T x, T) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        });
}

template <typename T>
NodeId Tape<T>::affine(NodeId a, T scale, T shift) {
    return unary_op(
        a, "affine", [scale, shift](T x) { return scale * x + shift; },
        [scale](T, T) { return scale; });
}

template <typename T>
NodeId Tape<T>::max_scalar(NodeId a, T c) {
    return unary_op(
        a, "max_scalar", [c](T x) { return x > c ? x : c; },
        [c](T x, T) { return x > c ? T(1) : T(0); });
}

template <typename T>
NodeId Tape<T>::log_softmax_rows(NodeId a) {
    const Tensor<T>& av = val(a);
    if (av.rank() != 2) throw DimensionError("log_softmax_rows expects [N,C]");
    const int n = av.extent(0), c = av.extent(1);
    Tensor<T> out(av.shape());
    for (int i = 0; i < n; ++i) {
        const T* row = av.data() + static_cast<std::size_t>(i) * c;
        T m = row[0];
        for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
        T s = T(0);
        for (int j = 0; j < c; ++j) s += std::exp(row[j] - m);
        const T lse = m + std::log(s);
        for (int j = 0; j < c; ++j) out.at(i, j) = row[j] - lse;
    }
    return push(std::move(out), needs_grad(a), a, -1, [n, c](Tape& t, NodeId self) {
        Node& s = t.node(self);
        Node& pa = t.node(s.parents[0]);
        if (!pa.needs_grad) return;
        for (int i = 0; i < n; ++i) {
            T gsum = T(0);
            for (int j = 0; j < c; ++j) gsum += s.grad.at(i, j);
            for (int j = 0; j < c; ++j)
                pa.grad.at(i, j) += s.grad.at(i, j) - std::exp(s.value.at(i, j)) * gsum;
        }
    });
}

// ---- matmul / conv -------------------------------------------------------

namespace {

template <typename T>
void matmul_kernel(const T* a, const T* b, T* out, int m, int k, int n) {
    // ikj order: streams rows of b, accumulates into contiguous rows of out.
    for (int i = 0; i < m; ++i) {
        T* orow = out + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const T av = a[static_cast<std::size_t>(i) * k + kk];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace

template <typename T>
NodeId Tape<T>::matmul(NodeId a, NodeId b) {
    const Tensor<T>& av = val(a);
    const Tensor<T>& bv = val(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.extent(1) != bv.extent(0))
        throw DimensionError("matmul shapes " + shape_str(av.shape()) + " x " +
                             shape_str(bv.shape()));
    const int m = av.extent(0), k = av.extent(1), n = bv.extent(1);
    Tensor<T> out({m, n});
    matmul_kernel(av.data(), bv.data(), out.data(), m, k, n);
    bool ng = needs_grad(a) || needs_grad(b);
    return push(std::move(out), ng, a, b, [m, k, n](Tape& t, NodeId self) {
        Node& s = t.node(self);
        Node& na = t.node(s.parents[0]);
        Node& nb = t.node(s.parents[1]);
        if (na.needs_grad) {
            // dA[i,kk] += sum_j dC[i,j] * B[kk,j]
            for (int i = 0; i < m; ++i) {
                const T* grow = s.grad.data() + static_cast<std::size_t>(i) * n;
                T* garow = na.grad.data() + static_cast<std::size_t>(i) * k;
                for (int kk = 0; kk < k; ++kk) {
                    const T* brow = nb.value.data() + static_cast<std::size_t>(kk) * n;
                    T acc = T(0);
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    garow[kk] += acc;
                }
            }
        }
        if (nb.needs_grad) {
            // dB[kk,j] += sum_i A[i,kk] * dC[i,j]
            for (int i = 0; i < m; ++i) {
                const T* arow = na.value.data() + static_cast<std::size_t>(i) * k;
                const T* grow = s.grad.data() + static_cast<std::size_t>(i) * n;
                for (int kk = 0; kk < k; ++kk) {
                    const T av = arow[kk];
                    if (av == T(0)) continue;
                    T* gbrow = nb.grad.data() + static_cast<std::size_t>(kk) * n;
                    for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
}

namespace {

// Gather conv patches of one sample into a [C*kh*kw, Ho*Wo] matrix.
template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int stride, int pad, int ho, int wo,
            T* cols) {
    const int patch = c * kh * kw;
    for (int pc = 0; pc < patch; ++pc) {
        const int ch = pc / (kh * kw);
        const int ky = (pc / kw) % kh;
        const int kx = pc % kw;
        T* crow = cols + static_cast<std::size_t>(pc) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) {
                std::fill(crow + static_cast<std::size_t>(oy) * wo,
                          crow + static_cast<std::size_t>(oy + 1) * wo, T(0));
                continue;
            }
            const T* xrow = x + (static_cast<std::size_t>(ch) * h + iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride + kx - pad;
                crow[static_cast<std::size_t>(oy) * wo + ox] =
                    (ix >= 0 && ix < w) ? xrow[ix] : T(0);
            }
        }
    }
}

// Scatter-add of column gradients back onto the input image.
template <typename T>
void col2im_add(const T* cols, int c, int h, int w, int kh, int kw, int stride, int pad, int ho,
                int wo, T* gx) {
    const int patch = c * kh * kw;
    for (int pc = 0; pc < patch; ++pc) {
        const int ch = pc / (kh * kw);
        const int ky = (pc / kw) % kh;
        const int kx = pc % kw;
        const T* crow = cols + static_cast<std::size_t>(pc) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            T* grow = gx + (static_cast<std::size_t>(ch) * h + iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride + kx - pad;
                if (ix >= 0 && ix < w) grow[ix] += crow[static_cast<std::size_t>(oy) * wo + ox];
            }
        }
    }
}

}  // namespace

template <typename T>
NodeId Tape<T>::conv2d(NodeId x, NodeId w, int stride, int pad) {
    const Tensor<T>& xv = val(x);
    const Tensor<T>& wv = val(w);
    if (xv.rank() != 4 || wv.rank() != 4)
        throw DimensionError("conv2d expects [N,C,H,W] input and [O,C,kh,kw] kernel");
    if (stride < 1 || pad < 0) throw ValueError("conv2d: bad stride/pad");
    const int n = xv.extent(0), c = xv.extent(1), h = xv.extent(2), wd = xv.extent(3);
    const int o = wv.extent(0), kh = wv.extent(2), kw = wv.extent(3);
    if (wv.extent(1) != c) throw DimensionError("conv2d channel mismatch");
    if (kh > h + 2 * pad || kw > wd + 2 * pad) throw DimensionError("conv2d kernel exceeds input");
    if ((h + 2 * pad - kh) % stride != 0 || (wd + 2 * pad - kw) % stride != 0)
        throw DimensionError("conv2d: non-integral output extent");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    const int patch = c * kh * kw;

    Tensor<T> out({n, o, ho, wo});
    std::vector<T> cols(static_cast<std::size_t>(patch) * ho * wo);
    for (int s = 0; s < n; ++s) {
        im2col(xv.data() + static_cast<std::size_t>(s) * c * h * wd, c, h, wd, kh, kw, stride, pad,
               ho, wo, cols.data());
        matmul_kernel(wv.data(), cols.data(), out.data() + static_cast<std::size_t>(s) * o * ho * wo,
                      o, patch, ho * wo);
    }
    bool ng = needs_grad(x) || needs_grad(w);
    return push(std::move(out), ng, x, w,
                [n, c, h, wd, o, kh, kw, stride, pad, ho, wo, patch](Tape& t, NodeId self) {
                    Node& s = t.node(self);
                    Node& nx = t.node(s.parents[0]);
                    Node& nw = t.node(s.parents[1]);
                    std::vector<T> cols(static_cast<std::size_t>(patch) * ho * wo);
                    std::vector<T> gcols;
                    if (nx.needs_grad) gcols.resize(cols.size());
                    for (int si = 0; si < n; ++si) {
                        const T* gout = s.grad.data() + static_cast<std::size_t>(si) * o * ho * wo;
                        if (nw.needs_grad) {
                            im2col(nx.value.data() + static_cast<std::size_t>(si) * c * h * wd, c, h,
                                   wd, kh, kw, stride, pad, ho, wo, cols.data());
                            // dW[oc,pc] += sum_p gout[oc,p] * cols[pc,p]
                            for (int oc = 0; oc < o; ++oc) {
                                const T* grow = gout + static_cast<std::size_t>(oc) * ho * wo;
                                T* gwrow = nw.grad.data() + static_cast<std::size_t>(oc) * patch;
                                for (int pc = 0; pc < patch; ++pc) {
                                    const T* crow = cols.data() + static_cast<std::size_t>(pc) * ho * wo;
                                    T acc = T(0);
                                    for (int p = 0; p < ho * wo; ++p) acc += grow[p] * crow[p];
                                    gwrow[pc] += acc;
                                }
                            }
                        }
                        if (nx.needs_grad) {
                            // gcols = W^T @ gout, then scatter back
                            std::fill(gcols.begin(), gcols.end(), T(0));
                            for (int oc = 0; oc < o; ++oc) {
                                const T* wrow = nw.value.data() + static_cast<std::size_t>(oc) * patch;
                                const T* grow = gout + static_cast<std::size_t>(oc) * ho * wo;
                                for (int pc = 0; pc < patch; ++pc) {
                                    const T wv2 = wrow[pc];
                                    if (wv2 == T(0)) continue;
                                    T* gcrow = gcols.data() + static_cast<std::size_t>(pc) * ho * wo;
                                    for (int p = 0; p < ho * wo; ++p) gcrow[p] += wv2 * grow[p];
                                }
                            }
                            col2im_add(gcols.data(), c, h, wd, kh, kw, stride, pad, ho, wo,
                                       nx.grad.data() + static_cast<std::size_t>(si) * c * h * wd);
                        }
                    }
                });
}

// ---- reductions and shape ops -------------------------------------------

template <typename T>
NodeId Tape<T>::sum(NodeId a, std::vector<int> axes) {
    const Tensor<T>& av = val(a);
    check_axes(av.shape(), axes);
    const Shape in = av.shape();
    Shape out_shape;
    for (int i = 0; i < static_cast<int>(in.size()); ++i)
        if (!std::binary_search(axes.begin(), axes.end(), i)) out_shape.push_back(in[i]);
    // output flat index of input flat index, dropping reduced axes
    std::vector<std::int64_t> in_strides(in.size(), 1), out_stride_of_axis(in.size(), 0);
    for (int i = static_cast<int>(in.size()) - 2; i >= 0; --i)
        in_strides[i] = in_strides[i + 1] * in[i + 1];
    {
        std::int64_t os = 1;
        for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
            if (!std::binary_search(axes.begin(), axes.end(), i)) {
                out_stride_of_axis[i] = os;
                os *= in[i];
            }
        }
    }
    // captured by value: the closure outlives this call
    auto out_index = [in, in_strides, out_stride_of_axis](std::int64_t i) {
        std::int64_t oi = 0;
        for (std::size_t ax = 0; ax < in.size(); ++ax)
            oi += ((i / in_strides[ax]) % in[ax]) * out_stride_of_axis[ax];
        return oi;
    };
    Tensor<T> out(out_shape);
    for (std::int64_t i = 0; i < av.numel(); ++i) out[out_index(i)] += av[i];
    return push(std::move(out), needs_grad(a), a, -1,
                [out_index](Tape& t, NodeId self) {
                    Node& s = t.node(self);
                    Node& pa = t.node(s.parents[0]);
                    if (!pa.needs_grad) return;
                    for (std::int64_t i = 0; i < pa.value.numel(); ++i)
                        pa.grad[i] += s.grad[out_index(i)];
                });
}

template <typename T>
NodeId Tape<T>::mean(NodeId a, std::vector<int> axes) {
    const Tensor<T>& av = val(a);
    std::vector<int> ax = axes;
    check_axes(av.shape(), ax);
    std::int64_t count = 1;
    for (int x : ax) count *= av.extent(x);
    if (count == 0) throw DimensionError("mean over empty extent");
    NodeId s = sum(a, std::move(ax));
    return affine(s, T(1) / static_cast<T>(count), T(0));
}

template <typename T>
NodeId Tape<T>::sum_all(NodeId a) {
    const Tensor<T>& av = val(a);
    T acc = T(0);
    for (std::int64_t i = 0; i < av.numel(); ++i) acc += av[i];
    return push(Tensor<T>::scalar(acc), needs_grad(a), a, -1, [](Tape& t, NodeId self) {
        Node& s = t.node(self);
        Node& pa = t.node(s.parents[0]);
        if (!pa.needs_grad) return;
        const T g = s.grad[0];
        for (std::int64_t i = 0; i < pa.grad.numel(); ++i) pa.grad[i] += g;
    });
}

template <typename T>
NodeId Tape<T>::mean_all(NodeId a) {
    const std::int64_t n = val(a).numel();
    if (n == 0) throw DimensionError("mean of empty tensor");
    return affine(sum_all(a), T(1) / static_cast<T>(n), T(0));
}

template <typename T>
NodeId Tape<T>::global_sum_pool(NodeId a) {
    const Tensor<T>& av = val(a);
    if (av.rank() != 4) throw DimensionError("global_sum_pool expects [N,C,H,W]");
    return sum(a, {2, 3});
}

template <typename T>
NodeId Tape<T>::avg_pool2x2(NodeId a) {
    const Tensor<T>& av = val(a);
    if (av.rank() != 4) throw DimensionError("avg_pool2x2 expects [N,C,H,W]");
    const int n = av.extent(0), c = av.extent(1), h = av.extent(2), w = av.extent(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw DimensionError("avg_pool2x2: odd spatial extent " + shape_str(av.shape()));
    const int ho = h / 2, wo = w / 2;
    Tensor<T> out({n, c, ho, wo});
    for (int s = 0; s < n * c; ++s) {
        const T* in = av.data() + static_cast<std::size_t>(s) * h * w;
        T* op = out.data() + static_cast<std::size_t>(s) * ho * wo;
        for (int y = 0; y < ho; ++y)
            for (int x = 0; x < wo; ++x)
                op[static_cast<std::size_t>(y) * wo + x] =
                    (in[(2 * y) * w + 2 * x] + in[(2 * y) * w + 2 * x + 1] +
                     in[(2 * y + 1) * w + 2 * x] + in[(2 * y + 1) * w + 2 * x + 1]) *
                    T(0.25);
    }
    return push(std::move(out), needs_grad(a), a, -1, [n, c, h, w, ho, wo](Tape& t, NodeId self) {
        Node& s = t.node(self);
        Node& pa = t.node(s.parents[0]);
        if (!pa.needs_grad) return;
        for (int si = 0; si < n * c; ++si) {
            const T* gp = s.grad.data() + static_cast<std::size_t>(si) * ho * wo;
            T* gx = pa.grad.data() + static_cast<std::size_t>(si) * h * w;
            for (int y = 0; y < ho; ++y)
                for (int x = 0; x < wo; ++x) {
                    const T g = gp[static_cast<std::size_t>(y) * wo + x] * T(0.25);
                    gx[(2 * y) * w + 2 * x] += g;
                    gx[(2 * y) * w + 2 * x + 1] += g;
                    gx[(2 * y + 1) * w + 2 * x] += g;
                    gx[(2 * y + 1) * w + 2 * x + 1] += g;
                }
        }
    });
}

template <typename T>
NodeId Tape<T>::upsample_nearest2x(NodeId a) {
    const Tensor<T>& av = val(a);
    if (av.rank() != 4) throw DimensionError("upsample_nearest2x expects [N,C,H,W]");
    const int n = av.extent(0), c = av.extent(1), h = av.extent(2), w = av.extent(3);
    Tensor<T> out({n, c, 2 * h, 2 * w});
    for (int s = 0; s < n * c; ++s) {
        const T* in = av.data() + static_cast<std::size_t>(s) * h * w;
        T* op = out.data() + static_cast<std::size_t>(s) * 4 * h * w;
        for (int y = 0; y < 2 * h; ++y) {
            const T* irow = in + static_cast<std::size_t>(y / 2) * w;
            T* orow = op + static_cast<std::size_t>(y) * 2 * w;
            for (int x = 0; x < 2 * w; ++x) orow[x] = irow[x / 2];
        }
    }
    return push(std::move(out), needs_grad(a), a, -1, [n, c, h, w](Tape& t, NodeId self) {
        Node& s = t.node(self);
        Node& pa = t.node(s.parents[0]);
        if (!pa.needs_grad) return;
        for (int si = 0; si < n * c; ++si) {
            const T* gp = s.grad.data() + static_cast<std::size_t>(si) * 4 * h * w;
            T* gx = pa.grad.data() + static_cast<std::size_t>(si) * h * w;
            for (int y = 0; y < 2 * h; ++y) {
                const T* grow = gp + static_cast<std::size_t>(y) * 2 * w;
                T* xrow = gx + static_cast<std::size_t>(y / 2) * w;
                for (int x = 0; x < 2 * w; ++x) xrow[x / 2] += grow[x];
            }
        }
    });
}

template <typename T>
NodeId Tape<T>::reshape(NodeId a, Shape shape) {
    const Tensor<T>& av = val(a);
    if (shape_numel(shape) != av.numel())
        throw DimensionError("reshape " + shape_str(av.shape()) + " -> " + shape_str(shape));
    Tensor<T> out(std::move(shape), av.vec());
    return push(std::move(out), needs_grad(a), a, -1, [](Tape& t, NodeId self) {
        Node& s = t.node(self);
        Node& pa = t.node(s.parents[0]);
        if (!pa.needs_grad) return;
        for (std::int64_t i = 0; i < pa.grad.numel(); ++i) pa.grad[i] += s.grad[i];
    });
}

template <typename T>
NodeId Tape<T>::concat_dim1(NodeId a, NodeId b) {
    const Tensor<T>& av = val(a);
    const Tensor<T>& bv = val(b);
    if (av.rank() != bv.rank() || av.rank() < 2)
        throw DimensionError("concat_dim1 rank mismatch");
    Shape out_shape = av.shape();
    for (int i = 0; i < av.rank(); ++i)
        if (i != 1 && av.extent(i) != bv.extent(i))
            throw DimensionError("concat_dim1 extent mismatch at axis " + std::to_string(i));
    out_shape[1] = av.extent(1) + bv.extent(1);
    std::int64_t inner = 1;
    for (int i = 2; i < av.rank(); ++i) inner *= av.extent(i);
    const int n = av.extent(0);
    const std::int64_t wa = av.extent(1) * inner, wb = bv.extent(1) * inner;
    Tensor<T> out(out_shape);
    for (int i = 0; i < n; ++i) {
        std::copy_n(av.data() + i * wa, wa, out.data() + i * (wa + wb));
        std::copy_n(bv.data() + i * wb, wb, out.data() + i * (wa + wb) + wa);
    }
    bool ng = needs_grad(a) || needs_grad(b);
    return push(std::move(out), ng, a, b, [n, wa, wb](Tape& t, NodeId self) {
        Node& s = t.node(self);
        Node& na = t.node(s.parents[0]);
        Node& nb = t.node(s.parents[1]);
        for (int i = 0; i < n; ++i) {
            const T* g = s.grad.data() + i * (wa + wb);
            if (na.needs_grad)
                for (std::int64_t j = 0; j < wa; ++j) na.grad[i * wa + j] += g[j];
            if (nb.needs_grad)
                for (std::int64_t j = 0; j < wb; ++j) nb.grad[i * wb + j] += g[wa + j];
        }
    });
}

template <typename T>
NodeId Tape<T>::slice_dim0(NodeId a, int begin, int end) {
    const Tensor<T>& av = val(a);
    if (av.rank() < 1 || begin < 0 || end > av.extent(0) || begin >= end)
        throw DimensionError("slice_dim0 range out of bounds");
    Shape out_shape = av.shape();
    out_shape[0] = end - begin;
    std::int64_t inner = av.numel() / av.extent(0);
    Tensor<T> out(out_shape);
    std::copy_n(av.data() + begin * inner, out.numel(), out.data());
    return push(std::move(out), needs_grad(a), a, -1, [begin, inner](Tape& t, NodeId self) {
        Node& s = t.node(self);
        Node& pa = t.node(s.parents[0]);
        if (!pa.needs_grad) return;
        for (std::int64_t i = 0; i < s.grad.numel(); ++i)
            pa.grad[begin * inner + i] += s.grad[i];
    });
}

template <typename T>
NodeId Tape<T>::gather_rows(NodeId table, std::vector<int> idx) {
    const Tensor<T>& tv = val(table);
    if (tv.rank() != 2) throw DimensionError("gather_rows expects a rank-2 table");
    const int r = tv.extent(0), d = tv.extent(1);
    for (int i : idx)
        if (i < 0 || i >= r) throw ValueError("gather_rows index " + std::to_string(i) +
                                              " out of range [0," + std::to_string(r) + ")");
    Tensor<T> out({static_cast<int>(idx.size()), d});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * d, d,
                    out.data() + i * d);
    return push(std::move(out), needs_grad(table), table, -1,
                [idx = std::move(idx), d](Tape& t, NodeId self) {
                    Node& s = t.node(self);
                    Node& pt = t.node(s.parents[0]);
                    if (!pt.needs_grad) return;
                    for (std::size_t i = 0; i < idx.size(); ++i) {
                        const T* g = s.grad.data() + i * d;
                        T* gt = pt.grad.data() + static_cast<std::size_t>(idx[i]) * d;
                        for (int j = 0; j < d; ++j) gt[j] += g[j];
                    }
                });
}

template <typename T>
NodeId Tape<T>::broadcast_spatial(NodeId a, int h, int w) {
    const Tensor<T>& av = val(a);
    if (av.rank() != 2) throw DimensionError("broadcast_spatial expects [N,C]");
    if (h <= 0 || w <= 0) throw ValueError("broadcast_spatial: bad extents");
    const int n = av.extent(0), c = av.extent(1);
    Tensor<T> out({n, c, h, w});
    for (std::int64_t s = 0; s < static_cast<std::int64_t>(n) * c; ++s)
        std::fill_n(out.data() + s * h * w, h * w, av[s]);
    return push(std::move(out), needs_grad(a), a, -1, [n, c, h, w](Tape& t, NodeId self) {
        Node& s = t.node(self);
        Node& pa = t.node(s.parents[0]);
        if (!pa.needs_grad) return;
        for (std::int64_t si = 0; si < static_cast<std::int64_t>(n) * c; ++si) {
            const T* g = s.grad.data() + si * h * w;
            T acc = T(0);
            for (int i = 0; i < h * w; ++i) acc += g[i];
            pa.grad[si] += acc;
        }
    });
}

// ---- backward ------------------------------------------------------------

template <typename T>
void Tape<T>::backward(NodeId loss) {
    Node& ln = node(loss);
    if (ln.value.numel() != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(ln.value.shape()));
    if (!ln.needs_grad) return;
    ln.grad[0] = T(1);

    marks_.assign(nodes_.size(), 0);
    marks_[static_cast<std::size_t>(loss)] = 1;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = node(id);
        if (!marks_[static_cast<std::size_t>(id)] || !n.needs_grad) continue;
        for (int p = 0; p < n.n_parents; ++p) marks_[static_cast<std::size_t>(n.parents[p])] = 1;
        if (n.back) n.back(*this, id);
    }
    for (auto& [param, id] : bound_) {
        if (!param->trainable || !marks_[static_cast<std::size_t>(id)]) continue;
        const Tensor<T>& g = node(id).grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) param->grad[i] += g[i];
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace projcgan
