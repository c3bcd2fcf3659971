#ifndef PROJCGAN_TAPE_HPP
#define PROJCGAN_TAPE_HPP

#include <array>
#include <deque>
#include <functional>
#include <vector>

#include "projcgan/tensor.hpp"

namespace projcgan {

/// Trainable tensor living outside any tape. Gradients accumulate here after
/// Tape::backward.
template <typename T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    Parameter() = default;
    explicit Parameter(Tensor<T> v) : value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(T(0)); }
};

/// Handle to a node on a Tape. Plain index; -1 is invalid.
using NodeId = int;

/// Record of one forward pass. Ops append nodes in topological order; the
/// backward pass walks them once in reverse. A tape lives for a single
/// training step and is reset afterwards.
template <typename T>
class Tape {
public:
    Tape();

    void reset();
    std::size_t size() const { return nodes_.size(); }

    /// When enabled every op output is scanned for NaN/Inf. Defaults to on in
    /// debug builds.
    void set_check_finite(bool on) { check_finite_ = on; }

    NodeId constant(Tensor<T> v);
    NodeId leaf(Tensor<T> v, bool requires_grad);
    /// Bind a parameter: its value becomes a leaf, and after backward() the
    /// node gradient is accumulated into p.grad (if trainable).
    NodeId use(Parameter<T>& p);

    const Tensor<T>& val(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor<T>& grad(NodeId id) const;
    bool needs_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    // ---- ops -------------------------------------------------------------
    NodeId matmul(NodeId a, NodeId b);
    NodeId conv2d(NodeId x, NodeId w, int stride, int pad);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);

    NodeId relu(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId tanh(NodeId a);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId sqrt(NodeId a);
    NodeId neg(NodeId a);
    /// Numerically stable log(1 + e^x).
    NodeId softplus(NodeId a);
    /// scale * x + shift, elementwise with scalar coefficients.
    NodeId affine(NodeId a, T scale, T shift);
    NodeId max_scalar(NodeId a, T c);
    /// Row-wise log softmax of an [N, C] tensor.
    NodeId log_softmax_rows(NodeId a);

    NodeId sum(NodeId a, std::vector<int> axes);
    NodeId mean(NodeId a, std::vector<int> axes);
    NodeId sum_all(NodeId a);
    NodeId mean_all(NodeId a);
    /// [N,C,H,W] -> [N,C], summing the spatial extents.
    NodeId global_sum_pool(NodeId a);
    NodeId avg_pool2x2(NodeId a);
    NodeId upsample_nearest2x(NodeId a);

    NodeId reshape(NodeId a, Shape shape);
    NodeId concat_dim1(NodeId a, NodeId b);
    NodeId slice_dim0(NodeId a, int begin, int end);
    /// out[i] = table[idx[i]] for a rank-2 table; backward scatter-adds.
    NodeId gather_rows(NodeId table, std::vector<int> idx);
    /// [N,C] -> [N,C,H,W] by replicating each value over the spatial grid.
    NodeId broadcast_spatial(NodeId a, int h, int w);

    /// Reverse pass from a scalar loss. Fills node gradients and accumulates
    /// into bound parameters. Leaves not on the path keep zero gradient.
    void backward(NodeId loss);

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool needs_grad = false;
        std::array<NodeId, 2> parents{-1, -1};
        int n_parents = 0;
        std::function<void(Tape&, NodeId)> back;
    };

    NodeId push(Tensor<T> value, bool needs_grad, NodeId p0, NodeId p1,
                std::function<void(Tape&, NodeId)> back);
    Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
    Tensor<T>& grad_mut(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }

    template <typename FwdF, typename BwdF>
    NodeId unary_op(NodeId a, const char* name, FwdF f, BwdF df);
    template <typename FwdF, typename DaF, typename DbF>
    NodeId binary_op(NodeId a, NodeId b, const char* name, FwdF f, DaF dfda, DbF dfdb);

    // deque keeps val()/grad() references stable while later ops are pushed
    std::deque<Node> nodes_;
    std::vector<std::pair<Parameter<T>*, NodeId>> bound_;
    std::vector<std::uint8_t> marks_;
    bool check_finite_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace projcgan

#endif
