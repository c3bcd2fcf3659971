#ifndef PROJCGAN_LAYERS_HPP
#define PROJCGAN_LAYERS_HPP

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "projcgan/rng.hpp"
#include "projcgan/tape.hpp"
#include "projcgan/tensor.hpp"

namespace projcgan {

/// Train: batch statistics, persistent state updated.
/// Eval: running statistics, no state writes.
/// GradCheck: batch statistics like Train, but no state writes, so repeated
/// evaluations of the same graph are bit-identical (finite differences).
enum class Mode { Train, Eval, GradCheck };

/// Named parameter and state lists for one network. Order of registration is
/// the serialization and optimizer order, so it must be deterministic.
template <typename T>
struct Registry {
    std::vector<std::pair<std::string, Parameter<T>*>> params;
    std::vector<std::pair<std::string, Tensor<T>*>> state;

    void add_param(std::string name, Parameter<T>* p);
    void add_state(std::string name, Tensor<T>* s);
    Parameter<T>* find_param(const std::string& name) const;
    Tensor<T>* find_state(const std::string& name) const;
    std::int64_t param_count() const;
    void zero_grad();
};

/// Fully connected layer; weight stored [in, out] so the forward pass is a
/// plain x @ W. Spectral normalization divides by sigma = u^T W v where u and
/// v are persistent estimates advanced one power-iteration step per train
/// forward and held fixed (also through the gradient) otherwise.
template <typename T>
class Linear {
public:
    Linear(Registry<T>& reg, const std::string& prefix, int in, int out, Rng& rng,
           bool bias = true, bool spectral = false, double gain = 1.4142135623730951);
    Linear(const Linear&) = delete;
    Linear& operator=(const Linear&) = delete;

    NodeId forward(Tape<T>& tape, NodeId x, Mode mode);
    int in_dim() const { return in_; }
    int out_dim() const { return out_; }
    Parameter<T>& weight() { return w_; }
    const Tensor<T>& u() const { return u_; }

private:
    int in_, out_;
    bool has_bias_, spectral_;
    Parameter<T> w_;
    Parameter<T> b_;
    Tensor<T> u_, v_;
};

/// 2-D convolution layer, weight [out, in, k, k]. Spectral normalization
/// flattens the kernel to [out, in*k*k] for the power iteration.
template <typename T>
class Conv2d {
public:
    Conv2d(Registry<T>& reg, const std::string& prefix, int in_ch, int out_ch, int k, int stride,
           int pad, Rng& rng, bool bias = true, bool spectral = false,
           double gain = 1.4142135623730951);
    Conv2d(const Conv2d&) = delete;
    Conv2d& operator=(const Conv2d&) = delete;

    NodeId forward(Tape<T>& tape, NodeId x, Mode mode);
    Parameter<T>& weight() { return w_; }
    const Tensor<T>& u() const { return u_; }

private:
    int in_ch_, out_ch_, k_, stride_, pad_;
    bool has_bias_, spectral_;
    Parameter<T> w_;
    Parameter<T> b_;
    Tensor<T> u_, v_;
};

/// Class-embedding table [rows, dim]; forward gathers one row per label.
template <typename T>
class Embedding {
public:
    Embedding(Registry<T>& reg, const std::string& prefix, int rows, int dim, Rng& rng,
              bool spectral = false, double init_std = 0.0);  // 0 = 1/sqrt(dim)
    Embedding(const Embedding&) = delete;
    Embedding& operator=(const Embedding&) = delete;

    NodeId forward(Tape<T>& tape, const std::vector<int>& labels, Mode mode);
    /// Whole (normalized) table as a node; used when the projection needs V
    /// itself rather than a gathered row.
    NodeId table_node(Tape<T>& tape, Mode mode);
    int rows() const { return rows_; }
    int dim() const { return dim_; }
    Parameter<T>& table() { return w_; }

private:
    int rows_, dim_;
    bool spectral_;
    Parameter<T> w_;
    Tensor<T> u_, v_;
};

/// Batch normalization over [N,C] or [N,C,H,W]. Running statistics follow
/// new = (1-momentum)*old + momentum*batch, with the unbiased batch variance
/// stored and the biased one used for normalization.
template <typename T>
class BatchNorm {
public:
    BatchNorm(Registry<T>& reg, const std::string& prefix, int channels, bool affine = true,
              T eps = static_cast<T>(1e-5), T momentum = static_cast<T>(0.1));
    BatchNorm(const BatchNorm&) = delete;
    BatchNorm& operator=(const BatchNorm&) = delete;

    /// (x - mu) / sqrt(var + eps), no affine part.
    NodeId normalize(Tape<T>& tape, NodeId x, Mode mode);
    /// normalize() followed by gamma * xhat + beta (affine layers only).
    NodeId forward(Tape<T>& tape, NodeId x, Mode mode);
    int channels() const { return channels_; }
    const Tensor<T>& running_mean() const { return run_mean_; }
    const Tensor<T>& running_var() const { return run_var_; }

private:
    int channels_;
    bool affine_;
    T eps_, momentum_;
    Parameter<T> gamma_, beta_;
    Tensor<T> run_mean_, run_var_;
};

/// Conditional batch normalization: shared statistics, per-class gamma/beta
/// rows gathered by label. Row mixing for morphing goes through forward_rows.
template <typename T>
class CondBatchNorm {
public:
    CondBatchNorm(Registry<T>& reg, const std::string& prefix, int num_classes, int channels,
                  T eps = static_cast<T>(1e-5), T momentum = static_cast<T>(0.1));
    CondBatchNorm(const CondBatchNorm&) = delete;
    CondBatchNorm& operator=(const CondBatchNorm&) = delete;

    NodeId forward(Tape<T>& tape, NodeId x, const std::vector<int>& labels, Mode mode);
    /// Caller supplies per-sample gamma/beta rows [N,C] (e.g. mixed rows).
    NodeId forward_rows(Tape<T>& tape, NodeId x, NodeId gamma_rows, NodeId beta_rows, Mode mode);
    int num_classes() const { return num_classes_; }
    int channels() const { return bn_.channels(); }
    Parameter<T>& gamma_table() { return gamma_table_; }
    Parameter<T>& beta_table() { return beta_table_; }

private:
    int num_classes_;
    BatchNorm<T> bn_;  // affine off; owns the running statistics
    Parameter<T> gamma_table_, beta_table_;
};

using RegistryF = Registry<float>;
using RegistryD = Registry<double>;

}  // namespace projcgan

#endif
