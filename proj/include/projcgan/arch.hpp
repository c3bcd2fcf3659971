#ifndef PROJCGAN_ARCH_HPP
#define PROJCGAN_ARCH_HPP

#include <memory>
#include <string>
#include <vector>

#include "projcgan/layers.hpp"

namespace projcgan {

/// How the discriminator consumes the class label.
///   projection:    f = psi(phi(x)) + <V[y], phi(x)>
///   concat_input:  embedded y appended to the input (as channels / features)
///   concat_hidden: embedded y appended to a mid-trunk feature map
///   concat_output: embedded y appended to the pooled feature before the
///                  final linear (equivalently: psi(phi) plus a learned
///                  class bias, since the last layer is linear)
///   acgan:         unconditional adversarial logit plus a classifier head
enum class CondVariant { projection, concat_input, concat_hidden, concat_output, acgan };

CondVariant cond_variant_from_string(const std::string& s);
const char* to_string(CondVariant v);

/// One interpolated rendering request: blend class_a -> class_b at lambda.
/// lambda must lie in [0,1]; the endpoints reuse the stored rows untouched so
/// lambda=0 reproduces class_a exactly.
struct MorphSpec {
    int class_a = 0;
    int class_b = 0;
    double lambda = 0.0;
};

/// Discriminator outputs. class_logits is -1 except for the acgan variant.
struct DiscOut {
    NodeId logit = -1;
    NodeId class_logits = -1;
};

/// Standard-normal latent batch [n, z_dim].
template <typename T>
Tensor<T> sample_z(Rng& rng, int n, int z_dim);

/// Split [N, z_dim] into n_chunks equal [N, z_dim/n_chunks] pieces.
/// ValueError when z_dim is not divisible.
template <typename T>
std::vector<Tensor<T>> split_z(const Tensor<T>& z, int n_chunks);

// ---------------------------------------------------------------------------
// residual blocks

/// Generator block: (C)BN -> relu -> [up] -> conv3 -> (C)BN -> relu -> conv3,
/// plus a shortcut that upsamples first and then applies a 1x1 conv when the
/// block resamples or changes width. num_classes == 0 selects plain BN.
template <typename T>
class GenResBlock {
public:
    /// identity_sc forces a plain (conv-free) shortcut; DimensionError when
    /// that cannot carry the required width change.
    GenResBlock(Registry<T>& reg, const std::string& prefix, int in_ch, int out_ch,
                int num_classes, bool up, Rng rng, bool identity_sc = false);
    GenResBlock(const GenResBlock&) = delete;
    GenResBlock& operator=(const GenResBlock&) = delete;

    NodeId forward(Tape<T>& tape, NodeId x, const std::vector<int>& labels, Mode mode);
    /// Conditional blocks only: caller supplies per-sample gamma/beta rows
    /// for both norms (used for class morphing).
    NodeId forward_rows(Tape<T>& tape, NodeId x, NodeId g1, NodeId b1, NodeId g2, NodeId b2,
                        Mode mode);

    bool conditional() const { return cbn1_ != nullptr; }
    CondBatchNorm<T>& cbn1() { return *cbn1_; }
    CondBatchNorm<T>& cbn2() { return *cbn2_; }
    int in_ch() const { return in_ch_; }
    int out_ch() const { return out_ch_; }

private:
    NodeId shortcut(Tape<T>& tape, NodeId x, Mode mode);

    int in_ch_, out_ch_;
    bool up_, learnable_sc_;
    std::unique_ptr<BatchNorm<T>> bn1_, bn2_;
    std::unique_ptr<CondBatchNorm<T>> cbn1_, cbn2_;
    std::unique_ptr<Conv2d<T>> conv1_, conv2_, conv_sc_;
};

/// Discriminator block: relu -> conv3 -> relu -> conv3 -> [pool], shortcut
/// 1x1 conv then [pool]. With first=true the leading activation is dropped
/// (conv3 -> relu -> conv3 -> pool) and the shortcut pools before the 1x1
/// conv; first blocks always downsample. All convolutions are spectrally
/// normalized.
template <typename T>
class DiscResBlock {
public:
    DiscResBlock(Registry<T>& reg, const std::string& prefix, int in_ch, int out_ch, bool down,
                 bool first, Rng rng, bool identity_sc = false);
    DiscResBlock(const DiscResBlock&) = delete;
    DiscResBlock& operator=(const DiscResBlock&) = delete;

    NodeId forward(Tape<T>& tape, NodeId x, Mode mode);
    int in_ch() const { return in_ch_; }
    int out_ch() const { return out_ch_; }

private:
    int in_ch_, out_ch_;
    bool down_, first_, learnable_sc_;
    std::unique_ptr<Conv2d<T>> conv1_, conv2_, conv_sc_;
};

// ---------------------------------------------------------------------------
// image pair

struct ImageGenConfig {
    int num_classes = 8;  // 0 = unconditional
    int z_dim = 64;
    int ch = 64;
    int n_up = 2;     // output size = 4 * 2^n_up
    int out_ch = 3;
};

template <typename T>
class ImageGenerator {
public:
    ImageGenerator(const ImageGenConfig& cfg, Rng rng);
    ImageGenerator(const ImageGenerator&) = delete;
    ImageGenerator& operator=(const ImageGenerator&) = delete;

    NodeId forward(Tape<T>& tape, NodeId z, const std::vector<int>& labels, Mode mode);
    NodeId forward_morph(Tape<T>& tape, NodeId z, const std::vector<MorphSpec>& specs, Mode mode);
    /// Eval-mode convenience: sample one batch as a plain tensor.
    Tensor<T> sample(Rng& zrng, const std::vector<int>& labels);

    Registry<T>& reg() { return reg_; }
    const ImageGenConfig& config() const { return cfg_; }
    int out_size() const { return 4 << cfg_.n_up; }

private:
    ImageGenConfig cfg_;
    Registry<T> reg_;
    std::unique_ptr<Linear<T>> fc_;
    std::vector<std::unique_ptr<GenResBlock<T>>> blocks_;
    std::unique_ptr<BatchNorm<T>> bn_out_;
    std::unique_ptr<Conv2d<T>> conv_out_;
};

struct ImageDiscConfig {
    int num_classes = 8;
    int in_ch = 3;
    int img_size = 16;
    int ch = 64;
    int n_blocks = 4;
    int n_down = 2;         // leading blocks that downsample (first always does)
    CondVariant variant = CondVariant::projection;
    int embed_dim = 128;    // concat-variant embedding width
    int hidden_insert = -1; // block whose output takes the concat; -1 = penultimate
    bool sn_embedding = true;
};

template <typename T>
class ImageDiscriminator {
public:
    ImageDiscriminator(const ImageDiscConfig& cfg, Rng rng);
    ImageDiscriminator(const ImageDiscriminator&) = delete;
    ImageDiscriminator& operator=(const ImageDiscriminator&) = delete;

    DiscOut forward(Tape<T>& tape, NodeId x, const std::vector<int>& labels, Mode mode);
    /// Projection variant with an explicit label weighting y [N, num_classes]
    /// instead of integer labels: f = psi + sum((y V) * phi). One-hot rows
    /// reproduce forward().
    NodeId forward_yvec(Tape<T>& tape, NodeId x, NodeId y_rows, Mode mode);
    /// Trunk feature phi(x) [N, ch] (pooled, post-activation).
    NodeId features(Tape<T>& tape, NodeId x, const std::vector<int>& labels, Mode mode);

    Registry<T>& reg() { return reg_; }
    const ImageDiscConfig& config() const { return cfg_; }

private:
    ImageDiscConfig cfg_;
    Registry<T> reg_;
    std::vector<std::unique_ptr<DiscResBlock<T>>> blocks_;
    std::unique_ptr<Linear<T>> psi_;
    std::unique_ptr<Embedding<T>> embed_;  // projection V or concat embedding
    std::unique_ptr<Linear<T>> out_cond_;  // concat_output class path
    std::unique_ptr<Linear<T>> cls_;       // acgan classifier head
};

// ---------------------------------------------------------------------------
// vector pair (2-D synthetic tasks)

struct VectorGenConfig {
    int num_classes = 8;
    int z_dim = 8;
    int hidden = 64;
    int n_hidden = 2;
    int out_dim = 2;  // linear output, no squashing
};

template <typename T>
class VectorGenerator {
public:
    VectorGenerator(const VectorGenConfig& cfg, Rng rng);
    VectorGenerator(const VectorGenerator&) = delete;
    VectorGenerator& operator=(const VectorGenerator&) = delete;

    NodeId forward(Tape<T>& tape, NodeId z, const std::vector<int>& labels, Mode mode);
    NodeId forward_morph(Tape<T>& tape, NodeId z, const std::vector<MorphSpec>& specs, Mode mode);
    Tensor<T> sample(Rng& zrng, const std::vector<int>& labels);

    Registry<T>& reg() { return reg_; }
    const VectorGenConfig& config() const { return cfg_; }

private:
    VectorGenConfig cfg_;
    Registry<T> reg_;
    std::vector<std::unique_ptr<Linear<T>>> fcs_;
    std::vector<std::unique_ptr<BatchNorm<T>>> bns_;
    std::vector<std::unique_ptr<CondBatchNorm<T>>> cbns_;
    std::unique_ptr<Linear<T>> fc_out_;
};

struct VectorDiscConfig {
    int num_classes = 8;
    int in_dim = 2;
    int hidden = 64;
    int n_hidden = 2;       // >= 2
    CondVariant variant = CondVariant::projection;
    int embed_dim = 16;
    int hidden_insert = -1; // layer whose output takes the concat; -1 = penultimate
    bool sn_embedding = true;
};

template <typename T>
class VectorDiscriminator {
public:
    VectorDiscriminator(const VectorDiscConfig& cfg, Rng rng);
    VectorDiscriminator(const VectorDiscriminator&) = delete;
    VectorDiscriminator& operator=(const VectorDiscriminator&) = delete;

    DiscOut forward(Tape<T>& tape, NodeId x, const std::vector<int>& labels, Mode mode);
    NodeId forward_yvec(Tape<T>& tape, NodeId x, NodeId y_rows, Mode mode);
    NodeId features(Tape<T>& tape, NodeId x, const std::vector<int>& labels, Mode mode);

    Registry<T>& reg() { return reg_; }
    const VectorDiscConfig& config() const { return cfg_; }

private:
    VectorDiscConfig cfg_;
    Registry<T> reg_;
    std::vector<std::unique_ptr<Linear<T>>> fcs_;
    std::unique_ptr<Linear<T>> psi_;
    std::unique_ptr<Embedding<T>> embed_;
    std::unique_ptr<Linear<T>> out_cond_;
    std::unique_ptr<Linear<T>> cls_;
};

// ---------------------------------------------------------------------------
// super-resolution pair

struct SRGenConfig {
    int in_ch = 3;
    int ch = 64;
    int n_up = 2;    // upscale factor = 2^n_up
    int z_dim = 32;  // divisible by n_up; chunks enter one up-block each
};

/// Upsampling generator conditioned on the low-resolution image. Each
/// up-block reads its z chunk as extra input channels (replicated spatially,
/// appended before the block's first convolution).
template <typename T>
class SRGenerator {
public:
    SRGenerator(const SRGenConfig& cfg, Rng rng);
    SRGenerator(const SRGenerator&) = delete;
    SRGenerator& operator=(const SRGenerator&) = delete;

    /// z_chunks: n_up nodes, each [N, z_dim/n_up]; y_lo: [N, in_ch, h, w].
    NodeId forward(Tape<T>& tape, const std::vector<NodeId>& z_chunks, NodeId y_lo, Mode mode);
    Tensor<T> sample(Rng& zrng, const Tensor<T>& y_lo);

    Registry<T>& reg() { return reg_; }
    const SRGenConfig& config() const { return cfg_; }
    int factor() const { return 1 << cfg_.n_up; }

private:
    SRGenConfig cfg_;
    Registry<T> reg_;
    std::unique_ptr<Conv2d<T>> conv_in_;
    std::vector<std::unique_ptr<GenResBlock<T>>> blocks_;
    std::unique_ptr<BatchNorm<T>> bn_out_;
    std::unique_ptr<Conv2d<T>> conv_out_;
};

struct SRDiscConfig {
    int in_ch = 3;
    int ch = 64;
    int n_down = 2;  // trunk downsamples hi resolution by 2^n_down to match y_lo
    int n_flat = 1;  // extra non-resampling blocks at the low resolution
};

/// Spatial projection discriminator: the trunk maps the high-resolution
/// input to a feature map at the conditioning resolution, a 1x1 conv V turns
/// it into an in_ch-channel map F, and
///   f(x, y_lo) = sum_ijk y_lo[ijk] * F[ijk] + psi(pooled features).
template <typename T>
class SRDiscriminator {
public:
    SRDiscriminator(const SRDiscConfig& cfg, Rng rng);
    SRDiscriminator(const SRDiscriminator&) = delete;
    SRDiscriminator& operator=(const SRDiscriminator&) = delete;

    /// DimensionError when the trunk output extent does not match y_lo.
    NodeId forward(Tape<T>& tape, NodeId x_hi, NodeId y_lo, Mode mode);
    /// psi-only part (no conditioning term), for linearity checks.
    NodeId psi_logit(Tape<T>& tape, NodeId x_hi, Mode mode);

    Registry<T>& reg() { return reg_; }
    const SRDiscConfig& config() const { return cfg_; }

private:
    NodeId trunk(Tape<T>& tape, NodeId x_hi, Mode mode);  // post-activation feature map

    SRDiscConfig cfg_;
    Registry<T> reg_;
    std::vector<std::unique_ptr<DiscResBlock<T>>> blocks_;
    std::unique_ptr<Conv2d<T>> vproj_;
    std::unique_ptr<Linear<T>> psi_;
};

}  // namespace projcgan

#endif
