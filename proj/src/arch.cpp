#include "projcgan/arch.hpp"

#include <cstdint>
#include <utility>

#include "projcgan/errors.hpp"

namespace projcgan {

CondVariant cond_variant_from_string(const std::string& s) {
    if (s == "projection") return CondVariant::projection;
    if (s == "concat_input") return CondVariant::concat_input;
    if (s == "concat_hidden") return CondVariant::concat_hidden;
    if (s == "concat_output") return CondVariant::concat_output;
    if (s == "acgan") return CondVariant::acgan;
    throw ValueError("unknown conditioning variant '" + s + "'");
}

const char* to_string(CondVariant v) {
    switch (v) {
        case CondVariant::projection: return "projection";
        case CondVariant::concat_input: return "concat_input";
        case CondVariant::concat_hidden: return "concat_hidden";
        case CondVariant::concat_output: return "concat_output";
        case CondVariant::acgan: return "acgan";
    }
    return "?";
}

template <typename T>
Tensor<T> sample_z(Rng& rng, int n, int z_dim) {
    if (n <= 0 || z_dim <= 0) throw ValueError("sample_z: batch and z_dim must be positive");
    return rng.sample_gaussian<T>({n, z_dim});
}

template <typename T>
std::vector<Tensor<T>> split_z(const Tensor<T>& z, int n_chunks) {
    if (z.rank() != 2) throw DimensionError("split_z expects [N, z_dim], got " + shape_str(z.shape()));
    if (n_chunks <= 0 || z.extent(1) % n_chunks != 0)
        throw ValueError("split_z: z_dim not divisible into " + std::to_string(n_chunks) + " chunks");
    const int n = z.extent(0);
    const int w = z.extent(1) / n_chunks;
    std::vector<Tensor<T>> out;
    for (int c = 0; c < n_chunks; ++c) {
        Tensor<T> t({n, w});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < w; ++j) t.at(i, j) = z.at(i, c * w + j);
        out.push_back(std::move(t));
    }
    return out;
}

namespace {

// Per-sample affine rows for morphing: endpoints copy the stored row
// untouched so lambda in {0,1} is bit-exact.
template <typename T>
Tensor<T> mixed_rows(const Tensor<T>& table, const std::vector<MorphSpec>& specs) {
    const int c = table.extent(1);
    const int n = static_cast<int>(specs.size());
    Tensor<T> out({n, c});
    for (int i = 0; i < n; ++i) {
        const MorphSpec& m = specs[static_cast<std::size_t>(i)];
        if (m.class_a < 0 || m.class_a >= table.extent(0) || m.class_b < 0 ||
            m.class_b >= table.extent(0))
            throw ValueError("morph class out of range");
        if (!(m.lambda >= 0.0 && m.lambda <= 1.0))
            throw ValueError("morph lambda outside [0,1]");
        for (int j = 0; j < c; ++j) {
            const T a = table.at(m.class_a, j);
            const T b = table.at(m.class_b, j);
            if (m.lambda == 0.0)
                out.at(i, j) = a;
            else if (m.lambda == 1.0)
                out.at(i, j) = b;
            else
                out.at(i, j) = static_cast<T>((1.0 - m.lambda) * a + m.lambda * b);
        }
    }
    return out;
}

void check_labels(std::size_t n_labels, std::int64_t batch) {
    if (static_cast<std::int64_t>(n_labels) != batch)
        throw DimensionError("label count " + std::to_string(n_labels) +
                             " does not match batch " + std::to_string(batch));
}

}  // namespace

// ---------------------------------------------------------------------------
// GenResBlock

template <typename T>
GenResBlock<T>::GenResBlock(Registry<T>& reg, const std::string& prefix, int in_ch, int out_ch,
                            int num_classes, bool up, Rng rng, bool identity_sc)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      up_(up),
      learnable_sc_(!identity_sc && (in_ch != out_ch || up)) {
    if (identity_sc && in_ch != out_ch)
        throw DimensionError("generator block changes width but has no shortcut conv");
    if (num_classes > 0) {
        cbn1_ = std::make_unique<CondBatchNorm<T>>(reg, prefix + ".bn1", num_classes, in_ch);
        cbn2_ = std::make_unique<CondBatchNorm<T>>(reg, prefix + ".bn2", num_classes, out_ch);
    } else {
        bn1_ = std::make_unique<BatchNorm<T>>(reg, prefix + ".bn1", in_ch);
        bn2_ = std::make_unique<BatchNorm<T>>(reg, prefix + ".bn2", out_ch);
    }
    // every conv here feeds a norm layer (bn2, or the consumer's leading BN),
    // which cancels per-channel shifts, so biases would be dead parameters
    conv1_ = std::make_unique<Conv2d<T>>(reg, prefix + ".c1", in_ch, out_ch, 3, 1, 1, rng,
                                         /*bias=*/false);
    conv2_ = std::make_unique<Conv2d<T>>(reg, prefix + ".c2", out_ch, out_ch, 3, 1, 1, rng, false);
    if (learnable_sc_)
        conv_sc_ = std::make_unique<Conv2d<T>>(reg, prefix + ".sc", in_ch, out_ch, 1, 1, 0, rng,
                                               false);
}

template <typename T>
NodeId GenResBlock<T>::shortcut(Tape<T>& tape, NodeId x, Mode mode) {
    NodeId s = x;
    if (up_) s = tape.upsample_nearest2x(s);
    if (learnable_sc_) s = conv_sc_->forward(tape, s, mode);
    return s;
}

template <typename T>
NodeId GenResBlock<T>::forward(Tape<T>& tape, NodeId x, const std::vector<int>& labels,
                               Mode mode) {
    NodeId h = conditional() ? cbn1_->forward(tape, x, labels, mode) : bn1_->forward(tape, x, mode);
    h = tape.relu(h);
    if (up_) h = tape.upsample_nearest2x(h);
    h = conv1_->forward(tape, h, mode);
    h = conditional() ? cbn2_->forward(tape, h, labels, mode) : bn2_->forward(tape, h, mode);
    h = tape.relu(h);
    h = conv2_->forward(tape, h, mode);
    return tape.add(h, shortcut(tape, x, mode));
}

template <typename T>
NodeId GenResBlock<T>::forward_rows(Tape<T>& tape, NodeId x, NodeId g1, NodeId b1, NodeId g2,
                                    NodeId b2, Mode mode) {
    if (!conditional()) throw ValueError("forward_rows on an unconditional block");
    NodeId h = cbn1_->forward_rows(tape, x, g1, b1, mode);
    h = tape.relu(h);
    if (up_) h = tape.upsample_nearest2x(h);
    h = conv1_->forward(tape, h, mode);
    h = cbn2_->forward_rows(tape, h, g2, b2, mode);
    h = tape.relu(h);
    h = conv2_->forward(tape, h, mode);
    return tape.add(h, shortcut(tape, x, mode));
}

// ---------------------------------------------------------------------------
// DiscResBlock

template <typename T>
DiscResBlock<T>::DiscResBlock(Registry<T>& reg, const std::string& prefix, int in_ch, int out_ch,
                              bool down, bool first, Rng rng, bool identity_sc)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      down_(down),
      first_(first),
      learnable_sc_(!identity_sc && (in_ch != out_ch || down || first)) {
    if (first && !down) throw ValueError("first discriminator block must downsample");
    if (identity_sc && in_ch != out_ch)
        throw DimensionError("discriminator block changes width but has no shortcut conv");
    if (identity_sc && first)
        throw ValueError("first discriminator block requires a learnable shortcut");
    conv1_ = std::make_unique<Conv2d<T>>(reg, prefix + ".c1", in_ch, out_ch, 3, 1, 1, rng,
                                         /*bias=*/true, /*spectral=*/true);
    conv2_ = std::make_unique<Conv2d<T>>(reg, prefix + ".c2", out_ch, out_ch, 3, 1, 1, rng, true,
                                         true);
    if (learnable_sc_)
        conv_sc_ = std::make_unique<Conv2d<T>>(reg, prefix + ".sc", in_ch, out_ch, 1, 1, 0, rng,
                                               true, true);
}

template <typename T>
NodeId DiscResBlock<T>::forward(Tape<T>& tape, NodeId x, Mode mode) {
    NodeId h, sc;
    if (first_) {
        h = conv1_->forward(tape, x, mode);
        h = tape.relu(h);
        h = conv2_->forward(tape, h, mode);
        h = tape.avg_pool2x2(h);
        sc = conv_sc_->forward(tape, tape.avg_pool2x2(x), mode);
    } else {
        h = tape.relu(x);
        h = conv1_->forward(tape, h, mode);
        h = tape.relu(h);
        h = conv2_->forward(tape, h, mode);
        if (down_) h = tape.avg_pool2x2(h);
        sc = learnable_sc_ ? conv_sc_->forward(tape, x, mode) : x;
        if (down_) sc = tape.avg_pool2x2(sc);
    }
    return tape.add(h, sc);
}

// ---------------------------------------------------------------------------
// ImageGenerator

template <typename T>
ImageGenerator<T>::ImageGenerator(const ImageGenConfig& cfg, Rng rng) : cfg_(cfg) {
    if (cfg.n_up < 1) throw ValueError("image generator needs at least one up-block");
    Rng r0 = rng.spawn(0);
    fc_ = std::make_unique<Linear<T>>(reg_, "fc", cfg.z_dim, 4 * 4 * cfg.ch, r0);
    blocks_.reserve(static_cast<std::size_t>(cfg.n_up));
    for (int i = 0; i < cfg.n_up; ++i)
        blocks_.push_back(std::make_unique<GenResBlock<T>>(
            reg_, "b" + std::to_string(i), cfg.ch, cfg.ch, cfg.num_classes, /*up=*/true,
            rng.spawn(static_cast<std::uint64_t>(1 + i))));
    bn_out_ = std::make_unique<BatchNorm<T>>(reg_, "bn_out", cfg.ch);
    Rng r_out = rng.spawn(63);
    conv_out_ = std::make_unique<Conv2d<T>>(reg_, "conv_out", cfg.ch, cfg.out_ch, 3, 1, 1, r_out);
}

template <typename T>
NodeId ImageGenerator<T>::forward(Tape<T>& tape, NodeId z, const std::vector<int>& labels,
                                  Mode mode) {
    const int n = tape.val(z).extent(0);
    if (cfg_.num_classes > 0) check_labels(labels.size(), n);
    NodeId h = fc_->forward(tape, z, mode);
    h = tape.reshape(h, {n, cfg_.ch, 4, 4});
    for (auto& b : blocks_) h = b->forward(tape, h, labels, mode);
    h = bn_out_->forward(tape, h, mode);
    h = tape.relu(h);
    h = conv_out_->forward(tape, h, mode);
    return tape.tanh(h);
}

template <typename T>
NodeId ImageGenerator<T>::forward_morph(Tape<T>& tape, NodeId z, const std::vector<MorphSpec>& specs,
                                        Mode mode) {
    if (cfg_.num_classes <= 0) throw ValueError("morph requires a conditional generator");
    const int n = tape.val(z).extent(0);
    check_labels(specs.size(), n);
    NodeId h = fc_->forward(tape, z, mode);
    h = tape.reshape(h, {n, cfg_.ch, 4, 4});
    for (auto& b : blocks_) {
        NodeId g1 = tape.constant(mixed_rows(b->cbn1().gamma_table().value, specs));
        NodeId b1 = tape.constant(mixed_rows(b->cbn1().beta_table().value, specs));
        NodeId g2 = tape.constant(mixed_rows(b->cbn2().gamma_table().value, specs));
        NodeId b2 = tape.constant(mixed_rows(b->cbn2().beta_table().value, specs));
        h = b->forward_rows(tape, h, g1, b1, g2, b2, mode);
    }
    h = bn_out_->forward(tape, h, mode);
    h = tape.relu(h);
    h = conv_out_->forward(tape, h, mode);
    return tape.tanh(h);
}

template <typename T>
Tensor<T> ImageGenerator<T>::sample(Rng& zrng, const std::vector<int>& labels) {
    Tape<T> tape;
    NodeId z = tape.constant(sample_z<T>(zrng, static_cast<int>(labels.size()), cfg_.z_dim));
    return tape.val(forward(tape, z, labels, Mode::Eval));
}

// ---------------------------------------------------------------------------
// ImageDiscriminator

template <typename T>
ImageDiscriminator<T>::ImageDiscriminator(const ImageDiscConfig& cfg, Rng rng) : cfg_(cfg) {
    if (cfg.n_blocks < 2) throw ValueError("image discriminator needs at least two blocks");
    if (cfg.n_down < 1 || cfg.n_down > cfg.n_blocks)
        throw ValueError("image discriminator: bad n_down");
    if ((cfg.img_size >> cfg.n_down) << cfg.n_down != cfg.img_size || cfg.img_size >> cfg.n_down < 1)
        throw DimensionError("image size does not survive the downsampling chain");
    if (cfg_.hidden_insert < 0) cfg_.hidden_insert = cfg.n_blocks - 2;
    if (cfg_.hidden_insert > cfg.n_blocks - 2)
        throw ValueError("hidden_insert must leave at least one block after it");
    const bool needs_embed = cfg.variant != CondVariant::acgan;
    const int de = cfg.embed_dim;
    if (needs_embed && cfg.variant != CondVariant::projection && de <= 0)
        throw ValueError("concat variants need embed_dim > 0");

    int in_c = cfg.in_ch;
    if (cfg.variant == CondVariant::concat_input) in_c += de;
    for (int i = 0; i < cfg.n_blocks; ++i) {
        const bool down = i < cfg.n_down;
        blocks_.push_back(std::make_unique<DiscResBlock<T>>(
            reg_, "b" + std::to_string(i), in_c, cfg.ch, down, /*first=*/i == 0,
            rng.spawn(static_cast<std::uint64_t>(i))));
        in_c = cfg.ch;
        if (cfg.variant == CondVariant::concat_hidden && i == cfg_.hidden_insert) in_c += de;
    }
    Rng r_psi = rng.spawn(64);
    psi_ = std::make_unique<Linear<T>>(reg_, "psi", cfg.ch, 1, r_psi, true, /*spectral=*/true);
    Rng r_emb = rng.spawn(65);
    Rng r_head = rng.spawn(66);
    switch (cfg.variant) {
        case CondVariant::projection:
            embed_ = std::make_unique<Embedding<T>>(reg_, "embed", cfg.num_classes, cfg.ch, r_emb,
                                                    cfg.sn_embedding);
            break;
        case CondVariant::concat_input:
        case CondVariant::concat_hidden:
            embed_ = std::make_unique<Embedding<T>>(reg_, "embed", cfg.num_classes, de, r_emb);
            break;
        case CondVariant::concat_output:
            embed_ = std::make_unique<Embedding<T>>(reg_, "embed", cfg.num_classes, de, r_emb);
            out_cond_ = std::make_unique<Linear<T>>(reg_, "out_cond", de, 1, r_head,
                                                    /*bias=*/false, /*spectral=*/true);
            break;
        case CondVariant::acgan:
            cls_ = std::make_unique<Linear<T>>(reg_, "cls", cfg.ch, cfg.num_classes, r_head, true,
                                               /*spectral=*/true);
            break;
    }
}

template <typename T>
NodeId ImageDiscriminator<T>::features(Tape<T>& tape, NodeId x, const std::vector<int>& labels,
                                       Mode mode) {
    const Tensor<T>& xv = tape.val(x);
    if (xv.rank() != 4 || xv.extent(2) != cfg_.img_size || xv.extent(3) != cfg_.img_size)
        throw DimensionError("discriminator input " + shape_str(xv.shape()) + " does not match config");
    const int n = xv.extent(0);
    NodeId h = x;
    int size = cfg_.img_size;
    NodeId e = -1;
    if (cfg_.variant == CondVariant::concat_input || cfg_.variant == CondVariant::concat_hidden) {
        check_labels(labels.size(), n);
        e = embed_->forward(tape, labels, mode);
    }
    if (cfg_.variant == CondVariant::concat_input)
        h = tape.concat_dim1(h, tape.broadcast_spatial(e, size, size));
    for (int i = 0; i < cfg_.n_blocks; ++i) {
        h = blocks_[static_cast<std::size_t>(i)]->forward(tape, h, mode);
        if (i < cfg_.n_down) size /= 2;
        if (cfg_.variant == CondVariant::concat_hidden && i == cfg_.hidden_insert)
            h = tape.concat_dim1(h, tape.broadcast_spatial(e, size, size));
    }
    h = tape.relu(h);
    return tape.global_sum_pool(h);
}

template <typename T>
DiscOut ImageDiscriminator<T>::forward(Tape<T>& tape, NodeId x, const std::vector<int>& labels,
                                       Mode mode) {
    NodeId phi = features(tape, x, labels, mode);
    const int n = tape.val(phi).extent(0);
    NodeId psi = tape.reshape(psi_->forward(tape, phi, mode), {n});
    DiscOut out;
    switch (cfg_.variant) {
        case CondVariant::projection: {
            check_labels(labels.size(), n);
            NodeId rows = embed_->forward(tape, labels, mode);
            out.logit = tape.add(psi, tape.sum(tape.mul(rows, phi), {1}));
            break;
        }
        case CondVariant::concat_input:
        case CondVariant::concat_hidden:
            out.logit = psi;
            break;
        case CondVariant::concat_output: {
            check_labels(labels.size(), n);
            NodeId rows = embed_->forward(tape, labels, mode);
            out.logit = tape.add(psi, tape.reshape(out_cond_->forward(tape, rows, mode), {n}));
            break;
        }
        case CondVariant::acgan:
            out.logit = psi;
            out.class_logits = cls_->forward(tape, phi, mode);
            break;
    }
    return out;
}

template <typename T>
NodeId ImageDiscriminator<T>::forward_yvec(Tape<T>& tape, NodeId x, NodeId y_rows, Mode mode) {
    if (cfg_.variant != CondVariant::projection)
        throw ContractError("forward_yvec is only defined for the projection variant");
    NodeId phi = features(tape, x, {}, mode);
    const int n = tape.val(phi).extent(0);
    NodeId psi = tape.reshape(psi_->forward(tape, phi, mode), {n});
    NodeId rows = tape.matmul(y_rows, embed_->table_node(tape, mode));
    return tape.add(psi, tape.sum(tape.mul(rows, phi), {1}));
}

// ---------------------------------------------------------------------------
// VectorGenerator

template <typename T>
VectorGenerator<T>::VectorGenerator(const VectorGenConfig& cfg, Rng rng) : cfg_(cfg) {
    if (cfg.n_hidden < 1) throw ValueError("vector generator needs at least one hidden layer");
    int in = cfg.z_dim;
    for (int i = 0; i < cfg.n_hidden; ++i) {
        Rng ri = rng.spawn(static_cast<std::uint64_t>(i));
        fcs_.push_back(std::make_unique<Linear<T>>(reg_, "fc" + std::to_string(i), in, cfg.hidden,
                                                   ri, /*bias=*/false));  // the norm eats shifts
        if (cfg.num_classes > 0)
            cbns_.push_back(std::make_unique<CondBatchNorm<T>>(reg_, "bn" + std::to_string(i),
                                                               cfg.num_classes, cfg.hidden));
        else
            bns_.push_back(std::make_unique<BatchNorm<T>>(reg_, "bn" + std::to_string(i),
                                                          cfg.hidden));
        in = cfg.hidden;
    }
    Rng r_out = rng.spawn(63);
    fc_out_ = std::make_unique<Linear<T>>(reg_, "fc_out", cfg.hidden, cfg.out_dim, r_out);
}

template <typename T>
NodeId VectorGenerator<T>::forward(Tape<T>& tape, NodeId z, const std::vector<int>& labels,
                                   Mode mode) {
    if (cfg_.num_classes > 0) check_labels(labels.size(), tape.val(z).extent(0));
    NodeId h = z;
    for (int i = 0; i < cfg_.n_hidden; ++i) {
        h = fcs_[static_cast<std::size_t>(i)]->forward(tape, h, mode);
        h = cfg_.num_classes > 0
                ? cbns_[static_cast<std::size_t>(i)]->forward(tape, h, labels, mode)
                : bns_[static_cast<std::size_t>(i)]->forward(tape, h, mode);
        h = tape.relu(h);
    }
    return fc_out_->forward(tape, h, mode);
}

template <typename T>
NodeId VectorGenerator<T>::forward_morph(Tape<T>& tape, NodeId z,
                                         const std::vector<MorphSpec>& specs, Mode mode) {
    if (cfg_.num_classes <= 0) throw ValueError("morph requires a conditional generator");
    check_labels(specs.size(), tape.val(z).extent(0));
    NodeId h = z;
    for (int i = 0; i < cfg_.n_hidden; ++i) {
        auto& cbn = *cbns_[static_cast<std::size_t>(i)];
        h = fcs_[static_cast<std::size_t>(i)]->forward(tape, h, mode);
        NodeId g = tape.constant(mixed_rows(cbn.gamma_table().value, specs));
        NodeId b = tape.constant(mixed_rows(cbn.beta_table().value, specs));
        h = cbn.forward_rows(tape, h, g, b, mode);
        h = tape.relu(h);
    }
    return fc_out_->forward(tape, h, mode);
}

template <typename T>
Tensor<T> VectorGenerator<T>::sample(Rng& zrng, const std::vector<int>& labels) {
    Tape<T> tape;
    NodeId z = tape.constant(sample_z<T>(zrng, static_cast<int>(labels.size()), cfg_.z_dim));
    return tape.val(forward(tape, z, labels, Mode::Eval));
}

// ---------------------------------------------------------------------------
// VectorDiscriminator

template <typename T>
VectorDiscriminator<T>::VectorDiscriminator(const VectorDiscConfig& cfg, Rng rng) : cfg_(cfg) {
    if (cfg.n_hidden < 2) throw ValueError("vector discriminator needs at least two hidden layers");
    if (cfg_.hidden_insert < 0) cfg_.hidden_insert = cfg.n_hidden - 2;
    if (cfg_.hidden_insert > cfg.n_hidden - 2)
        throw ValueError("hidden_insert must leave at least one layer after it");
    const int de = cfg.embed_dim;
    if (cfg.variant != CondVariant::projection && cfg.variant != CondVariant::acgan && de <= 0)
        throw ValueError("concat variants need embed_dim > 0");

    int in = cfg.in_dim;
    if (cfg.variant == CondVariant::concat_input) in += de;
    for (int i = 0; i < cfg.n_hidden; ++i) {
        Rng ri = rng.spawn(static_cast<std::uint64_t>(i));
        fcs_.push_back(std::make_unique<Linear<T>>(reg_, "fc" + std::to_string(i), in, cfg.hidden,
                                                   ri, true, /*spectral=*/true));
        in = cfg.hidden;
        if (cfg.variant == CondVariant::concat_hidden && i == cfg_.hidden_insert) in += de;
    }
    Rng r_psi = rng.spawn(64);
    psi_ = std::make_unique<Linear<T>>(reg_, "psi", cfg.hidden, 1, r_psi, true, true);
    Rng r_emb = rng.spawn(65);
    Rng r_head = rng.spawn(66);
    switch (cfg.variant) {
        case CondVariant::projection:
            embed_ = std::make_unique<Embedding<T>>(reg_, "embed", cfg.num_classes, cfg.hidden,
                                                    r_emb, cfg.sn_embedding);
            break;
        case CondVariant::concat_input:
        case CondVariant::concat_hidden:
            embed_ = std::make_unique<Embedding<T>>(reg_, "embed", cfg.num_classes, de, r_emb);
            break;
        case CondVariant::concat_output:
            embed_ = std::make_unique<Embedding<T>>(reg_, "embed", cfg.num_classes, de, r_emb);
            out_cond_ = std::make_unique<Linear<T>>(reg_, "out_cond", de, 1, r_head, false, true);
            break;
        case CondVariant::acgan:
            cls_ = std::make_unique<Linear<T>>(reg_, "cls", cfg.hidden, cfg.num_classes, r_head,
                                               true, true);
            break;
    }
}

template <typename T>
NodeId VectorDiscriminator<T>::features(Tape<T>& tape, NodeId x, const std::vector<int>& labels,
                                        Mode mode) {
    const int n = tape.val(x).extent(0);
    NodeId h = x;
    NodeId e = -1;
    if (cfg_.variant == CondVariant::concat_input || cfg_.variant == CondVariant::concat_hidden) {
        check_labels(labels.size(), n);
        e = embed_->forward(tape, labels, mode);
    }
    if (cfg_.variant == CondVariant::concat_input) h = tape.concat_dim1(h, e);
    for (int i = 0; i < cfg_.n_hidden; ++i) {
        h = fcs_[static_cast<std::size_t>(i)]->forward(tape, h, mode);
        h = tape.relu(h);
        if (cfg_.variant == CondVariant::concat_hidden && i == cfg_.hidden_insert)
            h = tape.concat_dim1(h, e);
    }
    return h;
}

template <typename T>
DiscOut VectorDiscriminator<T>::forward(Tape<T>& tape, NodeId x, const std::vector<int>& labels,
                                        Mode mode) {
    NodeId phi = features(tape, x, labels, mode);
    const int n = tape.val(phi).extent(0);
    NodeId psi = tape.reshape(psi_->forward(tape, phi, mode), {n});
    DiscOut out;
    switch (cfg_.variant) {
        case CondVariant::projection: {
            check_labels(labels.size(), n);
            NodeId rows = embed_->forward(tape, labels, mode);
            out.logit = tape.add(psi, tape.sum(tape.mul(rows, phi), {1}));
            break;
        }
        case CondVariant::concat_input:
        case CondVariant::concat_hidden:
            out.logit = psi;
            break;
        case CondVariant::concat_output: {
            check_labels(labels.size(), n);
            NodeId rows = embed_->forward(tape, labels, mode);
            out.logit = tape.add(psi, tape.reshape(out_cond_->forward(tape, rows, mode), {n}));
            break;
        }
        case CondVariant::acgan:
            out.logit = psi;
            out.class_logits = cls_->forward(tape, phi, mode);
            break;
    }
    return out;
}

template <typename T>
NodeId VectorDiscriminator<T>::forward_yvec(Tape<T>& tape, NodeId x, NodeId y_rows, Mode mode) {
    if (cfg_.variant != CondVariant::projection)
        throw ContractError("forward_yvec is only defined for the projection variant");
    NodeId phi = features(tape, x, {}, mode);
    const int n = tape.val(phi).extent(0);
    NodeId psi = tape.reshape(psi_->forward(tape, phi, mode), {n});
    NodeId rows = tape.matmul(y_rows, embed_->table_node(tape, mode));
    return tape.add(psi, tape.sum(tape.mul(rows, phi), {1}));
}

// ---------------------------------------------------------------------------
// SRGenerator

template <typename T>
SRGenerator<T>::SRGenerator(const SRGenConfig& cfg, Rng rng) : cfg_(cfg) {
    if (cfg.n_up < 1) throw ValueError("sr generator needs at least one up-block");
    if (cfg.z_dim % cfg.n_up != 0)
        throw ValueError("sr generator: z_dim must divide into n_up chunks");
    const int zc = cfg.z_dim / cfg.n_up;
    Rng r_in = rng.spawn(0);
    conv_in_ = std::make_unique<Conv2d<T>>(reg_, "conv_in", cfg.in_ch, cfg.ch, 3, 1, 1, r_in,
                                           /*bias=*/false);  // feeds the first block's BN
    for (int i = 0; i < cfg.n_up; ++i)
        blocks_.push_back(std::make_unique<GenResBlock<T>>(
            reg_, "b" + std::to_string(i), cfg.ch + zc, cfg.ch, /*num_classes=*/0, /*up=*/true,
            rng.spawn(static_cast<std::uint64_t>(1 + i))));
    bn_out_ = std::make_unique<BatchNorm<T>>(reg_, "bn_out", cfg.ch);
    Rng r_out = rng.spawn(63);
    conv_out_ = std::make_unique<Conv2d<T>>(reg_, "conv_out", cfg.ch, cfg.in_ch, 3, 1, 1, r_out);
}

template <typename T>
NodeId SRGenerator<T>::forward(Tape<T>& tape, const std::vector<NodeId>& z_chunks, NodeId y_lo,
                               Mode mode) {
    if (static_cast<int>(z_chunks.size()) != cfg_.n_up)
        throw ValueError("sr generator expects one z chunk per up-block");
    NodeId h = conv_in_->forward(tape, y_lo, mode);
    for (int i = 0; i < cfg_.n_up; ++i) {
        const Tensor<T>& hv = tape.val(h);
        NodeId zi = tape.broadcast_spatial(z_chunks[static_cast<std::size_t>(i)], hv.extent(2),
                                           hv.extent(3));
        h = blocks_[static_cast<std::size_t>(i)]->forward(tape, tape.concat_dim1(h, zi), {}, mode);
    }
    h = bn_out_->forward(tape, h, mode);
    h = tape.relu(h);
    h = conv_out_->forward(tape, h, mode);
    return tape.tanh(h);
}

template <typename T>
Tensor<T> SRGenerator<T>::sample(Rng& zrng, const Tensor<T>& y_lo) {
    Tape<T> tape;
    const int n = y_lo.extent(0);
    std::vector<Tensor<T>> chunks = split_z(sample_z<T>(zrng, n, cfg_.z_dim), cfg_.n_up);
    std::vector<NodeId> ids;
    for (auto& c : chunks) ids.push_back(tape.constant(std::move(c)));
    return tape.val(forward(tape, ids, tape.constant(y_lo), Mode::Eval));
}

// ---------------------------------------------------------------------------
// SRDiscriminator

template <typename T>
SRDiscriminator<T>::SRDiscriminator(const SRDiscConfig& cfg, Rng rng) : cfg_(cfg) {
    if (cfg.n_down < 1) throw ValueError("sr discriminator needs at least one down-block");
    for (int i = 0; i < cfg.n_down + cfg.n_flat; ++i) {
        const bool down = i < cfg.n_down;
        blocks_.push_back(std::make_unique<DiscResBlock<T>>(
            reg_, "b" + std::to_string(i), i == 0 ? cfg.in_ch : cfg.ch, cfg.ch, down,
            /*first=*/i == 0, rng.spawn(static_cast<std::uint64_t>(i))));
    }
    Rng r_v = rng.spawn(40);
    vproj_ = std::make_unique<Conv2d<T>>(reg_, "vproj", cfg.ch, cfg.in_ch, 1, 1, 0, r_v,
                                         /*bias=*/false, /*spectral=*/true);
    Rng r_psi = rng.spawn(41);
    psi_ = std::make_unique<Linear<T>>(reg_, "psi", cfg.ch, 1, r_psi, true, /*spectral=*/true);
}

template <typename T>
NodeId SRDiscriminator<T>::trunk(Tape<T>& tape, NodeId x_hi, Mode mode) {
    NodeId h = x_hi;
    for (auto& b : blocks_) h = b->forward(tape, h, mode);
    return tape.relu(h);
}

template <typename T>
NodeId SRDiscriminator<T>::forward(Tape<T>& tape, NodeId x_hi, NodeId y_lo, Mode mode) {
    NodeId map = trunk(tape, x_hi, mode);
    const Tensor<T>& mv = tape.val(map);
    const Tensor<T>& yv = tape.val(y_lo);
    if (yv.rank() != 4 || yv.extent(1) != cfg_.in_ch || yv.extent(2) != mv.extent(2) ||
        yv.extent(3) != mv.extent(3))
        throw DimensionError("conditioning image " + shape_str(yv.shape()) +
                             " does not match the feature grid " + shape_str(mv.shape()));
    NodeId f = vproj_->forward(tape, map, mode);
    NodeId proj = tape.sum(tape.mul(y_lo, f), {1, 2, 3});
    const int n = mv.extent(0);
    NodeId psi = tape.reshape(psi_->forward(tape, tape.global_sum_pool(map), mode), {n});
    return tape.add(proj, psi);
}

template <typename T>
NodeId SRDiscriminator<T>::psi_logit(Tape<T>& tape, NodeId x_hi, Mode mode) {
    NodeId map = trunk(tape, x_hi, mode);
    const int n = tape.val(map).extent(0);
    return tape.reshape(psi_->forward(tape, tape.global_sum_pool(map), mode), {n});
}

// ---------------------------------------------------------------------------

template Tensor<float> sample_z<float>(Rng&, int, int);
template Tensor<double> sample_z<double>(Rng&, int, int);
template std::vector<Tensor<float>> split_z<float>(const Tensor<float>&, int);
template std::vector<Tensor<double>> split_z<double>(const Tensor<double>&, int);

template class GenResBlock<float>;
template class GenResBlock<double>;
template class DiscResBlock<float>;
template class DiscResBlock<double>;
template class ImageGenerator<float>;
template class ImageGenerator<double>;
template class ImageDiscriminator<float>;
template class ImageDiscriminator<double>;
template class VectorGenerator<float>;
template class VectorGenerator<double>;
template class VectorDiscriminator<float>;
template class VectorDiscriminator<double>;
template class SRGenerator<float>;
template class SRGenerator<double>;
template class SRDiscriminator<float>;
template class SRDiscriminator<double>;

}  // namespace projcgan
