#include "projcgan/tasks.hpp"

#include <cmath>
#include <utility>

#include "projcgan/errors.hpp"

namespace projcgan {

namespace {

std::vector<int> draw_labels(Rng& rng, int n, int num_classes) {
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int& v : y) v = rng.uniform_int(num_classes);
    return y;
}

// row-block copy of `n` uniformly drawn samples; works for any sample rank
TensorF draw_rows(Rng& rng, const TensorF& pool, int n, const std::vector<int>& pool_labels,
                  std::vector<int>& labels_out) {
    Shape shape = pool.shape();
    const std::int64_t stride = pool.numel() / shape[0];
    shape[0] = n;
    TensorF out(shape);
    labels_out.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int idx = rng.uniform_int(pool.extent(0));
        for (std::int64_t p = 0; p < stride; ++p) out[i * stride + p] = pool[idx * stride + p];
        labels_out[static_cast<std::size_t>(i)] = pool_labels[static_cast<std::size_t>(idx)];
    }
    return out;
}

NodeId assemble_d(TapeF& tape, const ClassTaskOptions& opt, const DiscOut& real,
                  const DiscOut& fake, const std::vector<int>& labels_real,
                  const std::vector<int>& labels_fake) {
    if (opt.variant == CondVariant::acgan)
        return acgan_d_loss(tape, real.logit, fake.logit, real.class_logits, fake.class_logits,
                            labels_real, labels_fake, opt.lambda_cls);
    if (opt.hinge) return hinge_d_loss(tape, real.logit, fake.logit);
    return standard_adversarial_d_loss(tape, real.logit, fake.logit);
}

NodeId assemble_g(TapeF& tape, const ClassTaskOptions& opt, const DiscOut& fake,
                  const std::vector<int>& labels_fake) {
    if (opt.variant == CondVariant::acgan)
        return acgan_g_loss(tape, fake.logit, fake.class_logits, labels_fake, opt.lambda_cls);
    if (opt.hinge) return hinge_g_loss(tape, fake.logit);
    return standard_adversarial_g_loss(tape, fake.logit);
}

template <typename Disc>
double head_ce(Disc& disc, const TensorF& x, const std::vector<int>& labels) {
    TapeF tape;
    DiscOut out = disc.forward(tape, tape.constant(x), labels, Mode::Eval);
    if (out.class_logits < 0) throw ValueError("classifier head requires the acgan variant");
    return tape.val(cross_entropy_from_logits(tape, out.class_logits, labels))[0];
}

}  // namespace

// ---------------------------------------------------------------------------
// vector task

VectorClassTask::VectorClassTask(const VectorGenConfig& gcfg, const VectorDiscConfig& dcfg,
                                 Dataset data, ClassTaskOptions opt, Rng init_rng)
    : data_(std::move(data)), opt_(opt) {
    if (data_.is_image()) throw ValueError("vector task needs a vector dataset");
    if (data_.num_classes != gcfg.num_classes || data_.num_classes != dcfg.num_classes)
        throw ValueError("dataset and model class counts disagree");
    if (data_.vectors.extent(1) != gcfg.out_dim || data_.vectors.extent(1) != dcfg.in_dim)
        throw DimensionError("dataset width does not match the models");
    gen_ = std::make_unique<VectorGenerator<float>>(gcfg, init_rng.spawn(1));
    disc_ = std::make_unique<VectorDiscriminator<float>>(dcfg, init_rng.spawn(2));
}

TensorF VectorClassTask::real_rows(Rng& rng, std::vector<int>& labels_out) {
    return draw_rows(rng, data_.vectors, opt_.batch, data_.labels, labels_out);
}

NodeId VectorClassTask::d_loss(TapeF& tape, Rng& rng) {
    const std::vector<int> yf = draw_labels(rng, opt_.batch, num_classes());
    TensorF z = sample_z<float>(rng, opt_.batch, z_dim());
    std::vector<int> yr;
    TensorF xr = real_rows(rng, yr);

    TapeF scratch;
    NodeId fake = gen_->forward(scratch, scratch.constant(std::move(z)), yf, Mode::Train);
    DiscOut real_out = disc_->forward(tape, tape.constant(std::move(xr)), yr, Mode::Train);
    DiscOut fake_out = disc_->forward(tape, tape.constant(scratch.val(fake)), yf, Mode::Train);
    return assemble_d(tape, opt_, real_out, fake_out, yr, yf);
}

NodeId VectorClassTask::g_loss(TapeF& tape, Rng& rng) {
    const std::vector<int> yf = draw_labels(rng, opt_.batch, num_classes());
    NodeId z = tape.constant(sample_z<float>(rng, opt_.batch, z_dim()));
    NodeId fake = gen_->forward(tape, z, yf, Mode::Train);
    DiscOut fake_out = disc_->forward(tape, fake, yf, Mode::Train);
    return assemble_g(tape, opt_, fake_out, yf);
}

TensorF VectorClassTask::generate(const TensorF& z, const std::vector<int>& labels) {
    TapeF tape;
    return tape.val(gen_->forward(tape, tape.constant(z), labels, Mode::Eval));
}

TensorF VectorClassTask::morph(const TensorF& z, const std::vector<MorphSpec>& specs) {
    TapeF tape;
    return tape.val(gen_->forward_morph(tape, tape.constant(z), specs, Mode::Eval));
}

double VectorClassTask::classifier_ce(const TensorF& x, const std::vector<int>& labels) {
    return head_ce(*disc_, x, labels);
}

// ---------------------------------------------------------------------------
// image task

ImageClassTask::ImageClassTask(const ImageGenConfig& gcfg, const ImageDiscConfig& dcfg,
                               Dataset data, ClassTaskOptions opt, Rng init_rng)
    : data_(std::move(data)), opt_(opt) {
    if (!data_.is_image()) throw ValueError("image task needs an image dataset");
    if (data_.num_classes != gcfg.num_classes || data_.num_classes != dcfg.num_classes)
        throw ValueError("dataset and model class counts disagree");
    if (data_.images.extent(2) != (4 << gcfg.n_up) || data_.images.extent(2) != dcfg.img_size)
        throw DimensionError("dataset resolution does not match the models");
    gen_ = std::make_unique<ImageGenerator<float>>(gcfg, init_rng.spawn(1));
    disc_ = std::make_unique<ImageDiscriminator<float>>(dcfg, init_rng.spawn(2));
}

TensorF ImageClassTask::real_rows(Rng& rng, std::vector<int>& labels_out) {
    return draw_rows(rng, data_.images, opt_.batch, data_.labels, labels_out);
}

NodeId ImageClassTask::d_loss(TapeF& tape, Rng& rng) {
    const std::vector<int> yf = draw_labels(rng, opt_.batch, num_classes());
    TensorF z = sample_z<float>(rng, opt_.batch, z_dim());
    std::vector<int> yr;
    TensorF xr = real_rows(rng, yr);

    TapeF scratch;
    NodeId fake = gen_->forward(scratch, scratch.constant(std::move(z)), yf, Mode::Train);
    DiscOut real_out = disc_->forward(tape, tape.constant(std::move(xr)), yr, Mode::Train);
    DiscOut fake_out = disc_->forward(tape, tape.constant(scratch.val(fake)), yf, Mode::Train);
    return assemble_d(tape, opt_, real_out, fake_out, yr, yf);
}

NodeId ImageClassTask::g_loss(TapeF& tape, Rng& rng) {
    const std::vector<int> yf = draw_labels(rng, opt_.batch, num_classes());
    NodeId z = tape.constant(sample_z<float>(rng, opt_.batch, z_dim()));
    NodeId fake = gen_->forward(tape, z, yf, Mode::Train);
    DiscOut fake_out = disc_->forward(tape, fake, yf, Mode::Train);
    return assemble_g(tape, opt_, fake_out, yf);
}

TensorF ImageClassTask::generate(const TensorF& z, const std::vector<int>& labels) {
    TapeF tape;
    return tape.val(gen_->forward(tape, tape.constant(z), labels, Mode::Eval));
}

TensorF ImageClassTask::morph(const TensorF& z, const std::vector<MorphSpec>& specs) {
    TapeF tape;
    return tape.val(gen_->forward_morph(tape, tape.constant(z), specs, Mode::Eval));
}

double ImageClassTask::classifier_ce(const TensorF& x, const std::vector<int>& labels) {
    return head_ce(*disc_, x, labels);
}

// ---------------------------------------------------------------------------
// super-resolution task

SrTask::SrTask(const SRGenConfig& gcfg, const SRDiscConfig& dcfg, Dataset hi_res,
               SrTaskOptions opt, Rng init_rng)
    : data_(std::move(hi_res)), opt_(opt) {
    if (!data_.is_image()) throw ValueError("super-resolution needs an image dataset");
    gen_ = std::make_unique<SRGenerator<float>>(gcfg, init_rng.spawn(1));
    disc_ = std::make_unique<SRDiscriminator<float>>(dcfg, init_rng.spawn(2));
    if (data_.images.extent(2) % factor() != 0 || data_.images.extent(3) % factor() != 0)
        throw DimensionError("image extents not divisible by the upscale factor");
}

TensorF SrTask::real_rows(Rng& rng) {
    std::vector<int> unused;
    return draw_rows(rng, data_.images, opt_.batch, data_.labels, unused);
}

NodeId SrTask::d_loss(TapeF& tape, Rng& rng) {
    TensorF xr = real_rows(rng);
    TensorF z = sample_z<float>(rng, opt_.batch, z_dim());
    TensorF y_lo = downsample_images(xr, factor());

    TapeF scratch;
    std::vector<NodeId> chunks;
    for (TensorF& c : split_z(z, gen_->config().n_up)) chunks.push_back(scratch.constant(std::move(c)));
    NodeId fake = gen_->forward(scratch, chunks, scratch.constant(y_lo), Mode::Train);

    NodeId y_lo_node = tape.constant(std::move(y_lo));
    NodeId real_logit = disc_->forward(tape, tape.constant(std::move(xr)), y_lo_node, Mode::Train);
    NodeId fake_logit =
        disc_->forward(tape, tape.constant(scratch.val(fake)), y_lo_node, Mode::Train);
    if (opt_.hinge) return hinge_d_loss(tape, real_logit, fake_logit);
    return standard_adversarial_d_loss(tape, real_logit, fake_logit);
}

NodeId SrTask::g_loss(TapeF& tape, Rng& rng) {
    TensorF xr = real_rows(rng);
    TensorF z = sample_z<float>(rng, opt_.batch, z_dim());
    NodeId y_lo = tape.constant(downsample_images(xr, factor()));

    std::vector<NodeId> chunks;
    for (TensorF& c : split_z(z, gen_->config().n_up)) chunks.push_back(tape.constant(std::move(c)));
    NodeId fake = gen_->forward(tape, chunks, y_lo, Mode::Train);
    NodeId fake_logit = disc_->forward(tape, fake, y_lo, Mode::Train);
    if (opt_.hinge) return hinge_g_loss(tape, fake_logit);
    return standard_adversarial_g_loss(tape, fake_logit);
}

TensorF SrTask::sr_generate(Rng& zrng, const TensorF& y_lo) { return gen_->sample(zrng, y_lo); }

// ---------------------------------------------------------------------------
// assembly from configs

Dataset load_dataset(const RunConfig& cfg) {
    const std::string kind = cfg.str("dataset");
    if (kind == "cifar") {
        if (cfg.str("dataset_path").empty())
            throw ValueError("dataset=cifar needs dataset_path");
        return load_cifar_binary(cfg.str("dataset_path"));
    }
    Rng data_rng(static_cast<std::uint64_t>(cfg.integer("data_seed")));
    return gen_synth_mixture(data_rng, cfg.integer("classes"), cfg.integer("n_per_class"),
                             synth_mode_from_string(kind), cfg.integer("img_size"));
}

namespace {

bool hinge_from(const RunConfig& cfg) {
    const std::string loss = cfg.str("loss");
    if (loss == "hinge") return true;
    if (loss == "standard") return false;
    throw ValueError("loss must be hinge or standard, got '" + loss + "'");
}

int n_up_for(int img_size) {
    for (int n = 1; n <= 6; ++n)
        if ((4 << n) == img_size) return n;
    throw ValueError("img_size " + std::to_string(img_size) + " is not 4*2^k");
}

}  // namespace

std::unique_ptr<ClassGenTask> make_class_task(const RunConfig& cfg, Dataset data, Rng init_rng) {
    ClassTaskOptions opt;
    opt.variant = cond_variant_from_string(cfg.str("variant"));
    opt.hinge = hinge_from(cfg);
    opt.lambda_cls = static_cast<float>(cfg.real("lambda_cls"));
    opt.batch = cfg.integer("batch");

    if (!data.is_image()) {
        VectorGenConfig g;
        g.num_classes = data.num_classes;
        g.z_dim = cfg.integer("z_dim");
        g.hidden = cfg.integer("hidden");
        g.out_dim = data.vectors.extent(1);
        VectorDiscConfig d;
        d.num_classes = data.num_classes;
        d.in_dim = g.out_dim;
        d.hidden = g.hidden;
        d.variant = opt.variant;
        d.embed_dim = cfg.integer("embed_dim");
        d.hidden_insert = cfg.integer("hidden_insert");
        d.sn_embedding = cfg.boolean("sn_embedding");
        return std::make_unique<VectorClassTask>(g, d, std::move(data), opt, init_rng);
    }

    const int img = data.images.extent(2);
    ImageGenConfig g;
    g.num_classes = data.num_classes;
    g.z_dim = cfg.integer("z_dim");
    g.ch = cfg.integer("ch");
    g.n_up = n_up_for(img);
    ImageDiscConfig d;
    d.num_classes = data.num_classes;
    d.img_size = img;
    d.ch = g.ch;
    d.n_blocks = g.n_up + 1;
    d.n_down = g.n_up;
    d.variant = opt.variant;
    d.embed_dim = cfg.integer("embed_dim");
    d.hidden_insert = cfg.integer("hidden_insert");
    d.sn_embedding = cfg.boolean("sn_embedding");
    return std::make_unique<ImageClassTask>(g, d, std::move(data), opt, init_rng);
}

std::unique_ptr<SrTask> make_sr_task(const RunConfig& cfg, Dataset data, Rng init_rng) {
    const int factor = cfg.integer("sr_factor");
    int n_up = 0;
    while ((1 << n_up) < factor) ++n_up;
    if ((1 << n_up) != factor || n_up == 0)
        throw ValueError("sr_factor must be a power of 2 and >= 2");

    SRGenConfig g;
    g.ch = cfg.integer("ch");
    g.n_up = n_up;
    g.z_dim = cfg.integer("z_dim");
    if (g.z_dim % n_up != 0)
        throw ValueError("z_dim must be divisible by the number of upsampling stages");
    SRDiscConfig d;
    d.ch = g.ch;
    d.n_down = n_up;

    SrTaskOptions opt;
    opt.hinge = hinge_from(cfg);
    opt.batch = cfg.integer("batch");
    return std::make_unique<SrTask>(g, d, std::move(data), opt, init_rng);
}

}  // namespace projcgan
