#ifndef PROJCGAN_TASKS_HPP
#define PROJCGAN_TASKS_HPP

#include <memory>
#include <vector>

#include "projcgan/arch.hpp"
#include "projcgan/config.hpp"
#include "projcgan/data.hpp"
#include "projcgan/train.hpp"

namespace projcgan {

/// Shared knobs for the class-conditional tasks.
struct ClassTaskOptions {
    CondVariant variant = CondVariant::projection;
    bool hinge = true;          // false selects the standard adversarial pair
    float lambda_cls = 1.0f;    // acgan classifier weight
    int batch = 64;
};

/// GanTask plus the sampling hooks the commands need. Real batches are drawn
/// from the dataset with the loop rng; fake batches for discriminator steps
/// run the generator in train mode on a scratch tape and enter the
/// discriminator graph as constants, so only the discriminator
/// backpropagates while the generator's normalization statistics still
/// advance exactly as they would in an end-to-end graph.
class ClassGenTask : public GanTask<float> {
public:
    virtual const Dataset& data() const = 0;
    virtual int num_classes() const = 0;
    virtual int z_dim() const = 0;
    virtual bool is_image() const = 0;

    /// Eval-mode generation for the given latents and labels.
    virtual TensorF generate(const TensorF& z, const std::vector<int>& labels) = 0;
    /// Eval-mode morphing; specs.size() rows of z.
    virtual TensorF morph(const TensorF& z, const std::vector<MorphSpec>& specs) = 0;
    /// Eval-mode cross-entropy of the discriminator's classifier head;
    /// ValueError unless the variant is acgan.
    virtual double classifier_ce(const TensorF& x, const std::vector<int>& labels) = 0;
};

class VectorClassTask : public ClassGenTask {
public:
    VectorClassTask(const VectorGenConfig& gcfg, const VectorDiscConfig& dcfg, Dataset data,
                    ClassTaskOptions opt, Rng init_rng);

    Registry<float>& g_reg() override { return gen_->reg(); }
    Registry<float>& d_reg() override { return disc_->reg(); }
    NodeId d_loss(TapeF& tape, Rng& rng) override;
    NodeId g_loss(TapeF& tape, Rng& rng) override;

    const Dataset& data() const override { return data_; }
    int num_classes() const override { return gen_->config().num_classes; }
    int z_dim() const override { return gen_->config().z_dim; }
    bool is_image() const override { return false; }
    TensorF generate(const TensorF& z, const std::vector<int>& labels) override;
    TensorF morph(const TensorF& z, const std::vector<MorphSpec>& specs) override;
    double classifier_ce(const TensorF& x, const std::vector<int>& labels) override;

    VectorGenerator<float>& gen() { return *gen_; }
    VectorDiscriminator<float>& disc() { return *disc_; }

private:
    TensorF real_rows(Rng& rng, std::vector<int>& labels_out);

    Dataset data_;
    ClassTaskOptions opt_;
    std::unique_ptr<VectorGenerator<float>> gen_;
    std::unique_ptr<VectorDiscriminator<float>> disc_;
};

class ImageClassTask : public ClassGenTask {
public:
    ImageClassTask(const ImageGenConfig& gcfg, const ImageDiscConfig& dcfg, Dataset data,
                   ClassTaskOptions opt, Rng init_rng);

    Registry<float>& g_reg() override { return gen_->reg(); }
    Registry<float>& d_reg() override { return disc_->reg(); }
    NodeId d_loss(TapeF& tape, Rng& rng) override;
    NodeId g_loss(TapeF& tape, Rng& rng) override;

    const Dataset& data() const override { return data_; }
    int num_classes() const override { return gen_->config().num_classes; }
    int z_dim() const override { return gen_->config().z_dim; }
    bool is_image() const override { return true; }
    TensorF generate(const TensorF& z, const std::vector<int>& labels) override;
    TensorF morph(const TensorF& z, const std::vector<MorphSpec>& specs) override;
    double classifier_ce(const TensorF& x, const std::vector<int>& labels) override;

    ImageGenerator<float>& gen() { return *gen_; }
    ImageDiscriminator<float>& disc() { return *disc_; }

private:
    TensorF real_rows(Rng& rng, std::vector<int>& labels_out);

    Dataset data_;
    ClassTaskOptions opt_;
    std::unique_ptr<ImageGenerator<float>> gen_;
    std::unique_ptr<ImageDiscriminator<float>> disc_;
};

struct SrTaskOptions {
    bool hinge = true;
    int batch = 16;
};

/// Super-resolution task: the dataset holds the high-resolution images and
/// the low-resolution condition is their block mean, recomputed per batch.
class SrTask : public GanTask<float> {
public:
    SrTask(const SRGenConfig& gcfg, const SRDiscConfig& dcfg, Dataset hi_res, SrTaskOptions opt,
           Rng init_rng);

    Registry<float>& g_reg() override { return gen_->reg(); }
    Registry<float>& d_reg() override { return disc_->reg(); }
    NodeId d_loss(TapeF& tape, Rng& rng) override;
    NodeId g_loss(TapeF& tape, Rng& rng) override;

    const Dataset& data() const { return data_; }
    int factor() const { return gen_->factor(); }
    int z_dim() const { return gen_->config().z_dim; }
    /// Eval-mode super-resolution of a low-res batch, one z draw per call.
    TensorF sr_generate(Rng& zrng, const TensorF& y_lo);

    SRGenerator<float>& gen() { return *gen_; }
    SRDiscriminator<float>& disc() { return *disc_; }

private:
    TensorF real_rows(Rng& rng);

    Dataset data_;
    SrTaskOptions opt_;
    std::unique_ptr<SRGenerator<float>> gen_;
    std::unique_ptr<SRDiscriminator<float>> disc_;
};

/// Dataset described by the config keys dataset / dataset_path / classes /
/// n_per_class / img_size / data_seed.
Dataset load_dataset(const RunConfig& cfg);

/// Model + task assembly from a config and its dataset. The init rng seeds
/// parameter draws; the training rng lives in the Trainer.
std::unique_ptr<ClassGenTask> make_class_task(const RunConfig& cfg, Dataset data, Rng init_rng);
std::unique_ptr<SrTask> make_sr_task(const RunConfig& cfg, Dataset data, Rng init_rng);

}  // namespace projcgan

#endif
