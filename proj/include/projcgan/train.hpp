#ifndef PROJCGAN_TRAIN_HPP
#define PROJCGAN_TRAIN_HPP

#include <cstdint>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "projcgan/layers.hpp"

namespace projcgan {

// ---------------------------------------------------------------------------
// adversarial objectives (graph nodes on the caller's tape)

/// -mean log sigmoid(d_real) - mean log(1 - sigmoid(d_fake)), in the stable
/// softplus form; finite for any finite logits.
template <typename T>
NodeId standard_adversarial_d_loss(Tape<T>& tape, NodeId d_real, NodeId d_fake);

/// mean max(0, 1 - d_real) + mean max(0, 1 + d_fake)
template <typename T>
NodeId hinge_d_loss(Tape<T>& tape, NodeId d_real, NodeId d_fake);

/// -mean d_fake
template <typename T>
NodeId hinge_g_loss(Tape<T>& tape, NodeId d_fake);

/// -mean log sigmoid(d_fake), the non-saturating partner of the standard
/// discriminator loss, again in softplus form.
template <typename T>
NodeId standard_adversarial_g_loss(Tape<T>& tape, NodeId d_fake);

/// Mean cross-entropy of [N,C] logits against integer labels.
template <typename T>
NodeId cross_entropy_from_logits(Tape<T>& tape, NodeId logits, const std::vector<int>& labels);

/// Classifier-augmented discriminator/generator losses: hinge adversarial
/// parts plus lambda_cls-weighted cross-entropy, on real and fake for D and
/// on fake for G.
template <typename T>
NodeId acgan_d_loss(Tape<T>& tape, NodeId d_real, NodeId d_fake, NodeId cls_real, NodeId cls_fake,
                    const std::vector<int>& labels_real, const std::vector<int>& labels_fake,
                    T lambda_cls);
template <typename T>
NodeId acgan_g_loss(Tape<T>& tape, NodeId d_fake, NodeId cls_fake,
                    const std::vector<int>& labels_fake, T lambda_cls);
template <typename T>
std::pair<NodeId, NodeId> acgan_losses(Tape<T>& tape, NodeId d_real, NodeId d_fake, NodeId cls_real,
                                       NodeId cls_fake, const std::vector<int>& labels_real,
                                       const std::vector<int>& labels_fake, T lambda_cls);

/// -mean[ d_fake - lambda_aux * L_C ] with L_C the cross-entropy of a frozen
/// pretrained classifier on the generated samples (class_log_probs are its
/// log-probabilities, [N,C]). ContractError unless every parameter of
/// `frozen_classifier` is non-trainable.
template <typename T>
NodeId aux_classifier_g_loss(Tape<T>& tape, NodeId d_fake, NodeId class_log_probs,
                             const std::vector<int>& labels, T lambda_aux,
                             const Registry<T>& frozen_classifier);

// ---------------------------------------------------------------------------
// optimizer

struct AdamConfig {
    double alpha = 2e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double eps = 1e-8;
};

/// Bias-corrected Adam over every trainable parameter of one registry.
/// Moments are allocated per parameter (zeros for non-trainable entries so
/// serialization stays aligned with the registry order).
template <typename T>
class Adam {
public:
    Adam(Registry<T>& reg, AdamConfig cfg);

    /// One update from the accumulated gradients. DivergenceError on a
    /// non-finite gradient.
    void step(double lr);
    void step() { step(cfg_.alpha); }

    std::int64_t t() const { return t_; }
    void set_t(std::int64_t t) { t_ = t; }
    const AdamConfig& config() const { return cfg_; }
    Tensor<T>& m(std::size_t i) { return m_[i]; }
    Tensor<T>& v(std::size_t i) { return v_[i]; }

private:
    Registry<T>* reg_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// schedule

struct TrainSchedule {
    int total = 20000;        // generator updates
    int decay_start = 15000;  // linear decay to 0 afterwards
    int n_dis = 5;            // discriminator steps per generator step
    int batch = 64;
    double alpha0 = 2e-4;
};

void validate(const TrainSchedule& s);  // ValueError on inconsistency

/// alpha0 up to decay_start, then alpha0 * (total - iter) / (total -
/// decay_start); ValueError outside [0, total].
double lr_at(const TrainSchedule& s, int iter);

// ---------------------------------------------------------------------------
// training loop

/// A task owns its models and knows how to build one step's loss graph. The
/// rng passed in is the loop's single stream; every draw must come from it so
/// checkpoint resume reproduces the run.
template <typename T>
class GanTask {
public:
    virtual ~GanTask() = default;
    virtual Registry<T>& g_reg() = 0;
    virtual Registry<T>& d_reg() = 0;
    virtual NodeId d_loss(Tape<T>& tape, Rng& rng) = 0;
    virtual NodeId g_loss(Tape<T>& tape, Rng& rng) = 0;
};

/// Appends rows `iter,wall_s,d_loss,g_loss,metric_name,metric_value`.
/// With append=true an existing file is continued past its last row (the
/// header is only written when the file starts empty), so a resumed run
/// extends the original log in place.
class MetricLog {
public:
    explicit MetricLog(const std::string& path, bool append = false);
    void row(std::int64_t iter, double wall_s, double d_loss, double g_loss,
             const std::string& metric_name, double metric_value);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
};

using MetricFn = std::function<std::vector<std::pair<std::string, double>>(int iter)>;

inline constexpr char kCheckpointMagic[4] = {'P', 'J', 'G', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
class Trainer {
public:
    /// wall_clock reports seconds for the CSV; pass a constant-zero clock for
    /// byte-stable logs.
    Trainer(GanTask<T>& task, TrainSchedule sched, AdamConfig g_cfg, AdamConfig d_cfg, Rng rng,
            std::function<double()> wall_clock = {});

    /// Advance to `until` completed generator updates (clamped to the
    /// schedule total). At every metric_every-th update the metric rows are
    /// appended to `log`; at every ckpt_every-th update save_ckpt runs.
    void run(int until, MetricLog* log = nullptr, int metric_every = 0,
             const MetricFn& metrics = {}, int ckpt_every = 0,
             const std::function<void(int)>& save_ckpt = {});

    int iter() const { return iter_; }
    std::int64_t d_steps() const { return d_steps_; }
    double last_d_loss() const { return last_d_; }
    double last_g_loss() const { return last_g_; }
    const TrainSchedule& schedule() const { return sched_; }
    Rng& rng() { return rng_; }

    /// Checkpoint: magic, version, iteration, rng state, then named tensors
    /// (models, registry state, optimizer moments); f32 payload.
    void save(std::ostream& os);
    void load(std::istream& is);
    void save_file(const std::string& path);
    void load_file(const std::string& path);

private:
    GanTask<T>& task_;
    TrainSchedule sched_;
    AdamConfig g_cfg_, d_cfg_;
    Adam<T> g_opt_, d_opt_;
    Rng rng_;
    std::function<double()> clock_;
    double t0_;
    int iter_ = 0;
    std::int64_t d_steps_ = 0;
    double last_d_ = 0.0, last_g_ = 0.0;
};

// ---------------------------------------------------------------------------
// tabular verification of the optimal discriminator

struct TabularOptResult {
    TensorD f;              // argmin of the standard adversarial loss
    TensorD decomposition;  // log q(y|x)/p(y|x) + log q(x)/p(x), closed form
    int iters_used = 0;
};

/// Minimizes the standard adversarial loss over an unconstrained table
/// f(x,y) for joint distributions q (real) and p (model) on a finite grid;
/// the optimum is the log density ratio. Tables must be strictly positive
/// and sum to 1.
TabularOptResult tabular_optimal_discriminator(const TensorD& q, const TensorD& p,
                                               int max_iters = 5000, double lr = 0.05,
                                               double grad_tol = 1e-10);

}  // namespace projcgan

#endif
