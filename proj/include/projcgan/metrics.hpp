#ifndef PROJCGAN_METRICS_HPP
#define PROJCGAN_METRICS_HPP

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "projcgan/layers.hpp"

namespace projcgan {

// ---------------------------------------------------------------------------
// feature-space Gaussians

struct GaussianStats {
    TensorD mean;  // [d]
    TensorD cov;   // [d,d], symmetric
    int n = 0;
};

/// Sample mean and unbiased sample covariance of [n,d] feature rows, n >= 2;
/// the covariance is symmetrized exactly.
GaussianStats gaussian_stats(const TensorD& features);

/// Squared 2-Wasserstein distance between the fitted Gaussians:
/// ||mu_a - mu_b||^2 + tr(C_a + C_b - 2 (C_a C_b)^{1/2}), evaluated through
/// the symmetric form tr((C_a^{1/2} C_b C_a^{1/2})^{1/2}) at 64-bit. Each
/// covariance is regularized by 1e-6 * trace/d on the diagonal first;
/// eigenvalues in [-1e-8, 0) clamp to 0, lower ones are an error.
double fid(const GaussianStats& a, const GaussianStats& b);

/// FID between the class-k rows of a labeled real feature set and n_gen
/// generated feature rows produced by `gen_features(n_gen)`.
double intra_fid(const TensorD& real_features, const std::vector<int>& real_labels, int klass,
                 const std::function<TensorD(int n)>& gen_features, int n_gen);

// ---------------------------------------------------------------------------
// classifier-derived scores

/// exp(mean_x KL(p(y|x) || p_bar(y))) over [n,C] probability rows (each row
/// must sum to 1 within 1e-6). Lies in [1, C].
double inception_style_score(const TensorD& probs);

/// Mean and sample standard deviation of the score over n_splits contiguous
/// row chunks.
std::pair<double, double> inception_score_splits(const TensorD& probs, int n_splits = 10);

// ---------------------------------------------------------------------------
// multi-scale structural similarity

/// MS-SSIM over [H,W] images: up to 5 scales weighted (0.0448, 0.2856,
/// 0.3001, 0.2363, 0.1333), 11x11 Gaussian window sigma=1.5, K1=0.01,
/// K2=0.03. Scales that would shrink below the window are dropped and the
/// remaining weights renormalized. data_range <= 0 selects joint min/max
/// normalization of both images, which makes the result invariant to one
/// positive affine remap applied to both.
double ms_ssim(const TensorD& x, const TensorD& y, int max_scales = 5, double data_range = 0.0);

// ---------------------------------------------------------------------------
// MC-ensemble prediction

/// Mean of n_mc draws from `sample_logits` (one stochastic classifier pass
/// per call, [C] logits each).
TensorD mc_mean_logits(const std::function<TensorD()>& sample_logits, int n_mc);

/// Argmax of the averaged logits; ties resolve to the lowest index.
int mc_ensemble_predict(const std::function<TensorD()>& sample_logits, int n_mc);

// ---------------------------------------------------------------------------
// feature extractor

/// Small in-repo classifier standing in for a large pretrained one. fit()
/// trains it; freeze() locks every parameter, and the metric-facing accessors
/// (features, probs, logits) refuse to run before that so no metric can
/// touch a live network.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    FeatureExtractor(const FeatureExtractor&) = delete;
    FeatureExtractor& operator=(const FeatureExtractor&) = delete;

    int feature_dim() const { return feat_dim_; }
    int num_classes() const { return num_classes_; }
    bool frozen() const { return frozen_; }

    /// Adam/cross-entropy training on (x, labels); returns final train-set
    /// accuracy. ContractError once frozen.
    double fit(const TensorD& x, const std::vector<int>& labels, int iters, int batch, Rng& rng,
               double lr = 1e-3);
    void freeze();

    TensorD features(const TensorD& x);  // [n, feature_dim]
    TensorD probs(const TensorD& x);     // [n, C], rows sum to 1
    TensorD logits(const TensorD& x);    // [n, C]
    double accuracy(const TensorD& x, const std::vector<int>& labels);

    RegistryD& reg() { return reg_; }

protected:
    FeatureExtractor(int feat_dim, int num_classes) : feat_dim_(feat_dim), num_classes_(num_classes) {}
    virtual NodeId features_node(TapeD& tape, NodeId x, Mode mode) = 0;
    NodeId logits_node(TapeD& tape, NodeId x, Mode mode);

    RegistryD reg_;
    std::unique_ptr<Linear<double>> head_;
    int feat_dim_;
    int num_classes_;
    bool frozen_ = false;
};

/// Two hidden layers for vector data: in -> hidden -> feat -> C.
class MlpExtractor final : public FeatureExtractor {
public:
    MlpExtractor(int in_dim, int num_classes, Rng rng, int hidden = 64, int feat_dim = 64);

private:
    NodeId features_node(TapeD& tape, NodeId x, Mode mode) override;
    std::unique_ptr<Linear<double>> fc1_, fc2_;
};

/// Two conv/pool stages then a feature projection, for [N,C,H,W] images.
class ConvExtractor final : public FeatureExtractor {
public:
    ConvExtractor(int in_ch, int img_size, int num_classes, Rng rng, int ch = 8,
                  int feat_dim = 64);

private:
    NodeId features_node(TapeD& tape, NodeId x, Mode mode) override;
    std::unique_ptr<Conv2d<double>> c1_, c2_;
    std::unique_ptr<Linear<double>> fc_;
    int flat_dim_;
};

}  // namespace projcgan

#endif
