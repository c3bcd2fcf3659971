#include "projcgan/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "projcgan/errors.hpp"
#include "projcgan/linalg.hpp"
#include "projcgan/train.hpp"

namespace projcgan {

namespace {

double trace_of(const TensorD& m) {
    double t = 0.0;
    for (int i = 0; i < m.extent(0); ++i) t += m.at(i, i);
    return t;
}

TensorD matmul_sq(const TensorD& a, const TensorD& b) {
    const int n = a.extent(0);
    TensorD out({n, n});
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < n; ++j) out.at(i, j) += aik * b.at(k, j);
        }
    return out;
}

constexpr double kEigClampTol = 1e-8;

// Eigenvalues of a PSD matrix, clamped at zero; meaningfully negative ones
// mean the input was not close enough to PSD to trust.
TensorD psd_eigenvalues(const TensorD& m) {
    TensorD w, v;
    jacobi_eigh(m, w, v);
    for (std::int64_t i = 0; i < w.numel(); ++i) {
        if (w[i] < -kEigClampTol)
            throw ValueError("matrix eigenvalue " + std::to_string(w[i]) +
                             " is negative beyond tolerance");
        w[i] = std::max(w[i], 0.0);
    }
    return w;
}

TensorD sqrtm_psd(const TensorD& m) {
    TensorD w, v;
    jacobi_eigh(m, w, v);
    const int n = m.extent(0);
    for (std::int64_t i = 0; i < w.numel(); ++i) {
        if (w[i] < -kEigClampTol)
            throw ValueError("matrix eigenvalue " + std::to_string(w[i]) +
                             " is negative beyond tolerance");
        w[i] = std::sqrt(std::max(w[i], 0.0));
    }
    TensorD out({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += v.at(i, k) * w[k] * v.at(j, k);
            out.at(i, j) = s;
        }
    return out;
}

}  // namespace

GaussianStats gaussian_stats(const TensorD& features) {
    if (features.rank() != 2) throw DimensionError("features must be [n,d]");
    const int n = features.extent(0), d = features.extent(1);
    if (n < 2) throw ValueError("need at least 2 feature rows, got " + std::to_string(n));
    GaussianStats out;
    out.n = n;
    out.mean = TensorD({d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.mean[j] += features.at(i, j);
    for (int j = 0; j < d; ++j) out.mean[j] /= n;
    out.cov = TensorD({d, d});
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) {
            const double ca = features.at(i, a) - out.mean[a];
            for (int b = a; b < d; ++b)
                out.cov.at(a, b) += ca * (features.at(i, b) - out.mean[b]);
        }
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            const double v = out.cov.at(a, b) / (n - 1);
            out.cov.at(a, b) = v;
            out.cov.at(b, a) = v;
        }
    return out;
}

double fid(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.rank() != 1 || a.mean.shape() != b.mean.shape())
        throw DimensionError("feature dimensions differ: " + shape_str(a.mean.shape()) + " vs " +
                             shape_str(b.mean.shape()));
    const int d = a.mean.extent(0);
    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a.mean[i] - b.mean[i];
        mean_term += diff * diff;
    }
    TensorD ca = a.cov, cb = b.cov;
    const double eps_a = std::max(0.0, 1e-6 * trace_of(ca) / d);
    const double eps_b = std::max(0.0, 1e-6 * trace_of(cb) / d);
    for (int i = 0; i < d; ++i) {
        ca.at(i, i) += eps_a;
        cb.at(i, i) += eps_b;
    }
    const TensorD ah = sqrtm_psd(ca);
    TensorD m = matmul_sq(matmul_sq(ah, cb), ah);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const double v = 0.5 * (m.at(i, j) + m.at(j, i));
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    const TensorD w = psd_eigenvalues(m);
    double tr_sqrt = 0.0;
    for (std::int64_t i = 0; i < w.numel(); ++i) tr_sqrt += std::sqrt(w[i]);
    const double val = mean_term + trace_of(ca) + trace_of(cb) - 2.0 * tr_sqrt;
    return std::max(0.0, val);
}

double intra_fid(const TensorD& real_features, const std::vector<int>& real_labels, int klass,
                 const std::function<TensorD(int)>& gen_features, int n_gen) {
    if (real_features.rank() != 2) throw DimensionError("real features must be [n,d]");
    if (static_cast<std::int64_t>(real_labels.size()) != real_features.extent(0))
        throw DimensionError("label count does not match feature rows");
    const int d = real_features.extent(1);
    std::vector<int> rows;
    for (std::size_t i = 0; i < real_labels.size(); ++i)
        if (real_labels[i] == klass) rows.push_back(static_cast<int>(i));
    if (rows.empty()) throw ValueError("class " + std::to_string(klass) + " absent from dataset");
    TensorD rc({static_cast<int>(rows.size()), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < d; ++j) rc.at(static_cast<int>(i), j) = real_features.at(rows[i], j);
    if (n_gen < 2) throw ValueError("n_gen must be >= 2");
    const TensorD g = gen_features(n_gen);
    if (g.rank() != 2 || g.extent(0) != n_gen || g.extent(1) != d)
        throw DimensionError("generated features must be [" + std::to_string(n_gen) + "," +
                             std::to_string(d) + "], got " + shape_str(g.shape()));
    return fid(gaussian_stats(rc), gaussian_stats(g));
}

// ---------------------------------------------------------------------------

double inception_style_score(const TensorD& probs) {
    if (probs.rank() != 2) throw DimensionError("probabilities must be [n,C]");
    const int n = probs.extent(0), c = probs.extent(1);
    if (n < 1) throw ValueError("need at least one row");
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            const double p = probs.at(i, j);
            if (p < 0.0 || !std::isfinite(p))
                throw ValueError("probability row " + std::to_string(i) + " has a bad entry");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-6)
            throw ValueError("probability row " + std::to_string(i) + " sums to " +
                             std::to_string(s));
    }
    std::vector<double> marginal(c, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) marginal[j] += probs.at(i, j) / n;
    double kl = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const double p = probs.at(i, j);
            if (p > 0.0) kl += p * (std::log(p) - std::log(marginal[j]));
        }
    return std::exp(kl / n);
}

std::pair<double, double> inception_score_splits(const TensorD& probs, int n_splits) {
    if (probs.rank() != 2) throw DimensionError("probabilities must be [n,C]");
    const int n = probs.extent(0), c = probs.extent(1);
    if (n_splits < 1) throw ValueError("n_splits must be >= 1");
    if (n < n_splits)
        throw ValueError("cannot split " + std::to_string(n) + " rows " + std::to_string(n_splits) +
                         " ways");
    const int base = n / n_splits, rem = n % n_splits;
    std::vector<double> scores;
    int row = 0;
    for (int s = 0; s < n_splits; ++s) {
        const int len = base + (s < rem ? 1 : 0);
        TensorD chunk({len, c});
        for (int i = 0; i < len; ++i)
            for (int j = 0; j < c; ++j) chunk.at(i, j) = probs.at(row + i, j);
        row += len;
        scores.push_back(inception_style_score(chunk));
    }
    double mean = 0.0;
    for (double s : scores) mean += s / n_splits;
    double var = 0.0;
    if (n_splits > 1) {
        for (double s : scores) var += (s - mean) * (s - mean) / (n_splits - 1);
    }
    return {mean, std::sqrt(var)};
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kWin = 11;

std::vector<double> gaussian_window() {
    std::vector<double> k(kWin);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Valid-mode separable correlation with the 1-d window on both axes.
TensorD blur_valid(const TensorD& img, const std::vector<double>& k) {
    const int h = img.extent(0), w = img.extent(1);
    const int wo = w - kWin + 1, ho = h - kWin + 1;
    TensorD tmp({h, wo});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < wo; ++j) {
            double s = 0.0;
            for (int t = 0; t < kWin; ++t) s += k[t] * img.at(i, j + t);
            tmp.at(i, j) = s;
        }
    TensorD out({ho, wo});
    for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
            double s = 0.0;
            for (int t = 0; t < kWin; ++t) s += k[t] * tmp.at(i + t, j);
            out.at(i, j) = s;
        }
    return out;
}

TensorD downsample2(const TensorD& img) {
    const int h = img.extent(0) / 2, w = img.extent(1) / 2;
    TensorD out({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            out.at(i, j) = 0.25 * (img.at(2 * i, 2 * j) + img.at(2 * i, 2 * j + 1) +
                                   img.at(2 * i + 1, 2 * j) + img.at(2 * i + 1, 2 * j + 1));
    return out;
}

struct SsimTerms {
    double full = 0.0;  // mean of luminance * contrast-structure
    double cs = 0.0;    // mean of contrast-structure alone
};

SsimTerms ssim_pass(const TensorD& x, const TensorD& y, const std::vector<double>& k, double c1,
                    double c2) {
    TensorD xx(x.shape()), yy(x.shape()), xy(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const TensorD mx = blur_valid(x, k), my = blur_valid(y, k);
    const TensorD exx = blur_valid(xx, k), eyy = blur_valid(yy, k), exy = blur_valid(xy, k);
    SsimTerms t;
    const std::int64_t n = mx.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const double vx = std::max(0.0, exx[i] - mx[i] * mx[i]);
        const double vy = std::max(0.0, eyy[i] - my[i] * my[i]);
        const double vxy = exy[i] - mx[i] * my[i];
        const double cs = (2.0 * vxy + c2) / (vx + vy + c2);
        const double l = (2.0 * mx[i] * my[i] + c1) / (mx[i] * mx[i] + my[i] * my[i] + c1);
        t.full += l * cs / n;
        t.cs += cs / n;
    }
    return t;
}

}  // namespace

double ms_ssim(const TensorD& x, const TensorD& y, int max_scales, double data_range) {
    if (x.rank() != 2 || x.shape() != y.shape())
        throw DimensionError("images must share one [H,W] shape, got " + shape_str(x.shape()) +
                             " vs " + shape_str(y.shape()));
    if (max_scales < 1 || max_scales > 5) throw ValueError("max_scales must be in [1,5]");
    if (x.extent(0) < kWin || x.extent(1) < kWin)
        throw DimensionError("image " + shape_str(x.shape()) + " is smaller than the " +
                             std::to_string(kWin) + "-pixel window");

    TensorD xs = x, ys = y;
    double range = data_range;
    if (range <= 0.0) {
        double lo = xs[0], hi = xs[0];
        for (std::int64_t i = 0; i < xs.numel(); ++i) {
            lo = std::min({lo, xs[i], ys[i]});
            hi = std::max({hi, xs[i], ys[i]});
        }
        if (hi - lo <= 0.0) return 1.0;  // both images are one shared constant
        for (std::int64_t i = 0; i < xs.numel(); ++i) {
            xs[i] = (xs[i] - lo) / (hi - lo);
            ys[i] = (ys[i] - lo) / (hi - lo);
        }
        range = 1.0;
    }
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    static const double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

    int scales = 0;
    for (int s = 0, h = x.extent(0), w = x.extent(1); s < max_scales && h >= kWin && w >= kWin;
         ++s, h /= 2, w /= 2)
        ++scales;
    double wsum = 0.0;
    for (int s = 0; s < scales; ++s) wsum += kWeights[s];

    const std::vector<double> k = gaussian_window();
    double acc = 1.0;
    for (int s = 0; s < scales; ++s) {
        const SsimTerms t = ssim_pass(xs, ys, k, c1, c2);
        const double term = s == scales - 1 ? t.full : t.cs;
        acc *= std::pow(std::max(term, 0.0), kWeights[s] / wsum);
        if (s != scales - 1) {
            xs = downsample2(xs);
            ys = downsample2(ys);
        }
    }
    return acc;
}

// ---------------------------------------------------------------------------

TensorD mc_mean_logits(const std::function<TensorD()>& sample_logits, int n_mc) {
    if (n_mc < 1) throw ValueError("n_mc must be >= 1");
    TensorD acc = sample_logits();
    if (acc.rank() != 1) throw DimensionError("sample_logits must yield a [C] vector");
    for (int i = 1; i < n_mc; ++i) {
        const TensorD draw = sample_logits();
        if (draw.shape() != acc.shape())
            throw DimensionError("logit draws changed shape between MC samples");
        for (std::int64_t j = 0; j < acc.numel(); ++j) acc[j] += draw[j];
    }
    for (std::int64_t j = 0; j < acc.numel(); ++j) acc[j] /= n_mc;
    return acc;
}

int mc_ensemble_predict(const std::function<TensorD()>& sample_logits, int n_mc) {
    const TensorD mean = mc_mean_logits(sample_logits, n_mc);
    int best = 0;
    for (int j = 1; j < mean.extent(0); ++j)
        if (mean[j] > mean[best]) best = j;
    return best;
}

// ---------------------------------------------------------------------------

NodeId FeatureExtractor::logits_node(TapeD& tape, NodeId x, Mode mode) {
    return head_->forward(tape, features_node(tape, x, mode), mode);
}

double FeatureExtractor::fit(const TensorD& x, const std::vector<int>& labels, int iters,
                             int batch, Rng& rng, double lr) {
    if (frozen_) throw ContractError("extractor is frozen; fit() is no longer allowed");
    if (x.extent(0) != static_cast<std::int64_t>(labels.size()))
        throw DimensionError("sample/label count mismatch");
    const int n = x.extent(0);
    if (batch < 1 || batch > n) throw ValueError("batch must be in [1, n]");
    AdamConfig cfg;
    cfg.alpha = lr;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.999;
    Adam<double> opt(reg_, cfg);
    Shape batch_shape = x.shape();
    batch_shape[0] = batch;
    const std::int64_t stride = x.numel() / n;
    for (int it = 0; it < iters; ++it) {
        TensorD xb(batch_shape);
        std::vector<int> yb(batch);
        for (int i = 0; i < batch; ++i) {
            const int pick = rng.uniform_int(n);
            yb[i] = labels[static_cast<std::size_t>(pick)];
            for (std::int64_t j = 0; j < stride; ++j) xb[i * stride + j] = x[pick * stride + j];
        }
        TapeD tape;
        reg_.zero_grad();
        NodeId loss = cross_entropy_from_logits(
            tape, logits_node(tape, tape.constant(std::move(xb)), Mode::Train), yb);
        tape.backward(loss);
        opt.step();
    }
    return accuracy(x, labels);
}

void FeatureExtractor::freeze() {
    for (auto& [name, p] : reg_.params) {
        (void)name;
        p->trainable = false;
    }
    frozen_ = true;
}

TensorD FeatureExtractor::features(const TensorD& x) {
    if (!frozen_) throw ContractError("metrics require a frozen extractor");
    TapeD tape;
    return tape.val(features_node(tape, tape.constant(x), Mode::Eval));
}

TensorD FeatureExtractor::logits(const TensorD& x) {
    if (!frozen_) throw ContractError("metrics require a frozen extractor");
    TapeD tape;
    return tape.val(logits_node(tape, tape.constant(x), Mode::Eval));
}

TensorD FeatureExtractor::probs(const TensorD& x) {
    if (!frozen_) throw ContractError("metrics require a frozen extractor");
    TapeD tape;
    NodeId lp = tape.log_softmax_rows(logits_node(tape, tape.constant(x), Mode::Eval));
    return tape.val(tape.exp(lp));
}

double FeatureExtractor::accuracy(const TensorD& x, const std::vector<int>& labels) {
    TapeD tape;
    const TensorD lg = tape.val(logits_node(tape, tape.constant(x), Mode::Eval));
    int hits = 0;
    for (int i = 0; i < lg.extent(0); ++i) {
        int best = 0;
        for (int j = 1; j < lg.extent(1); ++j)
            if (lg.at(i, j) > lg.at(i, best)) best = j;
        if (best == labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / lg.extent(0);
}

MlpExtractor::MlpExtractor(int in_dim, int num_classes, Rng rng, int hidden, int feat_dim)
    : FeatureExtractor(feat_dim, num_classes) {
    fc1_ = std::make_unique<Linear<double>>(reg_, "fc1", in_dim, hidden, rng);
    fc2_ = std::make_unique<Linear<double>>(reg_, "fc2", hidden, feat_dim, rng);
    head_ = std::make_unique<Linear<double>>(reg_, "head", feat_dim, num_classes, rng, true, false,
                                             1.0);
}

NodeId MlpExtractor::features_node(TapeD& tape, NodeId x, Mode mode) {
    NodeId h = tape.relu(fc1_->forward(tape, x, mode));
    return tape.relu(fc2_->forward(tape, h, mode));
}

ConvExtractor::ConvExtractor(int in_ch, int img_size, int num_classes, Rng rng, int ch,
                             int feat_dim)
    : FeatureExtractor(feat_dim, num_classes) {
    if (img_size % 4 != 0) throw ValueError("img_size must be divisible by 4");
    c1_ = std::make_unique<Conv2d<double>>(reg_, "c1", in_ch, ch, 3, 1, 1, rng);
    c2_ = std::make_unique<Conv2d<double>>(reg_, "c2", ch, 2 * ch, 3, 1, 1, rng);
    flat_dim_ = 2 * ch * (img_size / 4) * (img_size / 4);
    fc_ = std::make_unique<Linear<double>>(reg_, "fc", flat_dim_, feat_dim, rng);
    head_ = std::make_unique<Linear<double>>(reg_, "head", feat_dim, num_classes, rng, true, false,
                                             1.0);
}

NodeId ConvExtractor::features_node(TapeD& tape, NodeId x, Mode mode) {
    NodeId h = tape.avg_pool2x2(tape.relu(c1_->forward(tape, x, mode)));
    h = tape.avg_pool2x2(tape.relu(c2_->forward(tape, h, mode)));
    const int n = tape.val(h).extent(0);
    return tape.relu(fc_->forward(tape, tape.reshape(h, {n, flat_dim_}), mode));
}

}  // namespace projcgan
