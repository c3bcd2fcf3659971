#include "projcgan/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "projcgan/errors.hpp"
#include "projcgan/serialize.hpp"

namespace projcgan {

namespace {

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, int num_classes) {
    Tensor<T> out({static_cast<int>(labels.size()), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ValueError("label " + std::to_string(labels[i]) + " outside [0, " +
                             std::to_string(num_classes) + ")");
        out.at(static_cast<int>(i), labels[i]) = T(1);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// objectives

template <typename T>
NodeId standard_adversarial_d_loss(Tape<T>& tape, NodeId d_real, NodeId d_fake) {
    // -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x)
    NodeId real_term = tape.mean_all(tape.softplus(tape.neg(d_real)));
    NodeId fake_term = tape.mean_all(tape.softplus(d_fake));
    return tape.add(real_term, fake_term);
}

template <typename T>
NodeId hinge_d_loss(Tape<T>& tape, NodeId d_real, NodeId d_fake) {
    NodeId real_term = tape.mean_all(tape.relu(tape.affine(d_real, T(-1), T(1))));
    NodeId fake_term = tape.mean_all(tape.relu(tape.affine(d_fake, T(1), T(1))));
    return tape.add(real_term, fake_term);
}

template <typename T>
NodeId hinge_g_loss(Tape<T>& tape, NodeId d_fake) {
    return tape.neg(tape.mean_all(d_fake));
}

template <typename T>
NodeId standard_adversarial_g_loss(Tape<T>& tape, NodeId d_fake) {
    return tape.mean_all(tape.softplus(tape.neg(d_fake)));
}

template <typename T>
NodeId cross_entropy_from_logits(Tape<T>& tape, NodeId logits, const std::vector<int>& labels) {
    const Tensor<T>& lv = tape.val(logits);
    if (lv.rank() != 2) throw DimensionError("cross entropy expects [N,C] logits");
    if (static_cast<std::int64_t>(labels.size()) != lv.extent(0))
        throw DimensionError("label count does not match batch");
    NodeId logp = tape.log_softmax_rows(logits);
    NodeId picked = tape.sum(tape.mul(logp, tape.constant(one_hot<T>(labels, lv.extent(1)))), {1});
    return tape.neg(tape.mean_all(picked));
}

template <typename T>
NodeId acgan_d_loss(Tape<T>& tape, NodeId d_real, NodeId d_fake, NodeId cls_real, NodeId cls_fake,
                    const std::vector<int>& labels_real, const std::vector<int>& labels_fake,
                    T lambda_cls) {
    NodeId loss = hinge_d_loss(tape, d_real, d_fake);
    if (lambda_cls != T(0)) {
        NodeId ce = tape.add(cross_entropy_from_logits(tape, cls_real, labels_real),
                             cross_entropy_from_logits(tape, cls_fake, labels_fake));
        loss = tape.add(loss, tape.affine(ce, lambda_cls, T(0)));
    }
    return loss;
}

template <typename T>
NodeId acgan_g_loss(Tape<T>& tape, NodeId d_fake, NodeId cls_fake,
                    const std::vector<int>& labels_fake, T lambda_cls) {
    NodeId loss = hinge_g_loss(tape, d_fake);
    if (lambda_cls != T(0)) {
        NodeId ce = cross_entropy_from_logits(tape, cls_fake, labels_fake);
        loss = tape.add(loss, tape.affine(ce, lambda_cls, T(0)));
    }
    return loss;
}

template <typename T>
std::pair<NodeId, NodeId> acgan_losses(Tape<T>& tape, NodeId d_real, NodeId d_fake, NodeId cls_real,
                                       NodeId cls_fake, const std::vector<int>& labels_real,
                                       const std::vector<int>& labels_fake, T lambda_cls) {
    return {acgan_d_loss(tape, d_real, d_fake, cls_real, cls_fake, labels_real, labels_fake,
                         lambda_cls),
            acgan_g_loss(tape, d_fake, cls_fake, labels_fake, lambda_cls)};
}

template <typename T>
NodeId aux_classifier_g_loss(Tape<T>& tape, NodeId d_fake, NodeId class_log_probs,
                             const std::vector<int>& labels, T lambda_aux,
                             const Registry<T>& frozen_classifier) {
    for (const auto& [name, p] : frozen_classifier.params)
        if (p->trainable)
            throw ContractError("auxiliary classifier must be frozen (parameter '" + name +
                                "' is trainable)");
    const Tensor<T>& lv = tape.val(class_log_probs);
    if (lv.rank() != 2) throw DimensionError("aux loss expects [N,C] log-probabilities");
    NodeId picked = tape.sum(
        tape.mul(class_log_probs, tape.constant(one_hot<T>(labels, lv.extent(1)))), {1});
    NodeId ce = tape.neg(picked);  // per-sample cross entropy
    // -mean[d_fake - lambda * ce]
    return tape.mean_all(tape.sub(tape.affine(ce, lambda_aux, T(0)), d_fake));
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
Adam<T>::Adam(Registry<T>& reg, AdamConfig cfg) : reg_(&reg), cfg_(cfg) {
    if (!(cfg.alpha > 0.0) || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
        cfg.beta2 >= 1.0 || !(cfg.eps > 0.0))
        throw ValueError("bad Adam hyper-parameters");
    m_.reserve(reg.params.size());
    v_.reserve(reg.params.size());
    for (auto& [name, p] : reg.params) {
        (void)name;
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

template <typename T>
void Adam<T>::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < reg_->params.size(); ++i) {
        Parameter<T>* p = reg_->params[i].second;
        if (!p->trainable) continue;
        Tensor<T>& m = m_[i];
        Tensor<T>& v = v_[i];
        for (std::int64_t c = 0; c < p->value.numel(); ++c) {
            const double g = static_cast<double>(p->grad[c]);
            if (!std::isfinite(g))
                throw DivergenceError("non-finite gradient in '" + reg_->params[i].first + "'");
            const double mi = cfg_.beta1 * static_cast<double>(m[c]) + (1.0 - cfg_.beta1) * g;
            const double vi = cfg_.beta2 * static_cast<double>(v[c]) + (1.0 - cfg_.beta2) * g * g;
            m[c] = static_cast<T>(mi);
            v[c] = static_cast<T>(vi);
            const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
            p->value[c] = static_cast<T>(static_cast<double>(p->value[c]) - update);
        }
    }
}

// ---------------------------------------------------------------------------
// schedule

void validate(const TrainSchedule& s) {
    if (s.total < 0 || s.decay_start < 0 || s.decay_start > s.total)
        throw ValueError("schedule: need 0 <= decay_start <= total");
    if (s.n_dis < 1) throw ValueError("schedule: n_dis must be >= 1");
    if (s.batch < 1) throw ValueError("schedule: batch must be >= 1");
    if (!(s.alpha0 > 0.0)) throw ValueError("schedule: alpha0 must be positive");
}

double lr_at(const TrainSchedule& s, int iter) {
    validate(s);
    if (iter < 0 || iter > s.total)
        throw ValueError("lr_at: iteration " + std::to_string(iter) + " outside [0, " +
                         std::to_string(s.total) + "]");
    if (iter <= s.decay_start) return s.alpha0;
    return s.alpha0 * static_cast<double>(s.total - iter) /
           static_cast<double>(s.total - s.decay_start);
}

// ---------------------------------------------------------------------------
// metric log

MetricLog::MetricLog(const std::string& path, bool append)
    : path_(path), out_(path, append ? std::ios::app | std::ios::ate : std::ios::trunc) {
    if (!out_) throw IoError("cannot open metric log '" + path + "'");
    if (!append || out_.tellp() == std::streampos(0))
        out_ << "iter,wall_s,d_loss,g_loss,metric_name,metric_value\n";
    out_.flush();
}

void MetricLog::row(std::int64_t iter, double wall_s, double d_loss, double g_loss,
                    const std::string& metric_name, double metric_value) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%lld,%.3f,%.9g,%.9g,", static_cast<long long>(iter), wall_s,
                  d_loss, g_loss);
    out_ << buf << metric_name;
    std::snprintf(buf, sizeof(buf), ",%.9g\n", metric_value);
    out_ << buf;
    out_.flush();
    if (!out_) throw IoError("write failed on metric log '" + path_ + "'");
}

// ---------------------------------------------------------------------------
// trainer

template <typename T>
Trainer<T>::Trainer(GanTask<T>& task, TrainSchedule sched, AdamConfig g_cfg, AdamConfig d_cfg,
                    Rng rng, std::function<double()> wall_clock)
    : task_(task),
      sched_(sched),
      g_cfg_(g_cfg),
      d_cfg_(d_cfg),
      g_opt_(task.g_reg(), g_cfg),
      d_opt_(task.d_reg(), d_cfg),
      rng_(rng),
      clock_(std::move(wall_clock)) {
    validate(sched_);
    if (!clock_) {
        clock_ = [] {
            using clk = std::chrono::steady_clock;
            return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
        };
    }
    t0_ = clock_();
}

template <typename T>
void Trainer<T>::run(int until, MetricLog* log, int metric_every, const MetricFn& metrics,
                     int ckpt_every, const std::function<void(int)>& save_ckpt) {
    const int stop = std::min(until, sched_.total);
    while (iter_ < stop) {
        const double lr = lr_at(sched_, iter_);
        for (int k = 0; k < sched_.n_dis; ++k) {
            Tape<T> tape;
            task_.d_reg().zero_grad();
            NodeId loss = task_.d_loss(tape, rng_);
            const double lv = static_cast<double>(tape.val(loss)[0]);
            if (!std::isfinite(lv))
                throw DivergenceError("discriminator loss diverged at iteration " +
                                      std::to_string(iter_));
            tape.backward(loss);
            d_opt_.step(lr);
            ++d_steps_;
            last_d_ = lv;
        }
        {
            Tape<T> tape;
            task_.g_reg().zero_grad();
            NodeId loss = task_.g_loss(tape, rng_);
            const double lv = static_cast<double>(tape.val(loss)[0]);
            if (!std::isfinite(lv))
                throw DivergenceError("generator loss diverged at iteration " +
                                      std::to_string(iter_));
            tape.backward(loss);
            g_opt_.step(lr);
            last_g_ = lv;
        }
        ++iter_;
        if (log != nullptr && metric_every > 0 && iter_ % metric_every == 0) {
            const double wall = clock_() - t0_;
            std::vector<std::pair<std::string, double>> rows;
            if (metrics) rows = metrics(iter_);
            if (rows.empty()) rows.emplace_back("-", 0.0);
            for (const auto& [name, value] : rows)
                log->row(iter_, wall, last_d_, last_g_, name, value);
        }
        if (save_ckpt && ckpt_every > 0 && iter_ % ckpt_every == 0) save_ckpt(iter_);
    }
}

namespace {

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T>* tensor;
};

// One flat, ordered view of everything a checkpoint carries (besides the
// iteration counter and rng blob in the header).
template <typename T>
std::vector<NamedTensor<T>> checkpoint_entries(GanTask<T>& task, Adam<T>& g_opt, Adam<T>& d_opt) {
    std::vector<NamedTensor<T>> out;
    auto add_reg = [&out](const char* prefix, Registry<T>& reg, Adam<T>& opt) {
        for (std::size_t i = 0; i < reg.params.size(); ++i) {
            out.push_back({std::string(prefix) + ".p." + reg.params[i].first,
                           &reg.params[i].second->value});
            out.push_back({std::string(prefix) + ".m." + reg.params[i].first, &opt.m(i)});
            out.push_back({std::string(prefix) + ".v." + reg.params[i].first, &opt.v(i)});
        }
        for (auto& [name, s] : reg.state)
            out.push_back({std::string(prefix) + ".s." + name, s});
    };
    add_reg("g", task.g_reg(), g_opt);
    add_reg("d", task.d_reg(), d_opt);
    return out;
}

}  // namespace

template <typename T>
void Trainer<T>::save(std::ostream& os) {
    os.write(kCheckpointMagic, 4);
    write_u32(os, kCheckpointVersion);
    write_u64(os, static_cast<std::uint64_t>(iter_));
    write_string(os, rng_.save_state());
    // optimizer counters ride along as a small tensor (exact in f32 at any
    // plausible desk scale)
    TensorF counters({3});
    counters[0] = static_cast<float>(g_opt_.t());
    counters[1] = static_cast<float>(d_opt_.t());
    counters[2] = static_cast<float>(d_steps_);
    write_string(os, "counters");
    write_tensor_f32(os, counters);
    for (auto& e : checkpoint_entries(task_, g_opt_, d_opt_)) {
        write_string(os, e.name);
        TensorF f32(e.tensor->shape());
        for (std::int64_t i = 0; i < f32.numel(); ++i)
            f32[i] = static_cast<float>((*e.tensor)[i]);
        write_tensor_f32(os, f32);
    }
    if (!os) throw IoError("checkpoint write failed");
}

template <typename T>
void Trainer<T>::load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string(magic, 4) != std::string(kCheckpointMagic, 4))
        throw IoError("not a checkpoint (bad magic)");
    const std::uint32_t version = read_u32(is);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    iter_ = static_cast<int>(read_u64(is));
    rng_.load_state(read_string(is));
    if (read_string(is) != "counters") throw IoError("checkpoint: expected counters entry");
    TensorF counters = read_tensor_f32(is);
    if (counters.shape() != Shape{3}) throw IoError("checkpoint: bad counters entry");
    g_opt_.set_t(static_cast<std::int64_t>(counters[0]));
    d_opt_.set_t(static_cast<std::int64_t>(counters[1]));
    d_steps_ = static_cast<std::int64_t>(counters[2]);
    for (auto& e : checkpoint_entries(task_, g_opt_, d_opt_)) {
        const std::string name = read_string(is);
        if (name != e.name)
            throw IoError("checkpoint entry mismatch: expected '" + e.name + "', found '" + name +
                          "'");
        TensorF f32 = read_tensor_f32(is);
        if (f32.shape() != e.tensor->shape())
            throw IoError("checkpoint entry '" + name + "' has the wrong shape");
        for (std::int64_t i = 0; i < f32.numel(); ++i)
            (*e.tensor)[i] = static_cast<T>(f32[i]);
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw IoError("checkpoint has trailing bytes");
}

template <typename T>
void Trainer<T>::save_file(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    save(os);
}

template <typename T>
void Trainer<T>::load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    load(is);
}

// ---------------------------------------------------------------------------
// tabular optimal discriminator

TabularOptResult tabular_optimal_discriminator(const TensorD& q, const TensorD& p, int max_iters,
                                               double lr, double grad_tol) {
    if (q.rank() != 2 || q.shape() != p.shape())
        throw DimensionError("tables must share one [X,Y] shape");
    double qs = 0.0, ps = 0.0;
    for (std::int64_t i = 0; i < q.numel(); ++i) {
        if (!(q[i] > 0.0) || !(p[i] > 0.0)) throw ValueError("zero-probability cell");
        qs += q[i];
        ps += p[i];
    }
    if (std::abs(qs - 1.0) > 1e-6 || std::abs(ps - 1.0) > 1e-6)
        throw ValueError("tables must each sum to 1");

    Registry<double> reg;
    Parameter<double> f(TensorD(q.shape()));
    reg.add_param("f", &f);
    AdamConfig cfg;
    cfg.alpha = lr;
    Adam<double> opt(reg, cfg);

    int used = 0;
    for (int it = 0; it < max_iters; ++it) {
        TapeD tape;
        reg.zero_grad();
        NodeId fid = tape.use(f);
        NodeId loss = tape.add(tape.sum_all(tape.mul(tape.constant(q), tape.softplus(tape.neg(fid)))),
                               tape.sum_all(tape.mul(tape.constant(p), tape.softplus(fid))));
        tape.backward(loss);
        double ginf = 0.0;
        for (std::int64_t i = 0; i < f.grad.numel(); ++i)
            ginf = std::max(ginf, std::abs(f.grad[i]));
        if (ginf <= grad_tol) break;
        // linear lr decay over the second half settles the iterate
        const double step_lr =
            it * 2 < max_iters ? lr : lr * static_cast<double>(max_iters - it) /
                                          static_cast<double>(max_iters - max_iters / 2);
        opt.step(step_lr);
        used = it + 1;
    }

    TabularOptResult res;
    res.f = f.value;
    res.iters_used = used;
    const int nx = q.extent(0), ny = q.extent(1);
    res.decomposition = TensorD(q.shape());
    for (int i = 0; i < nx; ++i) {
        double qx = 0.0, px = 0.0;
        for (int j = 0; j < ny; ++j) {
            qx += q.at(i, j);
            px += p.at(i, j);
        }
        const double r_x = std::log(qx / px);
        for (int j = 0; j < ny; ++j)
            res.decomposition.at(i, j) = std::log((q.at(i, j) / qx) / (p.at(i, j) / px)) + r_x;
    }
    return res;
}

// ---------------------------------------------------------------------------

#define PROJCGAN_INSTANTIATE_LOSSES(T)                                                          \
    template NodeId standard_adversarial_d_loss<T>(Tape<T>&, NodeId, NodeId);                   \
    template NodeId hinge_d_loss<T>(Tape<T>&, NodeId, NodeId);                                  \
    template NodeId hinge_g_loss<T>(Tape<T>&, NodeId);                                          \
    template NodeId standard_adversarial_g_loss<T>(Tape<T>&, NodeId);                           \
    template NodeId cross_entropy_from_logits<T>(Tape<T>&, NodeId, const std::vector<int>&);    \
    template NodeId acgan_d_loss<T>(Tape<T>&, NodeId, NodeId, NodeId, NodeId,                   \
                                    const std::vector<int>&, const std::vector<int>&, T);       \
    template NodeId acgan_g_loss<T>(Tape<T>&, NodeId, NodeId, const std::vector<int>&, T);      \
    template std::pair<NodeId, NodeId> acgan_losses<T>(Tape<T>&, NodeId, NodeId, NodeId,        \
                                                       NodeId, const std::vector<int>&,         \
                                                       const std::vector<int>&, T);             \
    template NodeId aux_classifier_g_loss<T>(Tape<T>&, NodeId, NodeId, const std::vector<int>&, \
                                             T, const Registry<T>&);

PROJCGAN_INSTANTIATE_LOSSES(float)
PROJCGAN_INSTANTIATE_LOSSES(double)
#undef PROJCGAN_INSTANTIATE_LOSSES

template class Adam<float>;
template class Adam<double>;
template class Trainer<float>;
template class Trainer<double>;

}  // namespace projcgan
