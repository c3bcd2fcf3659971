#include "projcgan/layers.hpp"

#include <cmath>

#include "projcgan/errors.hpp"
#include "projcgan/spectral.hpp"

namespace projcgan {

// ---- Registry ------------------------------------------------------------

template <typename T>
void Registry<T>::add_param(std::string name, Parameter<T>* p) {
    if (find_param(name) || find_state(name))
        throw ValueError("duplicate registry name: " + name);
    params.emplace_back(std::move(name), p);
}

template <typename T>
void Registry<T>::add_state(std::string name, Tensor<T>* s) {
    if (find_param(name) || find_state(name))
        throw ValueError("duplicate registry name: " + name);
    state.emplace_back(std::move(name), s);
}

template <typename T>
Parameter<T>* Registry<T>::find_param(const std::string& name) const {
    for (const auto& [n, p] : params)
        if (n == name) return p;
    return nullptr;
}

template <typename T>
Tensor<T>* Registry<T>::find_state(const std::string& name) const {
    for (const auto& [n, s] : state)
        if (n == name) return s;
    return nullptr;
}

template <typename T>
std::int64_t Registry<T>::param_count() const {
    std::int64_t c = 0;
    for (const auto& [n, p] : params) c += p->value.numel();
    return c;
}

template <typename T>
void Registry<T>::zero_grad() {
    for (auto& [n, p] : params) p->zero_grad();
}

// ---- init helpers --------------------------------------------------------

namespace {

// zero-mean uniform with the requested standard deviation (bound = std*sqrt(3))
template <typename T>
Tensor<T> uniform_init(Rng& rng, Shape shape, double std) {
    const double b = std * 1.7320508075688772;
    return rng.sample_uniform<T>(-b, b, std::move(shape));
}

template <typename T>
Tensor<T> unit_gaussian(Rng& rng, int n) {
    Tensor<T> u = rng.sample_gaussian<T>({n});
    double norm = 0.0;
    for (int i = 0; i < n; ++i) norm += static_cast<double>(u[i]) * u[i];
    norm = std::sqrt(std::max(norm, 1e-30));
    for (int i = 0; i < n; ++i) u[i] = static_cast<T>(u[i] / norm);
    return u;
}

}  // namespace

// ---- Linear --------------------------------------------------------------

template <typename T>
Linear<T>::Linear(Registry<T>& reg, const std::string& prefix, int in, int out, Rng& rng,
                  bool bias, bool spectral, double gain)
    : in_(in), out_(out), has_bias_(bias), spectral_(spectral) {
    if (in < 1 || out < 1) throw ValueError("Linear: dims must be positive");
    w_ = Parameter<T>(uniform_init<T>(rng, {in, out}, gain / std::sqrt(static_cast<double>(in))));
    reg.add_param(prefix + ".weight", &w_);
    if (has_bias_) {
        b_ = Parameter<T>(Tensor<T>({out}));
        reg.add_param(prefix + ".bias", &b_);
    }
    if (spectral_) {
        u_ = unit_gaussian<T>(rng, in);
        v_ = sn_right_vector(w_.value, u_);
        reg.add_state(prefix + ".u", &u_);
        reg.add_state(prefix + ".v", &v_);
    }
}

template <typename T>
NodeId Linear<T>::forward(Tape<T>& tape, NodeId x, Mode mode) {
    NodeId wid = tape.use(w_);
    NodeId weff = wid;
    if (spectral_) {
        if (mode == Mode::Train) v_ = sn_power_step(w_.value, u_);
        weff = tape.div(wid, sn_sigma_node(tape, wid, u_, v_));
    }
    NodeId y = tape.matmul(x, weff);
    if (has_bias_) y = tape.add(y, tape.use(b_));
    return y;
}

// ---- Conv2d --------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(Registry<T>& reg, const std::string& prefix, int in_ch, int out_ch, int k,
                  int stride, int pad, Rng& rng, bool bias, bool spectral, double gain)
    : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad), has_bias_(bias),
      spectral_(spectral) {
    if (in_ch < 1 || out_ch < 1 || k < 1) throw ValueError("Conv2d: dims must be positive");
    const double fan_in = static_cast<double>(in_ch) * k * k;
    w_ = Parameter<T>(uniform_init<T>(rng, {out_ch, in_ch, k, k}, gain / std::sqrt(fan_in)));
    reg.add_param(prefix + ".weight", &w_);
    if (has_bias_) {
        b_ = Parameter<T>(Tensor<T>({out_ch}));
        reg.add_param(prefix + ".bias", &b_);
    }
    if (spectral_) {
        u_ = unit_gaussian<T>(rng, out_ch);
        Tensor<T> flat({out_ch, in_ch * k * k}, w_.value.vec());
        v_ = sn_right_vector(flat, u_);
        reg.add_state(prefix + ".u", &u_);
        reg.add_state(prefix + ".v", &v_);
    }
}

template <typename T>
NodeId Conv2d<T>::forward(Tape<T>& tape, NodeId x, Mode mode) {
    NodeId wid = tape.use(w_);
    NodeId weff = wid;
    if (spectral_) {
        const int cols = in_ch_ * k_ * k_;
        if (mode == Mode::Train) {
            Tensor<T> flat({out_ch_, cols}, w_.value.vec());
            v_ = sn_power_step(flat, u_);
        }
        NodeId w2d = tape.reshape(wid, {out_ch_, cols});
        weff = tape.div(wid, sn_sigma_node(tape, w2d, u_, v_));
    }
    NodeId y = tape.conv2d(x, weff, stride_, pad_);
    if (has_bias_) y = tape.add(y, tape.use(b_));
    return y;
}

// ---- Embedding -----------------------------------------------------------

template <typename T>
Embedding<T>::Embedding(Registry<T>& reg, const std::string& prefix, int rows, int dim, Rng& rng,
                        bool spectral, double init_std)
    : rows_(rows), dim_(dim), spectral_(spectral) {
    if (rows < 1 || dim < 1) throw ValueError("Embedding: dims must be positive");
    const double std = init_std > 0.0 ? init_std : 1.0 / std::sqrt(static_cast<double>(dim));
    w_ = Parameter<T>(uniform_init<T>(rng, {rows, dim}, std));
    reg.add_param(prefix + ".weight", &w_);
    if (spectral_) {
        u_ = unit_gaussian<T>(rng, rows);
        v_ = sn_right_vector(w_.value, u_);
        reg.add_state(prefix + ".u", &u_);
        reg.add_state(prefix + ".v", &v_);
    }
}

template <typename T>
NodeId Embedding<T>::table_node(Tape<T>& tape, Mode mode) {
    NodeId wid = tape.use(w_);
    if (!spectral_) return wid;
    if (mode == Mode::Train) v_ = sn_power_step(w_.value, u_);
    return tape.div(wid, sn_sigma_node(tape, wid, u_, v_));
}

template <typename T>
NodeId Embedding<T>::forward(Tape<T>& tape, const std::vector<int>& labels, Mode mode) {
    return tape.gather_rows(table_node(tape, mode), labels);
}

// ---- BatchNorm -----------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(Registry<T>& reg, const std::string& prefix, int channels, bool affine,
                        T eps, T momentum)
    : channels_(channels), affine_(affine), eps_(eps), momentum_(momentum) {
    if (channels < 1) throw ValueError("BatchNorm: channels must be positive");
    run_mean_ = Tensor<T>({channels});
    run_var_ = Tensor<T>({channels}, T(1));
    reg.add_state(prefix + ".run_mean", &run_mean_);
    reg.add_state(prefix + ".run_var", &run_var_);
    if (affine_) {
        gamma_ = Parameter<T>(Tensor<T>({channels}, T(1)));
        beta_ = Parameter<T>(Tensor<T>({channels}));
        reg.add_param(prefix + ".gamma", &gamma_);
        reg.add_param(prefix + ".beta", &beta_);
    }
}

template <typename T>
NodeId BatchNorm<T>::normalize(Tape<T>& tape, NodeId x, Mode mode) {
    const Tensor<T>& xv = tape.val(x);
    if (xv.rank() != 2 && xv.rank() != 4)
        throw DimensionError("BatchNorm expects [N,C] or [N,C,H,W], got " + shape_str(xv.shape()));
    if (xv.extent(1) != channels_)
        throw DimensionError("BatchNorm channel mismatch: " + shape_str(xv.shape()));
    const std::vector<int> axes = xv.rank() == 2 ? std::vector<int>{0} : std::vector<int>{0, 2, 3};

    NodeId eps_node = tape.constant(Tensor<T>::scalar(eps_));
    if (mode == Mode::Eval) {
        NodeId mu = tape.constant(run_mean_);
        NodeId var = tape.constant(run_var_);
        return tape.div(tape.sub(x, mu), tape.sqrt(tape.add(var, eps_node)));
    }

    std::int64_t m = xv.extent(0);
    for (std::size_t i = 2; i < static_cast<std::size_t>(xv.rank()); ++i) m *= xv.extent(static_cast<int>(i));
    if (m < 2) throw ValueError("BatchNorm needs at least 2 samples per channel in train mode");

    NodeId mu = tape.mean(x, axes);
    NodeId xc = tape.sub(x, mu);
    NodeId var = tape.mean(tape.mul(xc, xc), axes);
    NodeId out = tape.div(xc, tape.sqrt(tape.add(var, eps_node)));

    if (mode == Mode::Train) {
        const Tensor<T>& muv = tape.val(mu);
        const Tensor<T>& varv = tape.val(var);
        const T unbias = static_cast<T>(static_cast<double>(m) / static_cast<double>(m - 1));
        for (int cIdx = 0; cIdx < channels_; ++cIdx) {
            run_mean_[cIdx] = (T(1) - momentum_) * run_mean_[cIdx] + momentum_ * muv[cIdx];
            run_var_[cIdx] = (T(1) - momentum_) * run_var_[cIdx] + momentum_ * unbias * varv[cIdx];
        }
    }
    return out;
}

template <typename T>
NodeId BatchNorm<T>::forward(Tape<T>& tape, NodeId x, Mode mode) {
    NodeId xhat = normalize(tape, x, mode);
    if (!affine_) return xhat;
    return tape.add(tape.mul(xhat, tape.use(gamma_)), tape.use(beta_));
}

// ---- CondBatchNorm -------------------------------------------------------

template <typename T>
CondBatchNorm<T>::CondBatchNorm(Registry<T>& reg, const std::string& prefix, int num_classes,
                                int channels, T eps, T momentum)
    : num_classes_(num_classes), bn_(reg, prefix + ".bn", channels, false, eps, momentum) {
    if (num_classes < 1) throw ValueError("CondBatchNorm: num_classes must be positive");
    gamma_table_ = Parameter<T>(Tensor<T>({num_classes, channels}, T(1)));
    beta_table_ = Parameter<T>(Tensor<T>({num_classes, channels}));
    reg.add_param(prefix + ".gamma_table", &gamma_table_);
    reg.add_param(prefix + ".beta_table", &beta_table_);
}

template <typename T>
NodeId CondBatchNorm<T>::forward(Tape<T>& tape, NodeId x, const std::vector<int>& labels,
                                 Mode mode) {
    if (static_cast<int>(labels.size()) != tape.val(x).extent(0))
        throw DimensionError("CondBatchNorm: one label per sample required");
    NodeId g = tape.gather_rows(tape.use(gamma_table_), labels);
    NodeId b = tape.gather_rows(tape.use(beta_table_), labels);
    return forward_rows(tape, x, g, b, mode);
}

template <typename T>
NodeId CondBatchNorm<T>::forward_rows(Tape<T>& tape, NodeId x, NodeId gamma_rows, NodeId beta_rows,
                                      Mode mode) {
    NodeId xhat = bn_.normalize(tape, x, mode);
    return tape.add(tape.mul(xhat, gamma_rows), beta_rows);
}

template struct Registry<float>;
template struct Registry<double>;
template class Linear<float>;
template class Linear<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class Embedding<float>;
template class Embedding<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class CondBatchNorm<float>;
template class CondBatchNorm<double>;

}  // namespace projcgan
