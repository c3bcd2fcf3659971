#ifndef PROJCGAN_RNG_HPP
#define PROJCGAN_RNG_HPP

#include <cstdint>
#include <random>
#include <string>

#include "projcgan/tensor.hpp"

namespace projcgan {

/// Deterministic random stream. The engine is mt19937_64 (bit-exact across
/// platforms by the standard); all real-valued draws are derived from the
/// integer stream with plain arithmetic so the value sequence depends only on
/// the seed and the call sequence.
class Rng {
public:
    static constexpr const char* kAlgorithm = "mt19937_64/u53/box-muller";

    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) {
        if (lo > hi) throw ValueError("uniform: lo > hi");
        return lo + (hi - lo) * uniform01();
    }

    /// Standard normal via Box-Muller; two engine draws per sample.
    double gaussian() {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Uniform integer in [0, n) without modulo bias.
    int uniform_int(int n) {
        if (n <= 0) throw ValueError("uniform_int: n must be positive");
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<int>(x % un);
    }

    template <typename T>
    Tensor<T> sample_gaussian(Shape shape) {
        Tensor<T> out(std::move(shape));
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(gaussian());
        return out;
    }

    template <typename T>
    Tensor<T> sample_uniform(double lo, double hi, Shape shape) {
        if (lo > hi) throw ValueError("sample_uniform: lo > hi");
        Tensor<T> out(std::move(shape));
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(uniform(lo, hi));
        return out;
    }

    /// Derive an independent stream for a named purpose (data, init, panel...).
    Rng spawn(std::uint64_t stream_id) const {
        // splitmix64 over seed ^ stream tag
        std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

    std::string save_state() const;
    void load_state(const std::string& blob);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace projcgan

#endif
