#ifndef REM_RNG_HPP
#define REM_RNG_HPP

#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace rem {

// splitmix64 step (Steele et al.); used to scramble user seeds and to derive
// independent child streams so per-cluster draws do not depend on visit order.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic RNG: mt19937_64 behind a fixed set of draw helpers. Identical
// seeds give identical streams on a given platform/toolchain.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : base_seed_(seed), gen_(splitmix64(seed)) {}

    // Child stream k: seeded from (base_seed, k), independent of how many draws
    // the parent has made. Use for per-cluster / per-chain streams.
    Rng child(std::uint64_t stream) const {
        return Rng(splitmix64(base_seed_ ^ splitmix64(stream + 0x51ed2701a9b5e3f7ULL)));
    }

    std::uint64_t seed() const { return base_seed_; }

    double uniform() {  // [0,1)
        return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
    }

    double normal(double mean = 0.0, double sd = 1.0) {
        return std::normal_distribution<double>(mean, sd)(gen_);
    }

    // Exponential with the given rate (mean 1/rate).
    double exponential(double rate) {
        if (!(rate > 0.0)) throw std::invalid_argument("exponential rate must be > 0");
        return std::exponential_distribution<double>(rate)(gen_);
    }

    double gamma(double shape, double scale) {
        if (!(shape > 0.0) || !(scale > 0.0))
            throw std::invalid_argument("gamma shape/scale must be > 0");
        return std::gamma_distribution<double>(shape, scale)(gen_);
    }

    // Inverse-gamma(shape a, scale b): density ~ x^{-a-1} exp(-b/x).
    double inverse_gamma(double shape, double scale) {
        return scale / std::gamma_distribution<double>(shape, 1.0)(gen_);
    }

    double chi_squared(double df) {
        return 2.0 * std::gamma_distribution<double>(0.5 * df, 1.0)(gen_);
    }

    // Index draw proportional to non-negative weights; total must be sum(weights).
    int categorical(const Eigen::VectorXd& weights, double total) {
        if (!(total > 0.0)) throw std::invalid_argument("categorical total must be > 0");
        double u = uniform() * total;
        double acc = 0.0;
        const int n = static_cast<int>(weights.size());
        for (int i = 0; i < n; ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return n - 1;  // guard against accumulated round-off
    }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::uint64_t base_seed_;
    std::mt19937_64 gen_;
};

}  // namespace rem

#endif  // REM_RNG_HPP
