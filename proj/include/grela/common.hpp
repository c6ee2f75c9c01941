#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace grela {

// Error taxonomy. The CLI maps InputError/ConfigError to exit code 2 and
// NumericalError to exit code 3.
struct DimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// splitmix64 step, used to derive independent sub-seeds from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Deterministic RNG. Draws go through our own [0,1) mapping instead of
// std distributions, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) {
        if (n <= 0) throw ContractError("Rng::uniform_int: n must be positive");
        return static_cast<int>(next() % static_cast<std::uint64_t>(n));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
        }
    }

    std::mt19937_64& engine() { return engine_; }
    const std::mt19937_64& engine() const { return engine_; }

private:
    std::mt19937_64 engine_;
};

// Splits `total` pixels into `parts` contiguous cells of near-equal width:
// every cell gets total/parts pixels and the last one absorbs the remainder.
// Returns parts+1 boundaries, bounds[i]..bounds[i+1] spanning cell i.
inline std::vector<int> grid_cell_bounds(int total, int parts) {
    if (parts < 1 || parts > total)
        throw InputError("grid_cell_bounds: need 1 <= parts <= total, got parts=" +
                         std::to_string(parts) + " total=" + std::to_string(total));
    std::vector<int> bounds(static_cast<std::size_t>(parts) + 1);
    int base = total / parts;
    for (int i = 0; i < parts; ++i) bounds[static_cast<std::size_t>(i)] = i * base;
    bounds[static_cast<std::size_t>(parts)] = total;
    return bounds;
}

}  // namespace grela
