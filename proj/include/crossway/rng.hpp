#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "crossway/tensor.hpp"

namespace crossway {

// xoshiro256++ seeded through splitmix64. Self-contained so that streams are
// reproducible across standard libraries; std::normal_distribution is
// implementation-defined and would break bit-level run equality.
struct Rng {
    uint64_t s[4];

    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    static uint64_t splitmix(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ull;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s) w = splitmix(x);
        have_spare_ = false;
    }

    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    uint64_t next_u64() {
        const uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        const uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        // Rejection-free modulo bias is negligible for our n, but keep it exact.
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller (pair cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <class S>
    Tensor<S> normal_tensor(std::vector<int64_t> shape) {
        Tensor<S> t(std::move(shape));
        for (auto& v : t.data) v = static_cast<S>(normal());
        return t;
    }

    template <class S>
    Tensor<S> uniform_tensor(std::vector<int64_t> shape, double lo, double hi) {
        Tensor<S> t(std::move(shape));
        for (auto& v : t.data) v = static_cast<S>(uniform(lo, hi));
        return t;
    }

    // Fisher-Yates shuffle of an index vector.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

   private:
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a over a tag string, mixed with the numeric parts. Used to derive
// independent named streams (per-parameter init, per-epoch data order, ...)
// so stream contents do not depend on model structure or call order.
inline uint64_t stream_seed(uint64_t root, std::string_view tag, uint64_t a = 0, uint64_t b = 0) {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    mix(root);
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    mix(a);
    mix(b);
    return h;
}

inline Rng stream_rng(uint64_t root, std::string_view tag, uint64_t a = 0, uint64_t b = 0) {
    return Rng(stream_seed(root, tag, a, b));
}

}  // namespace crossway
