#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace crossway {

// Vector allocator with two properties the numeric kernels rely on:
//  - default-initialization on resize (ops overwrite every element; value
//    initialization would memset gigabytes per training step), and
//  - 64-byte alignment, so SIMD reduction order never depends on where the
//    heap happened to place a buffer. Bit-reproducibility across runs and
//    across model variants needs every same-shape tensor to reduce in the
//    same order.
template <class T, class A = std::allocator<T>>
struct default_init_allocator : A {
    template <class U>
    struct rebind {
        using other = default_init_allocator<U, typename std::allocator_traits<A>::template rebind_alloc<U>>;
    };
    using A::A;
    using value_type = T;

    T* allocate(size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(64)));
    }
    void deallocate(T* p, size_t) noexcept { ::operator delete(p, std::align_val_t(64)); }

    template <class U>
    void construct(U* ptr) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(ptr)) U;
    }
    template <class U, class... Args>
    void construct(U* ptr, Args&&... args) {
        std::allocator_traits<A>::construct(static_cast<A&>(*this), ptr,
                                            std::forward<Args>(args)...);
    }
};

template <class S>
using TensorStorage = std::vector<S, default_init_allocator<S>>;

// Dense row-major tensor. Scalar type S is float for training and double for
// the 64-bit test paths (gradient checks, exact-zero routing assertions).
template <class S>
struct Tensor {
    std::vector<int64_t> shape;
    TensorStorage<S> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> sh) : shape(std::move(sh)) {
        data.resize(static_cast<size_t>(count(shape)));
        std::fill(data.begin(), data.end(), S(0));
    }
    struct Uninit {};
    Tensor(std::vector<int64_t> sh, Uninit) : shape(std::move(sh)) {
        data.resize(static_cast<size_t>(count(shape)));
    }
    Tensor(std::vector<int64_t> sh, S fill) : shape(std::move(sh)) {
        data.resize(static_cast<size_t>(count(shape)));
        std::fill(data.begin(), data.end(), fill);
    }

    static int64_t count(const std::vector<int64_t>& sh) {
        int64_t n = 1;
        for (int64_t d : sh) {
            if (d < 0) throw std::invalid_argument("negative tensor dim");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }
    bool empty() const { return data.empty(); }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const S& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(S(0)); }

    // Reinterpret with a new shape; element count must match.
    Tensor<S> reshaped(std::vector<int64_t> sh) const {
        if (count(sh) != numel()) throw std::invalid_argument("reshape: element count mismatch");
        Tensor<S> t;
        t.shape = std::move(sh);
        t.data = data;
        return t;
    }

    bool same_shape(const Tensor<S>& o) const { return shape == o.shape; }

    static Tensor<S> zeros(std::vector<int64_t> sh) { return Tensor<S>(std::move(sh)); }
    static Tensor<S> full(std::vector<int64_t> sh, S v) { return Tensor<S>(std::move(sh), v); }

    template <class O>
    Tensor<O> cast() const {
        Tensor<O> t;
        t.shape = shape;
        t.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<O>(data[i]);
        return t;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

template <class S>
inline bool all_finite(const Tensor<S>& t) {
    for (S v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

// Tensor storage compares against plain vectors (test convenience).
template <class S>
inline bool operator==(const TensorStorage<S>& a, const std::vector<S>& b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}
template <class S>
inline bool operator==(const std::vector<S>& a, const TensorStorage<S>& b) {
    return b == a;
}

}  // namespace crossway
