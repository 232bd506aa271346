#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "spikegan/errors.hpp"
#include "spikegan/rng.hpp"

namespace spikegan {

using Shape = std::vector<int64_t>;

// Training cycles multi-megabyte activation buffers every step; glibc's
// default mmap threshold would hand them back to the kernel each time and
// spend a third of the wall clock in page faults. Keep them on the heap.
inline void tune_allocator() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_MAX, 0);
        mallopt(M_TRIM_THRESHOLD, 1 << 28);
        return true;
    }();
    (void)done;
#endif
}

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << s[i] << (i + 1 < s.size() ? "x" : "");
    os << ']';
    return os.str();
}

inline void check_shape_positive(const Shape& s) {
    for (int64_t d : s)
        if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
}

// Dense row-major n-d array. Plain value storage; differentiation state lives
// on the tape, not here.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_shape_positive(shape_);
        data_.assign(static_cast<size_t>(numel(shape_)), T(0));
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape_positive(shape_);
        if (static_cast<int64_t>(data_.size()) != numel(shape_))
            throw ShapeError("element count " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    static Tensor uniform(Shape shape, Rng& rng, T lo, T hi) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
        return t;
    }

    static Tensor normal(Shape shape, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<T>(rng.normal());
        return t;
    }

    const Shape& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const { return shape_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at(std::initializer_list<int64_t> idx) { return data_[flat_index(idx)]; }
    const T& at(std::initializer_list<int64_t> idx) const { return data_[flat_index(idx)]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    Tensor reshaped(Shape new_shape) const {
        if (numel(new_shape) != size())
            throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape));
        return Tensor(std::move(new_shape), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    void fill(T value) {
        for (auto& v : data_) v = value;
    }

    void add_(const Tensor& other) {
        if (!same_shape(other)) throw ShapeError("add_ shape mismatch " + shape_str(shape_) + " vs " + shape_str(other.shape_));
        for (int64_t i = 0; i < size(); ++i) data_[i] += other.data_[i];
    }

  private:
    size_t flat_index(std::initializer_list<int64_t> idx) const {
        if (idx.size() != shape_.size()) throw ShapeError("index rank mismatch for " + shape_str(shape_));
        int64_t flat = 0;
        size_t k = 0;
        for (int64_t i : idx) {
            if (i < 0 || i >= shape_[k]) throw ShapeError("index out of range in " + shape_str(shape_));
            flat = flat * shape_[k] + i;
            ++k;
        }
        return static_cast<size_t>(flat);
    }

    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
double l2_norm(const Tensor<T>& t) {
    double acc = 0.0;
    for (int64_t i = 0; i < t.size(); ++i) {
        const double v = static_cast<double>(t[i]);
        acc += v * v;
    }
    return std::sqrt(acc);
}

// Named learnable tensor; grad is the cross-iteration accumulator the
// optimizer consumes.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(T(0)); }
};

}  // namespace spikegan
