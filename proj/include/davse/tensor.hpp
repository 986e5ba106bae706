#pragma once

#include <cstddef>
#include <cstdlib>
#include <initializer_list>
#include <new>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "davse/rng.hpp"

namespace davse::nn {

// 64-byte-aligned allocator for all tensor storage. Vectorized reductions
// split their peel/tail sections based on the buffer address, so summation
// order — and therefore the float result — would otherwise depend on where
// the heap happened to place the buffer. Pinning every tensor to the same
// alignment class keeps training and evaluation bitwise reproducible across
// runs and processes.
template <typename T>
struct AlignedAlloc {
  using value_type = T;
  using is_always_equal = std::true_type;
  static constexpr std::size_t kAlign = 64;

  AlignedAlloc() = default;
  template <typename U>
  AlignedAlloc(const AlignedAlloc<U>&) {}

  T* allocate(std::size_t n) {
    if (n == 0) return nullptr;
    const std::size_t bytes = (n * sizeof(T) + kAlign - 1) / kAlign * kAlign;
    void* p = std::aligned_alloc(kAlign, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  template <typename U>
  bool operator==(const AlignedAlloc<U>&) const { return true; }
  template <typename U>
  bool operator!=(const AlignedAlloc<U>&) const { return false; }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAlloc<T>>;

// Dense row-major tensor. Shape is dynamic; layers document the axis order
// they expect (batch-first everywhere).
template <typename T>
struct Tensor {
  std::vector<int> shape;
  AlignedVec<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), T(0)) {}
  Tensor(std::initializer_list<int> s) : Tensor(std::vector<int>(s)) {}

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dim");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  size_t size() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  void fill_gaussian(Rng& rng, double stddev) {
    for (auto& v : data) v = static_cast<T>(rng.gaussian() * stddev);
  }
};

// Named view of a parameter and its gradient, used by the optimizer,
// checkpointing, and stage freezing.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

template <typename T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  explicit Param(std::vector<int> s) : value(s), grad(s) {}

  void init_kaiming(Rng& rng, int fan_in) {
    value.fill_gaussian(rng, std::sqrt(2.0 / std::max(1, fan_in)));
  }
  ParamRef<T> ref(const std::string& name) { return {name, &value, &grad}; }
};

}  // namespace davse::nn
