#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hinas {

/// Process-wide accounting of tensor payload bytes. Used by the
/// cell-sharing memory benchmark to compare activation high-water marks.
class MemoryStats {
public:
  static int64_t live_bytes() { return live_.load(std::memory_order_relaxed); }
  static int64_t peak_bytes() { return peak_.load(std::memory_order_relaxed); }
  static void reset_peak() { peak_.store(live_.load(), std::memory_order_relaxed); }

  static void on_alloc(int64_t bytes) {
    int64_t now = live_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
    int64_t prev = peak_.load(std::memory_order_relaxed);
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
  }
  static void on_free(int64_t bytes) { live_.fetch_sub(bytes, std::memory_order_relaxed); }

private:
  static std::atomic<int64_t> live_;
  static std::atomic<int64_t> peak_;
};

template <class T>
struct TrackingAllocator {
  using value_type = T;
  TrackingAllocator() = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) {}
  T* allocate(std::size_t n) {
    MemoryStats::on_alloc(int64_t(n * sizeof(T)));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) {
    MemoryStats::on_free(int64_t(n * sizeof(T)));
    ::operator delete(p);
  }
  bool operator==(const TrackingAllocator&) const { return true; }
  bool operator!=(const TrackingAllocator&) const { return false; }
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense 4-D array in NCHW order, double precision.
class Tensor {
public:
  Tensor() : shape_{0, 0, 0, 0} {}
  Tensor(int n, int c, int h, int w) : shape_{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("Tensor: negative dimension");
    data_.assign(std::size_t(n) * c * h * w, 0.0);
  }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.n(), t.c(), t.h(), t.w()); }

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator()(int n, int c, int h, int w) {
    return data_[((std::size_t(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double operator()(int n, int c, int h, int w) const {
    return data_[((std::size_t(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the (n, c) plane of h*w contiguous values.
  double* plane(int n, int c) {
    return data_.data() + (std::size_t(n) * shape_[1] + c) * shape_[2] * shape_[3];
  }
  const double* plane(int n, int c) const {
    return data_.data() + (std::size_t(n) * shape_[1] + c) * shape_[2] * shape_[3];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_shape(o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  void add_scaled(const Tensor& o, double s) {
    require_same_shape(o, "add_scaled");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
  }

  bool all_finite() const;
  double dot(const Tensor& o) const;

  void require_same_shape(const Tensor& o, const char* where) const {
    if (!same_shape(o)) throw ShapeError(std::string(where) + ": shape mismatch " + shape_str() + " vs " + o.shape_str());
  }
  std::string shape_str() const;

private:
  std::array<int, 4> shape_;
  std::vector<double, TrackingAllocator<double>> data_;
};

using TensorPtr = std::shared_ptr<const Tensor>;

inline TensorPtr make_shared_tensor(Tensor&& t) { return std::make_shared<const Tensor>(std::move(t)); }

/// Channel-wise concatenation; parts must agree in N, H, W.
Tensor concat_channels(const std::vector<const Tensor*>& parts);
/// Channels [c0, c1) of t as a new tensor.
Tensor slice_channels(const Tensor& t, int c0, int c1);

}  // namespace hinas
