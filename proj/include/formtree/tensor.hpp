#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace formtree {

enum class DType { F32, F64 };

inline std::size_t dtype_size(DType dt) { return dt == DType::F32 ? 4 : 8; }

inline const char* dtype_name(DType dt) { return dt == DType::F32 ? "f32" : "f64"; }

inline DType dtype_from_name(std::string_view s) {
  if (s == "f32") return DType::F32;
  if (s == "f64") return DType::F64;
  throw std::invalid_argument("unknown dtype: " + std::string(s));
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor with runtime dtype. Element access through at()/set()
// goes via double; hot paths grab the typed pointer instead.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<std::size_t> shape, DType dt) : shape_(std::move(shape)), dtype_(dt) {
    numel_ = 1;
    for (std::size_t d : shape_) numel_ *= d;
    data_.assign(numel_ * dtype_size(dt), std::byte{0});
  }

  static Tensor zeros(std::vector<std::size_t> shape, DType dt) { return Tensor(std::move(shape), dt); }

  static Tensor scalar(double v, DType dt) {
    Tensor t({1}, dt);
    t.set(0, v);
    return t;
  }

  static Tensor from(const std::vector<double>& v, std::vector<std::size_t> shape, DType dt) {
    Tensor t(std::move(shape), dt);
    if (v.size() != t.numel())
      throw std::invalid_argument("tensor from: " + std::to_string(v.size()) + " values for shape " +
                                  shape_str(t.shape()));
    for (std::size_t i = 0; i < v.size(); ++i) t.set(i, v[i]);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return numel_; }
  DType dtype() const { return dtype_; }
  bool defined() const { return !shape_.empty(); }

  template <class T>
  T* data() {
    check_type<T>();
    return reinterpret_cast<T*>(data_.data());
  }

  template <class T>
  const T* data() const {
    check_type<T>();
    return reinterpret_cast<const T*>(data_.data());
  }

  void* raw() { return data_.data(); }
  const void* raw() const { return data_.data(); }
  std::size_t nbytes() const { return data_.size(); }

  double at(std::size_t i) const {
    return dtype_ == DType::F32 ? static_cast<double>(data<float>()[i]) : data<double>()[i];
  }

  void set(std::size_t i, double v) {
    if (dtype_ == DType::F32)
      data<float>()[i] = static_cast<float>(v);
    else
      data<double>()[i] = v;
  }

  void fill(double v) {
    for (std::size_t i = 0; i < numel_; ++i) set(i, v);
  }

  std::vector<double> to_doubles() const {
    std::vector<double> out(numel_);
    for (std::size_t i = 0; i < numel_; ++i) out[i] = at(i);
    return out;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (std::size_t i = 0; i < numel_; ++i) {
      const double v = at(i);
      if (!(v == v) || v == std::numeric_limits<double>::infinity() ||
          v == -std::numeric_limits<double>::infinity())
        return false;
    }
    return true;
  }

 private:
  template <class T>
  void check_type() const {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    if constexpr (std::is_same_v<T, float>) {
      if (dtype_ != DType::F32) throw std::logic_error("tensor is f64, asked for float*");
    } else {
      if (dtype_ != DType::F64) throw std::logic_error("tensor is f32, asked for double*");
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<std::byte> data_;
  std::size_t numel_ = 0;
  DType dtype_ = DType::F32;
};

}  // namespace formtree
