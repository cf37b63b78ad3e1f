#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "mmcp/core/errors.hpp"

namespace mmcp {

// Dense float32 array in C order. This is the storage type for everything the
// synthetic world produces and for the raw files on disk.
struct NdArray {
  std::vector<int> shape;
  std::vector<float> data;

  NdArray() = default;
  explicit NdArray(std::vector<int> s) : shape(std::move(s)) {
    data.assign(element_count(shape), 0.0f);
  }

  static std::size_t element_count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  std::size_t size() const { return data.size(); }

  std::size_t offset(std::initializer_list<int> idx) const {
    std::size_t off = 0;
    std::size_t stride = data.size();
    auto it = idx.begin();
    for (std::size_t axis = 0; axis < shape.size(); ++axis, ++it) {
      stride /= static_cast<std::size_t>(shape[axis]);
      off += static_cast<std::size_t>(*it) * stride;
    }
    return off;
  }

  float& at(std::initializer_list<int> idx) { return data[offset(idx)]; }
  float at(std::initializer_list<int> idx) const { return data[offset(idx)]; }

  bool same_shape(const std::vector<int>& s) const { return shape == s; }
};

inline std::string shape_to_string(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace mmcp
