#pragma once

#include <string>
#include <vector>

#include "cocgan/tensor.hpp"

namespace cocgan {

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;  // aliases the owning module's storage
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

template <class T>
std::vector<Tensor<T>> tensors_of(const ParamList<T>& ps) {
  std::vector<Tensor<T>> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(p.tensor);
  return out;
}

template <class T>
void zero_grads(ParamList<T>& ps) {
  for (auto& p : ps) p.tensor.zero_grad();
}

template <class T>
std::size_t parameter_count(const ParamList<T>& ps) {
  std::size_t n = 0;
  for (const auto& p : ps) n += p.tensor.size();
  return n;
}

}  // namespace cocgan
