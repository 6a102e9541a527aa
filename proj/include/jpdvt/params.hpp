#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jpdvt/tensor.hpp"

namespace jpdvt {

// Ordered, named parameter collection. Order is part of the contract: it
// fixes checkpoint byte layout and the leaf order when binding to a tape.
template <typename T>
struct ParamStore {
  std::vector<std::pair<std::string, Tensor<T>>> items;

  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (find(name)) throw std::invalid_argument("param already registered: " + name);
    items.emplace_back(name, std::move(t));
    return items.back().second;
  }

  Tensor<T>* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  Tensor<T>& at(const std::string& name) {
    if (auto* t = find(name)) return *t;
    throw std::out_of_range("no such param: " + name);
  }

  const Tensor<T>& at(const std::string& name) const {
    if (auto* t = find(name)) return *t;
    throw std::out_of_range("no such param: " + name);
  }

  size_t size() const { return items.size(); }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& [_, t] : items) n += t.size();
    return n;
  }
};

}  // namespace jpdvt
