#ifndef FLUIDSFORMER_OPTIM_HPP_
#define FLUIDSFORMER_OPTIM_HPP_

#include "fluidsformer/tensor.hpp"

#include <deque>
#include <map>
#include <string>
#include <vector>

namespace fluidsformer {

/// Named parameter tensors in registration order. Addresses are stable for
/// the lifetime of the store, so tapes may reference tensors directly.
template <typename T> class ParameterStore {
public:
  Tensor<T> &add(const std::string &name, Tensor<T> value) {
    if (index_.count(name))
      throw InvalidArgument("duplicate parameter name '" + name + "'");
    index_.emplace(name, tensors_.size());
    names_.push_back(name);
    return tensors_.emplace_back(std::move(value));
  }

  Tensor<T> &at(const std::string &name) { return tensors_[lookup(name)]; }
  const Tensor<T> &at(const std::string &name) const {
    return tensors_[lookup(name)];
  }
  bool contains(const std::string &name) const { return index_.count(name) > 0; }

  std::size_t size() const { return tensors_.size(); }
  Tensor<T> &operator[](std::size_t k) { return tensors_[k]; }
  const Tensor<T> &operator[](std::size_t k) const { return tensors_[k]; }
  const std::string &name(std::size_t k) const { return names_[k]; }
  const std::vector<std::string> &names() const { return names_; }

  Index scalar_count() const {
    Index n = 0;
    for (const auto &t : tensors_) n += t.size();
    return n;
  }

private:
  std::size_t lookup(const std::string &name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw InvalidArgument("unknown parameter '" + name + "'");
    return it->second;
  }

  std::deque<Tensor<T>> tensors_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T> struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  long step = 0;
};

/// One bias-corrected Adam update of every parameter in `params`.
/// `grads[k]` must match `params[k]` in shape.
template <typename T>
void adam_step(ParameterStore<T> &params, const std::vector<Tensor<T>> &grads,
               AdamState<T> &state, const AdamConfig &config);

} // namespace fluidsformer

#endif // FLUIDSFORMER_OPTIM_HPP_
