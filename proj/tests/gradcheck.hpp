#pragma once

// Central finite-difference gradient checker. Probes run in double precision;
// the function under test must rebuild its graph from the leaf values on
// every call (re-seed any rng it uses internally).

#include <functional>
#include <vector>

#include "poseweave/tensor.hpp"

namespace poseweave::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::string worst_location;
};

inline GradCheckResult gradcheck(
    std::vector<nn::Tensor<double>*> leaves,
    const std::function<nn::Tensor<double>()>& fn, double h = 1e-6) {
  for (auto* l : leaves) {
    l->set_requires_grad(true);
    l->zero_grad();
  }
  auto loss = fn();
  nn::backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto* l : leaves) analytic.push_back(l->grad());

  GradCheckResult result;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto* leaf = leaves[li];
    double* vals = leaf->mutable_data();
    for (int64_t i = 0; i < leaf->numel(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double up = fn().item();
      vals[i] = orig - h;
      const double dn = fn().item();
      vals[i] = orig;
      const double numeric = (up - dn) / (2 * h);
      const double a = analytic[li][size_t(i)];
      const double err = std::abs(numeric - a) / std::max({1.0, std::abs(numeric), std::abs(a)});
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
        result.worst_location = "leaf " + std::to_string(li) + " elem " + std::to_string(i);
      }
    }
  }
  return result;
}

}  // namespace poseweave::testing
