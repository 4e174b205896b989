// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace getnet {

namespace {

template <typename T>
GradCheckReport compare(const std::function<Tensor<T>()>& f, Tensor<T>& x,
                        const std::vector<T>& analytic, const GradCheckOptions& opts,
                        const std::string& name) {
  GradCheckReport rep;
  rep.name = name;
  const std::size_t n = x.numel();
  const std::size_t stride =
      opts.max_coords == 0 || n <= opts.max_coords ? 1 : (n + opts.max_coords - 1) / opts.max_coords;

  struct Probe {
    std::size_t index;
    double central, forward, backward_slope;
  };
  std::vector<Probe> probes;
  const double f0 = f().item();
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < n; i += stride) {
    const T saved = data[i];
    data[i] = static_cast<T>(saved + opts.eps);
    const double fp = f().item();
    data[i] = static_cast<T>(saved - opts.eps);
    const double fm = f().item();
    double central = (fp - fm) / (2 * opts.eps);
    if (opts.richardson) {
      const double h = opts.eps / 2;
      data[i] = static_cast<T>(saved + h);
      const double hp = f().item();
      data[i] = static_cast<T>(saved - h);
      const double hm = f().item();
      central = (4.0 * ((hp - hm) / (2 * h)) - central) / 3.0;
    }
    data[i] = saved;
    probes.push_back({i, central, (fp - f0) / opts.eps, (f0 - fm) / opts.eps});
  }

  double scale = 0.0;
  for (const auto& p : probes) scale = std::max(scale, std::abs(p.central));
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(double(analytic[i])));
  const double floor = std::max(opts.floor_ratio * scale, 1e-12);

  for (const auto& p : probes) {
    if (std::abs(p.forward - p.backward_slope) > opts.kink_ratio * std::max(scale, 1e-12) &&
        std::abs(p.forward - p.backward_slope) > 1e-6) {
      ++rep.skipped;
      continue;
    }
    const double a = analytic[p.index];
    const double err = std::abs(a - p.central) /
                       std::max({std::abs(a), std::abs(p.central), floor});
    ++rep.checked;
    if (err > rep.max_rel_error || !std::isfinite(err)) {
      rep.max_rel_error = std::isfinite(err) ? err : INFINITY;
      rep.worst_index = p.index;
    }
  }
  rep.passed = rep.max_rel_error < opts.tol && rep.checked > 0;
  return rep;
}

}  // namespace

template <typename T>
GradCheckReport finite_diff_check(const std::function<Tensor<T>()>& f, Tensor<T>& x,
                                  const GradCheckOptions& opts, const std::string& name) {
  const bool was = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  backward(f());
  std::vector<T> analytic(x.grad().begin(), x.grad().end());
  auto rep = compare(f, x, analytic, opts, name);
  x.set_requires_grad(was);
  return rep;
}

template <typename T>
std::vector<GradCheckReport> finite_diff_check_all(
    const std::function<Tensor<T>()>& f,
    std::vector<std::pair<std::string, Tensor<T>>>& params, const GradCheckOptions& opts) {
  for (auto& [name, t] : params) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(f());
  std::vector<GradCheckReport> out;
  for (auto& [name, t] : params) {
    std::vector<T> analytic(t.grad().begin(), t.grad().end());
    out.push_back(compare(f, t, analytic, opts, name));
  }
  return out;
}

template GradCheckReport finite_diff_check(const std::function<Tensor<float>()>&,
                                           Tensor<float>&, const GradCheckOptions&,
                                           const std::string&);
template GradCheckReport finite_diff_check(const std::function<Tensor<double>()>&,
                                           Tensor<double>&, const GradCheckOptions&,
                                           const std::string&);
template std::vector<GradCheckReport> finite_diff_check_all(
    const std::function<Tensor<float>()>&, std::vector<std::pair<std::string, Tensor<float>>>&,
    const GradCheckOptions&);
template std::vector<GradCheckReport> finite_diff_check_all(
    const std::function<Tensor<double>()>&,
    std::vector<std::pair<std::string, Tensor<double>>>&, const GradCheckOptions&);

}  // namespace getnet
