#ifndef HNETPP_GRADCHECK_HPP
#define HNETPP_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/rng.hpp"

namespace hnetpp {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  // Denominator floor: gradients whose magnitude is below this are compared
  // in absolute terms against it.
  double abs_floor = 1e-8;
  // 0 checks every element; otherwise at most this many per input, chosen
  // by a seeded draw.
  std::size_t max_elements_per_input = 0;
  std::uint64_t sample_seed = 0;
};

struct GradcheckEntry {
  std::string input;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  GradcheckEntry worst;
  std::vector<GradcheckEntry> flagged;
  std::size_t checked = 0;

  bool passed() const noexcept { return flagged.empty(); }
};

inline double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

namespace detail {

inline std::vector<std::size_t> pick_elements(std::size_t n, const GradcheckOptions& opt, std::uint64_t salt) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (opt.max_elements_per_input == 0 || n <= opt.max_elements_per_input) return idx;
  Rng rng(derive_seed(opt.sample_seed, {salt}));
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(opt.max_elements_per_input);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline void record_entry(GradcheckReport& report, GradcheckEntry e, const GradcheckOptions& opt) {
  ++report.checked;
  if (report.checked == 1 || !(e.rel_error <= report.max_rel_error)) {
    report.max_rel_error = e.rel_error;
    report.worst = e;
  }
  if (!(e.rel_error <= opt.tolerance)) report.flagged.push_back(std::move(e));
}

}  // namespace detail

/// Central-difference check of a scalar function of leaf tensors.
/// `fn(graph, inputs)` must build a scalar Var from the supplied leaves.
template <typename Fn>
GradcheckReport gradcheck(Fn&& fn, std::vector<Tensor<double>> inputs, const GradcheckOptions& opt = {}) {
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    std::vector<Var<double>> leaves;
    for (const auto& t : inputs) leaves.push_back(g.leaf(t));
    Var<double> out = fn(g, std::span<const Var<double>>(leaves));
    g.backward(out);
    for (const auto& v : leaves) analytic.push_back(g.grad(v.id()));
  }
  auto evaluate = [&]() {
    Graph<double> g(0, false);
    std::vector<Var<double>> leaves;
    for (const auto& t : inputs) leaves.push_back(g.constant(t));
    return fn(g, std::span<const Var<double>>(leaves)).item();
  };
  GradcheckReport report;
  for (std::size_t q = 0; q < inputs.size(); ++q) {
    for (std::size_t i : detail::pick_elements(inputs[q].size(), opt, q)) {
      const double saved = inputs[q][i];
      inputs[q][i] = saved + opt.step;
      const double up = evaluate();
      inputs[q][i] = saved - opt.step;
      const double down = evaluate();
      inputs[q][i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      GradcheckEntry e{"input" + std::to_string(q), i, analytic[q][i], numeric, 0.0};
      e.rel_error = relative_error(e.analytic, e.numeric, opt.abs_floor);
      detail::record_entry(report, std::move(e), opt);
    }
  }
  return report;
}

/// Same check against every tensor of a parameter store, perturbing the
/// parameter values in place. `loss(graph)` builds the scalar loss.
template <typename LossFn>
GradcheckReport gradcheck_parameters(ParameterStore<double>& params, LossFn&& loss,
                                     const GradcheckOptions& opt = {}) {
  params.zero_grad();
  {
    Graph<double> g;
    Var<double> out = loss(g);
    g.backward(out);
  }
  std::vector<Tensor<double>> analytic;
  for (const auto& p : params) analytic.push_back(p->grad);
  auto evaluate = [&]() {
    Graph<double> g(0, false);
    return loss(g).item();
  };
  GradcheckReport report;
  for (std::size_t q = 0; q < params.size(); ++q) {
    auto& p = params[q];
    for (std::size_t i : detail::pick_elements(p.value.size(), opt, q)) {
      const double saved = p.value[i];
      p.value[i] = saved + opt.step;
      const double up = evaluate();
      p.value[i] = saved - opt.step;
      const double down = evaluate();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      GradcheckEntry e{p.name, i, analytic[q][i], numeric, 0.0};
      e.rel_error = relative_error(e.analytic, e.numeric, opt.abs_floor);
      detail::record_entry(report, std::move(e), opt);
    }
  }
  params.zero_grad();
  return report;
}

}  // namespace hnetpp

#endif  // HNETPP_GRADCHECK_HPP
