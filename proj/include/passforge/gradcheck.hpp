#pragma once

// Central-difference gradient checks for tape expressions.

#include <cmath>
#include <functional>
#include <vector>

#include "passforge/tensor.hpp"

namespace passforge::gradcheck {

using tensor::Parameter;
using tensor::Tape;
using Loss = std::function<Tape<double>::Var(Tape<double>&, std::vector<Tape<double>::Var>&)>;

inline constexpr double kStep = 1e-5;
inline constexpr double kRelTol = 1e-4;
inline constexpr double kAbsFloor = 1e-8;

inline double evaluate(std::vector<Parameter<double>*>& params, const Loss& f) {
  Tape<double> t;
  std::vector<Tape<double>::Var> vars;
  for (Parameter<double>* p : params) vars.push_back(t.param(*p));
  return t.value(f(t, vars))(0, 0);
}

// Compares analytic gradients with central differences; returns the worst
// ratio |a - n| / (floor + tol * |n|), which must stay <= 1.
inline double worst_ratio(std::vector<Parameter<double>*> params, const Loss& f) {
  for (Parameter<double>* p : params) p->zero_grad();
  {
    Tape<double> t;
    std::vector<Tape<double>::Var> vars;
    for (Parameter<double>* p : params) vars.push_back(t.param(*p));
    t.backward(f(t, vars));
  }
  double worst = 0;
  for (Parameter<double>* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double keep = x;
      x = keep + kStep;
      const double up = evaluate(params, f);
      x = keep - kStep;
      const double down = evaluate(params, f);
      x = keep;
      const double numeric = (up - down) / (2 * kStep);
      const double analytic = p->grad.data()[i];
      worst = std::max(worst, std::abs(analytic - numeric) / (kAbsFloor + kRelTol * std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace passforge::gradcheck
