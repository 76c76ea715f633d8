#include "taltpp/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace taltpp {

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

double finite_or_throw(double v) {
  if (!std::isfinite(v)) throw std::domain_error("grad_check: function is not finite at the evaluation point");
  return v;
}

void note(GradCheckResult& r, const std::string& where, double a, double n, double floor) {
  const double e = relative_error(a, n, floor);
  ++r.checked;
  if (e > r.max_rel_error || r.worst.empty()) {
    r.max_rel_error = std::max(r.max_rel_error, e);
    r.worst = where;
    r.worst_analytic = a;
    r.worst_numeric = n;
  }
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Matrix>& inputs, const GradCheckOptions& opts) {
  auto eval = [&](const std::vector<Matrix>& xs, std::vector<Matrix>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& x : xs) vars.push_back(tape.leaf(x, grads != nullptr));
    ad::Var y = f(tape, vars);
    const double v = finite_or_throw(y.scalar());
    if (grads) {
      tape.backward(y);
      for (const auto& var : vars) grads->push_back(var.grad().empty() ? Matrix(var.rows(), var.cols()) : var.grad());
    }
    return v;
  };

  std::vector<Matrix> analytic;
  eval(inputs, &analytic);

  GradCheckResult res;
  std::vector<Matrix> xs = inputs;
  for (std::size_t a = 0; a < xs.size(); ++a) {
    for (std::size_t i = 0; i < xs[a].size(); ++i) {
      const double orig = xs[a][i];
      xs[a][i] = orig + opts.step;
      const double fp = eval(xs, nullptr);
      xs[a][i] = orig - opts.step;
      const double fm = eval(xs, nullptr);
      xs[a][i] = orig;
      note(res, "input" + std::to_string(a) + "[" + std::to_string(i) + "]", analytic[a][i], (fp - fm) / (2.0 * opts.step),
           opts.floor);
    }
  }
  return res;
}

GradCheckResult grad_check_params(const std::function<ad::Var(ad::Tape&)>& f, ParamSet& params, const GradCheckOptions& opts) {
  std::vector<Matrix> analytic;
  {
    ad::Tape tape;
    ad::Var y = f(tape);
    finite_or_throw(y.scalar());
    tape.backward(y);
    std::vector<std::pair<ParamTensor*, const Matrix*>> grads = tape.param_grads();
    for (const auto& p : params.all()) {
      Matrix g(p->value.rows(), p->value.cols());
      for (const auto& [pp, gm] : grads)
        if (pp == p.get()) g = *gm;
      analytic.push_back(std::move(g));
    }
  }
  auto eval = [&] {
    ad::Tape tape;
    return finite_or_throw(f(tape).scalar());
  };

  GradCheckResult res;
  std::size_t pi = 0;
  for (const auto& p : params.all()) {
    if (p->requires_grad) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double orig = p->value[i];
        p->value[i] = orig + opts.step;
        const double fp = eval();
        p->value[i] = orig - opts.step;
        const double fm = eval();
        p->value[i] = orig;
        note(res, p->name + "[" + std::to_string(i) + "]", analytic[pi][i], (fp - fm) / (2.0 * opts.step), opts.floor);
      }
    }
    ++pi;
  }
  return res;
}

}  // namespace taltpp
