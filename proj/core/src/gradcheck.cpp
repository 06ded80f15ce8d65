#include "dmt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "dmt/errors.hpp"

namespace dmt {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << "max_rel_error=" << max_rel_error << " max_abs_error=" << max_abs_error
     << " entries=" << entries_checked << " tol=" << tolerance << (passed ? " PASS" : " FAIL");
  return os.str();
}

namespace {

struct Probe {
  std::function<double()> evaluate;
  std::function<std::vector<Tensor>()> analytic;
};

void accumulate(GradCheckReport& report, std::size_t param, std::size_t index, double analytic, double numeric,
                const GradCheckOptions& options) {
  const double abs_err = std::abs(analytic - numeric);
  const double denom = std::max({std::abs(analytic), std::abs(numeric), options.magnitude_floor});
  const double rel = abs_err / denom;
  report.max_abs_error = std::max(report.max_abs_error, abs_err);
  if (rel > report.max_rel_error || report.entries_checked == 0) {
    report.max_rel_error = std::max(report.max_rel_error, rel);
    report.worst_param = param;
    report.worst_index = index;
    report.worst_analytic = analytic;
    report.worst_numeric = numeric;
  }
  ++report.entries_checked;
}

GradCheckReport check(const Probe& probe, const std::vector<Tensor*>& values, const GradCheckOptions& options) {
  const double f0 = probe.evaluate();
  const double f1 = probe.evaluate();
  if (std::memcmp(&f0, &f1, sizeof(double)) != 0) {
    throw InvalidArgument("gradcheck: computation is not deterministic");
  }
  if (!std::isfinite(f0)) throw NumericError("gradcheck: non-finite function value");
  const std::vector<Tensor> grads = probe.analytic();

  GradCheckReport report;
  report.tolerance = options.tolerance;
  const double h = options.step;
  for (std::size_t p = 0; p < values.size(); ++p) {
    Tensor& value = *values[p];
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double plus = probe.evaluate();
      value[i] = saved - h;
      const double minus = probe.evaluate();
      value[i] = saved;
      accumulate(report, p, i, grads[p][i], (plus - minus) / (2.0 * h), options);
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace

GradCheckReport run_grad_check(const ScalarComputation& computation, std::vector<Tensor>& params,
                               const GradCheckOptions& options) {
  Probe probe;
  probe.evaluate = [&]() {
    Tape tape(GradMode::kNoGrad);
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.constant_ref(p));
    return tape.value(computation(tape, leaves)).item();
  };
  probe.analytic = [&]() {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.input(p));
    const Var out = computation(tape, leaves);
    tape.backward(out);
    std::vector<Tensor> grads;
    for (Var v : leaves) grads.push_back(tape.grad(v));
    return grads;
  };
  std::vector<Tensor*> values;
  for (auto& p : params) values.push_back(&p);
  return check(probe, values, options);
}

GradCheckReport run_grad_check(const std::function<Var(Tape&)>& build, std::vector<Parameter*> params,
                               const GradCheckOptions& options) {
  Probe probe;
  probe.evaluate = [&]() {
    Tape tape(GradMode::kNoGrad);
    return tape.value(build(tape)).item();
  };
  probe.analytic = [&]() {
    for (Parameter* p : params) p->zero_grad();
    Tape tape;
    tape.backward(build(tape));
    std::vector<Tensor> grads;
    for (Parameter* p : params) grads.push_back(p->grad);
    return grads;
  };
  std::vector<Tensor*> values;
  for (Parameter* p : params) values.push_back(&p->value);
  return check(probe, values, options);
}

}  // namespace dmt
