#include "groupdet/gradcheck.hpp"

#include <cmath>

namespace groupdet {

GradCheckReport finite_diff_check(const std::string& name, const GradCheckFn& f, ParamStore& params,
                                  double h, double tol) {
  GradCheckReport report;
  report.name = name;

  params.zero_grads();
  double base = 0.0;
  try {
    Tensor loss = f(params);
    base = loss.value();
    loss.backward();
  } catch (const std::exception& e) {
    report.failure = std::string("forward/backward failed: ") + e.what();
    return report;
  }
  if (!std::isfinite(base)) {
    report.failure = "non-finite objective value";
    return report;
  }

  for (const std::string& pname : params.names()) {
    Tensor& p = params.get(pname);
    const std::vector<double> analytic = p.grad();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double orig = p.data()[i];
      double fp, fm;
      {
        NoGradGuard ng;
        p.data()[i] = orig + h;
        fp = f(params).value();
        p.data()[i] = orig - h;
        fm = f(params).value();
        p.data()[i] = orig;
      }
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.failure = "non-finite objective during perturbation of " + pname;
        return report;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-2});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = pname;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace groupdet
