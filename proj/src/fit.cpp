#include <cmath>
#include <sstream>
#include <vector>

#include "ffmagic/errors.hpp"
#include "ffmagic/harness.hpp"

namespace ffmagic {

std::string to_string(FitModel model) {
  switch (model) {
    case FitModel::linear_fit: return "linear_fit";
    case FitModel::log_fit: return "log_fit";
    case FitModel::power_fit: return "power_fit";
    case FitModel::exp_fit: return "exp_fit";
  }
  throw InputError("unknown fit model");
}

nlohmann::json FitResult::to_json() const {
  return nlohmann::json{{"model", ffmagic::to_string(model)},
                        {"a", a},
                        {"a_err", a_err},
                        {"c", c},
                        {"c_err", c_err},
                        {"r_squared", r_squared},
                        {"n_points", n_points}};
}

FitResult fit(std::span<const double> x, std::span<const double> y, FitModel model) {
  if (x.size() != y.size()) throw InputError("fit: x and y lengths differ");
  const int n = static_cast<int>(x.size());
  if (n < 4) throw InputError("fit: needs at least 4 points");

  // Linearizing transform: v = slope * u + intercept.
  std::vector<double> u(x.size()), v(y.size());
  const bool log_x = model == FitModel::log_fit || model == FitModel::power_fit;
  const bool log_y = model == FitModel::power_fit || model == FitModel::exp_fit;
  for (int i = 0; i < n; ++i) {
    if (log_x) {
      if (x[i] <= 0.0) throw InputError("fit: model needs positive x values");
      u[i] = std::log(x[i]);
    } else {
      u[i] = x[i];
    }
    if (log_y) {
      if (y[i] <= 0.0) throw InputError("fit: model needs positive y values");
      v[i] = std::log(y[i]);
    } else {
      v[i] = y[i];
    }
  }

  double ubar = 0.0, vbar = 0.0;
  for (int i = 0; i < n; ++i) {
    ubar += u[i];
    vbar += v[i];
  }
  ubar /= n;
  vbar /= n;

  double suu = 0.0, suv = 0.0, svv = 0.0;
  for (int i = 0; i < n; ++i) {
    suu += (u[i] - ubar) * (u[i] - ubar);
    suv += (u[i] - ubar) * (v[i] - vbar);
    svv += (v[i] - vbar) * (v[i] - vbar);
  }
  if (!(suu > 0.0) || !std::isfinite(suu))
    throw InputError("fit: degenerate design, constant abscissa");

  const double slope = suv / suu;
  const double intercept = vbar - slope * ubar;

  double ssr = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = v[i] - (slope * u[i] + intercept);
    ssr += r * r;
  }
  const double s2 = ssr / (n - 2);
  const double slope_err = std::sqrt(s2 / suu);
  const double intercept_err = std::sqrt(s2 * (1.0 / n + ubar * ubar / suu));
  const double r_squared = svv > 0.0 ? 1.0 - ssr / svv : (ssr > 0.0 ? 0.0 : 1.0);

  FitResult out;
  out.model = model;
  out.r_squared = r_squared;
  out.n_points = n;
  switch (model) {
    case FitModel::linear_fit:
    case FitModel::log_fit:
      out.a = slope;
      out.a_err = slope_err;
      out.c = intercept;
      out.c_err = intercept_err;
      break;
    case FitModel::power_fit:
      out.a = slope;
      out.a_err = slope_err;
      out.c = std::exp(intercept);
      out.c_err = out.c * intercept_err;
      break;
    case FitModel::exp_fit:
      out.a = -slope;
      out.a_err = slope_err;
      out.c = std::exp(intercept);
      out.c_err = out.c * intercept_err;
      break;
  }
  return out;
}

}  // namespace ffmagic
