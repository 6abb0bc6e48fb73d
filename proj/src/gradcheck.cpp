#include "swinc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "swinc/errors.hpp"
#include "swinc/rng.hpp"

namespace swinc {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [&](const GradCheckEntry& e) { return e.max_rel_error < tolerance; });
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << (e.max_rel_error < tolerance ? "ok   " : "FAIL ") << e.name << " coords=" << e.checked;
    if (e.refined > 0) os << " refined=" << e.refined;
    os << " max_rel_err=" << e.max_rel_error << "\n";
  }
  return os.str();
}

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard guard;
  const Tensor l = loss();
  if (l.numel() != 1) throw ContractError("grad_check: loss must be a scalar, got " + shape_str(l.shape()));
  return l.item();
}

double central_difference(const std::function<Tensor()>& loss, Tensor& t, size_t i, double h) {
  double& x = t.data()[i];
  const double saved = x;
  x = saved + h;
  const double up = evaluate(loss);
  x = saved - h;
  const double down = evaluate(loss);
  x = saved;
  return (up - down) / (2.0 * h);
}

double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& loss, const ParamList& wrt, const GradCheckOptions& o) {
  for (const auto& p : wrt) {
    if (!p.tensor.requires_grad()) throw ContractError("grad_check: '" + p.name + "' does not require grad");
  }
  const double first = evaluate(loss), second = evaluate(loss);
  if (first != second) {
    throw ContractError("grad_check: fragment is not deterministic (" + std::to_string(first) + " vs " +
                        std::to_string(second) + ")");
  }

  for (const auto& p : wrt) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  loss().backward();

  Rng rng(o.seed);
  GradCheckReport report;
  report.tolerance = o.tolerance;
  for (const auto& p : wrt) {
    Tensor t = p.tensor;
    const Index n = t.numel();
    std::vector<Index> coords(static_cast<size_t>(n));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (n > o.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng.engine());
      coords.resize(static_cast<size_t>(o.max_coords));
    }
    GradCheckEntry e{p.name};
    for (Index c : coords) {
      const auto i = static_cast<size_t>(c);
      const double analytic = t.has_grad() ? std::as_const(t).grad()[i] : 0.0;
      double step = o.step;
      double numeric = central_difference(loss, t, i, step);
      double err = rel_error(analytic, numeric, o.denominator_floor);
      const double first_err = err;
      if (err >= o.refine_above * o.tolerance) {
        for (int r = 0; r < o.refinements; ++r) {
          step /= 10.0;
          const double n2 = central_difference(loss, t, i, step);
          const double e2 = rel_error(analytic, n2, o.denominator_floor);
          if (e2 < err) {
            err = e2;
            numeric = n2;
          }
        }
        if (first_err >= o.tolerance && err < o.tolerance) ++e.refined;
      }
      ++e.checked;
      if (err >= e.max_rel_error) {
        e.max_rel_error = err;
        e.worst_analytic = analytic;
        e.worst_numeric = numeric;
      }
    }
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace swinc
