#include "adacap/linear_feataug.hpp"

#include <cstddef>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace adacap {

namespace {

void check_inputs(const LinearAugModel& model,
                  const std::vector<LabeledPoint>& source,
                  const std::vector<LabeledPoint>& target) {
  const std::size_t d = model.theta_g.size();
  if (d == 0) throw std::invalid_argument("empty model");
  if (model.theta_s.size() != d || model.theta_t.size() != d)
    throw std::invalid_argument("theta dimension mismatch");
  if (source.empty() && target.empty())
    throw std::invalid_argument("no training points");
  for (const auto* split : {&source, &target})
    for (const auto& p : *split) {
      if (p.x.size() != d) throw std::invalid_argument("feature dimension mismatch");
      if (p.label != 1.0 && p.label != -1.0)
        throw std::invalid_argument("labels must be -1 or +1");
    }
}

double hinge_mean(const Vec& w, const std::vector<LabeledPoint>& data) {
  if (data.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : data) {
    const double margin = p.label * dot(w, p.x);
    if (margin < 1.0) sum += 1.0 - margin;
  }
  return sum / static_cast<double>(data.size());
}

// Accumulates d(mean hinge)/dw into out (same for both theta terms feeding w).
void hinge_grad(const Vec& w, const std::vector<LabeledPoint>& data, Vec& out) {
  if (data.empty()) return;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (const auto& p : data) {
    const double margin = p.label * dot(w, p.x);
    if (margin < 1.0) axpy(out, p.x, -p.label * inv_n);
  }
}

Vec compose(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace

double aug_objective(const LinearAugModel& model,
                     const std::vector<LabeledPoint>& source,
                     const std::vector<LabeledPoint>& target) {
  check_inputs(model, source, target);
  const Vec w_s = compose(model.theta_g, model.theta_s);
  const Vec w_t = compose(model.theta_g, model.theta_t);
  const double reg_g = norm2_sq(model.theta_g);
  double obj = hinge_mean(w_s, source) + model.lambda * (reg_g + norm2_sq(model.theta_s));
  obj += hinge_mean(w_t, target) + model.lambda * (reg_g + norm2_sq(model.theta_t));
  return obj;
}

LinearAugGrads aug_subgradient(const LinearAugModel& model,
                               const std::vector<LabeledPoint>& source,
                               const std::vector<LabeledPoint>& target) {
  check_inputs(model, source, target);
  const std::size_t d = model.theta_g.size();
  LinearAugGrads g{Vec(d, 0.0), Vec(d, 0.0), Vec(d, 0.0)};

  Vec dw_s(d, 0.0), dw_t(d, 0.0);
  hinge_grad(compose(model.theta_g, model.theta_s), source, dw_s);
  hinge_grad(compose(model.theta_g, model.theta_t), target, dw_t);
  for (std::size_t i = 0; i < d; ++i) {
    // theta_g appears in both hinge terms and in both regularizers.
    g.theta_g[i] = dw_s[i] + dw_t[i] + 4.0 * model.lambda * model.theta_g[i];
    g.theta_s[i] = dw_s[i] + 2.0 * model.lambda * model.theta_s[i];
    g.theta_t[i] = dw_t[i] + 2.0 * model.lambda * model.theta_t[i];
  }
  return g;
}

std::pair<double, double> reg_identity(const Vec& theta_g, const Vec& theta_d) {
  if (theta_g.size() != theta_d.size())
    throw std::invalid_argument("theta dimension mismatch");
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < theta_g.size(); ++i) {
    const double s = theta_g[i] + theta_d[i];
    sum_sq += s * s;
  }
  const double lhs = 2.0 * (norm2_sq(theta_g) + norm2_sq(theta_d)) - sum_sq;
  double rhs = 0.0;
  for (std::size_t i = 0; i < theta_g.size(); ++i) {
    const double diff = theta_g[i] - theta_d[i];
    rhs += diff * diff;
  }
  return {lhs, rhs};
}

LinearTrainResult train_linear(const LinearAugModel& init,
                               const std::vector<LabeledPoint>& source,
                               const std::vector<LabeledPoint>& target,
                               std::size_t steps, double step_size,
                               bool freeze_general) {
  if (step_size <= 0.0) throw std::invalid_argument("step_size must be positive");
  LinearTrainResult result;
  result.model = init;
  result.objective_trace.reserve(steps + 1);
  for (std::size_t s = 0; s < steps; ++s) {
    result.objective_trace.push_back(aug_objective(result.model, source, target));
    const LinearAugGrads g = aug_subgradient(result.model, source, target);
    if (!freeze_general) axpy(result.model.theta_g, g.theta_g, -step_size);
    axpy(result.model.theta_s, g.theta_s, -step_size);
    axpy(result.model.theta_t, g.theta_t, -step_size);
  }
  result.objective_trace.push_back(aug_objective(result.model, source, target));
  result.w_s = compose(result.model.theta_g, result.model.theta_s);
  result.w_t = compose(result.model.theta_g, result.model.theta_t);
  return result;
}

double linear_accuracy(const Vec& w, const std::vector<LabeledPoint>& data) {
  if (data.empty()) throw std::invalid_argument("no points to score");
  std::size_t correct = 0;
  for (const auto& p : data)
    if (p.label * dot(w, p.x) > 0.0) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<LabeledPoint> load_feature_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<LabeledPoint> points;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string cell;
    LabeledPoint p;
    bool first = true;
    while (std::getline(row, cell, ',')) {
      double value = 0.0;
      try {
        value = std::stod(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                 ": bad number '" + cell + "'");
      }
      if (first) {
        p.label = value;
        first = false;
      } else {
        p.x.push_back(value);
      }
    }
    if (first || p.x.empty())
      throw std::runtime_error(path + " line " + std::to_string(line_no) +
                               ": expected 'label, features...'");
    if (p.label != 1.0 && p.label != -1.0)
      throw std::runtime_error(path + " line " + std::to_string(line_no) +
                               ": labels must be -1 or +1");
    if (dim == 0)
      dim = p.x.size();
    else if (p.x.size() != dim)
      throw std::runtime_error(path + " line " + std::to_string(line_no) +
                               ": inconsistent feature count");
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace adacap
