#pragma once

#include <string>
#include <utility>
#include <vector>

#include "adacap/math_core.hpp"

namespace adacap {

// ---------------------------------------------------------------------------
// Desk-scale binary linear classifiers with decomposed parameters
// w_s = theta_g + theta_s, w_t = theta_g + theta_t, trained on the
// feature-augmentation objective:
//   mean source hinge + lambda(|theta_g|^2 + |theta_s|^2)
// + mean target hinge + lambda(|theta_g|^2 + |theta_t|^2).
// Exists to verify the regularization identity and the qualitative behavior,
// not SVM performance; plain subgradient descent, no QP.
// ---------------------------------------------------------------------------

struct LabeledPoint {
  double label = 0.0;  // -1 or +1
  Vec x;
};

struct LinearAugModel {
  Vec theta_g, theta_s, theta_t;  // equal dimension d
  double lambda = 0.1;
};

struct LinearAugGrads {
  Vec theta_g, theta_s, theta_t;
};

double aug_objective(const LinearAugModel& model,
                     const std::vector<LabeledPoint>& source,
                     const std::vector<LabeledPoint>& target);

// Subgradient of aug_objective; the hinge subgradient at the kink
// (margin exactly 1) is taken as 0.
LinearAugGrads aug_subgradient(const LinearAugModel& model,
                               const std::vector<LabeledPoint>& source,
                               const std::vector<LabeledPoint>& target);

// lhs = 2(|theta_g|^2 + |theta_d|^2) - |theta_g + theta_d|^2,
// rhs = |theta_g - theta_d|^2. Equal up to rounding for all inputs.
std::pair<double, double> reg_identity(const Vec& theta_g, const Vec& theta_d);

struct LinearTrainResult {
  LinearAugModel model;
  Vec w_s, w_t;  // composed weights
  std::vector<double> objective_trace;  // objective before each step, then final
};

// Fixed-step subgradient descent. freeze_general pins theta_g at its initial
// value (used to check that the objective separates when theta_g = 0).
LinearTrainResult train_linear(const LinearAugModel& init,
                               const std::vector<LabeledPoint>& source,
                               const std::vector<LabeledPoint>& target,
                               std::size_t steps, double step_size,
                               bool freeze_general = false);

// Fraction of points with y * (w . x) > 0.
double linear_accuracy(const Vec& w, const std::vector<LabeledPoint>& data);

// Reads "label, f1, f2, ..." rows; labels must be -1 or +1.
std::vector<LabeledPoint> load_feature_csv(const std::string& path);

}  // namespace adacap
