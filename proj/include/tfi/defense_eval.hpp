// Copyright 2026 The tfisim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TFI_DEFENSE_EVAL_HPP_
#define TFI_DEFENSE_EVAL_HPP_

// Evaluation metrics (MTA, ASR, update similarity, retention), detectors
// (spectral signatures, cosine anomaly flagging), the feasibility margin
// tracker and Pearson correlation.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "tfi/attacks.hpp"
#include "tfi/data.hpp"
#include "tfi/errors.hpp"
#include "tfi/net.hpp"
#include "tfi/tensor.hpp"

namespace tfi {

// Clean-test accuracy.
inline double Mta(const Network& net, const Dataset& test) {
  if (test.images.empty()) throw ConfigError("mta needs a non-empty test set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.images.size(); ++i) {
    if (static_cast<int>(Predict(net, test.images[i])) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.images.size());
}

// Fraction of non-target test samples predicted as `target_class` after
// adding `perturbation` (clamped to [0, 1]).
inline double Asr(const Network& net, const Dataset& test, const Tensor& perturbation,
                  int target_class) {
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < test.images.size(); ++i) {
    if (test.labels[i] == target_class) continue;
    ++total;
    if (static_cast<int>(Predict(net, ApplyPerturbation(test.images[i], perturbation))) ==
        target_class) {
      ++hits;
    }
  }
  if (total == 0) throw ConfigError("asr needs test samples outside the target class");
  return static_cast<double>(hits) / static_cast<double>(total);
}

inline std::vector<double> MeanVector(const std::vector<std::vector<double>>& vs) {
  if (vs.empty()) throw ConfigError("mean of an empty set");
  std::vector<double> out(vs[0].size(), 0.0);
  for (const auto& v : vs) {
    if (v.size() != out.size()) throw ShapeError("vectors have different lengths");
    vec::Axpy(1.0 / static_cast<double>(vs.size()), v, out);
  }
  return out;
}

// Mean cosine between each malicious update and the mean benign update.
inline double UpdateSimilarity(const std::vector<std::vector<double>>& malicious,
                               const std::vector<std::vector<double>>& benign) {
  if (malicious.empty() || benign.empty()) throw ConfigError("update_similarity needs both sets");
  const std::vector<double> ref = MeanVector(benign);
  double s = 0.0;
  for (const auto& m : malicious) s += vec::Cosine(m, ref);
  return s / static_cast<double>(malicious.size());
}

inline double Retention(double asr_defended, double asr_undefended) {
  if (!(asr_undefended > 0.0)) throw DegenerateError("retention needs a positive undefended ASR");
  return asr_defended / asr_undefended;
}

struct DetectionReport {
  std::vector<double> scores;
  std::vector<bool> flagged;
  // Filled when ground truth is supplied; rates over malicious and benign
  // entries respectively.
  std::optional<double> detection_rate;
  std::optional<double> false_positive_rate;

  std::size_t flag_count() const {
    return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), true));
  }
};

inline void ScoreAgainstTruth(DetectionReport& report, std::span<const bool> truth) {
  if (truth.empty()) return;
  if (truth.size() != report.flagged.size()) throw ShapeError("ground truth length mismatch");
  std::size_t pos = 0, tp = 0, neg = 0, fp = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) {
      ++pos;
      tp += report.flagged[i];
    } else {
      ++neg;
      fp += report.flagged[i];
    }
  }
  if (pos) report.detection_rate = static_cast<double>(tp) / static_cast<double>(pos);
  if (neg) report.false_positive_rate = static_cast<double>(fp) / static_cast<double>(neg);
}

inline constexpr double kSpectralFlagMultiplier = 1.5;
inline constexpr double kSpectralRobustZ = 2.5;

// Scores rows by their squared projection on the top right-singular vector
// of the centered matrix. Within the top ceil(1.5 * fraction * n) scores,
// only rows whose projection lies more than 2.5 robust deviations
// (1.4826 * MAD) from the median projection are flagged.
inline DetectionReport SpectralSignatures(const std::vector<std::vector<double>>& reps,
                                          double expected_poison_fraction,
                                          std::span<const bool> truth = {}) {
  const std::size_t n = reps.size();
  if (n < 2) throw ConfigError("spectral signatures need at least two samples");
  if (!(expected_poison_fraction >= 0.0 && expected_poison_fraction <= 1.0)) {
    throw ConfigError("expected poison fraction must lie in [0, 1]");
  }
  const std::size_t d = reps[0].size();
  if (d == 0) throw DegenerateError("representations are empty");
  Eigen::MatrixXd m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (reps[i].size() != d) throw ShapeError("representations have different lengths");
    for (std::size_t j = 0; j < d; ++j) m(i, j) = reps[i][j];
  }
  m.rowwise() -= m.colwise().mean();
  DetectionReport report;
  report.scores.assign(n, 0.0);
  report.flagged.assign(n, false);
  if (m.squaredNorm() == 0.0) {
    ScoreAgainstTruth(report, truth);
    return report;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
  const Eigen::VectorXd proj = m * svd.matrixV().col(0);
  std::vector<double> signed_proj(proj.data(), proj.data() + n);
  for (std::size_t i = 0; i < n; ++i) report.scores[i] = proj[i] * proj[i];

  auto median = [](std::vector<double> v) {
    const std::size_t h = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
    double hi = v[h];
    if (v.size() % 2) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h));
    return 0.5 * (lo + hi);
  };
  const double center = median(signed_proj);
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = std::abs(signed_proj[i] - center);
  const double scale = 1.4826 * median(dev);

  const auto budget = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(kSpectralFlagMultiplier * expected_poison_fraction *
                                            static_cast<double>(n) - 1e-9)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return report.scores[a] > report.scores[b];
  });
  const double tol = 1e-12 * std::sqrt(m.squaredNorm() / static_cast<double>(n));
  for (std::size_t r = 0; r < budget; ++r) {
    const std::size_t i = order[r];
    const bool outlier = scale > 0.0 ? dev[i] > kSpectralRobustZ * scale : dev[i] > tol;
    report.flagged[i] = outlier;
  }
  ScoreAgainstTruth(report, truth);
  return report;
}

// Flags update i when its cosine to the mean of the other updates is below
// `tau`. Scores are those cosines.
inline DetectionReport CosineAnomalyDetector(const std::vector<std::vector<double>>& updates,
                                             double tau, std::span<const bool> truth = {}) {
  const std::size_t n = updates.size();
  if (n < 3) throw ConfigError("cosine anomaly detection needs at least three updates");
  std::vector<double> total(updates[0].size(), 0.0);
  for (const auto& u : updates) {
    if (u.size() != total.size()) throw ShapeError("updates have different lengths");
    vec::Axpy(1.0, u, total);
  }
  DetectionReport report;
  report.scores.resize(n);
  report.flagged.resize(n);
  std::vector<double> loo(total.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < loo.size(); ++k) {
      loo[k] = (total[k] - updates[i][k]) / static_cast<double>(n - 1);
    }
    report.scores[i] = vec::Cosine(updates[i], loo);
    report.flagged[i] = report.scores[i] < tau;
  }
  ScoreAgainstTruth(report, truth);
  return report;
}

struct FeasibilityRound {
  double adversarial = 0.0;
  double benign = 0.0;
  double noise = 0.0;
};

class FeasibilityLedger {
 public:
  void Add(FeasibilityRound r) {
    if (r.adversarial < 0.0 || r.benign < 0.0 || r.noise < 0.0) {
      throw ConfigError("feasibility terms must be non-negative");
    }
    margin_ += r.adversarial - r.benign - r.noise;
    rounds_.push_back(r);
  }

  void Append(const FeasibilityLedger& other) {
    for (const auto& r : other.rounds_) Add(r);
  }

  const std::vector<FeasibilityRound>& rounds() const { return rounds_; }
  // Running sum of (adversarial - benign - noise).
  double margin() const { return margin_; }

 private:
  std::vector<FeasibilityRound> rounds_;
  double margin_ = 0.0;
};

inline double FeasibilityMargin(const FeasibilityLedger& ledger) {
  if (ledger.rounds().empty()) throw ConfigError("feasibility margin needs at least one round");
  return ledger.margin();
}

inline double Pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson inputs differ in length");
  if (x.size() < 3) throw ConfigError("pearson needs at least three points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("pearson input has zero variance");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace tfi

#endif  // TFI_DEFENSE_EVAL_HPP_
