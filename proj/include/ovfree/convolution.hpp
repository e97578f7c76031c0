#pragma once

// Free additive convolution through R-transform summation, its verification
// against an independent evaluator of X + Y, and the truncation harness for
// unbounded laws.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ovfree/ovdist.hpp"
#include "ovfree/transforms.hpp"

namespace ovfree {

/// Balls certified with one base point and outer radius for several
/// distributions, plus the part of their target balls they all share.
struct JointBall {
  std::vector<CertifiedBall> members;
  ComplexMatrix center;
  ComplexMatrix target_center;  ///< mean of the members' K(center)
  double target_radius = 0.0;   ///< min_j (P_j − ‖K_j(center) − target_center‖)
  double r = 0.0;
  double P = 0.0;
};

/// Throws LeftCertifiedBall when the members' target balls do not overlap.
JointBall certify_jointly(std::span<const OVDistribution> dists, const BasePoint& base, double R,
                          const CertifyOptions& opt = {});

std::vector<ComplexMatrix> sample_targets(const JointBall& ball, int count, std::uint64_t seed);

struct ConvolutionTask {
  OVDistribution X;
  OVDistribution Y;
  std::optional<OVDistribution> sum;  ///< independent evaluator of X + Y
  JointBall ball;                     ///< members X, Y (and sum when present)
  std::vector<ComplexMatrix> eval_points;
};

ConvolutionTask make_convolution_task(OVDistribution X, OVDistribution Y, std::optional<OVDistribution> sum,
                                      const BasePoint& base, double R, int points, std::uint64_t seed);

/// R_X(w) + R_Y(w) at w in the joint target region.
ComplexMatrix r_sum_at(const ConvolutionTask& task, const ComplexMatrix& w);
std::vector<ComplexMatrix> r_sum(const ConvolutionTask& task);

struct SumEvaluation {
  ComplexMatrix G;
  double residual = 0.0;  ///< ‖R_X(w) + R_Y(w) + w^{-1} − b‖
  int iterations = 0;
};

inline constexpr double kSumResidualTol = 1e-9;

/// G_{X⊞Y}(b): the w solving R_X(w) + R_Y(w) + w^{-1} = b, by Newton from
/// w = b^{-1} with inner Newton inversions of G_X and G_Y.  b lies in the
/// upper half plane, in Ω, or in Ω* (the reversed block pattern).
SumEvaluation eval_G_of_sum(const OVDistribution& X, const OVDistribution& Y, const ComplexMatrix& b);
SumEvaluation eval_G_of_sum(const ConvolutionTask& task, const ComplexMatrix& b);

struct AdditivityReport {
  std::vector<double> discrepancy;    ///< ‖R_X + R_Y − R_{X+Y}‖ per point
  std::vector<double> stderr_budget;  ///< 3·propagated standard error per point (0 for exact)
  double max_discrepancy = 0.0;
  double max_budget = 0.0;
  bool within_budget = true;  ///< discrepancy ≤ budget wherever the budget is positive
};

/// Needs task.sum.
AdditivityReport verify_additivity(const ConvolutionTask& task);

struct TruncationRow {
  double cutoff;
  double retained_mass;
  double error;
  double bound;  ///< √(1 − m_k)·(1 + C/r)/r
  bool within_bound;
};

/// Throws MarginViolation unless ‖b‖ < C and λ_min(Im b) > r.
std::vector<TruncationRow> truncation_sweep(const OVDistribution& dist, const ComplexMatrix& b,
                                            std::span<const double> cutoffs, double C, double r);

/// Points b of dimension m with ‖b‖ < C and λ_min(Im b) > r.
std::vector<ComplexMatrix> test_set(int m, double C, double r, int count, std::uint64_t seed);

using GFunction = std::function<ComplexMatrix(const ComplexMatrix&)>;

struct ConvergenceReport {
  std::vector<double> sup_error;  ///< sup over the test set of ‖G_k − G_limit‖ per member
  bool monotone = true;           ///< nonincreasing up to kNoise
  bool within_envelope = true;
  /// scalar-embedded members only: a cutoff N for the whole family exists
  /// and the limit keeps full mass
  std::optional<bool> tight;
  std::optional<long> tightness_cutoff;
  double limit_mass = 1.0;        ///< lim iy·G_limit(iy) read off at large y
  bool mass_deficit = false;
  ComplexMatrix limit_at_probe;   ///< G_limit at the first test point
};

inline constexpr double kConvergenceNoise = 1e-12;

ConvergenceReport convergence_check(std::span<const OVDistribution> family, const GFunction& limit,
                                    std::span<const ComplexMatrix> test_points,
                                    std::span<const double> envelope = {}, double tightness_eps = 0.1);

}  // namespace ovfree
