#pragma once

// Bony prediction accuracy per segment, facial outcome error, paired
// Wilcoxon signed-rank tests and a per-method report.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmfplan/acmt.hpp"
#include "cmfplan/baseline.hpp"
#include "cmfplan/phantom.hpp"
#include "cmfplan/plan_search.hpp"

namespace cmf {

enum class MaeMetric { Corresponded, NearestPoint };

struct SegmentErrors {
  std::map<SegmentLabel, double> per_segment;  // movable segments that have points
  double entire = 0.0;                         // pooled over all movable points
  std::vector<double> per_point;               // every point, cranium included

  friend bool operator==(const SegmentErrors&, const SegmentErrors&) = default;
};

/// Mean Euclidean distance per segment and over every movable point.
/// NearestPoint measures each predicted point against the nearest
/// ground-truth point of the same segment instead of its counterpart.
SegmentErrors segment_mae(const PointSet& pred, std::span<const SegmentLabel> labels,
                          const PointSet& gt, MaeMetric metric = MaeMetric::Corresponded);

struct WilcoxonResult {
  std::size_t n = 0;  // nonzero differences
  double w_plus = 0.0;
  double w_minus = 0.0;
  double w = 0.0;  // min(w_plus, w_minus)
  double p_two_sided = 1.0;
  double p_less = 1.0;     // alternative: a tends to be smaller than b
  double p_greater = 1.0;  // alternative: a tends to be larger than b
  bool exact = false;

  friend bool operator==(const WilcoxonResult&, const WilcoxonResult&) = default;
};

/// Paired signed-rank test on a - b. Zero differences are dropped and tied
/// magnitudes get mid-ranks. The null distribution is enumerated exactly
/// when n <= exact_max_n; otherwise a normal approximation with tie and
/// continuity correction is used. All-zero differences raise UndefinedTest;
/// fewer than 5 nonzero differences raise InvalidArgument.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    std::size_t exact_max_n = 12);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};
Summary summarize(std::span<const double> values);

struct MethodReport {
  std::string name;
  std::vector<SegmentErrors> cases;
  std::vector<double> facial;  // mean facial error per case, mm

  std::vector<double> entire() const;
  std::vector<double> segment(SegmentLabel s) const;
  friend bool operator==(const MethodReport&, const MethodReport&) = default;
};

struct PairwiseTest {
  std::string a, b;
  std::optional<WilcoxonResult> result;
  std::string error;  // set when the test is undefined

  friend bool operator==(const PairwiseTest&, const PairwiseTest&) = default;
};

struct EvalReport {
  std::vector<MethodReport> methods;
  std::vector<PairwiseTest> tests;  // entire-bone MAE, every pair of methods
  std::vector<std::uint64_t> case_seeds;
  std::string config_snapshot;  // JSON text of the producing configuration

  const MethodReport& method(const std::string& name) const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EvalModels {
  const AcmtModel* bp = nullptr;
  const AcmtModel* fs = nullptr;
  const DefnetModel* baseline = nullptr;
};

struct EvalOptions {
  SearchOptions search;
  PlannerOptions planner;
  MaeMetric metric = MaeMetric::Corresponded;
  std::size_t exact_max_n = 12;
  int jobs = 1;
};

/// Facial error of a predicted post-operative bone: the tissue kernel moves
/// the pre-operative face and the mean distance to the desired face is returned.
double facial_error(const PhantomCase& c, const PointSet& predicted_bone);

/// Methods: "identity" always, "baseline" / "bp" when their models are
/// given, "bp_fs" when both BP and FS are given.
EvalReport evaluate(std::span<const PhantomCase> cases, const EvalModels& models,
                    const EvalOptions& opts);

/// Rows per method, columns LF, DI, RP, LP, Entire Bone, Face (mean +- std, mm).
std::string render_table(const EvalReport& report);
/// method,case,point,segment,distance_mm
std::string per_point_csv(const EvalReport& report, std::span<const PhantomCase> cases);

}  // namespace cmf
