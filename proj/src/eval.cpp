#include "cmfplan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <sstream>

#include "cmfplan/errors.hpp"
#include "cmfplan/kernels.hpp"
#include "cmfplan/simulator.hpp"

namespace cmf {

SegmentErrors segment_mae(const PointSet& pred, std::span<const SegmentLabel> labels,
                          const PointSet& gt, MaeMetric metric) {
  if (pred.size() != gt.size() || labels.size() != gt.size())
    throw InvalidArgument("segment_mae: prediction, labels and ground truth must have equal length");
  SegmentErrors e;
  e.per_point.assign(gt.size(), 0.0);
  if (metric == MaeMetric::Corresponded) {
    for (std::size_t i = 0; i < gt.size(); ++i) e.per_point[i] = (pred[i] - gt[i]).norm();
  } else {
    for (auto s : {SegmentLabel::LF, SegmentLabel::DI, SegmentLabel::RP, SegmentLabel::LP,
                   SegmentLabel::CRANIUM}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == s) idx.push_back(i);
      if (idx.empty()) continue;
      std::vector<Vec3> p, g;
      for (auto i : idx) {
        p.push_back(pred[i]);
        g.push_back(gt[i]);
      }
      const auto nb = kernels::parallel::knn(p, g, 1);
      for (std::size_t k = 0; k < idx.size(); ++k) e.per_point[idx[k]] = nb.distance[k];
    }
  }

  std::map<SegmentLabel, std::pair<double, std::size_t>> acc;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == SegmentLabel::CRANIUM) continue;
    auto& a = acc[labels[i]];
    a.first += e.per_point[i];
    ++a.second;
    total += e.per_point[i];
    ++count;
  }
  if (count == 0) throw InvalidArgument("segment_mae: no movable points");
  for (const auto& [s, a] : acc) e.per_segment[s] = a.first / static_cast<double>(a.second);
  e.entire = total / static_cast<double>(count);
  return e;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    std::size_t exact_max_n) {
  if (a.size() != b.size()) throw InvalidArgument("wilcoxon: samples must be paired");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] - b[i];
    if (!std::isfinite(x)) throw InvalidArgument("wilcoxon: non-finite difference");
    if (x != 0.0) d.push_back(x);
  }
  if (d.empty()) throw UndefinedTest("wilcoxon: every paired difference is zero");
  const std::size_t n = d.size();
  if (n < 5) throw InvalidArgument("wilcoxon: need at least 5 nonzero differences");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  // Doubled mid-ranks stay integral.
  std::vector<std::size_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    for (std::size_t k = i; k < j; ++k) rank2[order[k]] = i + 1 + j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }

  WilcoxonResult r;
  r.n = n;
  std::size_t plus2 = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) plus2 += rank2[i];
  const double total = static_cast<double>(n * (n + 1)) / 2.0;
  r.w_plus = static_cast<double>(plus2) / 2.0;
  r.w_minus = total - r.w_plus;
  r.w = std::min(r.w_plus, r.w_minus);

  if (n <= exact_max_n) {
    r.exact = true;
    std::vector<double> counts(n * (n + 1) + 1, 0.0);
    counts[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = reach + 1; s-- > 0;)
        if (counts[s] != 0.0) counts[s + rank2[i]] += counts[s];
      reach += rank2[i];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double le = 0.0, ge = 0.0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
      if (s <= plus2) le += counts[s];
      if (s >= plus2) ge += counts[s];
    }
    r.p_less = le / all;
    r.p_greater = ge / all;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1) / 4.0;
    const double var = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    const double z_greater = (r.w_plus - mean - 0.5) / sd;
    const double z_less = (r.w_plus - mean + 0.5) / sd;
    r.p_greater = std::min(1.0, 0.5 * std::erfc(z_greater / std::sqrt(2.0)));
    r.p_less = std::min(1.0, 0.5 * std::erfc(-z_less / std::sqrt(2.0)));
  }
  r.p_two_sided = std::min(1.0, 2.0 * std::min(r.p_less, r.p_greater));
  return r;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("summary of an empty sample");
  Summary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::vector<double> MethodReport::entire() const {
  std::vector<double> out;
  for (const auto& c : cases) out.push_back(c.entire);
  return out;
}

std::vector<double> MethodReport::segment(SegmentLabel s) const {
  std::vector<double> out;
  for (const auto& c : cases)
    if (auto it = c.per_segment.find(s); it != c.per_segment.end()) out.push_back(it->second);
  return out;
}

const MethodReport& EvalReport::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.name == name) return m;
  throw InvalidArgument("report has no method '" + name + "'");
}

double facial_error(const PhantomCase& c, const PointSet& predicted_bone) {
  const auto& pc = c.planning;
  const PointSet face =
      tissue_oracle(pc.pre_bone.points(), predicted_bone, pc.pre_face, c.spec.sigma).displaced();
  double s = 0.0;
  for (std::size_t i = 0; i < face.size(); ++i) s += (face[i] - pc.desired_face[i]).norm();
  return s / static_cast<double>(face.size());
}

EvalReport evaluate(std::span<const PhantomCase> cases, const EvalModels& models,
                    const EvalOptions& opts) {
  if (cases.empty()) throw InvalidArgument("no test cases to evaluate");
  if (models.bp && models.bp->direction != Direction::FaceToBone)
    throw InvalidArgument("bp model must map face to bone");
  if (models.fs && models.fs->direction != Direction::BoneToFace)
    throw InvalidArgument("fs model must map bone to face");

  std::vector<std::string> names{"identity"};
  if (models.baseline) names.push_back("baseline");
  if (models.bp) names.push_back("bp");
  if (models.bp && models.fs) names.push_back("bp_fs");

  EvalReport report;
  for (const auto& n : names) {
    MethodReport m;
    m.name = n;
    m.cases.resize(cases.size());
    m.facial.resize(cases.size());
    report.methods.push_back(std::move(m));
  }
  for (const auto& c : cases) report.case_seeds.push_back(c.seed);

  std::vector<std::exception_ptr> errors(cases.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, opts.jobs))
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(cases.size()); ++ci) {
    const auto k = static_cast<std::size_t>(ci);
    try {
      const auto& c = cases[k];
      const auto& bone = c.planning.pre_bone;
      const PointSet gt = c.post_bone();
      for (auto& m : report.methods) {
        PointSet pred = bone.points();
        if (m.name == "identity") {
          pred = apply_plan(bone, BonyPlan::identity(bone.movable_present()));
        } else if (m.name == "baseline") {
          pred = predict_bone(*models.baseline, bone.points());
        } else if (m.name == "bp") {
          pred = apply_plan(bone, plan_case(*models.bp, c.planning, opts.planner));
        } else {
          SearchOptions so = opts.search;
          so.jobs = 1;
          const auto res = run(*models.bp, *models.fs, c.planning, so, opts.planner);
          pred = apply_plan(bone, res.best().plan);
        }
        m.cases[k] = segment_mae(pred, bone.labels(), gt, opts.metric);
        m.facial[k] = facial_error(c, pred);
      }
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t i = 0; i < report.methods.size(); ++i)
    for (std::size_t j = i + 1; j < report.methods.size(); ++j) {
      PairwiseTest t;
      t.a = report.methods[i].name;
      t.b = report.methods[j].name;
      try {
        t.result = wilcoxon_signed_rank(report.methods[i].entire(), report.methods[j].entire(),
                                        opts.exact_max_n);
      } catch (const std::exception& e) {
        t.error = e.what();
      }
      report.tests.push_back(std::move(t));
    }
  return report;
}

namespace {
std::string cell(std::span<const double> v) {
  if (v.empty()) return "-";
  const Summary s = summarize(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f +- %.2f", s.mean, s.std);
  return buf;
}
}  // namespace

std::string render_table(const EvalReport& report) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %16s %16s %16s %16s %16s %16s\n", "Method", "LF", "DI",
                "RP", "LP", "Entire Bone", "Face");
  os << buf;
  for (const auto& m : report.methods) {
    std::snprintf(buf, sizeof buf, "%-10s %16s %16s %16s %16s %16s %16s\n", m.name.c_str(),
                  cell(m.segment(SegmentLabel::LF)).c_str(),
                  cell(m.segment(SegmentLabel::DI)).c_str(),
                  cell(m.segment(SegmentLabel::RP)).c_str(),
                  cell(m.segment(SegmentLabel::LP)).c_str(), cell(m.entire()).c_str(),
                  cell(m.facial).c_str());
    os << buf;
  }
  os << "(mean absolute distance, mean +- std, mm; " << report.case_seeds.size() << " cases)\n";
  for (const auto& t : report.tests) {
    os << "wilcoxon " << t.a << " vs " << t.b << ": ";
    if (t.result) {
      std::snprintf(buf, sizeof buf, "W=%.1f n=%zu p=%.6g (%s)\n", t.result->w, t.result->n,
                    t.result->p_two_sided, t.result->exact ? "exact" : "normal");
      os << buf;
    } else {
      os << "undefined: " << t.error << "\n";
    }
  }
  return os.str();
}

std::string per_point_csv(const EvalReport& report, std::span<const PhantomCase> cases) {
  if (cases.size() != report.case_seeds.size())
    throw InvalidArgument("per_point_csv: case list does not match the report");
  std::ostringstream os;
  os << "method,case,point,segment,distance_mm\n";
  char buf[64];
  for (const auto& m : report.methods)
    for (std::size_t c = 0; c < m.cases.size(); ++c) {
      const auto& labels = cases[c].planning.pre_bone.labels();
      for (std::size_t i = 0; i < m.cases[c].per_point.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", m.cases[c].per_point[i]);
        os << m.name << ',' << c << ',' << i << ',' << to_string(labels[i]) << ',' << buf << '\n';
      }
    }
  return os.str();
}

}  // namespace cmf
