#include "cmfplan/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cmfplan/errors.hpp"

namespace cmf {

namespace {

Json vec_list(std::span<const Vec3> v) {
  Json a = Json::array();
  for (const auto& p : v) a.push_back({p.x(), p.y(), p.z()});
  return a;
}

std::vector<Vec3> vec_list_from(const Json& j) {
  std::vector<Vec3> out;
  for (const auto& p : j) {
    if (p.size() != 3) throw InvalidArgument("expected a 3-vector");
    out.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
  }
  return out;
}

Json summary_json(std::span<const double> v) {
  if (v.empty()) return nullptr;
  const auto s = summarize(v);
  return {{"mean", s.mean}, {"std", s.std}};
}

constexpr const char* kCheckpointFormat = "cmfplan-checkpoint";
constexpr int kCheckpointVersion = 1;

template <class Model>
Json tensors_json(const Model& model) {
  Model copy = model;
  Json t = Json::array();
  for (const auto& p : collect_params(copy))
    t.push_back({{"name", p.name},
                 {"rows", p.rows},
                 {"cols", p.cols},
                 {"data", std::vector<double>(p.values.begin(), p.values.end())}});
  return t;
}

template <class Model>
void fill_tensors(Model& model, const Json& tensors) {
  auto params = collect_params(model);
  if (!tensors.is_array() || tensors.size() != params.size())
    throw CheckpointMismatch("checkpoint holds " + std::to_string(tensors.size()) +
                             " tensors, architecture expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    const auto& p = params[i];
    if (t.at("name").get<std::string>() != p.name || t.at("rows").get<std::size_t>() != p.rows ||
        t.at("cols").get<std::size_t>() != p.cols || t.at("data").size() != p.values.size())
      throw CheckpointMismatch("tensor " + std::to_string(i) + " ('" + p.name +
                               "') does not match the architecture");
    const auto& data = t.at("data");
    for (std::size_t k = 0; k < p.values.size(); ++k) p.values[k] = data[k].get<double>();
  }
}

void check_header(const Json& j, const std::string& kind) {
  if (!j.is_object() || j.value("format", std::string{}) != kCheckpointFormat)
    throw CheckpointMismatch("not a cmfplan checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw CheckpointMismatch("unsupported checkpoint version");
  if (j.at("kind").get<std::string>() != kind)
    throw CheckpointMismatch("checkpoint holds a '" + j.at("kind").get<std::string>() +
                             "' model, expected '" + kind + "'");
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void to_json(Json& j, const RigidTransform& t) {
  const Mat4 m = t.homogeneous();
  j = Json::array();
  for (int r = 0; r < 4; ++r) j.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
}

void from_json(const Json& j, RigidTransform& t) {
  if (j.size() != 4) throw InvalidArgument("transform must be a 4x4 matrix");
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    if (j.at(r).size() != 4) throw InvalidArgument("transform must be a 4x4 matrix");
    for (int c = 0; c < 4; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  t = RigidTransform::from_homogeneous(m);
}

Json to_json(const BonyPlan& plan) {
  Json j = Json::object();
  for (const auto& [s, t] : plan.transforms()) j[std::string(to_string(s))] = t;
  return j;
}

BonyPlan plan_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("plan must be an object of 4x4 matrices");
  BonyPlan p;
  for (const auto& [k, v] : j.items()) p.set(segment_from_string(k), v.get<RigidTransform>());
  return p;
}

Json to_json(const PointSet& p) {
  Json j = {{"points", vec_list(p.coords())}};
  if (p.has_normals()) j["normals"] = vec_list(p.normals());
  return j;
}

PointSet point_set_from_json(const Json& j) {
  auto pts = vec_list_from(j.at("points"));
  if (j.contains("normals")) return PointSet(std::move(pts), vec_list_from(j.at("normals")));
  return PointSet(std::move(pts));
}

Json to_json(const FaceMesh& m) {
  return {{"vertices", vec_list(m.vertices)}, {"triangles", m.triangles}};
}

FaceMesh mesh_from_json(const Json& j) {
  FaceMesh m{vec_list_from(j.at("vertices")),
             j.at("triangles").get<std::vector<std::array<std::uint32_t, 3>>>()};
  m.validate();
  return m;
}

Json to_json(const PlanningCase& c) {
  Json bone = to_json(c.pre_bone.points());
  Json labels = Json::array();
  for (auto l : c.pre_bone.labels()) labels.push_back(std::string(to_string(l)));
  bone["labels"] = labels;
  return {{"units", "mm"},
          {"pre_face", to_json(c.pre_face)},
          {"pre_bone", bone},
          {"desired_face", to_json(c.desired_face)},
          {"face_mesh", to_json(c.face_mesh)},
          {"face_sample_indices", c.face_sample_indices}};
}

PlanningCase planning_case_from_json(const Json& j) {
  const auto& b = j.at("pre_bone");
  std::vector<SegmentLabel> labels;
  for (const auto& l : b.at("labels")) labels.push_back(segment_from_string(l.get<std::string>()));
  PlanningCase c{point_set_from_json(j.at("pre_face")),
                 SegmentedBone(point_set_from_json(b), std::move(labels)),
                 point_set_from_json(j.at("desired_face")), mesh_from_json(j.at("face_mesh")),
                 j.at("face_sample_indices").get<std::vector<std::size_t>>()};
  c.validate();
  return c;
}

Json to_json(const PhantomSpec& s) {
  return {{"points_per_segment", s.points_per_segment},
          {"cranium_points", s.cranium_points},
          {"facial_points", s.facial_points},
          {"sigma", s.sigma},
          {"max_rotation_deg", s.max_rotation_deg},
          {"max_translation", s.max_translation},
          {"mean_advancement", s.mean_advancement},
          {"anatomy_jitter", s.anatomy_jitter},
          {"augment_copies", s.augment_copies},
          {"seed", s.seed}};
}

PhantomSpec phantom_spec_from_json(const Json& j) {
  PhantomSpec s;
  s.points_per_segment = j.at("points_per_segment").get<std::size_t>();
  s.cranium_points = j.at("cranium_points").get<std::size_t>();
  s.facial_points = j.at("facial_points").get<std::size_t>();
  s.sigma = j.at("sigma").get<double>();
  s.max_rotation_deg = j.at("max_rotation_deg").get<double>();
  s.max_translation = j.at("max_translation").get<double>();
  s.mean_advancement = j.at("mean_advancement").get<double>();
  s.anatomy_jitter = j.at("anatomy_jitter").get<double>();
  s.augment_copies = j.at("augment_copies").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.validate();
  return s;
}

Json to_json(const PhantomCase& c) {
  return {{"planning", to_json(c.planning)},
          {"gt_plan", to_json(c.gt_plan)},
          {"spec", to_json(c.spec)},
          {"seed", c.seed}};
}

PhantomCase phantom_case_from_json(const Json& j) {
  PhantomCase c{planning_case_from_json(j.at("planning")), plan_from_json(j.at("gt_plan")),
                phantom_spec_from_json(j.at("spec")), j.at("seed").get<std::uint64_t>()};
  for (auto s : c.planning.pre_bone.movable_present())
    if (!c.gt_plan.contains(s))
      throw InvalidArgument("ground-truth plan lacks segment " + std::string(to_string(s)));
  return c;
}

Json to_json(const TowerConfig& c) {
  return {{"width_divisor", c.width_divisor},
          {"point_divisor", c.point_divisor},
          {"radii", c.radii},
          {"max_neighbors", c.max_neighbors},
          {"layers_per_block", c.layers_per_block}};
}

TowerConfig tower_config_from_json(const Json& j) {
  TowerConfig c;
  c.width_divisor = j.at("width_divisor").get<double>();
  c.point_divisor = j.at("point_divisor").get<double>();
  c.radii = j.at("radii").get<std::array<double, 4>>();
  c.max_neighbors = j.at("max_neighbors").get<std::size_t>();
  c.layers_per_block = j.at("layers_per_block").get<std::size_t>();
  if (!(c.width_divisor > 0) || !(c.point_divisor > 0) || c.max_neighbors == 0)
    throw InvalidArgument("invalid tower configuration");
  for (double r : c.radii)
    if (!(r > 0)) throw InvalidArgument("grouping radii must be positive");
  return c;
}

Json to_json(const AcmtConfig& c) {
  return {{"tower", to_json(c.tower)},         {"projection_dim", c.projection_dim},
          {"theta_dims", c.theta_dims},        {"phi_dims", c.phi_dims},
          {"coord_scale", c.coord_scale},      {"movement_scale", c.movement_scale},
          {"xyz_features", c.xyz_features}};
}

AcmtConfig acmt_config_from_json(const Json& j) {
  AcmtConfig c;
  c.tower = tower_config_from_json(j.at("tower"));
  c.projection_dim = j.at("projection_dim").get<std::size_t>();
  c.theta_dims = j.at("theta_dims").get<std::vector<std::size_t>>();
  c.phi_dims = j.at("phi_dims").get<std::vector<std::size_t>>();
  c.coord_scale = j.at("coord_scale").get<double>();
  c.movement_scale = j.at("movement_scale").get<double>();
  c.xyz_features = j.at("xyz_features").get<bool>();
  return c;
}

Json to_json(const DefnetConfig& c) {
  return {{"tower", to_json(c.tower)},
          {"head_dims", c.head_dims},
          {"coord_scale", c.coord_scale},
          {"movement_scale", c.movement_scale}};
}

DefnetConfig defnet_config_from_json(const Json& j) {
  DefnetConfig c;
  c.tower = tower_config_from_json(j.at("tower"));
  c.head_dims = j.at("head_dims").get<std::vector<std::size_t>>();
  c.coord_scale = j.at("coord_scale").get<double>();
  c.movement_scale = j.at("movement_scale").get<double>();
  return c;
}

Json to_json(const TrainHyper& h) {
  return {{"epochs", h.epochs},
          {"batch_size", h.batch_size},
          {"learning_rate", h.adam.lr},
          {"beta1", h.adam.beta1},
          {"beta2", h.adam.beta2},
          {"eps", h.adam.epsilon},
          {"seed", h.seed},
          {"jobs", h.jobs}};
}

TrainHyper train_hyper_from_json(const Json& j) {
  TrainHyper h;
  h.epochs = j.at("epochs").get<int>();
  h.batch_size = j.at("batch_size").get<std::size_t>();
  h.adam.lr = j.at("learning_rate").get<double>();
  h.adam.beta1 = j.at("beta1").get<double>();
  h.adam.beta2 = j.at("beta2").get<double>();
  h.adam.epsilon = j.at("eps").get<double>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.jobs = j.at("jobs").get<int>();
  if (h.epochs < 0 || h.batch_size == 0 || !(h.adam.lr > 0))
    throw InvalidArgument("invalid training hyperparameters");
  return h;
}

Json to_json(const SearchOptions& o) {
  return {{"candidates", o.candidates},
          {"seed", o.seed},
          {"metric", o.metric == SelectionMetric::Corresponded ? "corresponded" : "surface"},
          {"jobs", o.jobs}};
}

SearchOptions search_options_from_json(const Json& j) {
  SearchOptions o;
  o.candidates = j.at("candidates").get<std::size_t>();
  o.seed = j.at("seed").get<std::uint64_t>();
  const auto m = j.at("metric").get<std::string>();
  if (m == "corresponded")
    o.metric = SelectionMetric::Corresponded;
  else if (m == "surface")
    o.metric = SelectionMetric::SymmetricSurface;
  else
    throw InvalidArgument("unknown selection metric '" + m + "'");
  o.jobs = j.at("jobs").get<int>();
  if (o.candidates == 0) throw InvalidArgument("need at least one candidate");
  return o;
}

Json to_json(const WilcoxonResult& r) {
  return {{"n", r.n},
          {"w_plus", r.w_plus},
          {"w_minus", r.w_minus},
          {"w", r.w},
          {"p_two_sided", r.p_two_sided},
          {"p_less", r.p_less},
          {"p_greater", r.p_greater},
          {"exact", r.exact}};
}

namespace {
WilcoxonResult wilcoxon_from_json(const Json& j) {
  WilcoxonResult r;
  r.n = j.at("n").get<std::size_t>();
  r.w_plus = j.at("w_plus").get<double>();
  r.w_minus = j.at("w_minus").get<double>();
  r.w = j.at("w").get<double>();
  r.p_two_sided = j.at("p_two_sided").get<double>();
  r.p_less = j.at("p_less").get<double>();
  r.p_greater = j.at("p_greater").get<double>();
  r.exact = j.at("exact").get<bool>();
  return r;
}
}  // namespace

Json to_json(const EvalReport& r) {
  Json methods = Json::array();
  for (const auto& m : r.methods) {
    Json cases = Json::array();
    for (const auto& c : m.cases) {
      Json seg = Json::object();
      for (const auto& [s, v] : c.per_segment) seg[std::string(to_string(s))] = v;
      cases.push_back({{"per_segment", seg}, {"entire", c.entire}, {"per_point", c.per_point}});
    }
    Json summary = Json::object();
    for (auto s : kMovableSegments) summary[std::string(to_string(s))] = summary_json(m.segment(s));
    summary["entire_bone"] = summary_json(m.entire());
    summary["face"] = summary_json(m.facial);
    methods.push_back({{"name", m.name}, {"cases", cases}, {"facial", m.facial}, {"summary", summary}});
  }
  Json tests = Json::array();
  for (const auto& t : r.tests) {
    Json e = {{"a", t.a}, {"b", t.b}};
    if (t.result)
      e["result"] = to_json(*t.result);
    else
      e["error"] = t.error;
    tests.push_back(e);
  }
  Json config = r.config_snapshot.empty() ? Json(nullptr) : Json::parse(r.config_snapshot);
  return {{"units", "mm"},
          {"methods", methods},
          {"tests", tests},
          {"case_count", r.case_seeds.size()},
          {"case_seeds", r.case_seeds},
          {"config", config}};
}

EvalReport eval_report_from_json(const Json& j) {
  EvalReport r;
  for (const auto& m : j.at("methods")) {
    MethodReport mr;
    mr.name = m.at("name").get<std::string>();
    for (const auto& c : m.at("cases")) {
      SegmentErrors e;
      for (const auto& [k, v] : c.at("per_segment").items())
        e.per_segment[segment_from_string(k)] = v.get<double>();
      e.entire = c.at("entire").get<double>();
      e.per_point = c.at("per_point").get<std::vector<double>>();
      mr.cases.push_back(std::move(e));
    }
    mr.facial = m.at("facial").get<std::vector<double>>();
    r.methods.push_back(std::move(mr));
  }
  for (const auto& t : j.at("tests")) {
    PairwiseTest p;
    p.a = t.at("a").get<std::string>();
    p.b = t.at("b").get<std::string>();
    if (t.contains("result")) p.result = wilcoxon_from_json(t.at("result"));
    if (t.contains("error")) p.error = t.at("error").get<std::string>();
    r.tests.push_back(std::move(p));
  }
  r.case_seeds = j.at("case_seeds").get<std::vector<std::uint64_t>>();
  if (!j.at("config").is_null()) r.config_snapshot = j.at("config").dump();
  return r;
}

Json audit_json(const SearchResult& result) {
  Json cands = Json::array();
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const auto& c = result.candidates[i];
    const Vec3& t = c.perturbation.translation;
    cands.push_back({{"index", i},
                     {"flip", c.perturbation.flip},
                     {"translation", {t.x(), t.y(), t.z()}},
                     {"plan", to_json(c.plan)},
                     {"score", c.score},
                     {"winner", i == result.winner}});
  }
  return {{"units", "mm"}, {"winner", result.winner}, {"candidates", cands}};
}

Json checkpoint_json(const AcmtModel& model) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"kind", "acmt"},
          {"direction", std::string(to_string(model.direction))},
          {"config", to_json(model.config)},
          {"tensors", tensors_json(model)}};
}

Json checkpoint_json(const DefnetModel& model) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"kind", "defnet"},
          {"config", to_json(model.config)},
          {"tensors", tensors_json(model)}};
}

std::string checkpoint_kind(const Json& j) {
  if (!j.is_object() || j.value("format", std::string{}) != kCheckpointFormat)
    throw CheckpointMismatch("not a cmfplan checkpoint");
  return j.at("kind").get<std::string>();
}

AcmtModel acmt_from_checkpoint(const Json& j, const AcmtConfig* expected) {
  check_header(j, "acmt");
  const AcmtConfig cfg = acmt_config_from_json(j.at("config"));
  if (expected && !(cfg == *expected))
    throw CheckpointMismatch("checkpoint architecture differs from the configured one");
  AcmtModel m = make_acmt(cfg, direction_from_string(j.at("direction").get<std::string>()), 0);
  fill_tensors(m, j.at("tensors"));
  return m;
}

DefnetModel defnet_from_checkpoint(const Json& j, const DefnetConfig* expected) {
  check_header(j, "defnet");
  const DefnetConfig cfg = defnet_config_from_json(j.at("config"));
  if (expected && !(cfg == *expected))
    throw CheckpointMismatch("checkpoint architecture differs from the configured one");
  DefnetModel m = make_defnet(cfg, 0);
  fill_tensors(m, j.at("tensors"));
  return m;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + p.string());
  out << text;
  if (!out) throw InvalidArgument("failed writing " + p.string());
}

std::string canonical(const Json& j) { return j.dump(2) + "\n"; }

Json read_json(const std::filesystem::path& p) {
  try {
    return Json::parse(read_text(p));
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(p.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& p, const Json& j) { write_text(p, canonical(j)); }

std::string to_ply(const FaceMesh& m) {
  std::ostringstream os;
  os << "ply\nformat ascii 1.0\ncomment units mm\n"
     << "element vertex " << m.vertices.size() << "\n"
     << "property double x\nproperty double y\nproperty double z\n"
     << "element face " << m.triangles.size() << "\n"
     << "property list uchar uint vertex_indices\nend_header\n";
  for (const auto& v : m.vertices)
    os << fmt17(v.x()) << ' ' << fmt17(v.y()) << ' ' << fmt17(v.z()) << '\n';
  for (const auto& t : m.triangles) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  return os.str();
}

namespace {
void add_polygon(FaceMesh& m, const std::vector<long long>& idx) {
  if (idx.size() < 3) throw InvalidArgument("face with fewer than 3 vertices");
  for (std::size_t k = 1; k + 1 < idx.size(); ++k)
    m.triangles.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[k]),
                           static_cast<std::uint32_t>(idx[k + 1])});
}
}  // namespace

FaceMesh mesh_from_ply(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw InvalidArgument("not a PLY file");
  std::size_t nv = 0, nf = 0;
  std::vector<std::string> vprops;
  std::string current;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string f;
      ls >> f;
      if (f != "ascii") throw InvalidArgument("only ASCII PLY is supported");
    } else if (key == "element") {
      ls >> current;
      if (current == "vertex") ls >> nv;
      else if (current == "face") ls >> nf;
      else throw InvalidArgument("unsupported PLY element '" + current + "'");
    } else if (key == "property" && current == "vertex") {
      std::string type, name;
      ls >> type >> name;
      vprops.push_back(name);
    } else if (key == "end_header") {
      break;
    }
  }
  auto pos = [&](const char* n) {
    for (std::size_t i = 0; i < vprops.size(); ++i)
      if (vprops[i] == n) return i;
    throw InvalidArgument(std::string("PLY vertex lacks property ") + n);
  };
  const std::size_t ix = pos("x"), iy = pos("y"), iz = pos("z");
  FaceMesh m;
  for (std::size_t i = 0; i < nv; ++i) {
    if (!std::getline(in, line)) throw InvalidArgument("truncated PLY vertex list");
    std::istringstream ls(line);
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) vals.push_back(std::strtod(tok.c_str(), nullptr));
    if (vals.size() < vprops.size()) throw InvalidArgument("short PLY vertex line");
    m.vertices.emplace_back(vals[ix], vals[iy], vals[iz]);
  }
  for (std::size_t i = 0; i < nf; ++i) {
    if (!std::getline(in, line)) throw InvalidArgument("truncated PLY face list");
    std::istringstream ls(line);
    std::size_t count = 0;
    ls >> count;
    std::vector<long long> idx(count);
    for (auto& x : idx)
      if (!(ls >> x) || x < 0) throw InvalidArgument("bad PLY face index");
    add_polygon(m, idx);
  }
  m.validate();
  return m;
}

FaceMesh mesh_from_obj(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  FaceMesh m;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw InvalidArgument("bad OBJ vertex line");
      m.vertices.emplace_back(x, y, z);
    } else if (key == "f") {
      std::vector<long long> idx;
      std::string tok;
      while (ls >> tok) {
        long long v = std::stoll(tok.substr(0, tok.find('/')));
        v = v < 0 ? static_cast<long long>(m.vertices.size()) + v : v - 1;
        if (v < 0) throw InvalidArgument("bad OBJ face index");
        idx.push_back(v);
      }
      add_polygon(m, idx);
    }
  }
  m.validate();
  return m;
}

FaceMesh read_mesh(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".ply") return mesh_from_ply(read_text(p));
  if (ext == ".obj") return mesh_from_obj(read_text(p));
  throw InvalidArgument("unsupported mesh format '" + ext + "'");
}

}  // namespace cmf
