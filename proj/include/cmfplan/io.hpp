#pragma once

// Serialization: JSON for every domain type, model checkpoints, ASCII PLY
// meshes (read/write) and OBJ import. Lengths are millimeters throughout.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cmfplan/acmt.hpp"
#include "cmfplan/baseline.hpp"
#include "cmfplan/eval.hpp"
#include "cmfplan/mesh.hpp"
#include "cmfplan/phantom.hpp"
#include "cmfplan/plan_search.hpp"

namespace cmf {

using Json = nlohmann::json;

void to_json(Json& j, const RigidTransform& t);  // 4x4 row-major homogeneous matrix
void from_json(const Json& j, RigidTransform& t);
Json to_json(const BonyPlan& plan);  // {"LF": 4x4, ...}
BonyPlan plan_from_json(const Json& j);

Json to_json(const PointSet& p);
PointSet point_set_from_json(const Json& j);
Json to_json(const FaceMesh& m);
FaceMesh mesh_from_json(const Json& j);
Json to_json(const PlanningCase& c);
PlanningCase planning_case_from_json(const Json& j);
Json to_json(const PhantomSpec& s);
PhantomSpec phantom_spec_from_json(const Json& j);
Json to_json(const PhantomCase& c);
PhantomCase phantom_case_from_json(const Json& j);

Json to_json(const TowerConfig& c);
TowerConfig tower_config_from_json(const Json& j);
Json to_json(const AcmtConfig& c);
AcmtConfig acmt_config_from_json(const Json& j);
Json to_json(const DefnetConfig& c);
DefnetConfig defnet_config_from_json(const Json& j);
Json to_json(const TrainHyper& h);
TrainHyper train_hyper_from_json(const Json& j);
Json to_json(const SearchOptions& o);
SearchOptions search_options_from_json(const Json& j);

Json to_json(const WilcoxonResult& r);
Json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const Json& j);

/// Candidate list with perturbation, plan and score; the winner is flagged.
Json audit_json(const SearchResult& result);

// --- checkpoints --------------------------------------------------------------
// {"format": "cmfplan-checkpoint", "version": 1, "kind": ..., "config": ...,
//  "tensors": [{"name", "rows", "cols", "data"}, ...]}

Json checkpoint_json(const AcmtModel& model);
Json checkpoint_json(const DefnetModel& model);
/// Rebuilds the architecture from the stored config and fills every tensor.
/// Throws CheckpointMismatch when names, shapes or counts disagree, or when
/// `expected` is given and the stored architecture differs from it.
AcmtModel acmt_from_checkpoint(const Json& j, const AcmtConfig* expected = nullptr);
DefnetModel defnet_from_checkpoint(const Json& j, const DefnetConfig* expected = nullptr);
/// "acmt" or "defnet".
std::string checkpoint_kind(const Json& j);

// --- files --------------------------------------------------------------------

std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, const std::string& text);
/// Canonical form: sorted keys, 2-space indent, shortest round-trip doubles.
std::string canonical(const Json& j);
Json read_json(const std::filesystem::path& p);
void write_json(const std::filesystem::path& p, const Json& j);

std::string to_ply(const FaceMesh& m);
FaceMesh mesh_from_ply(const std::string& text);
/// Vertices and faces only; polygons are fan-triangulated.
FaceMesh mesh_from_obj(const std::string& text);
FaceMesh read_mesh(const std::filesystem::path& p);  // by extension, .ply or .obj

}  // namespace cmf
