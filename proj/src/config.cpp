#include "cmfplan/config.hpp"

#include "cmfplan/errors.hpp"

namespace cmf {

namespace {

void reject_unknown(const Json& given, const Json& known, const std::string& path) {
  if (!given.is_object() || !known.is_object()) return;
  for (const auto& [k, v] : given.items()) {
    if (!known.contains(k)) throw InvalidArgument("unknown config key '" + path + k + "'");
    reject_unknown(v, known.at(k), path + k + ".");
  }
}

}  // namespace

AppConfig default_config() { return {}; }

AppConfig desk_config() {
  AppConfig c;
  c.phantom = desk_phantom_spec();
  c.bp = desk_scale_config();
  c.fs = desk_scale_config();
  c.baseline = desk_defnet_config();
  c.train.epochs = 40;
  // The simulator has to rank nearby candidate plans, which needs a much
  // tighter fit than planning does.
  c.fs_epochs = 120;
  return c;
}

TrainHyper fs_train_hyper(const AppConfig& c) {
  TrainHyper h = c.train;
  if (c.fs_epochs >= 0) h.epochs = c.fs_epochs;
  return h;
}

AppConfig preset(const std::string& name) {
  if (name == "default") return default_config();
  if (name == "desk") return desk_config();
  throw InvalidArgument("unknown preset '" + name + "'");
}

Json to_json(const AppConfig& c) {
  return {{"phantom", to_json(c.phantom)},
          {"dataset",
           {{"train_cases", c.train_cases}, {"test_cases", c.test_cases}, {"augment", c.augment}}},
          {"bp", to_json(c.bp)},
          {"fs", to_json(c.fs)},
          {"baseline", to_json(c.baseline)},
          {"train", to_json(c.train)},
          {"fs_epochs", c.fs_epochs},
          {"model_seed", c.model_seed},
          {"search", to_json(c.search)},
          {"planner", {{"cranium_context", c.planner.cranium_context}}},
          {"eval",
           {{"mae_metric",
             c.mae_metric == MaeMetric::Corresponded ? "corresponded" : "nearest_point"},
            {"exact_max_n", c.exact_max_n}}}};
}

AppConfig config_from_json(const Json& j, const AppConfig& base) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  const Json known = to_json(base);
  reject_unknown(j, known, "");
  Json m = known;
  m.merge_patch(j);

  AppConfig c;
  c.phantom = phantom_spec_from_json(m.at("phantom"));
  const auto& d = m.at("dataset");
  c.train_cases = d.at("train_cases").get<std::size_t>();
  c.test_cases = d.at("test_cases").get<std::size_t>();
  c.augment = d.at("augment").get<bool>();
  c.bp = acmt_config_from_json(m.at("bp"));
  c.fs = acmt_config_from_json(m.at("fs"));
  c.baseline = defnet_config_from_json(m.at("baseline"));
  c.train = train_hyper_from_json(m.at("train"));
  c.fs_epochs = m.at("fs_epochs").get<int>();
  c.model_seed = m.at("model_seed").get<std::uint64_t>();
  c.search = search_options_from_json(m.at("search"));
  c.planner.cranium_context = m.at("planner").at("cranium_context").get<bool>();
  const auto metric = m.at("eval").at("mae_metric").get<std::string>();
  if (metric == "corresponded")
    c.mae_metric = MaeMetric::Corresponded;
  else if (metric == "nearest_point")
    c.mae_metric = MaeMetric::NearestPoint;
  else
    throw InvalidArgument("unknown MAE metric '" + metric + "'");
  c.exact_max_n = m.at("eval").at("exact_max_n").get<std::size_t>();
  return c;
}

AppConfig load_config(const std::filesystem::path& p) {
  const Json j = read_json(p);
  const std::string name = j.is_object() ? j.value("preset", std::string("default")) : "default";
  Json rest = j;
  if (rest.is_object()) rest.erase("preset");
  return config_from_json(rest, preset(name));
}

}  // namespace cmf
