#include "e2ec/dataset_io.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace e2ec {

Json to_json(const MDAConfig& cfg) {
  return Json{{"n_vertices", cfg.n_vertices},
              {"m_aligned", cfg.m_aligned},
              {"start_angle", cfg.start_angle},
              {"subsegments", cfg.subsegments},
              {"dp_eps", cfg.dp_eps},
              {"dp_on_raw", cfg.dp_on_raw},
              {"ray_pick", cfg.ray_pick == RayPick::farthest ? "farthest" : "nearest"}};
}

MDAConfig mda_from_json(const Json& j) {
  MDAConfig cfg;
  cfg.n_vertices = j.at("n_vertices").get<int>();
  cfg.m_aligned = j.at("m_aligned").get<int>();
  cfg.start_angle = j.at("start_angle").get<double>();
  cfg.subsegments = j.at("subsegments").get<int>();
  cfg.dp_eps = j.at("dp_eps").get<double>();
  cfg.dp_on_raw = j.at("dp_on_raw").get<bool>();
  cfg.ray_pick = j.at("ray_pick").get<std::string>() == "nearest" ? RayPick::nearest
                                                                  : RayPick::farthest;
  return cfg;
}

Json to_json(const ModelConfig& cfg) {
  return Json{{"n_vertices", cfg.n_vertices},
              {"channels", cfg.channels},
              {"grid_h", cfg.grid_h},
              {"grid_w", cfg.grid_w},
              {"image_h", cfg.image_h},
              {"image_w", cfg.image_w},
              {"init_hidden", cfg.init_hidden},
              {"refine_mid", cfg.refine_mid},
              {"kernel_width", cfg.kernel_width},
              {"offset_scale", cfg.offset_scale},
              {"learned_init", cfg.learned_init},
              {"use_global_deform", cfg.use_global_deform},
              {"fixed_init_radius", cfg.fixed_init_radius},
              {"seed", cfg.seed}};
}

ModelConfig model_from_json(const Json& j) {
  ModelConfig cfg;
  cfg.n_vertices = j.at("n_vertices").get<int>();
  cfg.channels = j.at("channels").get<int>();
  cfg.grid_h = j.at("grid_h").get<int>();
  cfg.grid_w = j.at("grid_w").get<int>();
  cfg.image_h = j.at("image_h").get<int>();
  cfg.image_w = j.at("image_w").get<int>();
  cfg.init_hidden = j.at("init_hidden").get<int>();
  cfg.refine_mid = j.at("refine_mid").get<int>();
  cfg.kernel_width = j.at("kernel_width").get<int>();
  cfg.offset_scale = j.at("offset_scale").get<double>();
  cfg.learned_init = j.at("learned_init").get<bool>();
  cfg.use_global_deform = j.at("use_global_deform").get<bool>();
  cfg.fixed_init_radius = j.at("fixed_init_radius").get<double>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

Json to_json(const SynthConfig& cfg) {
  return Json{{"n_instances", cfg.n_instances}, {"family", to_string(cfg.family)},
              {"image_h", cfg.image_h},         {"image_w", cfg.image_w},
              {"vertex_budget", cfg.vertex_budget}, {"seed", cfg.seed},
              {"max_rejects", cfg.max_rejects}};
}

Json to_json(const TrainConfig& cfg) {
  const char* final_name = cfg.final_loss == FinalLossKind::dml
                               ? "dml"
                               : (cfg.final_loss == FinalLossKind::chamfer ? "chamfer" : "smooth_l1");
  return Json{{"epochs", cfg.epochs},
              {"learning_rate", cfg.learning_rate},
              {"lr_milestones", cfg.lr_milestones},
              {"lr_decay", cfg.lr_decay},
              {"batch_size", cfg.batch_size},
              {"optimizer", cfg.optimizer == OptimizerKind::adam ? "adam" : "gd"},
              {"grid_seed", cfg.grid_seed},
              {"final_loss", final_name},
              {"loss", Json{{"alpha", cfg.loss.alpha},
                            {"beta", cfg.loss.beta},
                            {"smooth_l1_delta", cfg.loss.smooth_l1_delta}}},
              {"mda", to_json(cfg.mda)},
              {"model", to_json(cfg.model)}};
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot write " + path);
  f << text;
  if (!f) throw Error(Errc::io_error, "short write to " + path);
}

namespace {

Json polygon_to_json(const Polygon& p) {
  Json arr = Json::array();
  for (const Point2& v : p.vertices) arr.push_back(Json::array({v.x, v.y}));
  return arr;
}

Polygon polygon_from_json(const Json& j) {
  Polygon p;
  for (const Json& v : j) p.vertices.push_back(Point2{v.at(0).get<double>(), v.at(1).get<double>()});
  return p;
}

Json points_to_json(std::span<const Point2> pts) {
  Json arr = Json::array();
  for (const Point2& v : pts) arr.push_back(Json::array({v.x, v.y}));
  return arr;
}

}  // namespace

Json dataset_to_json(const Dataset& ds) {
  Json j;
  j["version"] = ds.version;
  j["image_size"] = Json::array({ds.image_h, ds.image_w});
  Json inst = Json::array();
  for (const DatasetRecord& r : ds.instances) {
    inst.push_back(Json{{"id", r.id},
                        {"shape_family", to_string(r.family)},
                        {"polygon", polygon_to_json(r.polygon)}});
  }
  j["instances"] = inst;
  j["config"] = ds.config;
  return j;
}

Dataset dataset_from_json(const Json& j) {
  Dataset ds;
  try {
    ds.version = j.at("version").get<int>();
    ds.image_h = j.at("image_size").at(0).get<int>();
    ds.image_w = j.at("image_size").at(1).get<int>();
    for (const Json& r : j.at("instances")) {
      DatasetRecord rec;
      rec.id = r.at("id").get<int>();
      rec.family = shape_family_from_string(r.at("shape_family").get<std::string>());
      rec.polygon = polygon_from_json(r.at("polygon"));
      require_valid_polygon(rec.polygon);
      for (const Point2& v : rec.polygon.vertices) {
        if (v.x < 0 || v.y < 0 || v.x > ds.image_w || v.y > ds.image_h) {
          throw Error(Errc::parse_error, "polygon coordinates outside image bounds");
        }
      }
      ds.instances.push_back(std::move(rec));
    }
    if (j.contains("config")) ds.config = j.at("config");
  } catch (const Json::exception& e) {
    throw Error(Errc::parse_error, std::string("malformed dataset: ") + e.what());
  }
  return ds;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  write_text_file(path, dataset_to_json(ds).dump(2) + "\n");
}

Dataset read_dataset(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::exception& e) {
    throw Error(Errc::parse_error, std::string("invalid JSON in ") + path + ": " + e.what());
  }
  return dataset_from_json(j);
}

std::vector<Instance> label_dataset(const Dataset& ds, const MDAConfig& mda) {
  std::vector<Instance> out;
  out.reserve(ds.instances.size());
  for (const DatasetRecord& r : ds.instances) {
    Instance inst;
    inst.id = r.id;
    inst.family = r.family;
    inst.label = build_label(r.polygon, mda);
    inst.polygon = inst.label.raw_polygon;
    out.push_back(std::move(inst));
  }
  return out;
}

Json labels_to_json(const std::vector<Instance>& data, const MDAConfig& mda) {
  Json j;
  j["config"] = to_json(mda);
  Json arr = Json::array();
  const std::vector<int> fixed = mda_fixed_indices(mda);
  for (const Instance& inst : data) {
    arr.push_back(Json{{"id", inst.id},
                       {"center", Json::array({inst.label.center.x, inst.label.center.y})},
                       {"gt_contour", points_to_json(inst.label.gt_contour.vertices)},
                       {"gt_keys", points_to_json(inst.label.gt_keys)},
                       {"n_key", inst.label.n_key},
                       {"fixed_indices", fixed}});
  }
  j["instances"] = arr;
  return j;
}

namespace {

Json stage_eval_to_json(const StageEval& s) {
  return Json{{"vertex_l1", s.vertex_l1},
              {"mask_iou", s.mask_iou},
              {"boundary_iou_d1", s.boundary_iou_d1},
              {"boundary_iou_d2", s.boundary_iou_d2},
              {"instances_per_s", s.instances_per_s}};
}

}  // namespace

Json eval_report_to_json(const EvalReport& rep, const Json& config) {
  return Json{{"n_instances", rep.n_instances},
              {"initial", stage_eval_to_json(rep.initial)},
              {"coarse", stage_eval_to_json(rep.coarse)},
              {"final", stage_eval_to_json(rep.final_stage)},
              {"config", config}};
}

Json ablation_to_json(const std::vector<AblationRow>& rows, const Json& config) {
  Json arr = Json::array();
  for (const AblationRow& r : rows) {
    Json row = eval_report_to_json(r.report, Json());
    row.erase("config");
    row["name"] = r.name;
    arr.push_back(row);
  }
  return Json{{"rows", arr}, {"config", config}};
}

std::string history_csv(const std::vector<EpochRecord>& history, const Json& config) {
  std::ostringstream ss;
  ss << "# config: " << config.dump() << "\n";
  ss << "epoch,l_init,l_coarse,l_iter1,l_iter2,l_overall,lr,"
        "eval_iou_initial,eval_iou_coarse,eval_iou_final\n";
  ss.precision(17);
  for (const EpochRecord& r : history) {
    ss << r.epoch << ',' << r.l_init << ',' << r.l_coarse << ',' << r.l_iter1 << ',' << r.l_iter2
       << ',' << r.l_overall << ',' << r.lr << ',' << r.iou_initial << ',' << r.iou_coarse << ','
       << r.iou_final << "\n";
  }
  return ss.str();
}

namespace {

constexpr char kCheckpointMagic[8] = {'E', '2', 'E', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

uint64_t get_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void put_tensor(std::ostream& os, const std::string& name, const double* data, size_t size,
                const std::vector<int>& shape) {
  put_u32(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<uint32_t>(shape.size()));
  for (int d : shape) put_u32(os, static_cast<uint32_t>(d));
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size * sizeof(double)));
}

struct RawTensor {
  std::vector<int> shape;
  std::vector<double> data;
};

RawTensor get_tensor(std::istream& is, std::string& name) {
  const uint32_t name_len = get_u32(is);
  name.resize(name_len);
  is.read(name.data(), name_len);
  const uint32_t ndim = get_u32(is);
  RawTensor t;
  size_t total = 1;
  for (uint32_t d = 0; d < ndim; ++d) {
    t.shape.push_back(static_cast<int>(get_u32(is)));
    total *= static_cast<size_t>(t.shape.back());
  }
  t.data.resize(total);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(total * sizeof(double)));
  if (!is) throw Error(Errc::parse_error, "truncated checkpoint tensor: " + name);
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, const Json& config) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot write " + path);

  Json cfg = config;
  cfg["model"] = to_json(state.params.cfg);
  cfg["instance_ids"] = state.instance_ids;
  const std::string cfg_text = cfg.dump();

  f.write(kCheckpointMagic, 8);
  put_u32(f, 1);  // format version
  put_u64(f, cfg_text.size());
  f.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  ModelParams& params = const_cast<ModelParams&>(state.params);
  std::vector<TensorRef> shared = tensor_refs(params);
  put_u32(f, static_cast<uint32_t>(shared.size() + state.grids.size()));
  for (const TensorRef& t : shared) put_tensor(f, t.name, t.data, t.size, t.shape);
  for (size_t i = 0; i < state.grids.size(); ++i) {
    const FeatureGrid& g = state.grids[i];
    put_tensor(f, "grid." + std::to_string(state.instance_ids[i]), g.values.data(),
               g.values.size(), {g.height, g.width, g.channels});
  }
  if (!f) throw Error(Errc::io_error, "short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw Error(Errc::parse_error, "not a checkpoint file: " + path);
  }
  if (get_u32(f) != 1) throw Error(Errc::parse_error, "unsupported checkpoint version");
  const uint64_t cfg_len = get_u64(f);
  std::string cfg_text(cfg_len, '\0');
  f.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  Checkpoint cp;
  try {
    cp.config = Json::parse(cfg_text);
  } catch (const Json::exception& e) {
    throw Error(Errc::parse_error, std::string("bad checkpoint config: ") + e.what());
  }

  const ModelConfig mc = model_from_json(cp.config.at("model"));
  cp.state.params = make_params(mc);
  cp.state.instance_ids = cp.config.at("instance_ids").get<std::vector<int>>();

  const uint32_t n_tensors = get_u32(f);
  std::map<std::string, RawTensor> tensors;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name;
    RawTensor t = get_tensor(f, name);
    tensors.emplace(std::move(name), std::move(t));
  }

  for (TensorRef& ref : tensor_refs(cp.state.params)) {
    const auto it = tensors.find(ref.name);
    if (it == tensors.end()) throw Error(Errc::parse_error, "checkpoint missing " + ref.name);
    if (it->second.data.size() != ref.size) {
      throw Error(Errc::parse_error, "checkpoint tensor size mismatch: " + ref.name);
    }
    std::copy(it->second.data.begin(), it->second.data.end(), ref.data);
  }
  for (int id : cp.state.instance_ids) {
    const auto it = tensors.find("grid." + std::to_string(id));
    if (it == tensors.end()) {
      throw Error(Errc::parse_error, "checkpoint missing grid for instance " + std::to_string(id));
    }
    FeatureGrid g;
    g.height = it->second.shape.at(0);
    g.width = it->second.shape.at(1);
    g.channels = it->second.shape.at(2);
    g.values = it->second.data;
    cp.state.grids.push_back(std::move(g));
  }
  return cp;
}

}  // namespace e2ec
