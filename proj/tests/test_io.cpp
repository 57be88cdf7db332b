#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "e2ec/dataset_io.hpp"
#include "e2ec/svg.hpp"
#include "xml_check.hpp"

using namespace e2ec;
using oracle::xml_well_formed;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("e2ec_io_test_" + name)).string();
}

int count_occurrences(const std::string& text, const std::string& needle) {
  int n = 0;
  size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

Dataset make_dataset(int n_instances, uint64_t seed) {
  SynthConfig synth;
  synth.n_instances = n_instances;
  synth.image_h = synth.image_w = 64;
  synth.seed = seed;
  MDAConfig mda;
  mda.n_vertices = 16;
  const std::vector<Instance> data = generate_dataset(synth, mda);
  Dataset ds;
  ds.image_h = ds.image_w = 64;
  ds.config = to_json(synth);
  for (const Instance& inst : data) {
    ds.instances.push_back({inst.id, inst.family, inst.polygon});
  }
  return ds;
}

}  // namespace

TEST_CASE("dataset JSON round-trip and byte determinism") {
  const Dataset ds = make_dataset(5, 3);
  const std::string path = temp_path("ds.json");
  write_dataset(path, ds);
  const Dataset back = read_dataset(path);
  REQUIRE(back.instances.size() == ds.instances.size());
  CHECK(back.image_h == 64);
  for (size_t i = 0; i < ds.instances.size(); ++i) {
    REQUIRE(back.instances[i].polygon.vertices.size() == ds.instances[i].polygon.vertices.size());
    for (size_t v = 0; v < ds.instances[i].polygon.vertices.size(); ++v) {
      CHECK(back.instances[i].polygon.vertices[v] == ds.instances[i].polygon.vertices[v]);
    }
  }

  const std::string again = temp_path("ds2.json");
  write_dataset(again, ds);
  CHECK(read_text_file(path) == read_text_file(again));
  std::remove(path.c_str());
  std::remove(again.c_str());
}

TEST_CASE("dataset parsing rejects malformed input") {
  const std::string path = temp_path("bad.json");
  write_text_file(path, "{not json");
  CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("ParseError"), Error);

  Json j;
  j["version"] = 1;
  j["image_size"] = Json::array({32, 32});
  j["instances"] = Json::array(
      {Json{{"id", 0},
            {"shape_family", "blob"},
            {"polygon", Json::array({Json::array({-5.0, 1.0}), Json::array({10.0, 1.0}),
                                     Json::array({10.0, 10.0})})}}});
  write_text_file(path, j.dump());
  CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("outside image bounds"), Error);
  std::remove(path.c_str());
}

TEST_CASE("label dump carries contours, keys and fixed indices") {
  const Dataset ds = make_dataset(3, 9);
  MDAConfig mda;
  mda.n_vertices = 16;
  mda.m_aligned = 4;
  const std::vector<Instance> data = label_dataset(ds, mda);
  const Json j = labels_to_json(data, mda);
  REQUIRE(j.at("instances").size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    const Json& inst = j.at("instances")[i];
    CHECK(inst.at("gt_contour").size() == 16);
    CHECK(inst.at("fixed_indices") == Json(std::vector<int>{0, 4, 8, 12}));
    CHECK(inst.at("n_key").get<int>() >= 3);
    // Verifier pass: every dumped vertex lies on the source polygon boundary.
    for (const Json& v : inst.at("gt_contour")) {
      const Point2 q{v.at(0).get<double>(), v.at(1).get<double>()};
      CHECK(boundary_distance(ds.instances[i].polygon, q) <= 1e-6);
    }
  }
  CHECK(j.at("config").at("m_aligned").get<int>() == 4);
}

TEST_CASE("history CSV layout") {
  std::vector<EpochRecord> hist(2);
  hist[0] = {1, 0.5, 0.4, 0.3, 0.2, 1.4, 1e-3, 0.1, 0.2, 0.3};
  hist[1] = {2, 0.4, 0.3, 0.2, 0.1, 1.0, 5e-4, 0.2, 0.3, 0.4};
  const std::string csv = history_csv(hist, Json{{"note", "test"}});
  std::istringstream ss(csv);
  std::string line;
  std::getline(ss, line);
  CHECK(line.rfind("# config:", 0) == 0);
  std::getline(ss, line);
  CHECK(line ==
        "epoch,l_init,l_coarse,l_iter1,l_iter2,l_overall,lr,"
        "eval_iou_initial,eval_iou_coarse,eval_iou_final");
  std::getline(ss, line);
  CHECK(count_occurrences(line, ",") == 9);
  CHECK(line.rfind("1,", 0) == 0);
}

TEST_CASE("checkpoint round-trip restores every tensor bit-exactly") {
  SynthConfig synth;
  synth.n_instances = 3;
  synth.image_h = synth.image_w = 64;
  synth.seed = 21;
  TrainConfig cfg;
  cfg.mda.n_vertices = 16;
  cfg.model.n_vertices = 16;
  cfg.model.channels = 4;
  cfg.model.grid_h = cfg.model.grid_w = 16;
  cfg.model.image_h = cfg.model.image_w = 64;
  cfg.model.init_hidden = 8;
  cfg.model.refine_mid = 8;
  cfg.epochs = 2;
  cfg.optimizer = OptimizerKind::adam;
  cfg.learning_rate = 1e-3;
  const std::vector<Instance> data = generate_dataset(synth, cfg.mda);
  TrainResult res = train(data, cfg);

  const std::string path = temp_path("ckpt.bin");
  save_checkpoint(path, res.state, to_json(cfg));
  Checkpoint back = load_checkpoint(path);

  CHECK(back.state.instance_ids == res.state.instance_ids);
  std::vector<TensorRef> a = tensor_refs(res.state.params);
  std::vector<TensorRef> b = tensor_refs(back.state.params);
  REQUIRE(a.size() == b.size());
  for (size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t].name == b[t].name);
    REQUIRE(a[t].size == b[t].size);
    for (size_t k = 0; k < a[t].size; ++k) CHECK(a[t].data[k] == b[t].data[k]);
  }
  REQUIRE(back.state.grids.size() == res.state.grids.size());
  for (size_t g = 0; g < back.state.grids.size(); ++g) {
    CHECK(back.state.grids[g].values == res.state.grids[g].values);
  }
  CHECK(back.config.at("model").at("n_vertices").get<int>() == 16);

  // Truncated file is rejected.
  const std::string text = read_text_file(path);
  write_text_file(path, text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("eval report JSON structure") {
  EvalReport rep;
  rep.n_instances = 4;
  rep.final_stage.mask_iou = 0.9;
  const Json j = eval_report_to_json(rep, Json{{"seed", 1}});
  CHECK(j.at("n_instances").get<int>() == 4);
  CHECK(j.at("final").at("mask_iou").get<double>() == 0.9);
  CHECK(j.contains("config"));
  for (const char* stage : {"initial", "coarse", "final"}) {
    for (const char* key : {"vertex_l1", "mask_iou", "boundary_iou_d1", "boundary_iou_d2",
                            "instances_per_s"}) {
      CHECK(j.at(stage).contains(key));
    }
  }
}

TEST_CASE("stage SVG: structure, well-formedness, zero-length path omission") {
  const Polygon gt{{{10, 10}, {50, 10}, {50, 50}, {10, 50}}};
  ContourStages stages;
  for (Contour* c : {&stages.initial, &stages.coarse, &stages.iter1, &stages.iter2}) {
    c->vertices = {{20, 20}, {40, 20}, {40, 40}, {20, 40}};
  }
  stages.iter2.vertices[0] = {18, 18};  // one moved vertex

  RenderSpec final_only;
  const std::string svg = render_stages_svg(gt, stages, final_only, 64, 64, "cfg");
  CHECK(xml_well_formed(svg));
  CHECK(count_occurrences(svg, "<g id=\"stage-") == 1);
  CHECK(count_occurrences(svg, "<g id=\"gt\"") == 1);

  RenderSpec with_paths;
  with_paths.show_coarse = true;
  with_paths.show_final = true;
  with_paths.draw_paths = true;
  const std::string svg2 = render_stages_svg(gt, stages, with_paths, 64, 64, "cfg");
  CHECK(xml_well_formed(svg2));
  CHECK(count_occurrences(svg2, "<g id=\"stage-") == 2);
  // iter1 == coarse except... coarse -> final differ at exactly one vertex:
  // only that segment is drawn.
  CHECK(count_occurrences(svg2, "<line") == 1);

  RenderSpec none;
  none.show_final = false;
  CHECK_THROWS_WITH_AS(render_stages_svg(gt, stages, none, 64, 64, ""),
                       doctest::Contains("ConfigError"), Error);
}

TEST_CASE("alignment panel SVG renders one panel per M") {
  const Dataset ds = make_dataset(1, 5);
  MDAConfig mda;
  mda.n_vertices = 16;
  const std::string svg =
      render_mda_panels_svg(ds.instances[0].polygon, mda, {1, 2, 4, 8}, 64, 64, 4.0, "cfg");
  CHECK(xml_well_formed(svg));
  for (int m : {1, 2, 4, 8}) {
    CHECK(count_occurrences(svg, "<g id=\"panel-m" + std::to_string(m) + "\"") == 1);
  }
}
