#pragma once

// File formats: JSON datasets / label dumps / reports, the CSV metric
// history and the binary tensor checkpoint.

#include <string>
#include <vector>

#include <json.hpp>

#include "e2ec/training.hpp"

namespace e2ec {

using Json = nlohmann::ordered_json;

struct DatasetRecord {
  int id = 0;
  ShapeFamily family = ShapeFamily::blob;
  Polygon polygon;
};

struct Dataset {
  int version = 1;
  int image_h = 0;
  int image_w = 0;
  std::vector<DatasetRecord> instances;
  Json config;  // resolved config the file was produced with
};

Json to_json(const MDAConfig& cfg);
MDAConfig mda_from_json(const Json& j);
Json to_json(const ModelConfig& cfg);
ModelConfig model_from_json(const Json& j);
Json to_json(const SynthConfig& cfg);
Json to_json(const TrainConfig& cfg);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

Json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const Json& j);
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

/// Builds labeled instances from a dataset file's polygons.
std::vector<Instance> label_dataset(const Dataset& ds, const MDAConfig& mda);

Json labels_to_json(const std::vector<Instance>& data, const MDAConfig& mda);
Json eval_report_to_json(const EvalReport& rep, const Json& config);
Json ablation_to_json(const std::vector<AblationRow>& rows, const Json& config);

/// Column layout: epoch, l_init, l_coarse, l_iter1, l_iter2, l_overall, lr,
/// eval_iou_initial, eval_iou_coarse, eval_iou_final. The resolved config is
/// embedded as a leading '#' comment line.
std::string history_csv(const std::vector<EpochRecord>& history, const Json& config);

/// Binary checkpoint: "E2ECKPT1" magic, a JSON config blob, then named
/// little-endian float64 tensors (shared parameters plus one grid tensor per
/// instance). See README for the exact layout.
void save_checkpoint(const std::string& path, const TrainState& state, const Json& config);

struct Checkpoint {
  TrainState state;
  Json config;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace e2ec
