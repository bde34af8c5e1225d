#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "icrl/attention.hpp"
#include "icrl/eval.hpp"
#include "icrl/features.hpp"
#include "icrl/mdp.hpp"
#include "icrl/prompt.hpp"
#include "icrl/theory.hpp"
#include "icrl/training.hpp"

namespace icrl {

using json = nlohmann::json;
namespace fs = std::filesystem;

// plain file helpers; throw std::runtime_error on IO failure
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);
json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& value);

json mdp_to_json(const TabularMdp& mdp, std::optional<std::uint64_t> seed = std::nullopt);
TabularMdp mdp_from_json(const json& j);

const char* to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& s);
json features_to_json(const FeatureMap& features);
FeatureMap features_from_json(const json& j);

/// One row per prompt row, one column per prompt column.
void write_prompt_csv(const fs::path& path, const Prompt& prompt);

struct Checkpoint {
  AttentionParams params;
  long step = 0;
  std::uint64_t seed = 0;
};

/// dir/P.bin, dir/V.bin (row-major float64, native little-endian) and
/// dir/manifest.json {D, d, m, mode, step, seed}.
void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt);
/// Throws ConfigError when the files disagree with the manifest.
Checkpoint load_checkpoint(const fs::path& dir);

/// frame, mdp_index, loss; frames are numbered globally from 0.
void write_loss_csv(const fs::path& path, const RunReport& report);
/// Raw matrix as a CSV grid.
void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m);

json train_config_to_json(const TrainConfig& cfg);
/// Fields missing from `j` keep their value in `base`.
TrainConfig train_config_from_json(const json& j, TrainConfig base);
json eval_config_to_json(const EvalConfig& cfg);

/// mdp_id, step, agent, return, std_error
void write_eval_csv(const fs::path& path, const EvalCurves& curves);
json eval_summary_json(const EvalCurves& curves);
/// dir/<agent>.csv with step, mean, p25, p75, count.
void write_plot_data(const fs::path& dir, const EvalCurves& curves);

json projection_json(const ManifoldProjection& p);
json structure_json(const StructureMetrics& m);
json inert_json(const InertBlockReport& r);
json pl_constants_json(const PLConstants& k);

}  // namespace icrl
