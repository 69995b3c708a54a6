#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "farmare/dataset.hpp"
#include "farmare/encoders.hpp"
#include "farmare/eval.hpp"
#include "farmare/models.hpp"

namespace farmare::trainer {

class TrainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr0 = 0.008;
  std::size_t decay_epoch = 27;  // 0-based epoch at whose start the LR drops
  double decay_factor = 0.75;
  double margin = 0.2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::string model = "farmare";
  std::string adapter = "synthetic";
  encoders::Granularity granularity = encoders::Granularity::sentence;

  std::size_t joint_dim = 512;
  std::size_t conv_channels = 512;
  std::size_t conv_kernel = 5;
  std::size_t afn_hidden1 = 1024;
  std::size_t afn_hidden2 = 512;
  std::string cnv_head = "pooled_fc";  // pooled_fc | per_viewpoint
  bool use_classifier = true;          // FArMARe only
  double text_alignment = encoders::SyntheticTextAdapter::kDefaultAlignment;
  /// Keep the epoch with the best validation Rsum; otherwise keep the last epoch.
  bool select_best = true;

  /// Throws TrainError on invalid values.
  void validate() const;
  models::ModelConfig model_config(std::size_t feature_dim, std::size_t text_dim) const;
  /// Learning rate used throughout epoch `epoch` (0-based).
  double lr_at(std::size_t epoch) const;
};

std::string to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const std::string& text);

/// Adapter output for every apartment of one split.
struct EncodedSplit {
  std::vector<std::string> ids;
  std::vector<Matrix> scenes;   // V_i x F_V
  std::vector<Matrix> queries;  // S_i x F_T
  std::vector<std::vector<std::uint8_t>> tags;
  encoders::Provenance provenance = encoders::Provenance::synthetic;

  std::size_t size() const { return ids.size(); }
  std::size_t feature_dim() const { return scenes.empty() ? 0 : scenes.front().cols(); }
  std::size_t text_dim() const { return queries.empty() ? 0 : queries.front().cols(); }
};

EncodedSplit encode_split(const std::vector<const dataset::ApartmentRecord*>& records,
                          const encoders::AdapterPair& adapters, encoders::Granularity granularity);
EncodedSplit encode_split(const dataset::Corpus& corpus, dataset::Split split, const encoders::AdapterPair& adapters,
                          encoders::Granularity granularity);

/// Evaluation-mode retrieval report of a model over an encoded split.
eval::RetrievalReport evaluate_model(const models::RetrievalModel& model, const EncodedSplit& data,
                                     const std::string& method = {});

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double ranking = 0.0;  // means over the epoch's steps
  double classification = 0.0;
  double total = 0.0;
  std::optional<double> val_rsum;
};

struct TrainOutcome {
  models::RetrievalModel model;
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;
};

/// Core loop over already encoded data. `log` receives one JSON line per step.
TrainOutcome train_encoded(const TrainConfig& config, const EncodedSplit& train, const EncodedSplit* val,
                           std::ostream* log = nullptr);

struct RunArtifact {
  std::optional<std::filesystem::path> checkpoint;
  std::vector<EpochRecord> curve;
  eval::RetrievalReport report;  // test split
  std::string config_snapshot;   // to_json(TrainConfig)
  std::size_t best_epoch = 0;
  double wall_clock_seconds = 0.0;
};

std::string to_json(const RunArtifact& a);

struct TrainOptions {
  /// Writes checkpoint.bin, config.json, curve.json and report.json when set.
  std::optional<std::filesystem::path> out_dir;
  std::ostream* log = nullptr;
  encoders::AdapterOptions adapter_options;
};

/// Errors: NLB -> TrainError("non-learning baseline has no parameters").
RunArtifact train(const TrainConfig& config, const dataset::Corpus& corpus, const TrainOptions& options = {});

struct MultiRunResult {
  std::vector<RunArtifact> runs;
  eval::AggregatedReport aggregated;
};

/// Runs with seeds seed+0 .. seed+n-1; run i writes into out_dir/run-i when out_dir is set.
MultiRunResult multi_run(const TrainConfig& config, const dataset::Corpus& corpus, std::size_t n_runs,
                         const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "FCK1" | u32 version | config json | parameter container | crc32.
void save_checkpoint(const std::filesystem::path& path, models::RetrievalModel& model, const TrainConfig& config);

struct LoadedCheckpoint {
  TrainConfig config;
  models::RetrievalModel model;
};
/// Throws io::FormatError on any corruption; nothing is returned half-built.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Checkpoint evaluation; the corpus feature width must match the checkpoint.
eval::RetrievalReport evaluate(const std::filesystem::path& checkpoint, const dataset::Corpus& corpus,
                               dataset::Split split, encoders::AdapterOptions adapter_options = {});
/// Non-learning baseline evaluation (no checkpoint).
eval::RetrievalReport evaluate_nlb(const dataset::Corpus& corpus, dataset::Split split, const std::string& adapter,
                                   encoders::Granularity granularity, encoders::AdapterOptions adapter_options = {});

}  // namespace farmare::trainer
