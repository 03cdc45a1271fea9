#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctp/checkpoint.hpp"
#include "ctp/context.hpp"
#include "ctp/episode.hpp"
#include "ctp/objectives.hpp"
#include "ctp/pretrain.hpp"
#include "ctp/prompt_net.hpp"

namespace ctp {

struct Ablation {
  bool o1_centroid_clustering = true;
  bool o2_balanced_augmentation = true;
  bool o3_orth_and_attr = true;

  static Ablation all_off() { return {false, false, false}; }
  /// "O1,O3" style list of enabled components; "none" or "" disables all.
  static Ablation parse(const std::string& flags);
  std::string name() const;
};

struct Seeds {
  std::uint64_t sampling = 1;
  std::uint64_t augmentation = 2;
  std::uint64_t init = 3;
};

struct TrainConfig {
  std::size_t m = 3;
  std::size_t s = 3;
  std::size_t n = 4;
  std::size_t pool = 10;
  std::size_t batches = 5;
  std::size_t epochs = 12;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  double dropout = 0.0;
  double lambda = 0.3;
  double p = 0.3;
  double drop_rate = 0.1;
  double mask_rate = 0.15;
  std::size_t h = 2;
  std::size_t fanout_cap = 20;
  double alpha = 0.5;
  std::size_t centroids = 0;  // |O| per epoch; 0 means batches * pool
  ModelShape model;           // model.d_in = 0 takes the graph's width
  Seeds seeds;
  TaskKind task = TaskKind::node;
  Ablation ablation;
  PretrainConfig pretrain;
  KMeansConfig kmeans;
  Precision precision = Precision::f32;
  std::string embedding_cache;  // empty: recompute embeddings every run

  std::size_t centroid_count() const { return centroids == 0 ? batches * pool : centroids; }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Raised when training hits a non-finite value; carries the step.
class TrainError : public std::runtime_error {
 public:
  TrainError(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossBreakdown> log;  // one row per step
  std::vector<std::string> warnings;
};

/// Builds the protection plan used for every context of one episode way.
/// Without balanced augmentation the plan is empty (targets only).
ProtectionPlan way_protection(const Episode& ep, std::size_t way, bool balanced, double p,
                              std::uint64_t seed);

TrainResult train(const Graph& source, const TrainConfig& cfg);

void write_loss_csv(const std::filesystem::path& path, std::span<const LossBreakdown> log);

/// Dimension mismatch between a checkpoint and a graph.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalConfig {
  std::size_t m = 3;
  std::size_t k_shots = 3;
  std::size_t n = 4;
  std::size_t episodes = 100;
  std::uint64_t seed = 1;
  std::optional<TaskKind> task;  // default: the checkpoint's task
  std::size_t h = 2;
  std::size_t fanout_cap = 20;
  std::size_t threads = 1;
  /// k_shots = 0 only: cluster the queries into m groups and score the
  /// best cluster-to-class matching. Off by default.
  bool zero_shot_fallback = false;
};

void to_json(nlohmann::json& j, const EvalConfig& c);

struct EvalReport {
  std::vector<double> accuracies;
  double mean = 0.0;
  double std = 0.0;  // population std across episodes
  std::size_t episodes = 0;
  nlohmann::json config;
  std::string hash_before;
  std::string hash_after;
};

EvalReport evaluate(const Checkpoint& ckpt, const Graph& target, const EvalConfig& cfg);

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(std::span<const double> xs);

struct SweepRow {
  std::vector<std::pair<std::string, double>> coords;
  double mean = 0.0;
  double std = 0.0;
};

/// Trains and evaluates one model per (λ, p) cell.
std::vector<SweepRow> sweep_lambda_p(const Graph& source, const Graph& target, const TrainConfig& base,
                                     std::span<const double> lambdas, std::span<const double> ps,
                                     const EvalConfig& eval, std::size_t jobs = 1);
/// Evaluation-only sweeps over support size or ways.
std::vector<SweepRow> sweep_shots(const Checkpoint& ckpt, const Graph& target,
                                  std::span<const std::size_t> shots, const EvalConfig& eval);
std::vector<SweepRow> sweep_ways(const Checkpoint& ckpt, const Graph& target,
                                 std::span<const std::size_t> ways, const EvalConfig& eval);

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

struct AblationRow {
  std::string name;
  Ablation flags;
  std::vector<double> seed_means;  // one per seed triple
  double mean = 0.0;               // over all episodes of all seeds
  double std = 0.0;                // across episodes
  double seed_std = 0.0;           // across seed means
};

/// Baseline, O1, O1+O2, O1+O3, O1+O2+O3.
std::vector<Ablation> ablation_grid();

/// Every configuration trains once per seed triple (shared across
/// configurations) and is evaluated with the same episode seeds.
std::vector<AblationRow> ablate(const Graph& source, const Graph& target, const TrainConfig& base,
                                std::span<const Seeds> seeds, const EvalConfig& eval,
                                std::span<const Ablation> grid);

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows);

}  // namespace ctp
