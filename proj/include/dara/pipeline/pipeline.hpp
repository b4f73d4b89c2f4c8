//==============================================================================
// Copyright (c) 2026 The Dara Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//==============================================================================
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dara/backbone.hpp"
#include "dara/data/bank.hpp"
#include "dara/data/episode.hpp"
#include "dara/nda.hpp"
#include "dara/pipeline/config.hpp"
#include "dara/pipeline/model.hpp"

namespace dara::pipeline {

using numerics::Tape;
using numerics::Var;

/// Items of one episode grouped by episode class: [class][shot], each R x C.
using ClassItems = std::vector<std::vector<Matrix>>;

// ------------------------------------------------------------ source stage

struct PretrainResult {
  Model model;
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
};

/// Joint SGD on the backbone, one learnable R x C prototype per source class
/// and the temperature. Throws kDivergence on a non-finite loss.
PretrainResult pretrain_source(const data::FeatureBank& source, const TrainConfig& config);

// ------------------------------------------------------------ target stages

/// Cross-entropy of the pseudo-queries against ridge reconstructions from
/// their recalibrated pseudo-support pools, differentiable in theta and
/// log_gamma. `support` holds raw items.
Var stage1_loss(const backbone::BackboneVars& theta, const Var& log_gamma,
                const ClassItems& support, const data::PseudoSplit& split,
                const TrainConfig& config);

/// Stage-2 leaves. The gate leaves are only read when alignment is on with
/// the learnable variant.
struct Stage2Vars {
  std::vector<Var> z;
  Var log_gamma;
  Var gate_w;
  Var gate_b;
};

/// Cross-entropy of the pseudo-queries against reconstructions from the
/// prototypes Z. With alignment on, every R-row block of Z is moved from the
/// pseudo-support statistics to the pseudo-query statistics first.
/// `features` holds backbone outputs.
Var stage2_loss(const Stage2Vars& vars, const ClassItems& features,
                const data::PseudoSplit& split, const TrainConfig& config);

struct Stage1Result {
  backbone::BackboneParams theta;
  double log_gamma = 0.0;
  std::vector<double> epoch_loss;
};

/// One SGD step per epoch on a freshly drawn pseudo-split.
Stage1Result finetune_stage1(const backbone::BackboneParams& theta, double log_gamma,
                             const ClassItems& support, const TrainConfig& config,
                             std::uint64_t seed);

struct Stage2Result {
  std::vector<Matrix> z_init;
  std::vector<Matrix> z;
  double log_gamma = 0.0;
  nda::GateParams gate;
  std::vector<double> epoch_loss;  // loss before each step
};

/// Z starts as the recalibrated pseudo-support pool of a first split; the
/// backbone is read-only.
Stage2Result finetune_stage2(const backbone::BackboneParams& theta, double log_gamma,
                             const ClassItems& support, const TrainConfig& config,
                             std::uint64_t seed);

/// Gate matching the configured variant (learnable gates start at tau = 0.5).
nda::GateParams initial_gate(const TrainConfig& config, numerics::Index channels);

/// Per-episode state used for querying.
struct Adapted {
  backbone::BackboneParams theta;
  double log_gamma = 0.0;
  std::vector<Matrix> z;  // empty: pools come from the support set
  nda::GateParams gate;
};

/// Both finetuning stages when enabled, otherwise the pretrained state.
Adapted adapt(const Model& pretrained, const ClassItems& support, const TrainConfig& config,
              std::uint64_t seed);

struct QueryResult {
  Matrix distances;      // M x N squared reconstruction distances
  Matrix probabilities;  // M x N
  std::vector<int> predictions;
};

/// Classifies raw query items. `labels` is only read by the
/// one-query-per-class statistic source.
QueryResult query_episode(const Adapted& state, const ClassItems& support,
                          std::span<const Matrix> queries, std::span<const int> labels,
                          const TrainConfig& config);

/// Plain ridge against the mean support map of every class, without any
/// alignment: the unaligned reference.
Matrix baseline_distances(const backbone::BackboneParams& theta, const ClassItems& support,
                          std::span<const Matrix> queries, const TrainConfig& config);

// ------------------------------------------------------------ evaluation

struct EpisodeData {
  data::Episode episode;
  ClassItems support;
  std::vector<Matrix> queries;
};

/// Episode `index` of the evaluation stream (restricted to `classes` when
/// non-empty).
EpisodeData draw_episode(const data::FeatureBank& target, const TrainConfig& config,
                         std::uint64_t index, const std::vector<std::uint32_t>& classes = {});

/// Finetunes on the support set of one drawn episode and records its
/// classes, for later evaluation with shared_finetune.
Model finetune_shared(const Model& pretrained, const data::FeatureBank& target,
                      const TrainConfig& config);

struct EvalReport {
  std::vector<double> per_episode;
  double mean = 0.0;
  double ci95 = 0.0;  // 1.96 * sample sd / sqrt(E)
  int episodes = 0;
  std::string config_digest;
};

EvalReport summarize(std::vector<double> per_episode, std::string config_digest);

/// Runs config.episodes independent episodes on config.workers threads;
/// the result does not depend on the worker count.
EvalReport evaluate(const Model& model, const data::FeatureBank& target,
                    const TrainConfig& config, const std::string& config_digest);

std::string report_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);
void write_episode_csv(const EvalReport& report, const std::filesystem::path& path);

struct HistogramRow {
  int episode = 0;
  int query_index = 0;
  int true_class = 0;
  double distance = 0.0;
  bool aligned = false;
};

/// For every query of config.episodes episodes: the true-class distance of
/// the full query path (aligned) and of the unaligned reference. Rows are
/// ordered by episode, then unaligned before aligned, then query.
std::vector<HistogramRow> distance_histogram(const Model& model, const data::FeatureBank& target,
                                             const TrainConfig& config);

void write_histogram_csv(std::span<const HistogramRow> rows, const std::filesystem::path& path);

}  // namespace dara::pipeline
