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
#include "dara/pipeline/pipeline.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "dara/data/rng.hpp"
#include "dara/error.hpp"
#include "dara/pfa.hpp"

namespace dara::pipeline {

using numerics::Index;

namespace {

Matrix vstack(const std::vector<const Matrix*>& parts) {
  Index rows = 0;
  for (const Matrix* m : parts) rows += m->rows();
  Matrix out(rows, parts.front()->cols());
  Index at = 0;
  for (const Matrix* m : parts) {
    out.middleRows(at, m->rows()) = *m;
    at += m->rows();
  }
  return out;
}

Index cells_of(const ClassItems& items) {
  if (items.empty() || items.front().empty()) {
    fail(ErrorCode::kInvalidArgument, "episode has no support items");
  }
  return items.front().front().rows();
}

/// Backbone features of every item through one stacked forward pass.
ClassItems extract(const backbone::BackboneParams& theta, const ClassItems& raw) {
  const Index cells = cells_of(raw);
  std::vector<const Matrix*> parts;
  for (const auto& cls : raw) {
    for (const Matrix& m : cls) parts.push_back(&m);
  }
  const Matrix feats = backbone::forward(theta, vstack(parts));
  ClassItems out(raw.size());
  Index at = 0;
  for (std::size_t n = 0; n < raw.size(); ++n) {
    for (std::size_t k = 0; k < raw[n].size(); ++k) {
      out[n].push_back(feats.middleRows(at, cells));
      at += cells;
    }
  }
  return out;
}

std::vector<Matrix> extract(const backbone::BackboneParams& theta, std::span<const Matrix> raw) {
  const ClassItems grouped = {std::vector<Matrix>(raw.begin(), raw.end())};
  return extract(theta, grouped).front();
}

data::EpisodeSpec split_spec(const ClassItems& support, const TrainConfig& config) {
  data::EpisodeSpec spec = config.episode;
  spec.ways = static_cast<int>(support.size());
  spec.shots = static_cast<int>(support.front().size());
  if (spec.shots == 1) spec.pseudo_query_shots = 1;
  return spec;
}

pfa::RecalibrationOptions recal_options(const TrainConfig& config) {
  return {config.use_recalibration, config.clamp_negative};
}

void check_finite_loss(double loss, const char* stage) {
  if (!std::isfinite(loss)) {
    fail(ErrorCode::kDivergence, std::string(stage) + ": loss became non-finite");
  }
}

void sgd(Matrix& param, const Matrix& grad, double lr, const char* stage) {
  param -= lr * grad;
  if (!param.allFinite()) {
    fail(ErrorCode::kDivergence, std::string(stage) + ": parameters became non-finite");
  }
}

void sgd(double& param, const Matrix& grad, double lr, const char* stage) {
  param -= lr * grad(0, 0);
  if (!std::isfinite(param)) {
    fail(ErrorCode::kDivergence, std::string(stage) + ": parameters became non-finite");
  }
}

Var scalar(Tape& tape, double v, bool trainable) {
  Matrix m = Matrix::Constant(1, 1, v);
  return trainable ? tape.parameter(std::move(m)) : tape.constant(std::move(m));
}

std::vector<const Matrix*> flatten(const ClassItems& items) {
  std::vector<const Matrix*> out;
  for (const auto& cls : items) {
    for (const Matrix& m : cls) out.push_back(&m);
  }
  return out;
}

std::vector<Matrix> copies(const std::vector<const Matrix*>& ptrs) {
  std::vector<Matrix> out;
  out.reserve(ptrs.size());
  for (const Matrix* m : ptrs) out.push_back(*m);
  return out;
}

/// Alignment of one R x C block with the configured fusion.
Matrix align_block(const Matrix& block, const nda::AlignmentMaps& maps, const nda::GateParams& gate,
                   const TrainConfig& config) {
  if (config.nda_variant == NdaVariant::kSum) return nda::align_sum(block, maps);
  return nda::align(block, maps, nda::gate(block, gate));
}

/// Aligns every `cells`-row block of a stacked pool.
Matrix align_pool(const Matrix& pool, Index cells, const nda::AlignmentMaps& maps,
                  const nda::GateParams& gate, const TrainConfig& config) {
  Matrix out(pool.rows(), pool.cols());
  for (Index at = 0; at < pool.rows(); at += cells) {
    out.middleRows(at, cells) = align_block(pool.middleRows(at, cells), maps, gate, config);
  }
  return out;
}

std::vector<Matrix> build_pools(const Adapted& state, const ClassItems& features, Index cells,
                                const nda::AlignmentMaps* maps, const TrainConfig& config) {
  std::vector<Matrix> pools;
  pools.reserve(features.size());
  if (!state.z.empty()) {
    for (const Matrix& z : state.z) {
      pools.push_back(maps ? align_pool(z, cells, *maps, state.gate, config) : z);
    }
    return pools;
  }
  for (const auto& cls : features) {
    std::vector<Matrix> items;
    items.reserve(cls.size());
    for (const Matrix& f : cls) {
      items.push_back(maps ? align_block(f, *maps, state.gate, config) : f);
    }
    pfa::Recalibrated r = pfa::recalibrate(items, recal_options(config));
    pools.push_back(config.pool_mode == PoolMode::kPooled ? std::move(r.pooled)
                                                          : std::move(r.stacked));
  }
  return pools;
}

/// Runs fn(0..count-1) on up to `workers` threads. On failure the error of
/// the lowest failing index is rethrown, whatever the thread timing.
void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  auto run = [&] {
    while (!stop.load()) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
        stop.store(true);
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

Adapted from_model(const Model& model, const TrainConfig& config) {
  Adapted a;
  a.theta = model.theta;
  a.log_gamma = model.log_gamma;
  a.z = model.z;
  a.gate = model.gate ? *model.gate : initial_gate(config, model.theta.w2.cols());
  return a;
}

}  // namespace

// ------------------------------------------------------------ source stage

PretrainResult pretrain_source(const data::FeatureBank& source, const TrainConfig& config) {
  source.validate();
  if (source.class_count < 2) {
    fail(ErrorCode::kInvalidArgument, "source bank needs at least 2 classes");
  }
  const Index cells = source.cells();
  const backbone::BackboneShape shape{static_cast<int>(source.channels), config.hidden_channels,
                                      config.feature_channels};
  PretrainResult result;
  Model& model = result.model;
  model.theta = backbone::init_params(shape, data::derive_seed(config.seed, data::Stream::kBackboneInit));
  data::Rng init(data::derive_seed(config.seed, data::Stream::kPrototypeInit));
  for (std::uint32_t n = 0; n < source.class_count; ++n) {
    Matrix p(cells, config.feature_channels);
    for (Index i = 0; i < p.size(); ++i) p.data()[i] = init.uniform();
    model.base_prototypes.push_back(std::move(p));
  }
  model.log_gamma = pfa::MeasurementParams::for_cells(cells).log_gamma;
  const double lambda = pfa::ridge_lambda(cells, config.feature_channels, config.beta);

  std::vector<std::size_t> order(source.size());
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    data::Rng shuffle(data::derive_seed(config.seed, data::Stream::kPretrainShuffle,
                                        static_cast<std::uint64_t>(epoch)));
    shuffle.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<const Matrix*> parts;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        parts.push_back(&source.items[order[i]]);
        labels.push_back(static_cast<int>(source.labels[order[i]]));
      }
      Tape tape;
      const backbone::BackboneVars theta = backbone::bind(tape, model.theta, true);
      std::vector<Var> protos;
      for (const Matrix& p : model.base_prototypes) protos.push_back(tape.parameter(p));
      const Var lg = scalar(tape, model.log_gamma, true);
      const Var feats = backbone::forward(theta, tape.constant(vstack(parts)));
      const Var d = pfa::pool_distances(protos, feats, cells, lambda);
      const Var loss = pfa::cross_entropy(pfa::measure_logits(d, lg, cells), labels);
      check_finite_loss(loss.item(), "pretrain");
      tape.backward(loss);
      const double lr = config.pretrain_lr;
      sgd(model.theta.w1, tape.grad(theta.w1), lr, "pretrain");
      sgd(model.theta.b1, tape.grad(theta.b1), lr, "pretrain");
      sgd(model.theta.w2, tape.grad(theta.w2), lr, "pretrain");
      sgd(model.theta.b2, tape.grad(theta.b2), lr, "pretrain");
      for (std::size_t n = 0; n < protos.size(); ++n) {
        sgd(model.base_prototypes[n], tape.grad(protos[n]), lr, "pretrain");
      }
      sgd(model.log_gamma, tape.grad(lg), lr, "pretrain");
      total += loss.item() * static_cast<double>(end - start);
    }
    result.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }

  std::size_t correct = 0;
  for (std::size_t start = 0; start < source.size(); start += batch) {
    const std::size_t end = std::min(source.size(), start + batch);
    std::vector<const Matrix*> parts;
    for (std::size_t i = start; i < end; ++i) parts.push_back(&source.items[i]);
    const Matrix feats = backbone::forward(model.theta, vstack(parts));
    const auto pred = pfa::predict(pfa::pool_distances(model.base_prototypes, feats, cells, lambda));
    for (std::size_t i = start; i < end; ++i) {
      correct += static_cast<std::uint32_t>(pred[i - start]) == source.labels[i];
    }
  }
  result.train_accuracy = static_cast<double>(correct) / static_cast<double>(source.size());
  return result;
}

// ------------------------------------------------------------ target stages

Var stage1_loss(const backbone::BackboneVars& theta, const Var& log_gamma,
                const ClassItems& support, const data::PseudoSplit& split,
                const TrainConfig& config) {
  Tape& tape = *log_gamma.tape();
  const Index cells = cells_of(support);
  const Index shots = static_cast<Index>(support.front().size());
  const Var feats = backbone::forward(theta, tape.constant(vstack(flatten(support))));
  auto item = [&](std::size_t n, int k) {
    return numerics::slice_rows(feats, (static_cast<Index>(n) * shots + k) * cells, cells);
  };
  std::vector<Var> pools;
  std::vector<Var> queries;
  std::vector<int> labels;
  for (std::size_t n = 0; n < support.size(); ++n) {
    std::vector<Var> members;
    for (int k : split.support[n]) members.push_back(item(n, k));
    const pfa::PoolVars pool = pfa::recalibrate(members, recal_options(config));
    pools.push_back(config.pool_mode == PoolMode::kPooled ? pool.pooled : pool.stacked);
    for (int k : split.query[n]) {
      queries.push_back(item(n, k));
      labels.push_back(static_cast<int>(n));
    }
  }
  const double lambda = pfa::ridge_lambda(pools.front().rows(), feats.cols(), config.beta);
  const Var d = pfa::pool_distances(pools, numerics::vstack(queries), cells, lambda);
  return pfa::cross_entropy(pfa::measure_logits(d, log_gamma, cells), labels);
}

Var stage2_loss(const Stage2Vars& vars, const ClassItems& features,
                const data::PseudoSplit& split, const TrainConfig& config) {
  Tape& tape = *vars.log_gamma.tape();
  const Index cells = cells_of(features);
  std::vector<const Matrix*> pseudo_support;
  std::vector<const Matrix*> pseudo_query;
  std::vector<int> labels;
  for (std::size_t n = 0; n < features.size(); ++n) {
    for (int k : split.support[n]) pseudo_support.push_back(&features[n][static_cast<std::size_t>(k)]);
    for (int k : split.query[n]) {
      pseudo_query.push_back(&features[n][static_cast<std::size_t>(k)]);
      labels.push_back(static_cast<int>(n));
    }
  }
  std::vector<Var> pools;
  if (config.use_nda) {
    const nda::AlignmentMaps maps =
        nda::alignment_maps(nda::tan_stats(copies(pseudo_support), config.eps),
                            nda::tan_stats(copies(pseudo_query), config.eps));
    const bool learnable = config.nda_variant == NdaVariant::kLearnable;
    const nda::GateParams fixed = initial_gate(config, features.front().front().cols());
    for (const Var& z : vars.z) {
      if (z.rows() % cells != 0) {
        fail(ErrorCode::kShapeMismatch, "reprojection rows are not a multiple of the map size");
      }
      std::vector<Var> blocks;
      for (Index at = 0; at < z.rows(); at += cells) {
        const Var block = numerics::slice_rows(z, at, cells);
        if (config.nda_variant == NdaVariant::kSum) {
          blocks.push_back(nda::align_sum(block, maps));
        } else {
          const Var tau = learnable ? nda::gate(block, vars.gate_w, vars.gate_b)
                                    : scalar(tape, fixed.alpha, false);
          blocks.push_back(nda::align(block, maps, tau));
        }
      }
      pools.push_back(blocks.size() == 1 ? blocks.front() : numerics::vstack(blocks));
    }
  } else {
    pools = vars.z;
  }
  const double lambda = pfa::ridge_lambda(pools.front().rows(), pools.front().cols(), config.beta);
  const Var d = pfa::pool_distances(pools, tape.constant(vstack(pseudo_query)), cells, lambda);
  return pfa::cross_entropy(pfa::measure_logits(d, vars.log_gamma, cells), labels);
}

Stage1Result finetune_stage1(const backbone::BackboneParams& theta, double log_gamma,
                             const ClassItems& support, const TrainConfig& config,
                             std::uint64_t seed) {
  const data::EpisodeSpec spec = split_spec(support, config);
  data::Rng rng(seed);
  Stage1Result r{theta, log_gamma, {}};
  for (int epoch = 0; epoch < config.stage1_epochs(); ++epoch) {
    const data::PseudoSplit split = data::pseudo_split(spec, rng);
    Tape tape;
    const backbone::BackboneVars vars = backbone::bind(tape, r.theta, true);
    const Var lg = scalar(tape, r.log_gamma, true);
    const Var loss = stage1_loss(vars, lg, support, split, config);
    check_finite_loss(loss.item(), "stage 1");
    tape.backward(loss);
    const double lr = config.stage1_lr;
    sgd(r.theta.w1, tape.grad(vars.w1), lr, "stage 1");
    sgd(r.theta.b1, tape.grad(vars.b1), lr, "stage 1");
    sgd(r.theta.w2, tape.grad(vars.w2), lr, "stage 1");
    sgd(r.theta.b2, tape.grad(vars.b2), lr, "stage 1");
    sgd(r.log_gamma, tape.grad(lg), lr, "stage 1");
    r.epoch_loss.push_back(loss.item());
  }
  return r;
}

nda::GateParams initial_gate(const TrainConfig& config, Index channels) {
  switch (config.nda_variant) {
    case NdaVariant::kLearnable:
      return nda::GateParams::learnable(channels);
    case NdaVariant::kBn:
      return nda::GateParams::fixed(0.0);
    case NdaVariant::kIn:
      return nda::GateParams::fixed(1.0);
    case NdaVariant::kMean:
    case NdaVariant::kSum:
      break;
  }
  return nda::GateParams::fixed(0.5);
}

Stage2Result finetune_stage2(const backbone::BackboneParams& theta, double log_gamma,
                             const ClassItems& support, const TrainConfig& config,
                             std::uint64_t seed) {
  const data::EpisodeSpec spec = split_spec(support, config);
  const ClassItems features = extract(theta, support);
  data::Rng rng(seed);
  Stage2Result r;
  r.log_gamma = log_gamma;
  r.gate = initial_gate(config, features.front().front().cols());
  const bool learn_gate = config.use_nda && r.gate.mode == nda::GateMode::kLearnable;

  data::PseudoSplit split = data::pseudo_split(spec, rng);
  for (std::size_t n = 0; n < features.size(); ++n) {
    std::vector<Matrix> members;
    for (int k : split.support[n]) members.push_back(features[n][static_cast<std::size_t>(k)]);
    pfa::Recalibrated pool = pfa::recalibrate(members, recal_options(config));
    r.z_init.push_back(config.pool_mode == PoolMode::kPooled ? std::move(pool.pooled)
                                                             : std::move(pool.stacked));
  }
  r.z = pfa::init_reprojection(r.z_init);

  for (int epoch = 0; epoch < config.stage2_epochs(); ++epoch) {
    if (epoch > 0) split = data::pseudo_split(spec, rng);
    Tape tape;
    Stage2Vars vars;
    for (const Matrix& z : r.z) vars.z.push_back(tape.parameter(z));
    vars.log_gamma = scalar(tape, r.log_gamma, true);
    if (learn_gate) {
      vars.gate_w = tape.parameter(r.gate.w);
      vars.gate_b = scalar(tape, r.gate.b, true);
    }
    const Var loss = stage2_loss(vars, features, split, config);
    check_finite_loss(loss.item(), "stage 2");
    tape.backward(loss);
    const double lr = config.stage2_lr;
    for (std::size_t n = 0; n < r.z.size(); ++n) sgd(r.z[n], tape.grad(vars.z[n]), lr, "stage 2");
    sgd(r.log_gamma, tape.grad(vars.log_gamma), lr, "stage 2");
    if (learn_gate) {
      sgd(r.gate.w, tape.grad(vars.gate_w), lr, "stage 2");
      sgd(r.gate.b, tape.grad(vars.gate_b), lr, "stage 2");
    }
    r.epoch_loss.push_back(loss.item());
  }
  return r;
}

Adapted adapt(const Model& pretrained, const ClassItems& support, const TrainConfig& config,
              std::uint64_t seed) {
  Adapted a;
  a.theta = pretrained.theta;
  a.log_gamma = pretrained.log_gamma;
  a.gate = initial_gate(config, pretrained.theta.w2.cols());
  if (!config.use_reprojection_finetune) return a;
  const Stage1Result s1 = finetune_stage1(pretrained.theta, pretrained.log_gamma, support, config,
                                          data::derive_seed(seed, data::Stream::kFinetune, 1));
  Stage2Result s2 = finetune_stage2(s1.theta, s1.log_gamma, support, config,
                                    data::derive_seed(seed, data::Stream::kFinetune, 2));
  a.theta = s1.theta;
  a.log_gamma = s2.log_gamma;
  a.z = std::move(s2.z);
  a.gate = s2.gate;
  return a;
}

QueryResult query_episode(const Adapted& state, const ClassItems& support,
                          std::span<const Matrix> queries, std::span<const int> labels,
                          const TrainConfig& config) {
  if (queries.empty()) fail(ErrorCode::kInvalidArgument, "episode has no queries");
  const Index cells = cells_of(support);
  const ClassItems fs = extract(state.theta, support);
  const std::vector<Matrix> fq = extract(state.theta, queries);
  const Index m = static_cast<Index>(fq.size());
  const Index channels = fq.front().cols();
  for (const auto& z : state.z) {
    if (z.cols() != channels) {
      fail(ErrorCode::kChannelMismatch, "reprojection prototypes have " +
                                            std::to_string(z.cols()) + " channels, features " +
                                            std::to_string(channels));
    }
  }

  // Query groups sharing one set of target statistics.
  std::vector<std::vector<Index>> groups;
  if (!config.use_nda || config.statistic_source == StatisticSource::kQueryAll) {
    groups.emplace_back(static_cast<std::size_t>(m));
    std::iota(groups.front().begin(), groups.front().end(), Index{0});
  } else if (config.statistic_source == StatisticSource::kSupportQueryOne) {
    for (Index i = 0; i < m; ++i) groups.push_back({i});
  } else {
    if (static_cast<Index>(labels.size()) != m) {
      fail(ErrorCode::kInvalidArgument, "statistic source s+q-1x5 needs query labels");
    }
    std::vector<int> seen(support.size(), 0);
    for (Index i = 0; i < m; ++i) {
      const int rank = seen.at(static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]))++;
      if (static_cast<std::size_t>(rank) >= groups.size()) groups.resize(static_cast<std::size_t>(rank) + 1);
      groups[static_cast<std::size_t>(rank)].push_back(i);
    }
  }

  std::vector<Matrix> support_flat = copies(flatten(fs));
  const nda::TanStats support_stats =
      config.use_nda ? nda::tan_stats(support_flat, config.eps) : nda::TanStats{};

  QueryResult out;
  out.distances.resize(m, static_cast<Index>(support.size()));
  std::vector<Matrix> base_pools;
  if (!config.use_nda) base_pools = build_pools(state, fs, cells, nullptr, config);
  for (const auto& group : groups) {
    std::vector<const Matrix*> members;
    for (Index i : group) members.push_back(&fq[static_cast<std::size_t>(i)]);
    std::vector<Matrix> pools;
    if (config.use_nda) {
      std::vector<Matrix> target = copies(members);
      if (config.statistic_source != StatisticSource::kQueryAll) {
        target.insert(target.end(), support_flat.begin(), support_flat.end());
      }
      const nda::AlignmentMaps maps =
          nda::alignment_maps(support_stats, nda::tan_stats(target, config.eps));
      pools = build_pools(state, fs, cells, &maps, config);
    }
    const std::vector<Matrix>& use = config.use_nda ? pools : base_pools;
    const double lambda = pfa::ridge_lambda(use.front().rows(), channels, config.beta);
    const Matrix d = pfa::pool_distances(use, vstack(members), cells, lambda);
    for (std::size_t g = 0; g < group.size(); ++g) {
      out.distances.row(group[g]) = d.row(static_cast<Index>(g));
    }
  }
  out.probabilities = pfa::measure(out.distances, {state.log_gamma}, cells);
  out.predictions = pfa::predict(out.distances);
  return out;
}

Matrix baseline_distances(const backbone::BackboneParams& theta, const ClassItems& support,
                          std::span<const Matrix> queries, const TrainConfig& config) {
  const Index cells = cells_of(support);
  const ClassItems fs = extract(theta, support);
  const std::vector<Matrix> fq = extract(theta, queries);
  std::vector<Matrix> pools;
  for (const auto& cls : fs) {
    Matrix mean = Matrix::Zero(cells, cls.front().cols());
    for (const Matrix& f : cls) mean += f;
    pools.push_back(mean / static_cast<double>(cls.size()));
  }
  std::vector<const Matrix*> parts;
  for (const Matrix& q : fq) parts.push_back(&q);
  const double lambda = pfa::ridge_lambda(cells, pools.front().cols(), config.beta);
  return pfa::pool_distances(pools, vstack(parts), cells, lambda);
}

// ------------------------------------------------------------ evaluation

EpisodeData draw_episode(const data::FeatureBank& target, const TrainConfig& config,
                         std::uint64_t index, const std::vector<std::uint32_t>& classes) {
  data::Rng rng(data::derive_seed(config.seed, data::Stream::kEpisode, index));
  EpisodeData d;
  d.episode = classes.empty()
                  ? data::sample_episode(target, config.episode, rng)
                  : data::sample_episode_for_classes(target, config.episode, classes, rng);
  for (const auto& cls : d.episode.support) {
    std::vector<Matrix> items;
    for (std::size_t i : cls) items.push_back(target.items[i]);
    d.support.push_back(std::move(items));
  }
  for (std::size_t i : d.episode.query) d.queries.push_back(target.items[i]);
  return d;
}

Model finetune_shared(const Model& pretrained, const data::FeatureBank& target,
                      const TrainConfig& config) {
  constexpr std::uint64_t kSharedIndex = ~std::uint64_t{0};
  const EpisodeData d = draw_episode(target, config, kSharedIndex);
  Adapted a = adapt(pretrained, d.support, config,
                    data::derive_seed(config.seed, data::Stream::kFinetune, kSharedIndex));
  Model out = pretrained;
  out.theta = std::move(a.theta);
  out.log_gamma = a.log_gamma;
  out.z = std::move(a.z);
  out.gate = a.gate;
  out.classes = d.episode.classes;
  return out;
}

EvalReport summarize(std::vector<double> per_episode, std::string config_digest) {
  EvalReport r;
  r.episodes = static_cast<int>(per_episode.size());
  r.config_digest = std::move(config_digest);
  if (per_episode.empty()) fail(ErrorCode::kInvalidArgument, "no episodes to summarize");
  double sum = 0.0;
  for (double a : per_episode) sum += a;
  r.mean = sum / static_cast<double>(r.episodes);
  if (r.episodes > 1) {
    double sq = 0.0;
    for (double a : per_episode) sq += (a - r.mean) * (a - r.mean);
    const double sd = std::sqrt(sq / static_cast<double>(r.episodes - 1));
    r.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(r.episodes));
  }
  r.per_episode = std::move(per_episode);
  return r;
}

EvalReport evaluate(const Model& model, const data::FeatureBank& target,
                    const TrainConfig& config, const std::string& config_digest) {
  target.validate();
  if (config.shared_finetune && model.classes.empty()) {
    fail(ErrorCode::kConfig, "key 'shared_finetune': the checkpoint was not written by finetune");
  }
  if (static_cast<Index>(target.channels) != model.theta.w1.rows()) {
    fail(ErrorCode::kChannelMismatch, "target bank has " + std::to_string(target.channels) +
                                          " channels, the backbone expects " +
                                          std::to_string(model.theta.w1.rows()));
  }
  std::vector<double> acc(static_cast<std::size_t>(config.episodes), 0.0);
  const std::vector<std::uint32_t> none;
  parallel_for(config.episodes, config.workers, [&](int e) {
    const auto index = static_cast<std::uint64_t>(e);
    const EpisodeData d = draw_episode(target, config, index, config.shared_finetune ? model.classes : none);
    const Adapted state =
        config.shared_finetune
            ? from_model(model, config)
            : adapt(model, d.support, config,
                    data::derive_seed(config.seed, data::Stream::kFinetune, index));
    const QueryResult r = query_episode(state, d.support, d.queries, d.episode.query_labels, config);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
      correct += r.predictions[i] == d.episode.query_labels[i];
    }
    acc[static_cast<std::size_t>(e)] =
        static_cast<double>(correct) / static_cast<double>(r.predictions.size());
  });
  return summarize(std::move(acc), config_digest);
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["mean"] = report.mean;
  j["ci95"] = report.ci95;
  j["episodes"] = report.episodes;
  j["per_episode"] = report.per_episode;
  j["config_digest"] = report.config_digest;
  return j.dump(2) + "\n";
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  write_text(path, report_json(report));
}

void write_episode_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::string text = "episode,accuracy\n";
  for (std::size_t e = 0; e < report.per_episode.size(); ++e) {
    text += std::to_string(e) + "," + format_double(report.per_episode[e]) + "\n";
  }
  write_text(path, text);
}

std::vector<HistogramRow> distance_histogram(const Model& model, const data::FeatureBank& target,
                                             const TrainConfig& config) {
  target.validate();
  if (config.shared_finetune && model.classes.empty()) {
    fail(ErrorCode::kConfig, "key 'shared_finetune': the checkpoint was not written by finetune");
  }
  std::vector<std::vector<HistogramRow>> per(static_cast<std::size_t>(config.episodes));
  const std::vector<std::uint32_t> none;
  parallel_for(config.episodes, config.workers, [&](int e) {
    const auto index = static_cast<std::uint64_t>(e);
    const EpisodeData d = draw_episode(target, config, index, config.shared_finetune ? model.classes : none);
    const Adapted state =
        config.shared_finetune
            ? from_model(model, config)
            : adapt(model, d.support, config,
                    data::derive_seed(config.seed, data::Stream::kFinetune, index));
    const Matrix plain = baseline_distances(state.theta, d.support, d.queries, config);
    const Matrix full =
        query_episode(state, d.support, d.queries, d.episode.query_labels, config).distances;
    auto& rows = per[static_cast<std::size_t>(e)];
    for (int aligned = 0; aligned < 2; ++aligned) {
      const Matrix& dist = aligned ? full : plain;
      for (std::size_t q = 0; q < d.queries.size(); ++q) {
        const int label = d.episode.query_labels[q];
        rows.push_back({e, static_cast<int>(q), static_cast<int>(d.episode.classes[static_cast<std::size_t>(label)]),
                        dist(static_cast<Index>(q), label), aligned == 1});
      }
    }
  });
  std::vector<HistogramRow> out;
  for (auto& rows : per) out.insert(out.end(), rows.begin(), rows.end());
  return out;
}

void write_histogram_csv(std::span<const HistogramRow> rows, const std::filesystem::path& path) {
  std::string text = "episode,query_index,true_class,distance,aligned\n";
  for (const HistogramRow& r : rows) {
    text += std::to_string(r.episode) + "," + std::to_string(r.query_index) + "," +
            std::to_string(r.true_class) + "," + format_double(r.distance) + "," +
            (r.aligned ? "1" : "0") + "\n";
  }
  write_text(path, text);
}

}  // namespace dara::pipeline
