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
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <Eigen/LU>

#include "doctest.h"

#include "dara/data/synth.hpp"
#include "dara/pfa.hpp"
#include "dara/pipeline/pipeline.hpp"
#include "temp_dir.hpp"
#include "test_support.hpp"

using namespace dara;
using namespace dara::pipeline;
using numerics::Index;
using testing::error_of;
using testing::grad_check;
using testing::random_matrix;

namespace {

// Small but non-trivial benchmark: 3x3 maps, 4 raw channels.
Config small_config() {
  Config c;
  c.merge({{"width", "3"},
           {"height", "3"},
           {"raw_channels", "4"},
           {"hidden_channels", "8"},
           {"feature_channels", "4"},
           {"source_classes", "4"},
           {"source_items_per_class", "12"},
           {"target_classes", "6"},
           {"target_support_items", "6"},
           {"target_query_items", "8"},
           {"separation", "2"},
           {"ways", "3"},
           {"shots", "3"},
           {"queries_per_class", "4"},
           {"pretrain_epochs", "5"},
           {"finetune_epochs", "6"},
           {"episodes", "4"},
           {"seed", "3"}});
  return c;
}

struct Fixture {
  Config config = small_config();
  TrainConfig train = config.train();
  data::SyntheticBanks banks = data::gen_synthetic(config.synth());
  Model model = pretrain_source(banks.source, train).model;
};

bool same_params(const backbone::BackboneParams& a, const backbone::BackboneParams& b) {
  return a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ClassItems random_items(std::mt19937_64& rng, int ways, int shots, Index cells, Index channels,
                        double spread = 2.0) {
  ClassItems items(static_cast<std::size_t>(ways));
  for (int n = 0; n < ways; ++n) {
    const Matrix mean = random_matrix(rng, cells, channels, -spread, spread);
    for (int k = 0; k < shots; ++k) items[n].push_back(mean + 0.3 * random_matrix(rng, cells, channels));
  }
  return items;
}

}  // namespace

// ---------------------------------------------------------------- config

TEST_CASE("config rejects unknown keys and bad values, naming the key") {
  Config c;
  try {
    c.set("no_such_key", "1");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
    CHECK(std::string(e.what()).find("no_such_key") != std::string::npos);
  }
  try {
    c.set("ways", "many");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("ways") != std::string::npos);
  }
  CHECK(error_of([&] { c.set("ways", "1"); }) == ErrorCode::kConfig);
  CHECK(error_of([&] { c.set("nda_variant", "fancy"); }) == ErrorCode::kConfig);
  try {
    c.require_path("target_bank");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("target_bank") != std::string::npos);
  }
}

TEST_CASE("config digest covers settings, not paths or workers") {
  Config a;
  Config b;
  CHECK(a.digest() == b.digest());
  CHECK(a.digest().size() == 16);
  b.set("report", "/tmp/x.json");
  b.set("workers", "4");
  CHECK(a.digest() == b.digest());
  b.set("beta", "2.0");
  CHECK(a.digest() != b.digest());
}

TEST_CASE("config maps onto the typed settings") {
  Config c;
  c.merge({{"ways", "4"}, {"shots", "2"}, {"nda_variant", "bn"}, {"statistic_source", "s+q-1x5"},
           {"pool_mode", "pooled"}, {"use_nda", "false"}, {"finetune_epochs", "7"}});
  const TrainConfig t = c.train();
  CHECK(t.episode.ways == 4);
  CHECK(t.episode.shots == 2);
  CHECK(t.nda_variant == NdaVariant::kBn);
  CHECK(t.statistic_source == StatisticSource::kSupportQueryFive);
  CHECK(t.pool_mode == PoolMode::kPooled);
  CHECK_FALSE(t.use_nda);
  CHECK(t.stage1_epochs() + t.stage2_epochs() == 7);
  CHECK(t.episode.support_pool == 10);
  CHECK(t.beta == 1.0);
  CHECK(t.episode.pseudo_query_shots == 1);
}

TEST_CASE("config file, overrides and the workers environment fallback") {
  testing::TempDir dir;
  const auto file = dir / "run.cfg";
  std::ofstream(file) << "# comment\nways = 3\nbeta = 0.5\n";
  ::setenv("DARA_WORKERS", "3", 1);
  Config c = load_config(file, {{"beta", "0.25"}});
  CHECK(c.get("ways") == "3");
  CHECK(c.get("beta") == "0.25");
  CHECK(c.get("workers") == "3");
  Config d = load_config(file, {{"workers", "2"}});
  CHECK(d.get("workers") == "2");
  ::unsetenv("DARA_WORKERS");
  std::ofstream(file) << "bogus = 1\n";
  CHECK(error_of([&] { load_config(file, {}); }) == ErrorCode::kConfig);
}

// ---------------------------------------------------------------- checkpoint

TEST_CASE("checkpoint round trip is exact") {
  std::mt19937_64 rng(1);
  Model m;
  m.theta = backbone::init_params({4, 6, 3}, 9);
  m.theta.b1 = random_matrix(rng, 1, 6);
  m.log_gamma = 1.25;
  m.base_prototypes = {random_matrix(rng, 9, 3), random_matrix(rng, 9, 3)};
  m.z = {random_matrix(rng, 18, 3), random_matrix(rng, 18, 3)};
  nda::GateParams g = nda::GateParams::learnable(3);
  g.w = random_matrix(rng, 1, 3);
  g.b = -0.5;
  m.gate = g;
  m.classes = {4, 1};
  testing::TempDir dir;
  save_checkpoint(m, dir / "m.ck");
  const Model r = load_checkpoint(dir / "m.ck");
  CHECK(same_params(r.theta, m.theta));
  CHECK(r.log_gamma == m.log_gamma);
  REQUIRE(r.base_prototypes.size() == 2);
  CHECK(r.base_prototypes[1] == m.base_prototypes[1]);
  REQUIRE(r.z.size() == 2);
  CHECK(r.z[0] == m.z[0]);
  REQUIRE(r.gate.has_value());
  CHECK(r.gate->w == g.w);
  CHECK(r.gate->b == g.b);
  CHECK(r.gate->mode == nda::GateMode::kLearnable);
  CHECK(r.classes == m.classes);

  const std::string bytes = read_file(dir / "m.ck");
  CHECK(bytes.substr(0, 8) == "DARACK01");
  const std::string text = inspect_file(dir / "m.ck");
  CHECK(text.find("format = checkpoint") != std::string::npos);
  CHECK(text.find("finetuned = true") != std::string::npos);
}

TEST_CASE("checkpoint corruption is detected") {
  Model m;
  m.theta = backbone::init_params({2, 3, 2}, 1);
  testing::TempDir dir;
  save_checkpoint(m, dir / "m.ck");
  const std::string bytes = read_file(dir / "m.ck");
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  CHECK(error_of([&] { load_checkpoint(write("t.ck", bytes.substr(0, bytes.size() - 3))); }) ==
        ErrorCode::kHeaderMismatch);
  CHECK(error_of([&] { load_checkpoint(write("x.ck", bytes + "x")); }) ==
        ErrorCode::kHeaderMismatch);
  CHECK(error_of([&] { load_checkpoint(write("m2.ck", "DARAXX01" + bytes.substr(8))); }) ==
        ErrorCode::kBadMagic);
  CHECK(error_of([&] { load_checkpoint(dir / "missing.ck"); }) == ErrorCode::kIo);
  CHECK(error_of([&] { inspect_file(write("junk", "hello world")); }) == ErrorCode::kBadMagic);
}

// ---------------------------------------------------------------- pretraining

TEST_CASE("pretraining separates two synthetic source classes") {
  Config c = small_config();
  c.merge({{"source_classes", "2"}, {"pretrain_epochs", "20"}, {"pretrain_lr", "0.1"}});
  const auto banks = data::gen_synthetic(c.synth());
  const PretrainResult r = pretrain_source(banks.source, c.train());
  CHECK(r.train_accuracy >= 0.95);
  CHECK(r.epoch_loss.size() == 20);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
}

TEST_CASE("pretraining is seeded, and a zero step changes nothing") {
  const Config c = small_config();
  const auto banks = data::gen_synthetic(c.synth());
  TrainConfig t = c.train();
  const Model a = pretrain_source(banks.source, t).model;
  const Model b = pretrain_source(banks.source, t).model;
  CHECK(same_params(a.theta, b.theta));
  CHECK(a.base_prototypes[0] == b.base_prototypes[0]);

  t.pretrain_lr = 0.0;
  t.pretrain_epochs = 2;
  const Model frozen = pretrain_source(banks.source, t).model;
  const auto init = backbone::init_params(
      {4, t.hidden_channels, t.feature_channels},
      data::derive_seed(t.seed, data::Stream::kBackboneInit));
  CHECK(same_params(frozen.theta, init));
  CHECK(frozen.log_gamma == std::log(9.0));
}

TEST_CASE("pretraining rejects a one-class source and reports divergence") {
  Config c = small_config();
  c.set("source_classes", "1");
  const auto banks = data::gen_synthetic(c.synth());
  CHECK(error_of([&] { pretrain_source(banks.source, c.train()); }) == ErrorCode::kInvalidArgument);

  Config d = small_config();
  d.set("pretrain_lr", "1e200");
  const auto b2 = data::gen_synthetic(d.synth());
  CHECK(error_of([&] { pretrain_source(b2.source, d.train()); }) == ErrorCode::kDivergence);
}

// ---------------------------------------------------------------- finetuning

TEST_CASE("stage-1 loss gradients match finite differences (2-way 2-shot)") {
  std::mt19937_64 rng(5);
  const ClassItems support = random_items(rng, 2, 2, 3, 3);
  TrainConfig t;
  t.episode.ways = 2;
  t.episode.shots = 2;
  data::PseudoSplit split;
  split.support = {{0}, {1}};
  split.query = {{1}, {0}};
  auto p = backbone::init_params({3, 5, 4}, 2);
  p.b1 = random_matrix(rng, 1, 5, 0.2, 0.4);
  p.b2 = random_matrix(rng, 1, 4, 0.2, 0.4);
  const auto check = grad_check(
      [&](Tape&, std::span<const Var> v) {
        return stage1_loss({v[0], v[1], v[2], v[3]}, v[4], support, split, t);
      },
      {p.w1, p.b1, p.w2, p.b2, Matrix::Constant(1, 1, std::log(3.0))});
  CHECK(check.max_rel_error <= 1e-4);
}

TEST_CASE("stage-1 gradients through recalibration match finite differences (3-shot)") {
  std::mt19937_64 rng(6);
  const ClassItems support = random_items(rng, 2, 3, 2, 3);
  TrainConfig t;
  t.episode.ways = 2;
  t.episode.shots = 3;
  data::PseudoSplit split;
  split.support = {{0, 2}, {1, 2}};
  split.query = {{1}, {0}};
  auto p = backbone::init_params({3, 4, 3}, 4);
  p.b1 = random_matrix(rng, 1, 4, 0.2, 0.4);
  p.b2 = random_matrix(rng, 1, 3, 0.2, 0.4);
  const auto check = grad_check(
      [&](Tape&, std::span<const Var> v) {
        return stage1_loss({v[0], v[1], v[2], v[3]}, v[4], support, split, t);
      },
      {p.w1, p.b1, p.w2, p.b2, Matrix::Constant(1, 1, 0.7)});
  CHECK(check.max_rel_error <= 1e-4);
}

TEST_CASE("stage-2 loss gradients match finite differences for Z, gamma and the gate") {
  std::mt19937_64 rng(7);
  const ClassItems features = random_items(rng, 2, 2, 3, 4);
  data::PseudoSplit split;
  split.support = {{0}, {1}};
  split.query = {{1}, {0}};
  for (bool nda_on : {false, true}) {
    TrainConfig t;
    t.use_nda = nda_on;
    const auto check = grad_check(
        [&](Tape&, std::span<const Var> v) {
          Stage2Vars vars{{v[0], v[1]}, v[2], v[3], v[4]};
          return stage2_loss(vars, features, split, t);
        },
        {features[0][0] + 0.1 * random_matrix(rng, 3, 4), features[1][1], Matrix::Constant(1, 1, 0.9),
         random_matrix(rng, 1, 4), Matrix::Constant(1, 1, 0.1)});
    CHECK(check.max_rel_error <= 1e-4);
    if (!nda_on) CHECK(check.analytic[3].isZero(0.0));
  }
}

TEST_CASE("stage 1: zero step keeps theta, 1-shot self reconstruction is finite") {
  Fixture f;
  const EpisodeData d = draw_episode(f.banks.target, f.train, 0);
  TrainConfig t = f.train;
  t.stage1_lr = 0.0;
  const Stage1Result frozen = finetune_stage1(f.model.theta, f.model.log_gamma, d.support, t, 1);
  CHECK(same_params(frozen.theta, f.model.theta));
  CHECK(frozen.epoch_loss.size() == static_cast<std::size_t>(t.stage1_epochs()));

  t = f.train;
  t.episode.shots = 1;
  const EpisodeData one = draw_episode(f.banks.target, t, 0);
  REQUIRE(one.support.front().size() == 1);
  const Stage1Result r = finetune_stage1(f.model.theta, f.model.log_gamma, one.support, t, 2);
  for (double l : r.epoch_loss) CHECK(std::isfinite(l));
  const Stage2Result s = finetune_stage2(r.theta, r.log_gamma, one.support, t, 3);
  CHECK(s.z.front().rows() == 9);
}

TEST_CASE("stage 1 lowers the pseudo-query loss in most seeds") {
  Fixture f;
  TrainConfig t = f.train;
  t.finetune_epochs = 60;
  t.stage1_lr = 0.05;
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EpisodeData d = draw_episode(f.banks.target, t, seed);
    const Stage1Result r = finetune_stage1(f.model.theta, f.model.log_gamma, d.support, t, seed);
    // Mean loss over a fixed set of splits, before and after.
    auto mean_loss = [&](const backbone::BackboneParams& theta, double log_gamma) {
      data::Rng rng(99);
      data::EpisodeSpec spec = t.episode;
      double total = 0;
      for (int i = 0; i < 10; ++i) {
        const auto split = data::pseudo_split(spec, rng);
        Tape tape;
        total += stage1_loss(backbone::bind(tape, theta, false),
                             tape.constant(Matrix::Constant(1, 1, log_gamma)), d.support, split, t)
                     .item();
      }
      return total / 10;
    };
    improved += mean_loss(r.theta, r.log_gamma) <= mean_loss(f.model.theta, f.model.log_gamma);
  }
  CHECK(improved >= 3);
}

TEST_CASE("stage 2 freezes theta, starts from the pool and lowers its loss") {
  Fixture f;
  TrainConfig t = f.train;
  t.finetune_epochs = 100;
  t.stage2_lr = 0.05;
  const EpisodeData d = draw_episode(f.banks.target, t, 1);
  const backbone::BackboneParams before = f.model.theta;
  const Stage2Result r = finetune_stage2(f.model.theta, f.model.log_gamma, d.support, t, 4);
  CHECK(same_params(f.model.theta, before));
  CHECK(r.z_init.front().rows() == 2 * 9);  // (shots - 1) pseudo-support maps
  CHECK(r.epoch_loss.size() == 50);

  // Loss on every leave-one-out split, with the initial and the trained state.
  auto loss_on = [&](const std::vector<Matrix>& z, double lg, const nda::GateParams& g) {
    double total = 0;
    for (int held = 0; held < 3; ++held) {
      data::PseudoSplit split;
      for (std::size_t n = 0; n < d.support.size(); ++n) {
        split.query.push_back({held});
        split.support.push_back({});
        for (int k = 0; k < 3; ++k) {
          if (k != held) split.support.back().push_back(k);
        }
      }
      Tape tape;
      Stage2Vars vars;
      for (const Matrix& m : z) vars.z.push_back(tape.constant(m));
      vars.log_gamma = tape.constant(Matrix::Constant(1, 1, lg));
      vars.gate_w = tape.constant(g.w);
      vars.gate_b = tape.constant(Matrix::Constant(1, 1, g.b));
      ClassItems feats;
      for (const auto& cls : d.support) {
        feats.push_back({});
        for (const Matrix& m : cls) feats.back().push_back(backbone::forward(f.model.theta, m));
      }
      total += stage2_loss(vars, feats, split, t).item();
    }
    return total;
  };
  const double init = loss_on(r.z_init, f.model.log_gamma, initial_gate(t, 4));
  const double trained = loss_on(r.z, r.log_gamma, r.gate);
  CHECK(trained < init);

  t.finetune_epochs = 0;
  const Stage2Result none = finetune_stage2(f.model.theta, f.model.log_gamma, d.support, t, 4);
  CHECK(none.z == none.z_init);
}

// ---------------------------------------------------------------- querying

TEST_CASE("a query duplicating a support item is assigned to its class") {
  std::mt19937_64 rng(8);
  Adapted state;
  // Pool rows (2 shots x 2 cells) stay below the 8 channels, so other
  // classes cannot reconstruct the query exactly.
  state.theta = backbone::init_params({3, 12, 8}, 5);
  state.log_gamma = std::log(2.0);
  state.gate = nda::GateParams::learnable(8);
  const ClassItems support = random_items(rng, 3, 2, 2, 3);
  TrainConfig t;
  t.use_nda = false;
  t.beta = 1e-9;
  for (int n = 0; n < 3; ++n) {
    const Matrix q[] = {support[n][1]};
    const QueryResult r = query_episode(state, support, q, {}, t);
    CHECK(r.predictions.front() == n);
    CHECK(r.distances(0, n) <= 1e-6);
    CHECK(std::abs(r.probabilities.row(0).sum() - 1.0) <= 1e-9);
  }
}

TEST_CASE("alignment is a prediction no-op when query and support statistics coincide") {
  Fixture f;
  for (NdaVariant v : {NdaVariant::kLearnable, NdaVariant::kMean, NdaVariant::kBn, NdaVariant::kIn}) {
    TrainConfig t = f.train;
    t.nda_variant = v;
    const EpisodeData d = draw_episode(f.banks.target, t, 2);
    const Adapted state = adapt(f.model, d.support, t, 7);
    std::vector<Matrix> queries;
    std::vector<int> labels;
    for (std::size_t n = 0; n < d.support.size(); ++n) {
      for (const Matrix& m : d.support[n]) {
        queries.push_back(m);
        labels.push_back(static_cast<int>(n));
      }
    }
    TrainConfig off = t;
    off.use_nda = false;
    const QueryResult with = query_episode(state, d.support, queries, labels, t);
    const QueryResult without = query_episode(state, d.support, queries, labels, off);
    CHECK(with.predictions == without.predictions);
    CHECK((with.distances - without.distances).cwiseAbs().maxCoeff() <=
          1e-12 * (1.0 + without.distances.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("probability rows sum to one for every statistic source and variant") {
  Fixture f;
  for (StatisticSource s : {StatisticSource::kQueryAll, StatisticSource::kSupportQueryOne,
                            StatisticSource::kSupportQueryFive}) {
    for (NdaVariant v : {NdaVariant::kLearnable, NdaVariant::kSum}) {
      TrainConfig t = f.train;
      t.statistic_source = s;
      t.nda_variant = v;
      const EpisodeData d = draw_episode(f.banks.target, t, 3);
      const Adapted state = adapt(f.model, d.support, t, 1);
      const QueryResult r = query_episode(state, d.support, d.queries, d.episode.query_labels, t);
      CHECK(r.predictions.size() == d.queries.size());
      for (Index i = 0; i < r.probabilities.rows(); ++i) {
        CHECK(std::abs(r.probabilities.row(i).sum() - 1.0) <= 1e-9);
      }
    }
  }
}

TEST_CASE("with every component off, querying is plain nearest-reconstruction ridge") {
  std::mt19937_64 rng(9);
  TrainConfig t;
  t.use_recalibration = false;
  t.use_reprojection_finetune = false;
  t.use_nda = false;
  t.pool_mode = PoolMode::kPooled;
  for (int trial = 0; trial < 20; ++trial) {
    const int ways = 2 + trial % 3;
    const int shots = 1 + trial % 4;
    const Index cells = 2 + trial % 3;
    Adapted state;
    state.theta = backbone::init_params({3, 5, 4}, static_cast<std::uint64_t>(trial));
    state.log_gamma = 0.3;
    const ClassItems support = random_items(rng, ways, shots, cells, 3, 1.0);
    std::vector<Matrix> queries;
    for (int i = 0; i < 6; ++i) queries.push_back(random_matrix(rng, cells, 3, -2, 2));
    const QueryResult r = query_episode(state, support, queries, {}, t);

    // Independent classifier: mean support map per class, covariance-side
    // ridge Q (P^T P + lambda I)^{-1} P^T P with an LU inverse.
    const double lambda = static_cast<double>(cells) / 4.0;
    for (std::size_t m = 0; m < queries.size(); ++m) {
      const Matrix q = backbone::forward(state.theta, queries[m]);
      int best = -1;
      double best_d = INFINITY;
      for (int n = 0; n < ways; ++n) {
        Matrix p = Matrix::Zero(cells, 4);
        for (const Matrix& s : support[n]) p += backbone::forward(state.theta, s);
        p /= shots;
        const Matrix ptp = p.transpose() * p;
        const Matrix inv = (ptp + lambda * Matrix::Identity(4, 4)).fullPivLu().inverse();
        const double dist = (q * inv * ptp - q).squaredNorm();
        CHECK(dist == doctest::Approx(r.distances(static_cast<Index>(m), n)).epsilon(1e-9));
        if (dist < best_d) {
          best_d = dist;
          best = n;
        }
      }
      CHECK(r.predictions[m] == best);
    }
  }
}

// ---------------------------------------------------------------- evaluation

TEST_CASE("summaries: all-correct episodes and the sample-sd interval") {
  const EvalReport all = summarize({1.0, 1.0, 1.0}, "ab");
  CHECK(all.mean == 1.0);
  CHECK(all.ci95 == 0.0);
  const EvalReport r = summarize({0.2, 0.4, 0.9}, "ab");
  const double mean = 0.5;
  const double sd = std::sqrt(((0.09 + 0.01 + 0.16) / 2.0));
  CHECK(r.mean == doctest::Approx(mean));
  CHECK(r.ci95 == doctest::Approx(1.96 * sd / std::sqrt(3.0)));
  CHECK(summarize({0.5}, "").ci95 == 0.0);
}

TEST_CASE("evaluation is deterministic and independent of the worker count") {
  Fixture f;
  TrainConfig t = f.train;
  const EvalReport a = evaluate(f.model, f.banks.target, t, f.config.digest());
  const EvalReport b = evaluate(f.model, f.banks.target, t, f.config.digest());
  t.workers = 3;
  const EvalReport c = evaluate(f.model, f.banks.target, t, f.config.digest());
  CHECK(report_json(a) == report_json(b));
  CHECK(report_json(a) == report_json(c));
  CHECK(a.episodes == 4);
  CHECK(a.per_episode.size() == 4);
  CHECK(report_json(a).find("\"config_digest\": \"" + f.config.digest() + "\"") != std::string::npos);
}

TEST_CASE("a class-blind bank evaluates at chance") {
  Config c = small_config();
  c.merge({{"separation", "0"}, {"ways", "5"}, {"target_classes", "8"}, {"episodes", "200"},
           {"use_recalibration", "false"}, {"use_reprojection_finetune", "false"},
           {"use_nda", "false"}, {"pool_mode", "pooled"}});
  const auto banks = data::gen_synthetic(c.synth());
  const TrainConfig t = c.train();
  const Model m = pretrain_source(banks.source, t).model;
  const EvalReport r = evaluate(m, banks.target, t, c.digest());
  CHECK(std::abs(r.mean - 0.2) <= 3 * r.ci95);
}

TEST_CASE("shared finetuning evaluates the stored classes") {
  Fixture f;
  const Model tuned = finetune_shared(f.model, f.banks.target, f.train);
  CHECK(tuned.classes.size() == 3);
  CHECK(tuned.z.size() == 3);
  TrainConfig t = f.train;
  t.shared_finetune = true;
  const EvalReport r = evaluate(tuned, f.banks.target, t, "");
  CHECK(r.mean >= 0.0);
  CHECK(r.mean <= 1.0);
  CHECK(error_of([&] { evaluate(f.model, f.banks.target, t, ""); }) == ErrorCode::kConfig);
}

TEST_CASE("report, episode and histogram files") {
  Fixture f;
  testing::TempDir dir;
  const EvalReport r = summarize({0.5, 0.75}, "00ff");
  write_report(r, dir / "r.json");
  const std::string json = read_file(dir / "r.json");
  CHECK(json.find("\"mean\": 0.625") != std::string::npos);
  CHECK(json.find("\"episodes\": 2") != std::string::npos);
  CHECK(json.find("\"per_episode\"") != std::string::npos);
  CHECK(json.find("\"mean\"") < json.find("\"ci95\""));
  write_episode_csv(r, dir / "e.csv");
  CHECK(read_file(dir / "e.csv") == "episode,accuracy\n0,0.5\n1,0.75\n");

  const auto rows = distance_histogram(f.model, f.banks.target, f.train);
  std::size_t aligned = 0;
  for (const auto& row : rows) aligned += row.aligned;
  CHECK(rows.size() == 2 * 4 * 12);
  CHECK(aligned * 2 == rows.size());
  write_histogram_csv(rows, dir / "h.csv");
  const std::string csv = read_file(dir / "h.csv");
  CHECK(csv.rfind("episode,query_index,true_class,distance,aligned\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(rows.size()) + 1);
}
