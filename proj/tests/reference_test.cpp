// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

// Measured properties of the reference run that sit outside the acceptance
// binary. Each prints the measured value alongside the check.

#include <gtest/gtest.h>

#include <cstdio>

#include "fedtrace/attacks.hpp"
#include "fedtrace/experiment.hpp"
#include "fedtrace/training.hpp"

namespace fedtrace {
namespace {

class ReferenceRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config_ = new ExperimentConfig(load_config(FEDTRACE_SOURCE_DIR "/configs/reference.json"));
    config_->attacks.clear();
    result_ = new ExperimentResult(run_pipeline(*config_));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete config_;
  }
  static ExperimentConfig* config_;
  static ExperimentResult* result_;
};

ExperimentConfig* ReferenceRun::config_ = nullptr;
ExperimentResult* ReferenceRun::result_ = nullptr;

TEST_F(ReferenceRun, ClientModelsDoNotCollide) {
  const auto& run = result_->run;
  const auto& clients = run.registry.assignments();
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < clients.size(); ++i) {
    const auto c = collision_check(make_predictor(client_model(run, i)),
                                   make_predictor(client_model(run, i + 1)),
                                   clients[i].trigger_index, clients[i + 1].trigger_index,
                                   run.verification, run.target_label);
    EXPECT_FALSE(c.collided) << i;
    worst = std::max(worst, c.similarity);
  }
  std::printf("max adjacent-pair similarity %.4f (sigma %.2f)\n", worst, run.verification.sigma);
  EXPECT_LT(worst, run.verification.sigma);
}

TEST_F(ReferenceRun, FineTunedCleanModelIsNotTraced) {
  const auto& run = result_->run;
  AttackConfig a;
  a.kind = AttackKind::kFineTune;
  a.finetune_data = result_->holdout;
  const auto attacked = finetune_attack(result_->control_model, a);
  const auto t = trace(make_predictor(attacked), run.registry, run.verification, run.target_label);
  std::printf("clean fine-tuned model max VR %.4f\n", t.max_rate);
  EXPECT_FALSE(t.client_id.has_value());
  EXPECT_LT(t.max_rate, run.verification.gamma);
}

TEST_F(ReferenceRun, ReinforcementDoesNotWeakenTheUniversalTrigger) {
  auto cfg = *config_;
  cfg.federation.rounds = 1;
  cfg.federation.reinforce = false;
  auto r = prepare_experiment(cfg);
  run_federation(r.run);
  const auto& run = r.run;
  const TinyModel before = run.global_model;
  ReinforceOptions ro;
  ro.epochs = config_->federation.reinforce_epochs;
  ro.learning_rate = config_->federation.reinforce_lr;
  ro.batch_size = config_->federation.reinforce_batch;
  const TinyModel after = reinforce_watermark(before, run.watermark, run.watermark_data, ro);
  // The canonical global carries W_w on the universal row.
  const TokenId u = run.watermark.universal_index;
  const double vr_before = verification_rate(make_predictor(before), u, run.verification, 1);
  const double vr_after = verification_rate(make_predictor(after), u, run.verification, 1);
  std::printf("universal-trigger VR before %.4f after %.4f\n", vr_before, vr_after);
  EXPECT_GE(vr_after, vr_before);
}

// Raise the noise level until accuracy reaches the untrained level, then
// check that the watermark still verifies there.
TEST_F(ReferenceRun, WatermarkOutlivesAccuracyUnderNoise) {
  const auto& cfg = *config_;
  const ModelShape shape{cfg.corpus.vocab_size, cfg.model.embed_dim, cfg.model.hidden_dim,
                         cfg.model.adapter_rank, cfg.corpus.num_classes};
  const TinyModel untrained =
      TinyModel::initialize(shape, seed_tree(cfg.master_seed).at("model"), cfg.model.init);
  const double baseline = std::max(1.0 / static_cast<double>(cfg.corpus.num_classes),
                                   accuracy(untrained, result_->run.eval_data));
  std::printf("untrained baseline ACC %.4f\n", baseline);

  std::optional<AttackRow> at_baseline;
  for (double std : {0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 5.0}) {
    AttackConfig a;
    a.kind = AttackKind::kNoise;
    a.noise_std = std;
    const auto row = evaluate_attack(*result_, a, 0);
    std::printf("noise std %.2f  ACC %.4f  VR self %.4f  min %.4f  other %.4f\n", std, row.acc,
                row.vr_self, row.min_vr_self, row.vr_other_mean);
    if (row.acc <= baseline + 0.02) {
      at_baseline = row;
      break;
    }
  }
  ASSERT_TRUE(at_baseline.has_value()) << "accuracy never fell to the untrained level";
  EXPECT_GE(at_baseline->vr_self, cfg.verification.gamma)
      << "at std " << at_baseline->parameter << " ACC " << at_baseline->acc;
}

}  // namespace
}  // namespace fedtrace
