#include <gtest/gtest.h>

#include "mllmcl/mllmcl.hpp"

using namespace mllmcl;

namespace {

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.num_classes = 3;
    cfg.train_size = 48;
    cfg.test_size = 24;
    cfg.embed_dim = 8;
    cfg.out_dim = 8;
    cfg.pretrain_steps = 12;
    cfg.pretrain_batch_pairs = 8;
    cfg.finetune_epochs = 2;
    cfg.finetune_batch_pairs = 8;
    cfg.warmup_steps = 5;
    cfg.peak_lr = 1e-2;
    cfg.anneal_G = 7;
    cfg.min_count = 1;
    cfg.seed = 11;
    return cfg;
}

struct Fixture {
    TrainConfig cfg;
    Dataset data;
    Vocab vocab;

    explicit Fixture(TrainConfig c) : cfg(std::move(c)) {
        data = synthesize_dataset(static_cast<std::int32_t>(cfg.num_classes), static_cast<std::size_t>(cfg.train_size),
                                  static_cast<std::size_t>(cfg.test_size), cfg.noise(), static_cast<std::uint64_t>(cfg.seed));
        vocab = build_vocab(data.train, static_cast<std::size_t>(cfg.min_count));
    }
};

}  // namespace

TEST(Pretrain, DeterministicUnderSeed) {
    Fixture f(small_config());
    const PretrainResult a = pretrain(f.cfg, f.data.train, f.vocab);
    const PretrainResult b = pretrain(f.cfg, f.data.train, f.vocab);
    EXPECT_EQ(a.log, b.log);
    EXPECT_EQ(a.params, b.params);
    ASSERT_EQ(a.log.size(), 12u);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        EXPECT_EQ(a.log[i].iter, static_cast<std::int64_t>(i + 1));
        EXPECT_DOUBLE_EQ(a.log[i].lr, warmup_lr(a.log[i].iter, f.cfg.peak_lr, f.cfg.warmup_steps));
        EXPECT_TRUE(std::isfinite(a.log[i].total));
    }
}

TEST(Pretrain, SeedChangesResult) {
    Fixture f(small_config());
    TrainConfig other = f.cfg;
    other.seed = 12;
    EXPECT_NE(pretrain(f.cfg, f.data.train, f.vocab).params, pretrain(other, f.data.train, f.vocab).params);
}

TEST(Pretrain, LambdaPtOneDropsMlmGradient) {
    Fixture f(small_config());
    TrainConfig cfg = f.cfg;
    cfg.lambda_pt = 1.0;
    const ModelParams params = init_params(f.vocab.size(), 8, 8, 3, 1);
    const Batch batch = materialize_batch(f.data.train, {0, 1, 2, 3}, f.vocab, 16);
    Rng mask_rng(5);
    const PretrainStep step = pretrain_step_gradients(cfg, params, batch, mask_rng);
    for (double g : step.grads.mlm_weight.data()) EXPECT_EQ(g, 0.0);
    for (double g : step.grads.mlm_bias.data()) EXPECT_EQ(g, 0.0);
    EXPECT_NEAR(step.total, step.l_sc + cfg.lambda_reg * step.l_reg, 1e-12);
}

TEST(Finetune, DeterministicUnderSeed) {
    Fixture f(small_config());
    const ModelParams pre = init_params(f.vocab.size(), 8, 8, 3, 3);
    const FinetuneResult a = finetune(f.cfg, pre, f.data.train, f.data.test, f.vocab);
    const FinetuneResult b = finetune(f.cfg, pre, f.data.train, f.data.test, f.vocab);
    EXPECT_EQ(a.log, b.log);
    EXPECT_EQ(a.clean, b.clean);
    EXPECT_EQ(a.asr, b.asr);
    EXPECT_EQ(a.metrics.size(), 2u);
}

TEST(Finetune, LoggedGammaFollowsSchedule) {
    Fixture f(small_config());
    const ModelParams pre = init_params(f.vocab.size(), 8, 8, 3, 3);
    const FinetuneResult r = finetune(f.cfg, pre, f.data.train, {}, f.vocab);
    ASSERT_EQ(r.log.size(), 12u);
    for (const auto& row : r.log) {
        EXPECT_EQ(row.gamma, gamma_at(row.iter, f.cfg));
        EXPECT_EQ(row.lr, warmup_lr(row.iter, f.cfg.peak_lr, f.cfg.warmup_steps));
        EXPECT_NEAR(row.total,
                    row.l_ce + f.cfg.alpha * row.l_mut + f.cfg.beta * row.l_creg + row.gamma * row.l_d, 1e-9);
    }
    EXPECT_EQ(r.log.front().gamma, 0.0);
}

TEST(Finetune, GammaDisabledAndScaled) {
    TrainConfig cfg = small_config();
    cfg.anneal = false;
    cfg.gamma_scale = 0.5;
    EXPECT_EQ(gamma_at(1, cfg), 0.5);
    cfg.anneal = true;
    cfg.anneal_G = 10;
    EXPECT_DOUBLE_EQ(gamma_at(3, cfg), 0.5 * 0.4);
}

TEST(Finetune, WithoutManualTranscriptsCleanModelIsFrozen) {
    TrainConfig cfg = small_config();
    cfg.use_manual_transcripts = false;
    Fixture f(cfg);
    const ModelParams pre = init_params(f.vocab.size(), 8, 8, 3, 3);
    const FinetuneResult r = finetune(f.cfg, pre, f.data.train, {}, f.vocab);
    EXPECT_EQ(r.clean, pre);
    EXPECT_NE(r.asr, pre);
    for (const auto& row : r.log) {
        EXPECT_EQ(row.l_mut, 0.0);
        EXPECT_EQ(row.l_ce_clean, 0.0);
        EXPECT_EQ(row.l_creg_clean, 0.0);
        EXPECT_EQ(row.l_d_clean, 0.0);
    }
}

TEST(Finetune, CleanSidePartsAreLoggedWithManualTranscripts) {
    Fixture f(small_config());
    const ModelParams pre = init_params(f.vocab.size(), 8, 8, 3, 3);
    const FinetuneResult r = finetune(f.cfg, pre, f.data.train, {}, f.vocab);
    for (const auto& row : r.log) {
        EXPECT_GT(row.l_ce_clean, 0.0);
        EXPECT_LE(row.l_ce_clean, row.l_ce);
        EXPECT_GT(row.l_mut, 0.0);
    }
}

TEST(Finetune, CleanSideTermsVanishWithoutManualTranscripts) {
    TrainConfig cfg = small_config();
    cfg.use_manual_transcripts = false;
    Fixture f(cfg);
    const ModelParams clean = init_params(f.vocab.size(), 8, 8, 3, 3);
    const ModelParams asr = init_params(f.vocab.size(), 8, 8, 3, 4);
    const Batch batch = materialize_batch(f.data.train, {0, 1, 2, 3, 4, 5}, f.vocab, 16);
    const auto cache_c = PredictionCache::from_labels(f.data.train);
    const auto cache_q = PredictionCache::from_labels(f.data.train);
    const FinetuneStep off = finetune_step_gradients(cfg, clean, asr, batch, cache_c, cache_q, 0.7);
    EXPECT_EQ(off.l_mut, 0.0);
    EXPECT_EQ(off.grad_clean, ModelParams::zeros(clean.dims));

    // the noisy-side terms alone must match the manual run's noisy half
    TrainConfig only_noisy = cfg;
    only_noisy.use_manual_transcripts = true;
    only_noisy.alpha = 0.0;
    const FinetuneStep on = finetune_step_gradients(only_noisy, clean, asr, batch, cache_c, cache_q, 0.7);
    EXPECT_EQ(off.grad_asr, on.grad_asr);
}

TEST(Finetune, ModelsIndependentWithoutMutualTerm) {
    TrainConfig cfg = small_config();
    cfg.alpha = 0.0;
    Fixture f(cfg);
    const ModelParams pre = init_params(f.vocab.size(), 8, 8, 3, 3);
    const FinetuneResult joint = finetune(cfg, pre, f.data.train, {}, f.vocab);
    TrainConfig solo = cfg;
    solo.use_manual_transcripts = false;
    const FinetuneResult alone = finetune(solo, pre, f.data.train, {}, f.vocab);
    EXPECT_EQ(joint.asr, alone.asr);
}

TEST(PredictionCache, SeededWithOneHotLabels) {
    Fixture f(small_config());
    const auto cache = PredictionCache::from_labels(f.data.train);
    EXPECT_EQ(cache.kind(), TargetKind::one_hot_labels);
    ASSERT_EQ(cache.size(), f.data.train.size());
    for (const auto& ex : f.data.train.examples) EXPECT_EQ(cache.at(ex.id)[static_cast<std::size_t>(ex.label)], 1.0);
}

TEST(PredictionCache, RefreshStoresPredictions) {
    Fixture f(small_config());
    const ModelParams m = init_params(f.vocab.size(), 8, 8, 3, 9);
    auto cache = PredictionCache::from_labels(f.data.train);
    const Predictions preds = predict(m, f.data.train, Side::noisy, f.vocab, 16);
    cache.refresh(f.data.train, preds);
    EXPECT_EQ(cache.kind(), TargetKind::predictions);
    for (std::size_t i = 0; i < f.data.train.size(); ++i) EXPECT_EQ(cache.at(f.data.train.examples[i].id), preds.probs[i]);
    EXPECT_THROW(cache.refresh(f.data.test, preds), Error);
}

TEST(Predict, ZeroClassifierIsUniformWithLowestArgmax) {
    Fixture f(small_config());
    ModelParams m = init_params(f.vocab.size(), 8, 8, 3, 9);
    m.classifier_weight.fill(0.0);
    m.classifier_bias.fill(0.0);
    const Predictions preds = predict(m, f.data.test, Side::noisy, f.vocab, 16);
    for (std::size_t i = 0; i < preds.probs.size(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(preds.probs[i][k], 1.0 / 3.0, 1e-15);
        EXPECT_EQ(preds.labels[i], 0);
    }
}

TEST(Predict, SchemaMismatch) {
    Fixture f(small_config());
    const ModelParams wrong_classes = init_params(f.vocab.size(), 8, 8, 4, 1);
    const ModelParams wrong_vocab = init_params(f.vocab.size() + 1, 8, 8, 3, 1);
    for (const ModelParams* m : {&wrong_classes, &wrong_vocab}) {
        try {
            predict(*m, f.data.test, Side::clean, f.vocab, 16);
            ADD_FAILURE();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::schema_mismatch);
        }
    }
}

TEST(Evaluate, ReportIsConsistent) {
    Fixture f(small_config());
    const ModelParams m = init_params(f.vocab.size(), 8, 8, 3, 9);
    EncodedPairs pairs;
    const MetricsReport r = evaluate(m, m, f.data.test, f.vocab, f.cfg, &pairs);
    EXPECT_EQ(pairs.batch.size(), 2 * f.data.test.size());
    EXPECT_EQ(r.margin_occupancy, margin_occupancy(pairwise_distance_matrix(pairs.batch), f.cfg.margin()));
    EXPECT_EQ(r.accuracy_noisy,
              evaluate_accuracy(predict(m, f.data.test, Side::noisy, f.vocab, 16).labels, gold_labels(f.data.test)));
    EXPECT_EQ(r.per_class_accuracy.size(), 3u);
}
