#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "sltk/fusion/model.hpp"
#include "test_util.hpp"

namespace sltk::fusion {
namespace {

using testing::random_batch;
using testing::random_features;
using testing::tiny_config;
using Mat = Matrix<double>;

TEST(EncodeStream, SingleFrameGivesOneRow) {
    FusionModel<double> model(tiny_config());
    Rng rng(1);
    FeatureStream s{"c", Modality::global, random_features(rng, 1, 6)};
    Mat e = model.encode_stream(s);
    EXPECT_EQ(e.rows(), 1);
    EXPECT_EQ(e.cols(), 8);
}

TEST(EncodeStream, EvalModeIsBitwiseDeterministic) {
    FusionModel<double> model(tiny_config());
    Rng rng(2);
    FeatureStream s{"c", Modality::hand, random_features(rng, 5, 4)};
    Mat a = model.encode_stream(s), b = model.encode_stream(s);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())));
}

TEST(EncodeStream, PaddedBatchMatchesUnpaddedOnRealRows) {
    FusionModel<double> model(tiny_config());
    Rng rng(3);
    std::vector<FeatureStream> batch;
    for (int t : {2, 7, 4, 1})
        batch.push_back({"c" + std::to_string(t), Modality::mouthing, random_features(rng, t, 5)});
    auto padded = model.encode_padded(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Mat single = model.encode_stream(batch[i]);
        ASSERT_EQ(padded[i].rows(), 7);
        EXPECT_LT((padded[i].topRows(single.rows()) - single).cwiseAbs().maxCoeff(), 1e-5) << "item " << i;
    }
}

TEST(EncodeStream, DisabledModalityIsAConfigError) {
    auto cfg = tiny_config();
    cfg.enabled_streams = {Modality::global};
    FusionModel<double> model(cfg);
    Rng rng(4);
    FeatureStream s{"c", Modality::hand, random_features(rng, 3, 4)};
    EXPECT_THROW(model.encode_stream(s), ConfigError);
}

TEST(EncodeStream, WrongWidthIsAnInputError) {
    FusionModel<double> model(tiny_config());
    Rng rng(5);
    FeatureStream s{"c", Modality::global, random_features(rng, 3, 5)};
    EXPECT_THROW(model.encode_stream(s), InputError);
}

// Dense reference: softmax((qWq+bq)(eWk+bk)^T / sqrt(dk)) per head, weighted
// value projections, output projection.
struct DenseCross {
    Mat context;
    std::vector<Mat> weights;
};

DenseCross dense_cross_attention(ParamStore<double> &p, const std::string &prefix, const Mat &q, const Mat &e,
                                 int heads, const std::vector<char> &valid) {
    auto W = [&](const std::string &n) { return p.at(prefix + "." + n + ".weight").value; };
    auto B = [&](const std::string &n) { return Eigen::RowVectorXd(p.at(prefix + "." + n + ".bias").value.row(0)); };
    Mat Q = (q * W("q")).rowwise() + B("q");
    Mat K = (e * W("k")).rowwise() + B("k");
    Mat V = (e * W("v")).rowwise() + B("v");
    const long dk = Q.cols() / heads;
    Mat concat(q.rows(), Q.cols());
    DenseCross out;
    for (int h = 0; h < heads; ++h) {
        Mat s = Q.middleCols(h * dk, dk) * K.middleCols(h * dk, dk).transpose() / std::sqrt(double(dk));
        Mat w = Mat::Zero(s.rows(), s.cols());
        for (long r = 0; r < s.rows(); ++r) {
            double z = 0;
            for (long c = 0; c < s.cols(); ++c)
                if (valid[c])
                    z += std::exp(s(r, c));
            for (long c = 0; c < s.cols(); ++c)
                if (valid[c])
                    w(r, c) = std::exp(s(r, c)) / z;
        }
        out.weights.push_back(w);
        concat.middleCols(h * dk, dk) = w * V.middleCols(h * dk, dk);
    }
    out.context = (concat * W("o")).rowwise() + B("o");
    return out;
}

Mat random_mat(Rng &rng, long r, long c) {
    Mat m(r, c);
    for (long i = 0; i < m.size(); ++i)
        m.data()[i] = rng.uniform(-1, 1);
    return m;
}

TEST(CrossAttend, SinglePositionReturnsItsValueProjection) {
    FusionModel<double> model(tiny_config());
    Rng rng(6);
    Mat q = random_mat(rng, 3, 8), e = random_mat(rng, 1, 8);
    auto r = model.cross_attend(0, Modality::global, q, e, {1});
    auto &p = model.params();
    const std::string pre = "dec.layer0.cross.global";
    Eigen::RowVectorXd v = e.row(0) * p.at(pre + ".v.weight").value + p.at(pre + ".v.bias").value.row(0);
    Eigen::RowVectorXd expected = v * p.at(pre + ".o.weight").value + p.at(pre + ".o.bias").value.row(0);
    for (long row = 0; row < 3; ++row)
        EXPECT_LT((r.context.row(row) - expected).cwiseAbs().maxCoeff(), 1e-12);
    for (const auto &w : r.weights)
        EXPECT_EQ(w.cwiseAbs().minCoeff(), 1.0);
}

TEST(CrossAttend, IdenticalKeysGiveUniformWeights) {
    FusionModel<double> model(tiny_config());
    Rng rng(7);
    Mat q = random_mat(rng, 2, 8);
    Mat e = random_mat(rng, 1, 8).replicate(5, 1);
    auto r = model.cross_attend(1, Modality::mouthing, q, e, std::vector<char>(5, 1));
    for (const auto &w : r.weights)
        EXPECT_LT((w.array() - 0.2).abs().maxCoeff(), 1e-12);
}

TEST(CrossAttend, MatchesDenseOracle) {
    FusionModel<double> model(tiny_config());
    Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        Mat q = random_mat(rng, 4, 8), e = random_mat(rng, 4, 8);
        std::vector<char> valid{1, 1, 0, 1};
        auto r = model.cross_attend(1, Modality::hand, q, e, valid);
        auto d = dense_cross_attention(model.params(), "dec.layer1.cross.hand", q, e, 2, valid);
        EXPECT_LT((r.context - d.context).cwiseAbs().maxCoeff(), 1e-12);
        for (int h = 0; h < 2; ++h) {
            EXPECT_LT((r.weights[h] - d.weights[h]).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_EQ(r.weights[h].col(2).cwiseAbs().maxCoeff(), 0.0);
        }
    }
}

TEST(CrossAttend, FullyMaskedSourceIsAnError) {
    FusionModel<double> model(tiny_config());
    Rng rng(9);
    EXPECT_THROW(model.cross_attend(0, Modality::global, random_mat(rng, 2, 8), random_mat(rng, 3, 8), {0, 0, 0}),
                 InputError);
}

TEST(FuseContexts, ConcatenatesAllStreams) {
    auto cfg = tiny_config();
    cfg.model_dim = 16;
    FusionModel<double> model(cfg);
    Graph<double> g(false);
    Rng rng(10);
    std::vector<std::pair<Modality, Var>> ctx;
    for (Modality m : kAllModalities)
        ctx.emplace_back(m, g.constant(random_mat(rng, 3, 16)));
    auto f = model.fuse_contexts(g, 0, ctx);
    EXPECT_EQ(g.value(f.concat).cols(), 48);
    EXPECT_EQ(g.value(f.fused).cols(), 16);
    EXPECT_EQ(g.value(f.concat).middleCols(16, 16), g.value(ctx[1].second));
}

TEST(FuseContexts, SingleStreamConcatIsIdentity) {
    auto cfg = tiny_config();
    cfg.enabled_streams = {Modality::mouthing};
    FusionModel<double> model(cfg);
    Graph<double> g(false);
    Rng rng(11);
    Var c = g.constant(random_mat(rng, 2, 8));
    auto f = model.fuse_contexts(g, 1, {{Modality::mouthing, c}});
    EXPECT_EQ(g.value(f.concat), g.value(c));
}

TEST(FuseContexts, PermutedOrderIsRejected) {
    FusionModel<double> model(tiny_config());
    Graph<double> g(false);
    Rng rng(12);
    std::vector<std::pair<Modality, Var>> ctx{{Modality::mouthing, g.constant(random_mat(rng, 2, 8))},
                                              {Modality::global, g.constant(random_mat(rng, 2, 8))},
                                              {Modality::hand, g.constant(random_mat(rng, 2, 8))}};
    EXPECT_THROW(model.fuse_contexts(g, 0, ctx), InvariantError);
}

TEST(Forward, UntrainedLossIsNearUniform) {
    auto cfg = tiny_config(40);
    cfg.model_dim = 32;
    cfg.ffn_dim = 128;
    FusionModel<double> model(cfg);
    Rng rng(13);
    auto batch = random_batch(rng, cfg, 16);
    auto res = model.forward(batch, false);
    EXPECT_NEAR(res.loss, std::log(40.0), 0.05 * std::log(40.0));
    ASSERT_EQ(res.logits.size(), 16u);
    EXPECT_EQ(res.logits[0].cols(), 40);
}

TEST(Forward, LaterTargetsNeverChangeEarlierLogits) {
    FusionModel<double> model(tiny_config());
    Rng rng(14);
    auto batch = random_batch(rng, model.config(), 1);
    batch[0].target = {1, 5, 6, 7, 8, 2};
    auto a = model.forward(batch, false).logits[0];
    batch[0].target = {1, 5, 6, 9, 4, 2};
    auto b = model.forward(batch, false).logits[0];
    // Inputs are target[:-1]; positions 0..2 see only BOS,5,6.
    EXPECT_EQ(a.topRows(3), b.topRows(3));
    EXPECT_NE(a.row(3), b.row(3));
}

TEST(Forward, MatchesIncrementalRecomputation) {
    FusionModel<double> model(tiny_config());
    Rng rng(15);
    auto batch = random_batch(rng, model.config(), 3);
    auto full = model.forward(batch, false);
    double total = 0.0;
    std::size_t n = 0;
    for (const auto &ex : batch) {
        auto src = model.encode_source(ex.streams);
        for (std::size_t pos = 1; pos < ex.target.size(); ++pos) {
            std::vector<int> prefix(ex.target.begin(), ex.target.begin() + static_cast<long>(pos));
            auto lp = model.next_log_probs(src, prefix);
            total -= lp(ex.target[pos]);
            ++n;
        }
    }
    EXPECT_EQ(n, full.tokens);
    EXPECT_NEAR(total / static_cast<double>(n), full.loss, 1e-10);
}

TEST(Forward, PaddingLabelsAreIgnored) {
    FusionModel<double> model(tiny_config());
    Rng rng(16);
    auto batch = random_batch(rng, model.config(), 2);
    batch[0].target = {1, 5, 2};
    batch[1].target = {1, 5, 6, 7, 8, 2};
    auto both = model.forward(batch, false);
    auto first = model.forward({batch[0]}, false);
    auto second = model.forward({batch[1]}, false);
    EXPECT_EQ(both.tokens, 7u);
    EXPECT_NEAR(both.loss * 7, first.loss * 2 + second.loss * 5, 1e-10);
}

TEST(Forward, OutOfVocabularyTokenIsAnInputError) {
    FusionModel<double> model(tiny_config());
    Rng rng(17);
    auto batch = random_batch(rng, model.config(), 1);
    batch[0].target = {1, 10, 2};
    EXPECT_THROW(model.forward(batch, false), InputError);
}

TEST(Forward, MissingStreamIsAnInputError) {
    FusionModel<double> model(tiny_config());
    Rng rng(18);
    auto batch = random_batch(rng, model.config(), 1);
    batch[0].streams.pop_back();
    EXPECT_THROW(model.forward(batch, false), InputError);
}

TEST(Parameters, CountMatchesClosedForm) {
    for (int streams = 1; streams <= 3; ++streams) {
        auto cfg = tiny_config(13);
        cfg.enabled_streams.assign(kAllModalities.begin(), kAllModalities.begin() + streams);
        FusionModel<double> model(cfg);
        EXPECT_EQ(model.params().scalar_count(), expected_param_count(cfg));
    }
}

TEST(Parameters, AblationRemovesExactlyTheStreamBlocks) {
    auto full_cfg = tiny_config();
    auto abl_cfg = full_cfg;
    abl_cfg.enabled_streams = {Modality::global, Modality::hand};
    FusionModel<double> full(full_cfg), abl(abl_cfg);
    std::size_t removed = 0;
    for (const auto &t : full.params()) {
        const bool mouthing = t.name.find("mouthing") != std::string::npos;
        if (mouthing) {
            removed += static_cast<std::size_t>(t.value.size());
            EXPECT_FALSE(abl.params().contains(t.name));
        } else {
            ASSERT_TRUE(abl.params().contains(t.name)) << t.name;
        }
    }
    const std::size_t d = 8;
    const std::size_t fuse_rows = full_cfg.dec_layers * d * d;
    EXPECT_EQ(full.params().scalar_count() - abl.params().scalar_count(), removed + fuse_rows);
    EXPECT_EQ(removed + fuse_rows, encoder_params(full_cfg, Modality::mouthing) + stream_decoder_params(full_cfg));
}

TEST(Model, FloatInstantiationRuns) {
    FusionModel<float> model(tiny_config());
    Rng rng(19);
    auto batch = random_batch(rng, model.config(), 2);
    auto res = model.forward(batch, true);
    EXPECT_TRUE(std::isfinite(res.loss));
}

} // namespace
} // namespace sltk::fusion
