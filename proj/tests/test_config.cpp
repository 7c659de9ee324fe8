#include <gtest/gtest.h>

#include "mllmcl/config.hpp"

using namespace mllmcl;

namespace {

ErrorKind kind_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorKind::io_error;
}

}  // namespace

TEST(Config, FormatParseRoundTrip) {
    TrainConfig cfg;
    cfg.seed = 123;
    cfg.tau_sc = 0.1 + 0.2;
    cfg.anneal = false;
    cfg.corpus_path = "data/x.jsonl";
    const std::string text = format_config(cfg);
    EXPECT_NE(text.find("seed = 123\n"), std::string::npos);
    EXPECT_NE(text.find("anneal = false\n"), std::string::npos);
    EXPECT_NE(text.find("corpus_path = data/x.jsonl\n"), std::string::npos);
    const TrainConfig back = parse_config(text);
    EXPECT_EQ(back.seed, 123);
    EXPECT_EQ(back.tau_sc, cfg.tau_sc);
    EXPECT_FALSE(back.anneal);
    EXPECT_EQ(back.corpus_path, cfg.corpus_path);
    EXPECT_EQ(format_config(back), text);
}

TEST(Config, DefaultsFormatAsNumbers) {
    const std::string text = format_config(TrainConfig{});
    EXPECT_NE(text.find("warmup_steps = 4000\n"), std::string::npos);
    EXPECT_NE(text.find("peak_lr = 0.001\n"), std::string::npos);
    EXPECT_NE(text.find("lambda_reg = 0.10000000000000001\n"), std::string::npos);
}

TEST(Config, CommentsAndBlankLines) {
    const TrainConfig cfg = parse_config("# header\n\n  tau_c = 0.5   # trailing\nalpha=2\n");
    EXPECT_EQ(cfg.tau_c, 0.5);
    EXPECT_EQ(cfg.alpha, 2.0);
    EXPECT_EQ(cfg.beta, TrainConfig{}.beta);
}

TEST(Config, UnknownKeyIsNamed) {
    try {
        parse_config("tua_sc = 0.2\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_config);
        EXPECT_NE(std::string(e.what()).find("tua_sc"), std::string::npos);
    }
}

TEST(Config, BadValuesAndLines) {
    EXPECT_EQ(kind_of([] { parse_config("seed = 1.5\n"); }), ErrorKind::invalid_config);
    EXPECT_EQ(kind_of([] { parse_config("tau_sc = abc\n"); }), ErrorKind::invalid_config);
    EXPECT_EQ(kind_of([] { parse_config("anneal = maybe\n"); }), ErrorKind::invalid_config);
    try {
        parse_config("seed = 1\njust words\n", "f.cfg");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("f.cfg:2"), std::string::npos);
    }
}

TEST(Config, Validation) {
    TrainConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.delta_plus = 0.6;
    EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::invalid_margin);
    cfg = TrainConfig{};
    cfg.tau_d = 0;
    EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::invalid_config);
    cfg = TrainConfig{};
    cfg.lambda_pt = 1.5;
    EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::invalid_config);
}

TEST(Config, MissingFileIsIoError) {
    EXPECT_EQ(kind_of([] { load_config("/nonexistent/dir/x.cfg"); }), ErrorKind::io_error);
}
