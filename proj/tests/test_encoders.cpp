#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vila/encoders.hpp"
#include "vila/rng.hpp"
#include "vila/tensor.hpp"

using namespace vila;

TEST_CASE("tokenization: lowercase alnum runs, order kept, L = token count") {
    // "Fine-grained NUCLEAR detail." -> fine, grained, nuclear, detail
    // "second line" -> second, line
    auto e = embed_description({"Fine-grained NUCLEAR detail.", "second line"}, 1, 4);
    CHECK(e->rows == 6);
    CHECK(e->cols == 4);
}

TEST_CASE("token embedding rows depend only on token text and vocab seed") {
    auto a = embed_description({"alpha beta alpha"}, 7, 8);
    REQUIRE(a->rows == 3);
    for (int j = 0; j < 8; ++j) CHECK(a->at(0, j) == a->at(2, j));  // repeated token
    bool differs = false;
    for (int j = 0; j < 8; ++j) differs |= (a->at(0, j) != a->at(1, j));
    CHECK(differs);

    auto b = embed_description({"Alpha BETA alpha"}, 7, 8);  // case-insensitive
    CHECK(a->values == b->values);
    auto c = embed_description({"alpha beta alpha"}, 8, 8);  // other vocab
    CHECK(a->values != c->values);
    CHECK_FALSE(a->requires_grad);
    CHECK_THROWS_AS(embed_description({"..."}, 7, 8), std::invalid_argument);
}

TEST_CASE("assemble_prompt prepends context; M = 0 passes the description through") {
    Tape tape;
    auto desc = embed_description({"one two three"}, 1, 4);
    auto ctx = Tensor::from(2, 4, {1, 2, 3, 4, 5, 6, 7, 8}, true);
    auto seq = assemble_prompt(tape, ctx, desc);
    CHECK(seq->rows == 5);
    CHECK(seq->at(0, 0) == 1);
    CHECK(seq->at(2, 0) == desc->at(0, 0));

    auto bare = assemble_prompt(tape, nullptr, desc);
    CHECK(bare.get() == desc.get());
    auto bad = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(assemble_prompt(tape, bad, desc), std::invalid_argument);
}

TEST_CASE("frozen encoder: deterministic, unit layer-norm output, frozen weights") {
    FrozenTextEncoder enc(8, 7);
    CHECK_FALSE(enc.projection()->requires_grad);

    Tape tape;
    auto seq = embed_description({"coarse tissue pattern"}, 3, 8);
    auto f1 = enc.encode(tape, seq);
    auto f2 = enc.encode(tape, seq);
    CHECK(f1->values == f2->values);
    CHECK(f1->rows == 1);
    CHECK(f1->cols == 8);
    // row layer norm: zero mean, unit population variance
    double mean = 0.0, var = 0.0;
    for (double v : f1->values) mean += v;
    mean /= 8;
    for (double v : f1->values) var += (v - mean) * (v - mean);
    var /= 8;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));

    FrozenTextEncoder other(8, 8);
    Tape t2;
    CHECK(other.encode(t2, seq)->values != f1->values);
}

TEST_CASE("frozen encoder golden fixture, seed 7") {
    // frozen reference values for encode(embed("prototype marker", vocab 7), d=4)
    FrozenTextEncoder enc(4, 7);
    Tape tape;
    auto seq = embed_description({"prototype marker"}, 7, 4);
    auto f = enc.encode(tape, seq);
    const std::vector<double> golden = {
        1.2439751930628065, -1.1360576841686507, 0.7062668309004948, -0.81418433979465055};
    REQUIRE(f->size() == golden.size());
    for (std::size_t i = 0; i < golden.size(); ++i)
        CHECK(f->values[i] == doctest::Approx(golden[i]).epsilon(1e-12));
}

TEST_CASE("gradient reaches the context vectors through the frozen encoder") {
    const int d = 6;
    FrozenTextEncoder enc(d, 7);
    auto desc = embed_description({"alpha beta gamma delta"}, 2, d);
    auto ctx = Tensor::from(2, d, gaussian_vector(2 * d, 5, 0.0, 0.02), true);

    auto loss_value = [&] {
        Tape tape;
        auto feat = enc.encode(tape, assemble_prompt(tape, ctx, desc));
        return sum_all(tape, mul_elem(tape, feat, feat));
    };
    ctx->zero_grad();
    {
        Tape tape;
        auto feat = enc.encode(tape, assemble_prompt(tape, ctx, desc));
        auto loss = sum_all(tape, mul_elem(tape, feat, feat));
        tape.backward(loss);
    }
    bool nonzero = false;
    for (double g : ctx->grad) nonzero |= (g != 0.0);
    CHECK(nonzero);

    // finite-difference spot check on one entry
    const double h = 1e-6;
    const double saved = ctx->values[3];
    ctx->values[3] = saved + h;
    const double up = loss_value()->values[0];
    ctx->values[3] = saved - h;
    const double down = loss_value()->values[0];
    ctx->values[3] = saved;
    const double fd = (up - down) / (2 * h);
    CHECK(ctx->grad[3] == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("encoder weights receive no gradient") {
    FrozenTextEncoder enc(4, 7);
    auto desc = embed_description({"one two"}, 2, 4);
    auto ctx = Tensor::from(1, 4, gaussian_vector(4, 9, 0.0, 0.02), true);
    Tape tape;
    auto feat = enc.encode(tape, assemble_prompt(tape, ctx, desc));
    tape.backward(sum_all(tape, mul_elem(tape, feat, feat)));
    CHECK(enc.projection()->grad.empty());
    CHECK(desc->grad.empty());
}

TEST_CASE("prompt set: per-scale contexts differ, descriptions frozen, M = 16 shape") {
    auto cfg = synthetic_descriptions({"a", "b", "c"});
    auto set = PromptSet::build(cfg, 16, 8, 3, 4);
    CHECK(set.low.context->rows == 16);
    CHECK(set.low.context->requires_grad);
    CHECK(set.low.context->values != set.high.context->values);
    CHECK(set.low.descriptions.size() == 3);
    CHECK_FALSE(set.low.descriptions[0]->requires_grad);

    Tape tape;
    auto seq = assemble_prompt(tape, set.low.context, set.low.descriptions[0]);
    CHECK(seq->rows == 16 + set.low.descriptions[0]->rows);

    auto empty = PromptSet::build(cfg, 0, 8, 3, 4);
    CHECK(empty.low.context == nullptr);
    FrozenTextEncoder enc(8, 7);
    Tape t2;
    auto feats = encode_class_prompts(t2, empty.low, enc);
    CHECK(feats->rows == 3);
}

TEST_CASE("shipped renal prompts yield distinct class features") {
    auto cfg = read_descriptions(VILA_ASSET_DIR "/prompts_renal.json",
                                 {"CCRCC", "PRCC", "CRCC"});
    REQUIRE(cfg.sentences.size() == 3);
    for (int c = 0; c < 3; ++c)
        for (Scale s : {Scale::Low, Scale::High}) CHECK_FALSE(cfg.get(c, s).empty());

    const int d = 64;
    auto set = PromptSet::build(cfg, 0, d, 7, 1);
    FrozenTextEncoder enc(d, 7);
    for (const auto* prompts : {&set.low, &set.high}) {
        Tape tape;
        auto feats = encode_class_prompts(tape, *prompts, enc);
        REQUIRE(feats->rows == 3);
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b) {
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (int j = 0; j < d; ++j) {
                    dot += feats->at(a, j) * feats->at(b, j);
                    na += feats->at(a, j) * feats->at(a, j);
                    nb += feats->at(b, j) * feats->at(b, j);
                }
                CHECK(dot / std::sqrt(na * nb) < 0.999);
            }
    }

    // missing class name in the asset -> configuration error
    CHECK_THROWS_AS(read_descriptions(VILA_ASSET_DIR "/prompts_renal.json", {"NOPE"}),
                    std::invalid_argument);
}

TEST_CASE("synthetic descriptions are distinct per class and scale") {
    auto cfg = synthetic_descriptions({"x", "y"});
    CHECK(cfg.get(0, Scale::Low) != cfg.get(0, Scale::High));
    CHECK(cfg.get(0, Scale::Low) != cfg.get(1, Scale::Low));
    CHECK(cfg.class_names == std::vector<std::string>{"x", "y"});
}
