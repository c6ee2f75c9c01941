#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "grela/encoders.hpp"
#include "grela/image_io.hpp"
#include "oracles.hpp"

using namespace grela;

namespace {

Encoders make_encoders(ParamStore& store, const EncoderConfig& cfg,
                       int vocab_total, std::uint64_t seed) {
    Rng rng(seed);
    return Encoders(store, cfg, vocab_total, rng);
}

Image random_image(int h, int w, Rng& rng) {
    Image img = Image::filled(h, w, 0, 0, 0);
    for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng.uniform_int(256));
    return img;
}

void set_all(Tensor& t, double v) {
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = v;
}

bool same_values(const Tensor& a, const Tensor& b, double tol = 0.0) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a.at(i) - b.at(i)) > tol) return false;
    return true;
}

}  // namespace

TEST_CASE("tokenizer lowercases, strips punctuation, splits on whitespace") {
    CHECK(tokenize("The Red, Circle!") == std::vector<std::string>{"the", "red", "circle"});
    CHECK(tokenize("  everything   except\tthe blue square ") ==
          std::vector<std::string>{"everything", "except", "the", "blue", "square"});
    CHECK(tokenize("don't") == std::vector<std::string>{"dont"});
    CHECK(tokenize("...!?").empty());
    CHECK(tokenize("").empty());
    CHECK(tokenize("A2 b") == std::vector<std::string>{"a2", "b"});
}

TEST_CASE("vocabulary assigns sorted contiguous ids with reserved 0 and 1") {
    Vocabulary v = Vocabulary::build({"the red circle", "The blue Square!", "red square"});
    // sorted unique: blue circle red square the
    CHECK(v.tokens() == std::vector<std::string>{"blue", "circle", "red", "square", "the"});
    CHECK(v.total_ids() == 7);
    CHECK(v.id_of("blue") == 2);
    CHECK(v.id_of("circle") == 3);
    CHECK(v.id_of("the") == 6);
    CHECK(v.id_of("triangle") == 1);  // unknown
    CHECK(v.id_of("") == 1);
}

TEST_CASE("vocabulary file round trip preserves line-order ids") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "grela_vocab_test";
    fs::create_directories(dir);
    std::string path = (dir / "vocab.txt").string();

    Vocabulary v = Vocabulary::build({"green triangle above the red circle"});
    v.save(path);
    Vocabulary loaded = Vocabulary::load(path);
    CHECK(loaded.tokens() == v.tokens());
    for (const auto& tok : v.tokens()) CHECK(loaded.id_of(tok) == v.id_of(tok));

    // id equals 0-based line number plus two
    std::ifstream in(path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        CHECK(loaded.id_of(line) == line_no + 2);
        ++line_no;
    }
    CHECK(line_no == static_cast<int>(v.tokens().size()));

    CHECK_THROWS_AS(Vocabulary::load((dir / "missing.txt").string()), IoError);
    fs::remove_all(dir);
}

TEST_CASE("image encoding produces one feature row per patch") {
    ParamStore store;
    EncoderConfig cfg;  // 48x48, patch 4, C=32
    Encoders enc = make_encoders(store, cfg, 10, 42);

    Rng rng(7);
    Image img = random_image(48, 48, rng);
    ImageFeature f = enc.encode_image(img);
    CHECK(f.t.shape == std::vector<int>{144, 32});
    CHECK(f.h == 12);
    CHECK(f.w == 12);
    CHECK(f.c == 32);

    // deterministic: same image twice gives identical values
    ImageFeature g = enc.encode_image(img);
    CHECK(same_values(f.t, g.t));
}

TEST_CASE("all-black image reduces the patch stage to the position table") {
    ParamStore store;
    EncoderConfig cfg;
    Encoders enc = make_encoders(store, cfg, 10, 42);

    Image black = Image::filled(48, 48, 0, 0, 0);
    Tensor pe = enc.patch_embed(black);
    // projection of zeros with zero bias leaves exactly the position entries
    CHECK(same_values(pe, store.at("img.pos"), 1e-15));
    // and the full encoder still runs the residual blocks on top
    ImageFeature f = enc.encode_image(black);
    CHECK(f.t.shape == std::vector<int>{144, 32});
}

TEST_CASE("single-pixel change stays inside its patch before the residual blocks") {
    ParamStore store;
    EncoderConfig cfg;
    Encoders enc = make_encoders(store, cfg, 10, 3);

    Rng rng(11);
    Image img = random_image(48, 48, rng);
    Tensor base = enc.patch_embed(img);

    // pixel (y=13, x=30) lives in patch row (13/4)*12 + 30/4 = 3*12+7 = 43
    Image poked = img;
    poked.px(13, 30)[1] = static_cast<std::uint8_t>(poked.px(13, 30)[1] ^ 0xFF);
    Tensor after = enc.patch_embed(poked);

    const int touched = 43;
    bool touched_changed = false;
    for (int r = 0; r < 144; ++r) {
        bool row_changed = false;
        for (int c = 0; c < 32; ++c)
            if (base.at(r, c) != after.at(r, c)) row_changed = true;
        if (r == touched)
            touched_changed = row_changed;
        else
            CHECK_FALSE(row_changed);
    }
    CHECK(touched_changed);
}

TEST_CASE("images that do not fit the patch grid or the encoder are rejected") {
    ParamStore store;
    EncoderConfig cfg;
    Encoders enc = make_encoders(store, cfg, 10, 5);

    Image bad = Image::filled(50, 48, 0, 0, 0);  // 50 not divisible by 4
    CHECK_THROWS_AS(enc.encode_image(bad), InputError);

    Image mismatched = Image::filled(44, 48, 0, 0, 0);  // divisible, wrong size
    CHECK_THROWS_AS(enc.encode_image(mismatched), InputError);

    // configuration itself must be divisible
    ParamStore store2;
    EncoderConfig bad_cfg;
    bad_cfg.image_h = 50;
    Rng rng(1);
    CHECK_THROWS_AS(Encoders(store2, bad_cfg, 10, rng), ConfigError);
}

TEST_CASE("text encoding yields one row per token") {
    ParamStore store;
    EncoderConfig cfg;
    Vocabulary vocab = Vocabulary::build({"the red circle on the left"});
    Encoders enc = make_encoders(store, cfg, vocab.total_ids(), 21);

    TextFeature f = enc.encode_text("the red circle", vocab);
    CHECK(f.t.shape == std::vector<int>{3, 32});
    CHECK(f.token_ids.size() == 3);
    CHECK(f.token_ids[0] == vocab.id_of("the"));
    CHECK(f.token_ids[1] == vocab.id_of("red"));
    CHECK(f.token_ids[2] == vocab.id_of("circle"));

    CHECK_THROWS_AS(enc.encode_text("", vocab), InputError);
    CHECK_THROWS_AS(enc.encode_text("?!.,", vocab), InputError);

    std::string too_long;
    for (int i = 0; i < 17; ++i) too_long += "red ";
    CHECK_THROWS_AS(enc.encode_text(too_long, vocab), InputError);
}

TEST_CASE("distinct unknown words encode identically, token order does not") {
    ParamStore store;
    EncoderConfig cfg;
    Vocabulary vocab = Vocabulary::build({"the red circle"});
    Encoders enc = make_encoders(store, cfg, vocab.total_ids(), 9);

    TextFeature a = enc.encode_text("the zebra circle", vocab);
    TextFeature b = enc.encode_text("the walrus circle", vocab);
    CHECK(a.token_ids == b.token_ids);  // both middles are the unknown id
    CHECK(same_values(a.t, b.t));

    TextFeature fwd = enc.encode_text("red circle", vocab);
    TextFeature rev = enc.encode_text("circle red", vocab);
    REQUIRE(fwd.t.shape == rev.t.shape);
    bool any_diff = false;
    for (std::size_t i = 0; i < fwd.t.size(); ++i)
        if (fwd.t.at(i) != rev.t.at(i)) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("text attention matches a scalar-loop oracle") {
    ParamStore store;
    EncoderConfig cfg;
    cfg.channels = 8;
    Vocabulary vocab = Vocabulary::build({"the red circle on the far left side"});
    Encoders enc = make_encoders(store, cfg, vocab.total_ids(), 33);

    std::string expr = "the red circle on the left";
    TextFeature f = enc.encode_text(expr, vocab);
    const int n = static_cast<int>(f.token_ids.size());
    const int c = cfg.channels;

    // rebuild by hand: e = tok_emb[ids] + pos[0..n), attn with 1/sqrt(C)
    std::vector<double> e(static_cast<std::size_t>(n) * c);
    const Tensor& tok = store.at("txt.tok_emb");
    const Tensor& pos = store.at("txt.pos");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
            e[static_cast<std::size_t>(i) * c + j] = tok.at(f.token_ids[i], j) + pos.at(i, j);
    auto mat = [&](const char* name) {
        const Tensor& t = store.at(name);
        return std::vector<double>(t.data->begin(), t.data->end());
    };
    auto q = oracle::naive_matmul(e, mat("txt.attn_q"), n, c, c);
    auto k = oracle::naive_matmul(e, mat("txt.attn_k"), n, c, c);
    auto v = oracle::naive_matmul(e, mat("txt.attn_v"), n, c, c);
    std::vector<double> kt(k.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) kt[static_cast<std::size_t>(j) * n + i] = k[static_cast<std::size_t>(i) * c + j];
    auto logits = oracle::naive_matmul(q, kt, n, c, n);
    for (double& x : logits) x /= std::sqrt(static_cast<double>(c));
    auto attn = oracle::naive_softmax_rows(logits, n, n);
    auto ctx = oracle::naive_matmul(attn, v, n, n, c);
    for (std::size_t i = 0; i < ctx.size(); ++i) {
        CHECK(std::abs((e[i] + ctx[i]) - f.t.at(i)) < 1e-10);
    }
}

TEST_CASE("pixel decoding keeps the feature grid and defaults to identity at zero") {
    ParamStore store;
    EncoderConfig cfg;
    Encoders enc = make_encoders(store, cfg, 10, 17);

    Rng rng(2);
    Image img = random_image(48, 48, rng);
    ImageFeature f = enc.encode_image(img);
    MaskFeature m = enc.pixel_decode(f);
    CHECK(m.t.shape == f.t.shape);
    CHECK(m.h == f.h);
    CHECK(m.w == f.w);

    // zeroed decoder weights make the residual path an exact identity
    for (const char* name : {"pix.l1.w", "pix.l1.b", "pix.l2.w", "pix.l2.b"})
        set_all(store.at(name), 0.0);
    MaskFeature ident = enc.pixel_decode(f);
    CHECK(same_values(ident.t, f.t));
}

TEST_CASE("gradients flow from decoded masks back to the image parameters") {
    ParamStore store;
    EncoderConfig cfg;
    cfg.channels = 6;
    cfg.image_h = 8;
    cfg.image_w = 8;
    Encoders enc = make_encoders(store, cfg, 10, 77);

    Rng rng(4);
    Image img = random_image(8, 8, rng);

    store.zero_grads();
    Tensor loss = sum_all(enc.pixel_decode(enc.encode_image(img)).t);
    backward(loss);

    auto grad_norm = [&](const char* name) {
        const Tensor& t = store.at(name);
        double s = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) s += std::abs(t.grad_at(i));
        return s;
    };
    CHECK(grad_norm("img.proj.w") > 0.0);
    CHECK(grad_norm("img.pos") > 0.0);
    CHECK(grad_norm("img.block1_l1.w") > 0.0);
    CHECK(grad_norm("img.block2_l2.b") > 0.0);
    CHECK(grad_norm("pix.l1.w") > 0.0);
    CHECK(grad_norm("txt.tok_emb") == 0.0);  // text path untouched
}

TEST_CASE("encoder gradients agree with central differences") {
    ParamStore store;
    EncoderConfig cfg;
    cfg.channels = 4;
    cfg.image_h = 8;
    cfg.image_w = 8;
    Vocabulary vocab = Vocabulary::build({"red circle left"});
    Encoders enc = make_encoders(store, cfg, vocab.total_ids(), 123);

    Rng rng(5);
    Image img = random_image(8, 8, rng);
    auto image_loss = [&] {
        Tensor out = enc.pixel_decode(enc.encode_image(img)).t;
        return sum_all(mul(out, out));
    };
    for (const char* name : {"img.proj.w", "img.proj.b", "img.pos",
                             "img.block1_l1.w", "img.block2_l2.w", "pix.l1.w",
                             "pix.l2.b"}) {
        CAPTURE(name);
        CHECK(oracle::max_grad_err(store.at(name), image_loss) < 1e-3);
    }

    auto text_loss = [&] {
        Tensor out = enc.encode_text("red circle left", vocab).t;
        return sum_all(mul(out, out));
    };
    for (const char* name : {"txt.tok_emb", "txt.pos", "txt.attn_q",
                             "txt.attn_k", "txt.attn_v"}) {
        CAPTURE(name);
        CHECK(oracle::max_grad_err(store.at(name), text_loss) < 1e-3);
    }
}
