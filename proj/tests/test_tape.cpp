#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <vector>

#include "doctest.h"
#include "navrep/error.hpp"
#include "navrep/gradcheck.hpp"
#include "navrep/params.hpp"
#include "navrep/tape.hpp"

using namespace navrep;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::int64_t> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.data) x = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("linear forward") {
    Tape tape;
    ParamStore store;
    ParamCtx P(tape, store);
    store.create("w_identity", Tensor({2, 2}, {1, 0, 0, 1}));
    store.create("b_zero", Tensor({2}, {0, 0}));

    Var x = tape.constant(Tensor::vec({1, 0}));
    Var y = linear(x, P("w_identity"), P("b_zero"));
    CHECK(y.val().data == std::vector<double>{1, 0});

    // y = x W^T with W = [[1,0],[1,1]] maps [1,2] -> [1*1+2*0, 1*1+2*1] = [1,3]
    store.create("w_shear", Tensor({2, 2}, {1, 0, 1, 1}));
    Var x2 = tape.constant(Tensor::vec({1, 2}));
    Var y2 = linear(x2, P("w_shear"), P("b_zero"));
    CHECK(y2.val().data == std::vector<double>{1, 3});

    // zero input returns the bias
    store.create("b_off", Tensor({2}, {0.5, -2}));
    Var x3 = tape.constant(Tensor::vec({0, 0}));
    Var y3 = linear(x3, P("w_shear"), P("b_off"));
    CHECK(y3.val().data == std::vector<double>{0.5, -2});

    // shape mismatch is an error
    Var bad = tape.constant(Tensor::vec({1, 2, 3}));
    CHECK_THROWS_AS(linear(bad, P("w_shear"), std::nullopt), std::invalid_argument);
}

TEST_CASE("softmax closed forms and stability") {
    Tape tape;
    Var uniform = softmax(tape.constant(Tensor::vec({0, 0, 0})));
    for (double v : uniform.val().data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Var log_logits = softmax(tape.constant(Tensor::vec({std::log(2.0), 0.0, 0.0})));
    CHECK(log_logits.val().at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(log_logits.val().at(1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(log_logits.val().at(2) == doctest::Approx(0.25).epsilon(1e-12));

    // shift invariance and row sums over random 2-D inputs
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor(rng, {4, 6}, -3, 3);
        Tensor shifted = x;
        const double c = rng.uniform(-50, 50);
        for (auto& v : shifted.data) v += c;
        Tape t2;
        Var a = softmax(t2.constant(x));
        Var b = softmax(t2.constant(shifted));
        for (std::int64_t i = 0; i < 4; ++i) {
            double row_sum = 0;
            for (std::int64_t j = 0; j < 6; ++j) {
                row_sum += a.val().at(i, j);
                CHECK(a.val().at(i, j) == doctest::Approx(b.val().at(i, j)).epsilon(1e-9));
                CHECK(a.val().at(i, j) > 0.0);
            }
            CHECK(std::abs(row_sum - 1.0) < 1e-12);
        }
    }

    // max-subtraction keeps huge logits finite
    Tape t3;
    Var huge = softmax(t3.constant(Tensor::vec({1000, 1000, 1000})));
    for (double v : huge.val().data) CHECK(v == doctest::Approx(1.0 / 3));
}

TEST_CASE("layer_norm") {
    Tape tape;
    ParamStore store;
    ParamCtx P(tape, store);
    store.create("gain1", Tensor({4}, {1, 1, 1, 1}));
    store.create("bias0", Tensor({4}, {0, 0, 0, 0}));

    // constant row: epsilon clamps the zero variance, output is zero
    Var c = layer_norm(tape.constant(Tensor::vec({2.5, 2.5, 2.5, 2.5})), P("gain1"), P("bias0"));
    for (double v : c.val().data) CHECK(v == doctest::Approx(0.0));

    store.create("gain2", Tensor({2}, {1, 1}));
    store.create("bias2", Tensor({2}, {0, 0}));
    Var pm = layer_norm(tape.constant(Tensor::vec({1, -1})), P("gain2"), P("bias2"));
    const double factor = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(pm.val().at(0) == doctest::Approx(factor).epsilon(1e-12));
    CHECK(pm.val().at(1) == doctest::Approx(-factor).epsilon(1e-12));

    // gain 0 passes the bias through
    store.create("gain_zero", Tensor({2}, {0, 0}));
    store.create("bias_b", Tensor({2}, {0.7, -1.3}));
    Var b = layer_norm(tape.constant(Tensor::vec({3, 9})), P("gain_zero"), P("bias_b"));
    CHECK(b.val().data == std::vector<double>{0.7, -1.3});

    // per-row mean ~0 and unit variance pre-affine on random non-degenerate rows
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor(rng, {3, 16}, -2, 2);
        Tape t2;
        ParamStore s2;
        ParamCtx P2(t2, s2);
        s2.create("g", Tensor::full({16}, 1.0));
        s2.create("b", Tensor::zeros({16}));
        Var y = layer_norm(t2.constant(x), P2("g"), P2("b"));
        for (std::int64_t i = 0; i < 3; ++i) {
            double m = 0, v = 0;
            for (std::int64_t j = 0; j < 16; ++j) m += y.val().at(i, j);
            m /= 16;
            for (std::int64_t j = 0; j < 16; ++j) v += (y.val().at(i, j) - m) * (y.val().at(i, j) - m);
            v /= 16;
            CHECK(std::abs(m) < 1e-10);
            CHECK(std::abs(v - 1.0) < 1e-4);
        }
    }
}

TEST_CASE("cosine similarity") {
    Tape tape;
    Var a = tape.constant(Tensor::vec({0.3, -0.7, 2.0}));
    CHECK(cosine_sim(a, a).scalar() == doctest::Approx(1.0).epsilon(1e-12));

    Var e1 = tape.constant(Tensor::vec({1, 0}));
    Var e2 = tape.constant(Tensor::vec({0, 1}));
    CHECK(cosine_sim(e1, e2).scalar() == doctest::Approx(0.0));

    Var v11 = tape.constant(Tensor::vec({1, 1}));
    CHECK(cosine_sim(v11, e1).scalar() == doctest::Approx(0.7071067811865475).epsilon(1e-12));

    Var zero = tape.constant(Tensor::vec({0, 0}));
    CHECK_THROWS_AS(cosine_sim(zero, e1), NumericsError);

    // symmetry and scale invariance on random vectors
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        Tensor ta = random_tensor(rng, {8});
        Tensor tb = random_tensor(rng, {8});
        const double lam = rng.uniform(0.1, 9.0);
        Tape t2;
        Var x = t2.constant(ta);
        Var y = t2.constant(tb);
        Tensor scaled = ta;
        for (auto& v : scaled.data) v *= lam;
        Var xs = t2.constant(scaled);
        const double c1 = cosine_sim(x, y).scalar();
        CHECK(cosine_sim(y, x).scalar() == doctest::Approx(c1).epsilon(1e-12));
        CHECK(cosine_sim(xs, y).scalar() == doctest::Approx(c1).epsilon(1e-10));
        CHECK(c1 >= -1.0 - 1e-12);
        CHECK(c1 <= 1.0 + 1e-12);
    }
}

TEST_CASE("lstm_step") {
    const int hidden = 3, in_dim = 2;
    Tape tape;
    ParamStore store;
    ParamCtx P(tape, store);
    store.create("wx", Tensor::zeros({4 * hidden, in_dim}));
    store.create("wh", Tensor::zeros({4 * hidden, hidden}));
    store.create("b", Tensor::zeros({4 * hidden}));

    Var x = tape.constant(Tensor::vec({0.5, -0.5}));
    Var h0 = tape.constant(Tensor::zeros({hidden}));
    Var c0 = tape.constant(Tensor::zeros({hidden}));
    auto [h1, c1] = lstm_step(x, h0, c0, P("wx"), P("wh"), P("b"));
    for (double v : h1.val().data) CHECK(v == 0.0);
    for (double v : c1.val().data) CHECK(v == 0.0);

    // saturated forget gate preserves the cell state
    Tensor bias = Tensor::zeros({4 * hidden});
    for (int i = hidden; i < 2 * hidden; ++i) bias.at(i) = 30.0;   // forget gate
    for (int i = 0; i < hidden; ++i) bias.at(i) = -30.0;           // input gate shut
    store.value("b") = bias;
    Tape t2;
    ParamCtx P2(t2, store);
    Var c_in = t2.constant(Tensor::vec({0.3, -0.2, 0.9}));
    Var h_in = t2.constant(Tensor::vec({0.1, 0.0, -0.4}));
    Var x2 = t2.constant(Tensor::vec({0.2, 0.7}));
    auto [h2, c2] = lstm_step(x2, h_in, c_in, P2("wx"), P2("wh"), P2("b"));
    (void)h2;
    for (int i = 0; i < hidden; ++i)
        CHECK(c2.val().at(i) == doctest::Approx(c_in.val().at(i)).epsilon(1e-12));
}

TEST_CASE("lstm_step vs hand-rolled oracle") {
    const int hidden = 4, in_dim = 3;
    Rng rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor wx = random_tensor(rng, {4 * hidden, in_dim});
        Tensor wh = random_tensor(rng, {4 * hidden, hidden});
        Tensor b = random_tensor(rng, {4 * hidden});
        Tensor x = random_tensor(rng, {in_dim});
        Tensor h = random_tensor(rng, {hidden});
        Tensor c = random_tensor(rng, {hidden});

        // independent plain-loop evaluation
        std::vector<double> z(4 * hidden, 0.0);
        for (int i = 0; i < 4 * hidden; ++i) {
            double acc = b.at(i);
            for (int j = 0; j < in_dim; ++j) acc += wx.at(i, j) * x.at(j);
            for (int j = 0; j < hidden; ++j) acc += wh.at(i, j) * h.at(j);
            z[static_cast<std::size_t>(i)] = acc;
        }
        auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
        std::vector<double> h_ref(hidden), c_ref(hidden);
        for (int i = 0; i < hidden; ++i) {
            const double ig = sig(z[static_cast<std::size_t>(i)]);
            const double fg = sig(z[static_cast<std::size_t>(i + hidden)]);
            const double gg = std::tanh(z[static_cast<std::size_t>(i + 2 * hidden)]);
            const double og = sig(z[static_cast<std::size_t>(i + 3 * hidden)]);
            c_ref[static_cast<std::size_t>(i)] = fg * c.at(i) + ig * gg;
            h_ref[static_cast<std::size_t>(i)] = og * std::tanh(c_ref[static_cast<std::size_t>(i)]);
        }

        Tape tape;
        ParamStore store;
        ParamCtx P(tape, store);
        store.create("wx", wx);
        store.create("wh", wh);
        store.create("b", b);
        auto [h1, c1] = lstm_step(tape.constant(x), tape.constant(h), tape.constant(c), P("wx"), P("wh"), P("b"));
        for (int i = 0; i < hidden; ++i) {
            CHECK(std::abs(h1.val().at(i) - h_ref[static_cast<std::size_t>(i)]) < 1e-10);
            CHECK(std::abs(c1.val().at(i) - c_ref[static_cast<std::size_t>(i)]) < 1e-10);
        }
    }
}

TEST_CASE("non-finite outputs are rejected") {
    Tape tape;
    Var big = tape.constant(Tensor::vec({1000.0}));
    CHECK_THROWS_AS(exp_(big), NumericsError);
    Var z = tape.constant(Tensor::vec({0.0}));
    CHECK_THROWS_AS(log_(z), NumericsError);
    Var a = tape.constant(Tensor::vec({1.0}));
    CHECK_THROWS_AS(div(a, z), NumericsError);
}

TEST_CASE("grad_check: exact quadratic") {
    ParamStore store;
    Rng rng(5);
    store.create("x", random_tensor(rng, {12}));
    auto f = [](Tape&, ParamCtx& P) { return dot(P("x"), P("x")); };
    auto res = grad_check(store, f, 12, rng);
    CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("grad_check: every op family within 1e-4 over 20 seeds") {
    using Builder = std::function<Var(Tape&, ParamCtx&)>;
    struct Case {
        const char* name;
        std::function<void(ParamStore&, Rng&)> init;
        Builder f;
    };

    auto rt = [](Rng& rng, std::vector<std::int64_t> shape, double lo = -1.0, double hi = 1.0) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (auto& x : t.data) x = rng.uniform(lo, hi);
        return t;
    };

    std::vector<Case> cases;
    cases.push_back({"elementwise",
                     [&](ParamStore& s, Rng& r) {
                         s.create("a", rt(r, {3, 4}));
                         s.create("b", rt(r, {3, 4}, 0.5, 1.5));
                     },
                     [](Tape&, ParamCtx& P) {
                         Var m = mul(add(P("a"), P("b")), sub(P("a"), P("b")));
                         return mean(div(m, P("b")));
                     }});
    cases.push_back({"activations",
                     [&](ParamStore& s, Rng& r) { s.create("a", rt(r, {10})); },
                     [](Tape&, ParamCtx& P) {
                         Var a = P("a");
                         Var u = add(tanh_(a), sigmoid(a));
                         Var v = add(relu(a), exp_(scale(a, 0.3)));
                         Var w = log_(add(exp_(a), exp_(neg(a))));  // always > 0
                         return sum(add(add(u, v), add(w, sqrt_(add(mul(a, a), exp_(scale(a, 0.0)))))));
                     }});
    cases.push_back({"matmul-transpose",
                     [&](ParamStore& s, Rng& r) {
                         s.create("a", rt(r, {3, 5}));
                         s.create("b", rt(r, {5, 2}));
                     },
                     [](Tape&, ParamCtx& P) { return sum(matmul(P("a"), transpose(transpose(P("b"))))); }});
    cases.push_back({"matvec-vecmat",
                     [&](ParamStore& s, Rng& r) {
                         s.create("a", rt(r, {4, 6}));
                         s.create("x", rt(r, {6}));
                         s.create("y", rt(r, {4}));
                     },
                     [](Tape&, ParamCtx& P) {
                         return add(sum(matvec(P("a"), P("x"))), sum(vecmat(P("y"), P("a"))));
                     }});
    cases.push_back({"linear",
                     [&](ParamStore& s, Rng& r) {
                         s.create("x", rt(r, {3, 5}));
                         s.create("w", rt(r, {4, 5}));
                         s.create("b", rt(r, {4}));
                     },
                     [](Tape&, ParamCtx& P) { return sum(tanh_(linear(P("x"), P("w"), P("b")))); }});
    cases.push_back({"softmax",
                     [&](ParamStore& s, Rng& r) { s.create("x", rt(r, {3, 7}, -2, 2)); },
                     [](Tape&, ParamCtx& P) {
                         Var p = softmax(P("x"));
                         Var lp = log_softmax(P("x"));
                         return add(sum(mul(p, p)), sum(mul(lp, p)));
                     }});
    cases.push_back({"softmax-axis0",
                     [&](ParamStore& s, Rng& r) { s.create("x", rt(r, {3, 4}, -2, 2)); },
                     [](Tape&, ParamCtx& P) { return sum(mul(softmax(P("x"), 0), P("x"))); }});
    cases.push_back({"layer_norm",
                     [&](ParamStore& s, Rng& r) {
                         s.create("x", rt(r, {4, 8}));
                         s.create("g", rt(r, {8}, 0.5, 1.5));
                         s.create("b", rt(r, {8}));
                     },
                     [](Tape&, ParamCtx& P) { return sum(mul(layer_norm(P("x"), P("g"), P("b")), P("x"))); }});
    cases.push_back({"gather-structure",
                     [&](ParamStore& s, Rng& r) {
                         s.create("t", rt(r, {6, 4}));
                         s.create("v", rt(r, {9}));
                     },
                     [](Tape&, ParamCtx& P) {
                         Var e = embed(P("t"), {1, 3, 3, 5});
                         Var g = gather_rows(P("t"), {0, 2, 2});
                         Var rowv = row(P("t"), 4);
                         Var sl = slice(P("v"), 2, 4);
                         Var cat = concat_vec({rowv, sl});
                         Var st = stack_rows({sl, sl});
                         Var vs = vstack({e, g});
                         Var hs = hstack(e, e);
                         return add(add(sum(vs), sum(hs)), add(sum(cat), add(sum(st), sum(reshape(e, {16})))));
                     }});
    cases.push_back({"reductions",
                     [&](ParamStore& s, Rng& r) {
                         s.create("a", rt(r, {5, 3}));
                         s.create("x", rt(r, {6}, 0.2, 1.0));
                         s.create("y", rt(r, {6}, -1.0, -0.2));
                     },
                     [](Tape&, ParamCtx& P) {
                         Var reduced = add(mean(P("a")), sum(mean_rows(P("a"))));
                         Var d = dot(P("x"), P("y"));
                         Var picked = pick(P("a"), 7);
                         return add(add(reduced, d), add(picked, norm(P("x"))));
                     }});
    cases.push_back({"cosine",
                     [&](ParamStore& s, Rng& r) {
                         s.create("x", rt(r, {6}, 0.2, 1.0));
                         s.create("y", rt(r, {6}, -1.0, -0.2));
                     },
                     [](Tape&, ParamCtx& P) { return cosine_sim(P("x"), P("y")); }});
    cases.push_back({"lstm",
                     [&](ParamStore& s, Rng& r) {
                         s.create("wx", rt(r, {12, 5}));
                         s.create("wh", rt(r, {12, 3}));
                         s.create("b", rt(r, {12}));
                         s.create("x", rt(r, {5}));
                         s.create("h", rt(r, {3}));
                         s.create("c", rt(r, {3}));
                     },
                     [](Tape&, ParamCtx& P) {
                         auto [h1, c1] = lstm_step(P("x"), P("h"), P("c"), P("wx"), P("wh"), P("b"));
                         auto [h2, c2] = lstm_step(P("x"), h1, c1, P("wx"), P("wh"), P("b"));
                         (void)c2;
                         return sum(mul(h2, h2));
                     }});
    cases.push_back({"dropout",
                     [&](ParamStore& s, Rng& r) { s.create("x", rt(r, {24})); },
                     [](Tape&, ParamCtx& P) {
                         Rng mask_rng(1234);  // same mask on every re-evaluation
                         return sum(mul(dropout(P("x"), 0.25, mask_rng), P("x")));
                     }});

    for (int seed = 0; seed < 20; ++seed) {
        for (auto& c : cases) {
            ParamStore store;
            Rng rng(static_cast<std::uint64_t>(1000 + seed));
            c.init(store, rng);
            auto res = grad_check(store, c.f, 6, rng);
            INFO("op case ", c.name, " seed ", seed, " worst param ", res.worst_param);
            CHECK(res.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("optimizers reduce a quadratic") {
    for (int which = 0; which < 2; ++which) {
        ParamStore store;
        Rng rng(31 + static_cast<std::uint64_t>(which));
        store.create("x", random_tensor(rng, {16}, -2, 2));
        auto loss_value = [&]() {
            Tape tape;
            ParamCtx P(tape, store);
            return dot(P("x"), P("x")).scalar();
        };
        const double before = loss_value();
        AdamW adamw;
        adamw.lr = 0.05;
        adamw.weight_decay = 0.0;
        RmsProp rms;
        rms.lr = 0.05;
        for (int it = 0; it < 50; ++it) {
            store.zero_grad();
            Tape tape;
            ParamCtx P(tape, store);
            Var loss = dot(P("x"), P("x"));
            tape.backward(loss);
            if (which == 0) adamw.step(store);
            else rms.step(store);
        }
        CHECK(loss_value() < 0.2 * before);
    }
}

TEST_CASE("optimizer prefix split only touches matching parameters") {
    ParamStore store;
    Rng rng(8);
    store.create("lang.w", random_tensor(rng, {4}));
    store.create("nav.w", random_tensor(rng, {4}));
    const Tensor nav_before = store.value("nav.w");
    store.entry("lang.w").grad = Tensor::full({4}, 1.0);
    store.entry("nav.w").grad = Tensor::full({4}, 1.0);
    AdamW opt;
    opt.step(store, "lang.");
    CHECK(store.value("nav.w").data == nav_before.data);
    CHECK(store.value("lang.w").data != nav_before.data);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    ParamStore store;
    Rng rng(77);
    store.create("alpha", random_tensor(rng, {7, 3}, -1e3, 1e3));
    store.create("beta", random_tensor(rng, {13}));
    // awkward values round-trip too
    store.value("beta").at(0) = 0.1 + 0.2;
    store.value("beta").at(1) = 1e-308;
    store.value("beta").at(2) = -0.0;

    const std::string path = (std::filesystem::temp_directory_path() / "navrep_ckpt_test.bin").string();
    save_checkpoint(store, path);
    ParamStore loaded;
    load_checkpoint(loaded, path);
    REQUIRE(loaded.size() == store.size());
    for (const auto& name : store.names()) {
        REQUIRE(loaded.contains(name));
        CHECK(loaded.value(name).shape == store.value(name).shape);
        const auto& a = store.value(name).data;
        const auto& b = loaded.value(name).data;
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            // bit-exact, including signed zero
            CHECK(std::memcmp(&a[i], &b[i], sizeof(double)) == 0);
        }
    }
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_checkpoint(store, "/nonexistent/nope.bin"), DataError);
}

TEST_CASE("tape backward accumulates into parameter gradients") {
    ParamStore store;
    store.create("w", Tensor({2}, {3.0, 4.0}));
    Tape tape;
    ParamCtx P(tape, store);
    Var loss = dot(P("w"), P("w"));
    tape.backward(loss);
    CHECK(store.entry("w").grad.data == std::vector<double>{6.0, 8.0});

    // reusing the same parameter twice leases one node
    Tape t2;
    ParamCtx P2(t2, store);
    Var a = P2("w");
    Var b = P2("w");
    CHECK(a.idx == b.idx);
}
