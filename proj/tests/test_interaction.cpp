#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "relseg/interaction.hpp"
#include "relseg/tensor.hpp"

#include "oracles.hpp"

using namespace relseg;

TEST_CASE("ipc_forward with a single key position returns that value projection") {
    std::mt19937_64 rng(11);
    const int c = 4;
    const Tensor img = oracles::random_tensor(rng, {c, 1, 1}, -1.0f, 1.0f);
    const Tensor pl = oracles::random_tensor(rng, {c, 1, 1}, -1.0f, 1.0f);
    const AttentionParams params = AttentionParams::random(c, c, 5);

    const Tensor out = ipc_forward(img, pl, params);
    // softmax over one element is 1, so the output is W_v * pl
    for (int d = 0; d < c; ++d) {
        double want = 0.0;
        for (int cc = 0; cc < c; ++cc) want += static_cast<double>(params.w_v.at(d, cc)) * pl[cc];
        CHECK(out[d] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("ipc_forward with identical keys averages uniformly") {
    std::mt19937_64 rng(13);
    const int c = 3, h = 4, w = 4;
    const Tensor img = oracles::random_tensor(rng, {c, h, w}, -1.0f, 1.0f);
    Tensor pl({c, h, w});
    for (int cc = 0; cc < c; ++cc) {
        const float v = 0.3f * static_cast<float>(cc + 1);
        for (int i = 0; i < h * w; ++i) pl[cc * h * w + i] = v;
    }
    const AttentionParams params = AttentionParams::random(c, c, 6);
    const Tensor out = ipc_forward(img, pl, params);
    // constant keys: attention logits are constant per query, so every
    // query sees the uniform mean of identical values
    for (int d = 0; d < c; ++d) {
        double want = 0.0;
        for (int cc = 0; cc < c; ++cc) {
            want += static_cast<double>(params.w_v.at(d, cc)) * pl[cc * h * w];
        }
        for (int i = 0; i < h * w; ++i) {
            CHECK(out[d * h * w + i] == doctest::Approx(want).epsilon(1e-5));
        }
    }
}

TEST_CASE("ipc_forward matches the naive O((HW)^2) oracle") {
    std::mt19937_64 rng(17);
    for (int it = 0; it < 4; ++it) {
        const int c = 4;
        const Tensor img = oracles::random_tensor(rng, {c, 3, 3}, -1.0f, 1.0f);
        const Tensor pl = oracles::random_tensor(rng, {c, 3, 3}, -1.0f, 1.0f);
        const AttentionParams params = AttentionParams::random(c, c, 50 + it);
        const Tensor got = ipc_forward(img, pl, params);
        const Tensor want =
            oracles::naive_attention(img, pl, pl, params.w_q, params.w_k, params.w_v);
        REQUIRE(got.shape() == want.shape());
        for (std::int64_t i = 0; i < got.numel(); ++i) {
            CHECK(std::fabs(got[i] - want[i]) < 1e-5);
        }
    }
}

TEST_CASE("ipc_forward constant values pass through (rows sum to one)") {
    std::mt19937_64 rng(19);
    const int c = 3, h = 3, w = 5;
    const Tensor img = oracles::random_tensor(rng, {c, h, w}, -2.0f, 2.0f);
    Tensor pl({c, h, w});
    // distinct keys but constant per-channel values would not give constant
    // value projections; instead make every pixel's value vector equal by
    // using constant pl and random keys via a separate param set
    AttentionParams params = AttentionParams::random(c, c, 21);
    for (int cc = 0; cc < c; ++cc)
        for (int i = 0; i < h * w; ++i) pl[cc * h * w + i] = 0.4f * static_cast<float>(cc) - 0.3f;
    const Tensor out = ipc_forward(img, pl, params);
    for (int d = 0; d < c; ++d) {
        double want = 0.0;
        for (int cc = 0; cc < c; ++cc) want += static_cast<double>(params.w_v.at(d, cc)) * pl[cc * h * w];
        for (int i = 0; i < h * w; ++i) {
            CHECK(out[d * h * w + i] == doctest::Approx(want).epsilon(1e-5));
        }
    }
}

TEST_CASE("ipc_forward is permutation-equivariant in key positions") {
    std::mt19937_64 rng(23);
    const int c = 3, h = 2, w = 3;
    const Tensor img = oracles::random_tensor(rng, {c, h, w}, -1.0f, 1.0f);
    const Tensor pl = oracles::random_tensor(rng, {c, h, w}, -1.0f, 1.0f);
    const AttentionParams params = AttentionParams::random(c, c, 31);

    // permute pl pixels; values move with their keys so outputs are unchanged
    std::vector<int> perm(static_cast<size_t>(h * w));
    for (int i = 0; i < h * w; ++i) perm[static_cast<size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor pl_perm({c, h, w});
    for (int cc = 0; cc < c; ++cc)
        for (int i = 0; i < h * w; ++i) {
            pl_perm[cc * h * w + i] = pl[cc * h * w + perm[static_cast<size_t>(i)]];
        }

    const Tensor a = ipc_forward(img, pl, params);
    const Tensor b = ipc_forward(img, pl_perm, params);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
}

TEST_CASE("pia_forward") {
    std::mt19937_64 rng(29);
    const int c = 3, h = 3, w = 3;

    SUBCASE("K=2 with identical feature maps is symmetric") {
        const Tensor f = oracles::random_tensor(rng, {c, h, w}, -1.0f, 1.0f);
        const AttentionParams params = AttentionParams::random(c, c, 41);
        const auto outs = pia_forward({f, f}, params);
        REQUIRE(outs.size() == 2);
        for (std::int64_t i = 0; i < outs[0].numel(); ++i) {
            CHECK(outs[0][i] == doctest::Approx(outs[1][i]).epsilon(1e-6));
        }
    }
    SUBCASE("zero-value path contributes nothing to others") {
        AttentionParams params = AttentionParams::random(c, c, 43);
        const Tensor zero({c, h, w}, 0.0f);
        const Tensor f = oracles::random_tensor(rng, {c, h, w}, -1.0f, 1.0f);
        // path 1 = zeros: its value projection is zero, so path 0's output
        // over keys {path1} alone is all-zero
        const auto outs = pia_forward({f, zero}, params);
        for (std::int64_t i = 0; i < outs[0].numel(); ++i) {
            CHECK(outs[0][i] == doctest::Approx(0.0).epsilon(1e-6));
        }
    }
    SUBCASE("K=3 matches the naive oracle with concatenated keys") {
        const Tensor f0 = oracles::random_tensor(rng, {c, h, w}, -1.0f, 1.0f);
        const Tensor f1 = oracles::random_tensor(rng, {c, h, w}, -1.0f, 1.0f);
        const Tensor f2 = oracles::random_tensor(rng, {c, h, w}, -1.0f, 1.0f);
        const AttentionParams params = AttentionParams::random(c, c, 47);
        const auto outs = pia_forward({f0, f1, f2}, params);

        // oracle: stack the other two paths' positions into one [c, 2h, w]
        // map and run naive attention against it
        auto stack2 = [&](const Tensor& a, const Tensor& b) {
            Tensor s({c, 2 * h, w});
            for (int cc = 0; cc < c; ++cc) {
                std::copy_n(a.data() + cc * h * w, h * w, s.data() + cc * 2 * h * w);
                std::copy_n(b.data() + cc * h * w, h * w, s.data() + cc * 2 * h * w + h * w);
            }
            return s;
        };
        const Tensor kv0 = stack2(f1, f2);
        const Tensor want0 =
            oracles::naive_attention(f0, kv0, kv0, params.w_q, params.w_k, params.w_v);
        for (std::int64_t i = 0; i < outs[0].numel(); ++i) {
            CHECK(std::fabs(outs[0][i] - want0[i]) < 1e-5);
        }
    }
    SUBCASE("K < 2 rejected") {
        const AttentionParams params = AttentionParams::random(c, c, 53);
        std::vector<Tensor> one;
        one.push_back(Tensor({c, h, w}, 0.5f));
        CHECK_THROWS_AS(pia_forward(one, params), Error);
    }
}

TEST_CASE("sigma_head") {
    std::mt19937_64 rng(59);
    const int c = 4, h = 5, w = 5;
    const Tensor fused = oracles::random_tensor(rng, {c, h, w}, -1.0f, 1.0f);

    SUBCASE("zero weights and bias give the neutral map") {
        const Tensor s = sigma_head(fused, Tensor({1, c, 3, 3}), 0.0f);
        for (std::int64_t i = 0; i < s.numel(); ++i) CHECK(s[i] == 0.0f);
    }
    SUBCASE("bias-only head is constant") {
        const Tensor s = sigma_head(fused, Tensor({1, c, 3, 3}), -1.25f);
        for (std::int64_t i = 0; i < s.numel(); ++i) CHECK(s[i] == -1.25f);
    }
    SUBCASE("random weights match the conv oracle") {
        const Tensor wt = oracles::random_tensor(rng, {1, c, 3, 3}, -0.5f, 0.5f);
        const Tensor got = sigma_head(fused, wt, 0.2f);
        const Tensor want = oracles::naive_conv2d_same(fused, wt, {0.2f});
        REQUIRE(got.ndim() == 2);
        for (std::int64_t i = 0; i < got.numel(); ++i) {
            CHECK(std::fabs(got[i] - want[i]) < 1e-5);
        }
    }
}

TEST_CASE("attention weight bundles round-trip through the manifest format") {
    const AttentionParams params = AttentionParams::random(5, 3, 71);
    const auto dir = std::filesystem::temp_directory_path() / "relseg_test_attn_bundle";
    save_bundle(dir, params.to_bundle());
    const AttentionParams back = AttentionParams::from_bundle(load_bundle(dir));
    CHECK(back.d_in() == 5);
    CHECK(back.d_att() == 3);
    for (std::int64_t i = 0; i < params.w_q.numel(); ++i) CHECK(back.w_q[i] == params.w_q[i]);
    for (std::int64_t i = 0; i < params.sigma_w.numel(); ++i) {
        CHECK(back.sigma_w[i] == params.sigma_w[i]);
    }
    std::filesystem::remove_all(dir);
}
