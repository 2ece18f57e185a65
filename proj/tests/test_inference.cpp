#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "relseg/config_json.hpp"
#include "relseg/inference.hpp"

#include "oracles.hpp"

using namespace relseg;

TEST_CASE("tta_average") {
    std::mt19937_64 rng(8);
    SUBCASE("constant prob source is a fixed point of every mode") {
        const Tensor image = oracles::random_tensor(rng, {6, 6}, 0.0f, 1.0f);
        const ProbFn constant = [](const Tensor& img) { return Tensor(img.shape(), 0.42f); };
        for (TtaMode mode : {TtaMode::None, TtaMode::Flip2, TtaMode::Flip4}) {
            const Tensor out = tta_average(constant, image, mode);
            for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.42f);
        }
    }
    SUBCASE("pixelwise (flip-equivariant) sources collapse the average") {
        const Tensor image = oracles::random_tensor(rng, {5, 7}, 0.01f, 0.99f);
        const ProbFn pixelwise = [](const Tensor& img) {
            Tensor out(img.shape());
            for (std::int64_t i = 0; i < img.numel(); ++i) {
                out[i] = 0.5f * img[i] + 0.2f;
            }
            return out;
        };
        const Tensor single = pixelwise(image);
        const Tensor averaged = tta_average(pixelwise, image, TtaMode::Flip4);
        CHECK(std::memcmp(single.data(), averaged.data(), sizeof(float) * single.numel()) == 0);
    }
    SUBCASE("view-dependent source equals the 4-term hand average") {
        const Tensor image = oracles::random_tensor(rng, {4, 4}, 0.1f, 0.9f);
        // injects a horizontal coordinate ramp, so each view really differs
        const ProbFn skewed = [](const Tensor& img) {
            Tensor out(img.shape());
            const int w = img.extent(1);
            for (int y = 0; y < img.extent(0); ++y)
                for (int x = 0; x < w; ++x) {
                    out.at(y, x) = 0.5f * img.at(y, x) + 0.05f * static_cast<float>(x);
                }
            return out;
        };
        const Tensor got = tta_average(skewed, image, TtaMode::Flip4);
        Tensor want(image.shape());
        const Tensor views[4] = {
            skewed(image), flip(skewed(flip(image, FlipMode::H)), FlipMode::H),
            flip(skewed(flip(image, FlipMode::V)), FlipMode::V),
            flip(skewed(flip(image, FlipMode::HV)), FlipMode::HV)};
        for (std::int64_t i = 0; i < want.numel(); ++i) {
            double acc = 0.0;
            for (const auto& v : views) acc += v[i];
            want[i] = static_cast<float>(acc / 4.0);
        }
        CHECK(std::memcmp(got.data(), want.data(), sizeof(float) * got.numel()) == 0);
    }
    SUBCASE("flip4 averaging is invariant to view order") {
        const Tensor image = oracles::random_tensor(rng, {6, 6}, 0.01f, 0.99f);
        const ProbFn skewed = [](const Tensor& img) {
            Tensor out(img.shape());
            for (int y = 0; y < img.extent(0); ++y)
                for (int x = 0; x < img.extent(1); ++x) {
                    out.at(y, x) = 0.4f * img.at(y, x) + 0.02f * static_cast<float>(x + 2 * y);
                }
            return out;
        };
        const Tensor got = tta_average(skewed, image, TtaMode::Flip4);
        // hand-average in three permuted orders; f64 accumulation of four
        // f32 values in (0,1) is exact, so all orders agree bitwise
        const Tensor views[4] = {
            skewed(image), flip(skewed(flip(image, FlipMode::H)), FlipMode::H),
            flip(skewed(flip(image, FlipMode::V)), FlipMode::V),
            flip(skewed(flip(image, FlipMode::HV)), FlipMode::HV)};
        for (const auto& order : {std::vector<int>{3, 1, 0, 2}, {2, 0, 3, 1}, {1, 3, 2, 0}}) {
            Tensor want(image.shape());
            for (std::int64_t i = 0; i < want.numel(); ++i) {
                double acc = 0.0;
                for (int v : order) acc += views[v][i];
                want[i] = static_cast<float>(acc / 4.0);
            }
            CHECK(std::memcmp(got.data(), want.data(), sizeof(float) * got.numel()) == 0);
        }
    }
    SUBCASE("prob source failures carry the view tag") {
        const Tensor image({4, 4}, 0.5f);
        const ProbFn flaky = [](const Tensor& img) -> Tensor {
            if (img.at(0, 0) != 0.5f) throw std::runtime_error("backend exploded");
            return img;
        };
        // all views of a constant image are fine; make it view-dependent
        Tensor marked = image;
        marked.at(0, 0) = 0.5f;
        marked.at(0, 3) = 0.9f; // h-flip moves 0.9 into (0,0)
        CHECK_THROWS_WITH_AS(tta_average(flaky, marked, TtaMode::Flip2),
                             doctest::Contains("view 'h'"), Error);
    }
}

TEST_CASE("threshold") {
    SUBCASE("strict inequality at exactly tau") {
        const Tensor prob({3, 3}, 0.30f);
        const Tensor mask = threshold(prob, 0.30f);
        for (std::int64_t i = 0; i < mask.numel(); ++i) CHECK(mask[i] == 0.0f);
    }
    SUBCASE("matches the pixelwise comparison oracle") {
        std::mt19937_64 rng(12);
        const Tensor prob = oracles::random_tensor(rng, {16, 16}, 0.0f, 1.0f);
        const Tensor mask = threshold(prob, 0.30f);
        for (std::int64_t i = 0; i < prob.numel(); ++i) {
            CHECK(mask[i] == (prob[i] > 0.30f ? 1.0f : 0.0f));
        }
    }
    SUBCASE("deployment tau values survive the config parser unchanged") {
        for (float tau : {0.25f, 0.30f, 0.06f}) {
            nlohmann::json j = OperatingPoint{tau, 0.0f, TtaMode::Flip4, true, true};
            const auto back = j.get<OperatingPoint>();
            CHECK(back.tau == tau);
            CHECK(back.tta == TtaMode::Flip4);
            CHECK(back.fill_holes);
            CHECK(back.keep_largest);
        }
    }
}

TEST_CASE("fill_holes and keep_largest") {
    SUBCASE("ring becomes a solid disk") {
        Tensor ring({9, 9});
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 9; ++x) {
                const int d2 = (y - 4) * (y - 4) + (x - 4) * (x - 4);
                if (d2 >= 4 && d2 <= 9) ring.at(y, x) = 1.0f;
            }
        REQUIRE(ring.at(4, 4) == 0.0f);
        const Tensor filled = fill_holes(ring);
        CHECK(filled.at(4, 4) == 1.0f);
        CHECK(filled.at(0, 0) == 0.0f);
    }
    SUBCASE("keep_largest keeps the area-10 blob over the area-5 blob") {
        Tensor m({8, 12});
        for (int x = 0; x < 5; ++x) {
            m.at(1, x) = 1.0f;
            m.at(2, x) = 1.0f;
        }
        for (int x = 7; x < 12; ++x) m.at (6, x) = 1.0f;
        const Tensor out = keep_largest(m);
        CHECK(out.at(1, 0) == 1.0f);
        CHECK(out.at(6, 8) == 0.0f);
    }
    SUBCASE("empty masks pass through both") {
        const Tensor empty({6, 6});
        const Tensor a = fill_holes(empty);
        const Tensor b = keep_largest(empty);
        for (std::int64_t i = 0; i < empty.numel(); ++i) {
            CHECK(a[i] == 0.0f);
            CHECK(b[i] == 0.0f);
        }
    }
    SUBCASE("ties go to the first component in row-major order") {
        Tensor m({5, 7});
        m.at(0, 1) = 1.0f; // first in row-major
        m.at(3, 5) = 1.0f;
        const Tensor out = keep_largest(m);
        CHECK(out.at(0, 1) == 1.0f);
        CHECK(out.at(3, 5) == 0.0f);
    }
    SUBCASE("diagonal pixels are one 8-connected component") {
        Tensor m({4, 4});
        m.at(0, 0) = 1.0f;
        m.at(1, 1) = 1.0f;
        m.at(2, 2) = 1.0f;
        m.at(3, 0) = 1.0f; // separate single pixel
        const Tensor out = keep_largest(m);
        CHECK(out.at(0, 0) == 1.0f);
        CHECK(out.at(2, 2) == 1.0f);
        CHECK(out.at(3, 0) == 0.0f);
    }
}

TEST_CASE("run_pipeline") {
    std::mt19937_64 rng(31);
    const Tensor prob = oracles::random_tensor(rng, {24, 24}, 0.0f, 1.0f);

    SUBCASE("raw-P0 equals a bare threshold call bit-for-bit") {
        const OperatingPoint p0 = raw_p0();
        CHECK(p0.tau == 0.30f);
        CHECK(p0.sigma == 0.0f);
        CHECK(p0.tta == TtaMode::None);
        CHECK(!p0.fill_holes);
        CHECK(!p0.keep_largest);
        const Tensor direct = threshold(prob, 0.30f);
        const PipelineTrace trace = run_pipeline(identity_prob_source(), prob, p0);
        CHECK(std::memcmp(trace.final_mask.data(), direct.data(),
                          sizeof(float) * direct.numel()) == 0);
    }
    SUBCASE("sigma = 0 stage is bit-transparent") {
        OperatingPoint op{0.4f, 0.0f, TtaMode::None, true, true};
        const PipelineTrace trace = run_pipeline(identity_prob_source(), prob, op);
        CHECK(std::memcmp(trace.smoothed.data(), trace.averaged.data(),
                          sizeof(float) * prob.numel()) == 0);
        // hand-composed pipeline with the blur stage deleted
        const Tensor want = keep_largest(fill_holes(threshold(prob, 0.4f)));
        CHECK(std::memcmp(trace.final_mask.data(), want.data(), sizeof(float) * want.numel()) ==
              0);
    }
    SUBCASE("matches the stage-by-stage composition oracle") {
        OperatingPoint op{0.35f, 1.0f, TtaMode::Flip4, true, true};
        const PipelineTrace trace = run_pipeline(identity_prob_source(), prob, op);
        const Tensor averaged = tta_average(identity_prob_source(), prob, TtaMode::Flip4);
        const Tensor want =
            keep_largest(fill_holes(threshold(gaussian_blur(averaged, 1.0f), 0.35f)));
        CHECK(std::memcmp(trace.final_mask.data(), want.data(), sizeof(float) * want.numel()) ==
              0);
    }
    SUBCASE("fill_holes and keep_largest are idempotent on pipeline output") {
        OperatingPoint op{0.5f, 0.5f, TtaMode::None, true, true};
        const Tensor mask = run_pipeline(identity_prob_source(), prob, op).final_mask;
        const Tensor again = keep_largest(fill_holes(mask));
        CHECK(std::memcmp(mask.data(), again.data(), sizeof(float) * mask.numel()) == 0);
    }
    SUBCASE("output is monotone nonincreasing in tau") {
        OperatingPoint op{0.1f, 0.0f, TtaMode::None, false, false};
        Tensor prev = run_pipeline(identity_prob_source(), prob, op).final_mask;
        for (float tau : {0.3f, 0.5f, 0.7f, 0.9f}) {
            op.tau = tau;
            const Tensor cur = run_pipeline(identity_prob_source(), prob, op).final_mask;
            for (std::int64_t i = 0; i < cur.numel(); ++i) {
                CHECK(cur[i] <= prev[i]); // pixelwise containment
            }
            prev = cur;
        }
    }
    SUBCASE("invalid operating points are rejected") {
        CHECK_THROWS_AS(run_pipeline(identity_prob_source(), prob,
                                     OperatingPoint{1.5f, 0.0f, TtaMode::None, false, false}),
                        Error);
        CHECK_THROWS_AS(run_pipeline(identity_prob_source(), prob,
                                     OperatingPoint{0.5f, -1.0f, TtaMode::None, false, false}),
                        Error);
    }
}

TEST_CASE("dilate_mask grows by the structuring element") {
    Tensor m({7, 7});
    m.at(3, 3) = 1.0f;
    const Tensor once = dilate_mask(m, 1);
    double area = 0.0;
    for (std::int64_t i = 0; i < once.numel(); ++i) area += once[i];
    CHECK(area == 9.0);
    const Tensor zero = dilate_mask(m, 0);
    CHECK(std::memcmp(zero.data(), m.data(), sizeof(float) * m.numel()) == 0);
}
