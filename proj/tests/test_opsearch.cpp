#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "relseg/config_json.hpp"
#include "relseg/opsearch.hpp"

#include "oracles.hpp"

using namespace relseg;

namespace {

struct ValSet {
    std::vector<Tensor> probs;
    std::vector<Tensor> gts;
};

ValSet make_val_set(std::uint64_t seed, int n, int h, int w) {
    std::mt19937_64 rng(seed);
    ValSet s;
    for (int i = 0; i < n; ++i) {
        const Tensor gt = oracles::random_blob_mask(rng, h, w);
        Tensor prob(gt.shape());
        for (std::int64_t j = 0; j < gt.numel(); ++j) {
            const double noise = (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5) * 0.6;
            prob[j] = static_cast<float>(std::clamp(0.15 + 0.7 * gt[j] + noise, 0.0, 1.0));
        }
        s.probs.push_back(std::move(prob));
        s.gts.push_back(gt);
    }
    return s;
}

SearchSpace small_space() {
    SearchSpace space;
    space.taus = {0.2f, 0.35f, 0.5f, 0.65f};
    space.sigmas = {0.0f, 1.0f};
    space.tta_modes = {TtaMode::None, TtaMode::Flip4};
    space.fill_holes_options = {false, true};
    space.keep_largest_options = {false, true};
    space.objective = "jac";
    return space;
}

// independent exhaustive enumeration: evaluates every candidate from
// scratch and tracks the argmax set
struct OracleBest {
    std::vector<OperatingPoint> argmax_set;
    double best = -1e300;
};

OracleBest enumerate_oracle(const ValSet& s, const SearchSpace& space) {
    OracleBest out;
    for (float sigma : space.sigmas)
        for (TtaMode tta : space.tta_modes)
            for (bool fill : space.fill_holes_options)
                for (bool keep : space.keep_largest_options)
                    for (float tau : space.taus) {
                        const OperatingPoint op{tau, sigma, tta, fill, keep};
                        double acc = 0.0;
                        for (size_t i = 0; i < s.probs.size(); ++i) {
                            Tensor prob = s.probs[i];
                            if (sigma > 0.0f) prob = gaussian_blur(prob, sigma);
                            Tensor mask = threshold(prob, tau);
                            if (fill) mask = fill_holes(mask);
                            if (keep) mask = keep_largest(mask);
                            acc += overlap_metrics(mask, s.gts[i]).jac;
                        }
                        acc /= static_cast<double>(s.probs.size());
                        if (acc > out.best + 1e-15) {
                            out.best = acc;
                            out.argmax_set = {op};
                        } else if (std::fabs(acc - out.best) <= 1e-15) {
                            out.argmax_set.push_back(op);
                        }
                    }
    return out;
}

bool same_point(const OperatingPoint& a, const OperatingPoint& b) {
    return a.tau == b.tau && a.sigma == b.sigma && a.tta == b.tta &&
           a.fill_holes == b.fill_holes && a.keep_largest == b.keep_largest;
}

} // namespace

TEST_CASE("grid_search with a single candidate returns it") {
    const ValSet s = make_val_set(1, 3, 16, 16);
    SearchSpace space;
    space.taus = {0.45f};
    space.sigmas = {0.5f};
    space.tta_modes = {TtaMode::Flip2};
    space.fill_holes_options = {true};
    space.keep_largest_options = {false};
    const GridSearchResult r = grid_search(s.probs, s.gts, space);
    CHECK(r.best.tau == 0.45f);
    CHECK(r.best.sigma == 0.5f);
    CHECK(r.best.tta == TtaMode::Flip2);
    CHECK(r.best.fill_holes);
    CHECK(!r.best.keep_largest);
    CHECK(r.leaderboard.size() == 1);
}

TEST_CASE("grid_search equals the exhaustive enumeration oracle") {
    const ValSet s = make_val_set(2, 4, 20, 20);
    const SearchSpace space = small_space();
    const GridSearchResult r = grid_search(s.probs, s.gts, space);
    const OracleBest oracle = enumerate_oracle(s, space);

    CHECK(r.best_objective == doctest::Approx(oracle.best).epsilon(1e-9));
    bool found = false;
    for (const auto& op : oracle.argmax_set) {
        if (same_point(op, r.best)) found = true;
    }
    CHECK(found);
    // and the returned point is the cheapest of the argmax set
    for (const auto& op : oracle.argmax_set) {
        CHECK(!cheaper_point(op, r.best));
    }
}

TEST_CASE("grid_search is invariant to candidate order") {
    const ValSet s = make_val_set(3, 3, 18, 18);
    SearchSpace space = small_space();
    const GridSearchResult base = grid_search(s.probs, s.gts, space);

    std::mt19937_64 rng(9);
    for (int it = 0; it < 3; ++it) {
        std::shuffle(space.taus.begin(), space.taus.end(), rng);
        std::shuffle(space.sigmas.begin(), space.sigmas.end(), rng);
        std::shuffle(space.tta_modes.begin(), space.tta_modes.end(), rng);
        std::reverse(space.fill_holes_options.begin(), space.fill_holes_options.end());
        const GridSearchResult permuted = grid_search(s.probs, s.gts, space);
        CHECK(same_point(base.best, permuted.best));
        CHECK(base.best_objective == permuted.best_objective);
    }
}

TEST_CASE("grid_search leaderboard never beats the winner") {
    const ValSet s = make_val_set(4, 3, 16, 16);
    const GridSearchResult r = grid_search(s.probs, s.gts, small_space());
    for (const auto& row : r.leaderboard) {
        CHECK(row.objective <= r.best_objective + 1e-12);
    }
    CHECK(r.leaderboard.size() == 4 * 2 * 2 * 2 * 2);
}

TEST_CASE("grid_search worker count does not change the result") {
    const ValSet s = make_val_set(5, 3, 16, 16);
    const GridSearchResult one = grid_search(s.probs, s.gts, small_space(), 1);
    const GridSearchResult four = grid_search(s.probs, s.gts, small_space(), 4);
    CHECK(same_point(one.best, four.best));
    CHECK(one.best_objective == four.best_objective);
}

TEST_CASE("deployment operating points parse, evaluate and re-serialize unchanged") {
    // fixture mirroring the published per-dataset points
    const std::string fixture = R"([
        {"tau": 0.30, "sigma": 0.0, "tta": "flip4", "fill_holes": true, "keep_largest": true},
        {"tau": 0.25, "sigma": 0.0, "tta": "flip4", "fill_holes": true, "keep_largest": true},
        {"tau": 0.06, "sigma": 0.0, "tta": "flip4", "fill_holes": true, "keep_largest": true}
    ])";
    const nlohmann::json j = nlohmann::json::parse(fixture);
    const ValSet s = make_val_set(6, 2, 16, 16);
    const std::vector<float> want_taus = {0.30f, 0.25f, 0.06f};
    for (size_t i = 0; i < j.size(); ++i) {
        const auto op = j[i].get<OperatingPoint>();
        CHECK(op.tau == want_taus[i]);
        CHECK(op.sigma == 0.0f);
        CHECK(op.tta == TtaMode::Flip4);
        CHECK(op.fill_holes);
        CHECK(op.keep_largest);
        // evaluates without error
        const MetricReport report = transfer_protocol(op, s.probs, s.gts);
        CHECK(report.n == 2);
        // re-serializes to the same values
        const nlohmann::json back = op;
        CHECK(back.at("tau").get<float>() == want_taus[i]);
        CHECK(back.at("tta").get<std::string>() == "flip4");
        const auto round = back.get<OperatingPoint>();
        CHECK(same_point(round, op));
    }
    // every published threshold lies on the default 0.01 grid
    const SearchSpace full = SearchSpace::defaults();
    for (float tau : {0.02f, 0.06f, 0.10f, 0.13f, 0.21f, 0.25f, 0.27f, 0.28f, 0.30f, 0.37f,
                      0.50f, 0.65f}) {
        CHECK(std::find(full.taus.begin(), full.taus.end(), tau) != full.taus.end());
    }
}

TEST_CASE("transfer_protocol") {
    const ValSet target = make_val_set(7, 4, 20, 20);

    SUBCASE("raw-P0 transfer equals plain threshold evaluation") {
        const MetricReport via_transfer = transfer_protocol(raw_p0(), target.probs, target.gts);
        std::vector<Tensor> masks;
        for (const auto& p : target.probs) masks.push_back(threshold(p, 0.30f));
        const MetricReport direct = evaluate_masks(masks, target.gts);
        CHECK(via_transfer.aggregate.dice == direct.aggregate.dice);
        CHECK(via_transfer.aggregate.hd95 == direct.aggregate.hd95);
        CHECK(via_transfer.protocol_flag == "target-label-free");
    }
    SUBCASE("transferring the winner back to its own set reproduces its score") {
        const SearchSpace space = small_space();
        const GridSearchResult r = grid_search(target.probs, target.gts, space);
        const MetricReport report = transfer_protocol(r.best, target.probs, target.gts);
        CHECK(report.aggregate.jac == doctest::Approx(r.best_objective).epsilon(1e-9));
    }
    SUBCASE("composition oracle: transfer equals pipeline + metrics") {
        const OperatingPoint op{0.4f, 1.0f, TtaMode::Flip4, true, true};
        const MetricReport via = transfer_protocol(op, target.probs, target.gts);
        std::vector<Tensor> masks;
        for (const auto& p : target.probs) {
            masks.push_back(run_pipeline(identity_prob_source(), p, op).final_mask);
        }
        const MetricReport direct = evaluate_masks(masks, target.gts);
        CHECK(via.aggregate.dice == direct.aggregate.dice);
        CHECK(via.aggregate.assd == direct.aggregate.assd);
    }
}

TEST_CASE("search space validation") {
    SearchSpace bad = small_space();
    bad.taus.clear();
    CHECK_THROWS_AS(grid_search({Tensor({4, 4}, 0.5f)}, {Tensor({4, 4}, 0.0f)}, bad), Error);
    SearchSpace bad2 = small_space();
    bad2.objective = "f1";
    CHECK_THROWS_AS(bad2.validate(), Error);
    SearchSpace bad3 = small_space();
    bad3.taus = {1.5f};
    CHECK_THROWS_AS(bad3.validate(), Error);
}
