#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "grela/common.hpp"
#include "grela/metrics.hpp"

using namespace grela;

namespace {

BinaryMask rect(int h, int w, int y0, int x0, int y1, int x1) {
    BinaryMask m = BinaryMask::zeros(h, w);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
    return m;
}

EvalRecord rec(long i, long u, bool gt_empty, bool pred_empty) {
    EvalRecord r;
    r.intersection = i;
    r.union_px = u;
    r.gt_empty = gt_empty;
    r.pred_empty = pred_empty;
    return r;
}

}  // namespace

TEST_CASE("per-sample records count pixels correctly") {
    BinaryMask a = rect(8, 8, 0, 0, 2, 5);  // 10 px
    EvalRecord same = eval_record(a, a, false);
    CHECK(same.intersection == 10);
    CHECK(same.union_px == 10);
    CHECK_FALSE(same.pred_empty);

    BinaryMask b = rect(8, 8, 4, 0, 5, 5);  // disjoint 5 px
    BinaryMask c = rect(8, 8, 0, 0, 1, 5);  // 5 px
    EvalRecord disj = eval_record(b, c, false);
    CHECK(disj.intersection == 0);
    CHECK(disj.union_px == 10);

    BinaryMask p = rect(8, 8, 0, 0, 1, 8);  // 8 px
    BinaryMask g = rect(8, 8, 0, 4, 2, 8);  // 8 px, overlap 4
    EvalRecord ov = eval_record(p, g, false);
    CHECK(ov.intersection == 4);
    CHECK(ov.union_px == 12);

    BinaryMask empty = BinaryMask::zeros(8, 8);
    EvalRecord nt = eval_record(empty, empty, true);
    CHECK(nt.pred_empty);
    CHECK(nt.intersection == 0);
    CHECK(nt.union_px == 0);

    CHECK_THROWS_AS(eval_record(rect(4, 4, 0, 0, 1, 1), rect(5, 5, 0, 0, 1, 1), false),
                    InputError);
    CHECK_THROWS_AS(eval_record(empty, empty, false), InputError);
}

TEST_CASE("cumulative IoU: totals, size bias, and degenerate cases") {
    CHECK(ciou({rec(10, 10, false, false)}) == 1.0);

    // a tiny bad mask and a big good one: totals beat the per-image mean
    std::vector<EvalRecord> biased = {rec(1, 10, false, false),
                                      rec(90, 100, false, false)};
    CHECK(std::abs(ciou(biased) - 91.0 / 110.0) <= 1e-15);
    double mean = (0.1 + 0.9) / 2.0;
    CHECK(mean == 0.5);
    CHECK(ciou(biased) > mean);

    CHECK(ciou({rec(0, 5, false, true), rec(0, 7, false, true)}) == 0.0);

    // no-target true positives contribute nothing to either total
    std::vector<EvalRecord> with_nt = biased;
    with_nt.push_back(rec(0, 0, true, true));
    CHECK(ciou(with_nt) == ciou(biased));

    CHECK_THROWS_AS(ciou({rec(0, 0, true, true)}), InputError);
}

TEST_CASE("mean IoU applies the empty-prediction scoring rules") {
    // worked example: target IoU 0.6, one correct and one missed no-target
    std::vector<EvalRecord> three = {rec(6, 10, false, false), rec(0, 0, true, true),
                                     rec(0, 3, true, false)};
    CHECK(std::abs(giou(three) - 1.6 / 3.0) <= 1e-12);

    CHECK(giou({rec(7, 7, false, false), rec(0, 0, true, true)}) == 1.0);
    CHECK(giou({rec(0, 0, true, true)}) == 1.0);
    CHECK(giou({rec(0, 4, true, false)}) == 0.0);
    // a target predicted empty simply scores 0
    CHECK(giou({rec(0, 9, false, true)}) == 0.0);
    CHECK_THROWS_AS(giou({}), InputError);
}

TEST_CASE("precision thresholds are strict and target-only") {
    std::map<double, double> p = pr_at_x({rec(75, 100, false, false)});
    CHECK(p[0.7] == 1.0);
    CHECK(p[0.8] == 0.0);
    CHECK(p[0.9] == 0.0);

    // IoU exactly at the threshold does not pass
    CHECK(pr_at_x({rec(7, 10, false, false)})[0.7] == 0.0);

    std::vector<EvalRecord> mixed = {rec(65, 100, false, false),
                                     rec(75, 100, false, false),
                                     rec(95, 100, false, false),
                                     rec(0, 0, true, true)};
    CHECK(std::abs(pr_at_x(mixed)[0.7] - 2.0 / 3.0) <= 1e-15);

    CHECK_THROWS_AS(pr_at_x({rec(0, 0, true, true)}), InputError);
}

TEST_CASE("no-target and target accuracies follow the confusion counts") {
    std::vector<EvalRecord> records;
    for (int i = 0; i < 3; ++i) records.push_back(rec(0, 0, true, true));
    records.push_back(rec(0, 5, true, false));
    for (int i = 0; i < 9; ++i) records.push_back(rec(3, 5, false, false));
    records.push_back(rec(0, 6, false, true));

    EvalReport rep = aggregate_report(records);
    CHECK(rep.tp == 3);
    CHECK(rep.fn == 1);
    CHECK(rep.tn == 9);
    CHECK(rep.fp == 1);
    CHECK(rep.n_acc == 0.75);
    CHECK(rep.t_acc == 0.9);
    CHECK(rep.n_acc_defined);

    // no no-target samples at all: the accuracy is marked undefined
    EvalReport only_targets = aggregate_report({rec(3, 5, false, false)});
    CHECK_FALSE(only_targets.n_acc_defined);
    CHECK(only_targets.t_acc == 1.0);
}

TEST_CASE("perfect predictions score one everywhere") {
    std::vector<EvalRecord> records = {rec(12, 12, false, false),
                                       rec(500, 500, false, false),
                                       rec(0, 0, true, true)};
    EvalReport rep = aggregate_report(records);
    CHECK(rep.ciou == 1.0);
    CHECK(rep.giou == 1.0);
    for (const auto& [t, v] : rep.pr) CHECK(v == 1.0);
    CHECK(rep.n_acc == 1.0);
    CHECK(rep.t_acc == 1.0);
}

TEST_CASE("aggregates are order-invariant and cumulatively associative") {
    Rng rng(31);
    std::vector<EvalRecord> records;
    for (int i = 0; i < 60; ++i) {
        bool nt = rng.uniform() < 0.3;
        if (nt)
            records.push_back(rec(0, rng.uniform() < 0.5 ? 0 : 5, true,
                                  records.size() % 2 == 0));
        else {
            long u = 1 + rng.uniform_int(200);
            long in = rng.uniform_int(static_cast<int>(u) + 1);
            records.push_back(rec(in, u, false, false));
        }
    }
    // repair: pred_empty must imply zero intersection
    for (EvalRecord& r : records)
        if (r.gt_empty) r.pred_empty = r.union_px == 0;

    std::vector<EvalRecord> shuffled = records;
    rng.shuffle(shuffled);
    CHECK(giou(records) == doctest::Approx(giou(shuffled)).epsilon(1e-15));
    CHECK(ciou(records) == ciou(shuffled));

    // summing (I, U) over halves reproduces the cumulative ratio exactly
    long i1 = 0, u1 = 0;
    for (const EvalRecord& r : records) {
        i1 += r.intersection;
        u1 += r.union_px;
    }
    CHECK(ciou(records) == static_cast<double>(i1) / static_cast<double>(u1));

    EvalReport rep = aggregate_report(records);
    for (double v : {rep.ciou, rep.giou, rep.n_acc, rep.t_acc}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (const auto& [t, v] : rep.pr) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("mask-level aggregation matches a brute-force pixel oracle") {
    Rng rng(47);
    std::vector<EvalRecord> records;
    // oracle tallies, recomputed with plain loops over pixels
    long o_i = 0, o_u = 0;
    double o_giou = 0.0;
    long o_targets = 0, o_above7 = 0, o_tp = 0, o_fn = 0, o_tn = 0, o_fp = 0;

    const int n = 200;
    for (int s = 0; s < n; ++s) {
        int h = 6 + rng.uniform_int(10), w = 6 + rng.uniform_int(10);
        bool gt_empty = rng.uniform() < 0.25;
        BinaryMask gt = BinaryMask::zeros(h, w);
        if (!gt_empty) {
            int y0 = rng.uniform_int(h - 1), x0 = rng.uniform_int(w - 1);
            int y1 = y0 + 1 + rng.uniform_int(h - y0), x1 = x0 + 1 + rng.uniform_int(w - x0);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) gt.at(y, x) = 1;
        }
        BinaryMask pred = BinaryMask::zeros(h, w);
        if (rng.uniform() < 0.8) {
            int y0 = rng.uniform_int(h), x0 = rng.uniform_int(w);
            int y1 = y0 + rng.uniform_int(h - y0 + 1), x1 = x0 + rng.uniform_int(w - x0 + 1);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) pred.at(y, x) = 1;
        }
        records.push_back(eval_record(pred, gt, gt_empty));

        long bi = 0, bu = 0, bp = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                bi += (pred.at(y, x) && gt.at(y, x)) ? 1 : 0;
                bu += (pred.at(y, x) || gt.at(y, x)) ? 1 : 0;
                bp += pred.at(y, x);
            }
        CHECK(records.back().intersection == bi);
        CHECK(records.back().union_px == bu);
        o_i += bi;
        o_u += bu;
        if (gt_empty) {
            o_giou += bp == 0 ? 1.0 : 0.0;
            (bp == 0 ? o_tp : o_fn) += 1;
        } else {
            double iou = static_cast<double>(bi) / static_cast<double>(bu);
            o_giou += iou;
            ++o_targets;
            if (iou > 0.7) ++o_above7;
            (bp == 0 ? o_fp : o_tn) += 1;
        }
    }

    EvalReport rep = aggregate_report(records);
    CHECK(std::abs(rep.ciou - static_cast<double>(o_i) / static_cast<double>(o_u)) <= 1e-12);
    CHECK(std::abs(rep.giou - o_giou / n) <= 1e-12);
    CHECK(std::abs(rep.pr[0.7] - static_cast<double>(o_above7) / o_targets) <= 1e-12);
    CHECK(rep.tp == o_tp);
    CHECK(rep.fn == o_fn);
    CHECK(rep.tn == o_tn);
    CHECK(rep.fp == o_fp);
}

TEST_CASE("report files carry four-decimal values and survive round trips") {
    std::vector<EvalRecord> records = {rec(6, 10, false, false), rec(0, 0, true, true)};
    EvalReport rep = aggregate_report(records);
    write_report(rep, "report_test.txt");
    auto kv = read_report("report_test.txt");
    CHECK(kv.at("ciou") == "0.6000");
    CHECK(kv.at("giou") == "0.8000");
    CHECK(kv.at("pr@0.7") == "0.0000");
    CHECK(kv.at("n_acc") == "1.0000");
    CHECK(kv.at("t_acc") == "1.0000");
    CHECK(kv.at("tp") == "1");

    std::string table = format_report(rep);
    CHECK(table.find("ciou") != std::string::npos);
    CHECK(table.find("0.6000") != std::string::npos);

    EvalReport undef = aggregate_report({rec(6, 10, false, false)});
    write_report(undef, "report_test.txt");
    CHECK(read_report("report_test.txt").at("n_acc") == "na");
    std::remove("report_test.txt");
}
