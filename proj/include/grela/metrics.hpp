#pragma once

#include <map>
#include <string>
#include <vector>

#include "grela/common.hpp"
#include "grela/image_io.hpp"

namespace grela {

// Per-sample pixel bookkeeping; integer counts so aggregates are exactly
// reproducible.
struct EvalRecord {
    long intersection = 0;
    long union_px = 0;
    bool gt_empty = false;
    bool pred_empty = true;
};

struct EvalReport {
    double ciou = 0.0;
    double giou = 0.0;
    std::map<double, double> pr;  // threshold -> fraction, over target samples
    double n_acc = 0.0;           // no-target identification, TP/(TP+FN)
    double t_acc = 0.0;           // target retention, TN/(TN+FP)
    bool n_acc_defined = false;   // false when a class is absent
    bool t_acc_defined = false;
    long tp = 0, fn = 0;  // over no-target samples
    long tn = 0, fp = 0;  // over target samples
};

EvalRecord eval_record(const BinaryMask& pred, const BinaryMask& gt, bool gt_empty);

// Total intersection over total union across all records. No-target true
// positives contribute 0/0, i.e. nothing.
double ciou(const std::vector<EvalRecord>& records);

// Mean per-sample IoU; a no-target sample scores 1 when predicted empty and
// 0 otherwise.
double giou(const std::vector<EvalRecord>& records);

// Fraction of target samples with IoU strictly above each threshold;
// no-target samples are excluded.
std::map<double, double> pr_at_x(const std::vector<EvalRecord>& records,
                                 const std::vector<double>& thresholds = {0.7, 0.8, 0.9});

EvalReport aggregate_report(const std::vector<EvalRecord>& records);

// Plain-text table for humans plus "key=value" lines (4 decimal places).
std::string format_report(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& path);
std::map<std::string, std::string> read_report(const std::string& path);

}  // namespace grela
