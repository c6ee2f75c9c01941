#include "grela/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace grela {

EvalRecord eval_record(const BinaryMask& pred, const BinaryMask& gt, bool gt_empty) {
    if (pred.h != gt.h || pred.w != gt.w)
        throw InputError("eval_record: mask dimensions differ (" +
                         std::to_string(pred.h) + "x" + std::to_string(pred.w) +
                         " vs " + std::to_string(gt.h) + "x" + std::to_string(gt.w) + ")");
    if (gt_empty != (gt.count() == 0))
        throw InputError("eval_record: gt_empty flag contradicts the mask");
    EvalRecord r;
    r.gt_empty = gt_empty;
    long pred_px = 0;
    for (std::size_t i = 0; i < pred.fg.size(); ++i) {
        r.intersection += pred.fg[i] & gt.fg[i];
        r.union_px += pred.fg[i] | gt.fg[i];
        pred_px += pred.fg[i];
    }
    r.pred_empty = pred_px == 0;
    return r;
}

double ciou(const std::vector<EvalRecord>& records) {
    long isum = 0, usum = 0;
    for (const EvalRecord& r : records) {
        isum += r.intersection;
        usum += r.union_px;
    }
    if (usum == 0)
        throw InputError("ciou undefined: no record has union pixels");
    return static_cast<double>(isum) / static_cast<double>(usum);
}

double giou(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw InputError("giou undefined on an empty record list");
    double acc = 0.0;
    for (const EvalRecord& r : records) {
        if (r.gt_empty)
            acc += r.pred_empty ? 1.0 : 0.0;
        else
            acc += static_cast<double>(r.intersection) / static_cast<double>(r.union_px);
    }
    return acc / static_cast<double>(records.size());
}

std::map<double, double> pr_at_x(const std::vector<EvalRecord>& records,
                                 const std::vector<double>& thresholds) {
    long targets = 0;
    std::map<double, long> above;
    for (double t : thresholds) above[t] = 0;
    for (const EvalRecord& r : records) {
        if (r.gt_empty) continue;
        ++targets;
        double iou = static_cast<double>(r.intersection) /
                     static_cast<double>(r.union_px);
        for (double t : thresholds)
            if (iou > t) ++above[t];
    }
    if (targets == 0)
        throw InputError("precision thresholds undefined: no target records");
    std::map<double, double> out;
    for (double t : thresholds)
        out[t] = static_cast<double>(above[t]) / static_cast<double>(targets);
    return out;
}

EvalReport aggregate_report(const std::vector<EvalRecord>& records) {
    EvalReport rep;
    rep.ciou = ciou(records);
    rep.giou = giou(records);
    rep.pr = pr_at_x(records);
    for (const EvalRecord& r : records) {
        if (r.gt_empty)
            (r.pred_empty ? rep.tp : rep.fn) += 1;
        else
            (r.pred_empty ? rep.fp : rep.tn) += 1;
    }
    rep.n_acc_defined = rep.tp + rep.fn > 0;
    if (rep.n_acc_defined)
        rep.n_acc = static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fn);
    rep.t_acc_defined = rep.tn + rep.fp > 0;
    if (rep.t_acc_defined)
        rep.t_acc = static_cast<double>(rep.tn) / static_cast<double>(rep.tn + rep.fp);
    return rep;
}

namespace {

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string fmt_threshold(double t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", t);
    return buf;
}

}  // namespace

std::string format_report(const EvalReport& rep) {
    std::ostringstream out;
    out << "metric   value\n";
    out << "ciou     " << fmt4(rep.ciou) << "\n";
    out << "giou     " << fmt4(rep.giou) << "\n";
    for (const auto& [t, v] : rep.pr)
        out << "pr@" << fmt_threshold(t) << "   " << fmt4(v) << "\n";
    out << "n_acc    " << (rep.n_acc_defined ? fmt4(rep.n_acc) : std::string("na"))
        << "\n";
    out << "t_acc    " << (rep.t_acc_defined ? fmt4(rep.t_acc) : std::string("na"))
        << "\n";
    out << "counts   tp=" << rep.tp << " fn=" << rep.fn << " tn=" << rep.tn
        << " fp=" << rep.fp << "\n";
    return out.str();
}

void write_report(const EvalReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report: " + path);
    out << "ciou=" << fmt4(rep.ciou) << "\n";
    out << "giou=" << fmt4(rep.giou) << "\n";
    for (const auto& [t, v] : rep.pr)
        out << "pr@" << fmt_threshold(t) << "=" << fmt4(v) << "\n";
    out << "n_acc=" << (rep.n_acc_defined ? fmt4(rep.n_acc) : std::string("na")) << "\n";
    out << "t_acc=" << (rep.t_acc_defined ? fmt4(rep.t_acc) : std::string("na")) << "\n";
    out << "tp=" << rep.tp << "\n";
    out << "fn=" << rep.fn << "\n";
    out << "tn=" << rep.tn << "\n";
    out << "fp=" << rep.fp << "\n";
    if (!out) throw IoError("report write failed: " + path);
}

std::map<std::string, std::string> read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("malformed report line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

}  // namespace grela
