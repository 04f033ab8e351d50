#include "attachrec/trec.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

#include "attachrec/errors.hpp"

namespace attachrec {

std::string trec_token(const std::string& id) {
    std::string out = id;
    for (char& c : out) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            c = '_';
        }
    }
    if (out.empty()) {
        out = "_";
    }
    return out;
}

namespace {

std::string format_score(double s) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", s);
    return buf;
}

}  // namespace

void write_trec_run(const MethodReport& report, const std::string& tag, std::ostream& out) {
    const std::string safe_tag = trec_token(tag);
    for (const InstanceResult& row : report.rows) {
        const std::string qid = trec_token(row.instance_id);
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < row.ranked_items.size(); ++i) {
            double s = i < row.ranked_scores.size() ? row.ranked_scores[i] : 0.0;
            if (!(s < prev)) {
                s = std::nextafter(prev, -std::numeric_limits<double>::infinity());
            }
            prev = s;
            out << qid << " Q0 " << trec_token(row.ranked_items[i]) << ' ' << (i + 1) << ' '
                << format_score(s) << ' ' << safe_tag << '\n';
        }
    }
}

void write_trec_qrels(const std::vector<Instance>& instances, std::ostream& out) {
    for (const Instance& inst : instances) {
        const std::string qid = trec_token(inst.reply_id);
        for (const std::string& item : inst.relevant_items) {
            out << qid << " 0 " << trec_token(item) << " 1\n";
        }
    }
}

void write_trec_run_file(const MethodReport& report, const std::string& tag,
                         const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ExecutionError("cannot write run file: " + path);
    }
    write_trec_run(report, tag, out);
    out.flush();
    if (!out) {
        throw ExecutionError("failed while writing run file: " + path);
    }
}

void write_trec_qrels_file(const std::vector<Instance>& instances, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ExecutionError("cannot write qrels file: " + path);
    }
    write_trec_qrels(instances, out);
    out.flush();
    if (!out) {
        throw ExecutionError("failed while writing qrels file: " + path);
    }
}

}  // namespace attachrec
