#include "hsitl/records.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hsitl/errors.hpp"

namespace hsitl {
namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

// "full" sorts before numeric counts; numeric counts descend, mirroring the
// usual full -> 100 -> 75 -> ... table layout.
std::pair<int, int64_t> band_order(const std::string& band_count) {
    if (band_count == "full") return {0, 0};
    return {1, -std::stoll(band_count)};
}

}  // namespace

std::string record_csv_header() {
    return "seed,dataset,variant,blocks,band_count,oa,aa,kappa,"
           "pretrain_s,finetune_s,infer_ms_per_sample,status";
}

std::string record_to_csv(const ExperimentRecord& rec) {
    std::ostringstream os;
    if (rec.feasible) {
        os << rec.seed << ',' << rec.dataset << ',' << rec.variant << ',' << rec.blocks << ','
           << rec.band_count << ',' << fmt("%.12g", rec.oa) << ',' << fmt("%.12g", rec.aa) << ','
           << fmt("%.12g", rec.kappa) << ',' << fmt("%.3f", rec.pretrain_s) << ','
           << fmt("%.3f", rec.finetune_s) << ',' << fmt("%.6f", rec.infer_ms_per_sample)
           << ",ok";
    } else {
        os << ',' << rec.dataset << ',' << rec.variant << ',' << rec.blocks << ','
           << rec.band_count << ",,,,,,,infeasible";
    }
    return os.str();
}

void write_records_csv(const std::vector<ExperimentRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("records: cannot open " + path + " for writing");
    out << record_csv_header() << '\n';
    for (const auto& rec : records) out << record_to_csv(rec) << '\n';
    if (!out) throw DataError("records: write failed for " + path);
}

std::vector<ExperimentRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("records: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("records: empty file " + path);
    if (split_line(line).size() != 12)
        throw DataError("records: unexpected header in " + path);
    std::vector<ExperimentRecord> records;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_line(line);
        if (f.size() != 12)
            throw DataError("records: bad field count at " + path + ":" + std::to_string(lineno));
        ExperimentRecord rec;
        try {
            rec.dataset = f[1];
            rec.variant = f[2];
            rec.blocks = uint32_t(std::stoul(f[3]));
            rec.band_count = f[4];
            rec.feasible = f[11] == "ok";
            if (rec.feasible) {
                rec.seed = std::stoull(f[0]);
                rec.oa = std::stod(f[5]);
                rec.aa = std::stod(f[6]);
                rec.kappa = std::stod(f[7]);
                rec.pretrain_s = std::stod(f[8]);
                rec.finetune_s = std::stod(f[9]);
                rec.infer_ms_per_sample = std::stod(f[10]);
            } else if (f[11] != "infeasible") {
                throw DataError("unknown status " + f[11]);
            }
        } catch (const DataError&) {
            throw;
        } catch (const std::exception&) {
            throw DataError("records: malformed row at " + path + ":" + std::to_string(lineno));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void sort_records(std::vector<ExperimentRecord>& records) {
    std::stable_sort(records.begin(), records.end(),
                     [](const ExperimentRecord& a, const ExperimentRecord& b) {
                         if (a.dataset != b.dataset) return a.dataset < b.dataset;
                         auto ba = band_order(a.band_count), bb = band_order(b.band_count);
                         if (ba != bb) return ba < bb;
                         if (a.blocks != b.blocks) return a.blocks < b.blocks;
                         if (a.variant != b.variant) return a.variant < b.variant;
                         return a.seed < b.seed;
                     });
}

}  // namespace hsitl
