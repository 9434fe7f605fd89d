#include "ggda/datahub.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ggda {
namespace datahub {

using json = nlohmann::ordered_json;

std::vector<std::int64_t> Dataset::train_rows() const {
    std::vector<std::int64_t> out;
    for (std::int64_t i = 0; i < n(); ++i)
        if (split[static_cast<std::size_t>(i)] == Split::Train) out.push_back(i);
    return out;
}

std::vector<std::int64_t> Dataset::test_rows() const {
    std::vector<std::int64_t> out;
    for (std::int64_t i = 0; i < n(); ++i)
        if (split[static_cast<std::size_t>(i)] == Split::Test) out.push_back(i);
    return out;
}

Vec Dataset::train_feature(std::int64_t i) const {
    return features.row(train_rows()[static_cast<std::size_t>(i)]).transpose();
}
int Dataset::train_label(std::int64_t i) const {
    return labels[static_cast<std::size_t>(train_rows()[static_cast<std::size_t>(i)])];
}
Vec Dataset::test_feature(std::int64_t i) const {
    return features.row(test_rows()[static_cast<std::size_t>(i)]).transpose();
}
int Dataset::test_label(std::int64_t i) const {
    return labels[static_cast<std::size_t>(test_rows()[static_cast<std::size_t>(i)])];
}

void Dataset::validate() const {
    if (static_cast<std::int64_t>(labels.size()) != n() ||
        static_cast<std::int64_t>(split.size()) != n())
        throw SchemaError("dataset: labels/split length mismatch");
    if (num_classes < 1) throw SchemaError("dataset: num_classes < 1");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw SchemaError("dataset: label out of range");
    if (!features.allFinite()) throw SchemaError("dataset: non-finite feature");
}

void ScoreFile::validate() const {
    if (group_members.empty()) throw SchemaError("score file: needs at least one group");
    if (scores.size() != group_members.size())
        throw SchemaError("score file: scores length != group count");
    std::set<std::int64_t> seen;
    std::int64_t total = 0;
    for (const auto& g : group_members) {
        if (g.empty()) throw SchemaError("score file: empty group");
        for (std::int64_t idx : g) {
            if (idx < 0 || !seen.insert(idx).second)
                throw SchemaError("score file: group members not disjoint");
        }
        total += static_cast<std::int64_t>(g.size());
    }
    // Members must cover 0..total-1, i.e. form a partition of the train set.
    if (*seen.rbegin() != total - 1)
        throw SchemaError("score file: group members do not cover all train indices");
    for (double s : scores)
        if (!std::isfinite(s)) throw SchemaError("score file: non-finite score");
}

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

bool parse_number(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
    if (b == e) return false;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty file", 0, 0);

    std::vector<std::string> header = split_line(line);
    long label_col = -1, split_col = -1;
    std::vector<long> feature_cols;
    for (long j = 0; j < static_cast<long>(header.size()); ++j) {
        if (header[static_cast<std::size_t>(j)] == label_column)
            label_col = j;
        else if (header[static_cast<std::size_t>(j)] == "split")
            split_col = j;
        else
            feature_cols.push_back(j);
    }
    if (label_col < 0) throw MissingColumn("label column '" + label_column + "' not found");

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::vector<Split> splits;
    long row_no = 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size())
            throw ParseError("wrong cell count", row_no, static_cast<long>(cells.size()));
        std::vector<double> feat;
        feat.reserve(feature_cols.size());
        for (long j : feature_cols) {
            double v;
            if (!parse_number(cells[static_cast<std::size_t>(j)], v))
                throw ParseError("non-numeric cell", row_no, j);
            feat.push_back(v);
        }
        double yv;
        if (!parse_number(cells[static_cast<std::size_t>(label_col)], yv) ||
            yv != std::floor(yv))
            throw ParseError("label is not an integer", row_no, label_col);
        labels.push_back(static_cast<int>(yv));
        if (split_col >= 0) {
            const std::string& tag = cells[static_cast<std::size_t>(split_col)];
            if (tag == "train")
                splits.push_back(Split::Train);
            else if (tag == "test")
                splits.push_back(Split::Test);
            else
                throw ParseError("split must be train|test", row_no, split_col);
        } else {
            splits.push_back(Split::Train);
        }
        rows.push_back(std::move(feat));
    }
    if (rows.empty()) throw ParseError("no data rows", 1, 0);

    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(feature_cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    ds.labels = std::move(labels);
    ds.split = std::move(splits);
    ds.name = std::filesystem::path(path).stem().string();
    ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    ds.validate();
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path, const std::string& label_column) {
    std::ostringstream out;
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << "f" << j << ",";
    out << label_column << ",split\n";
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        for (Eigen::Index j = 0; j < ds.dim(); ++j) out << format_double(ds.features(i, j)) << ",";
        out << ds.labels[static_cast<std::size_t>(i)] << ","
            << (ds.split[static_cast<std::size_t>(i)] == Split::Train ? "train" : "test") << "\n";
    }
    write_file_atomic(path, out.str());
}

Dataset make_blobs(std::int64_t n, std::int64_t d, int classes, double separation,
                   numkit::Rng& rng) {
    if (n < classes || classes < 1 || d < 1)
        throw std::invalid_argument("make_blobs: need n >= classes >= 1, d >= 1");

    // Draw centroids from an inflating Gaussian until pairwise distances
    // clear the requested separation.
    Mat centroids(classes, d);
    double spread = std::max(separation, 1.0);
    for (int attempt = 0;; ++attempt) {
        for (int c = 0; c < classes; ++c)
            for (Eigen::Index j = 0; j < d; ++j) centroids(c, j) = spread * rng.next_normal();
        bool ok = true;
        for (int a = 0; a < classes && ok; ++a)
            for (int b = a + 1; b < classes; ++b)
                if ((centroids.row(a) - centroids.row(b)).norm() < separation) {
                    ok = false;
                    break;
                }
        if (ok || classes == 1) break;
        if (attempt % 8 == 7) spread *= 1.5;
    }

    // As-even-as-possible class counts.
    std::vector<std::int64_t> per_class(static_cast<std::size_t>(classes), n / classes);
    for (std::int64_t r = 0; r < n % classes; ++r) per_class[static_cast<std::size_t>(r)] += 1;

    Dataset ds;
    ds.features.resize(n, d);
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.split.assign(static_cast<std::size_t>(n), Split::Train);
    ds.name = "blobs";
    ds.num_classes = classes;

    std::int64_t row = 0;
    for (int c = 0; c < classes; ++c) {
        std::int64_t n_c = per_class[static_cast<std::size_t>(c)];
        std::int64_t n_test = static_cast<std::int64_t>(std::llround(0.2 * static_cast<double>(n_c)));
        for (std::int64_t i = 0; i < n_c; ++i, ++row) {
            for (Eigen::Index j = 0; j < d; ++j)
                ds.features(row, j) = centroids(c, j) + rng.next_normal();
            ds.labels[static_cast<std::size_t>(row)] = c;
            // Last n_test rows of each class go to test.
            if (i >= n_c - n_test) ds.split[static_cast<std::size_t>(row)] = Split::Test;
        }
    }
    ds.validate();
    return ds;
}

Dataset stratified_split(const Dataset& ds, double train_fraction, numkit::Rng& rng) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw std::invalid_argument("stratified_split: fraction must be in (0,1)");
    Dataset out = ds;
    for (int c = 0; c < ds.num_classes; ++c) {
        std::vector<std::int64_t> rows;
        for (std::int64_t i = 0; i < ds.n(); ++i)
            if (ds.labels[static_cast<std::size_t>(i)] == c) rows.push_back(i);
        if (rows.empty()) continue;
        rng.shuffle(rows);
        auto n_train = static_cast<std::int64_t>(
            std::llround(train_fraction * static_cast<double>(rows.size())));
        for (std::size_t i = 0; i < rows.size(); ++i)
            out.split[static_cast<std::size_t>(rows[i])] =
                (static_cast<std::int64_t>(i) < n_train) ? Split::Train : Split::Test;
    }
    return out;
}

std::pair<Dataset, CorruptionRecord> flip_labels(const Dataset& ds, double fraction,
                                                 numkit::Rng& rng) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw std::invalid_argument("flip_labels: fraction must be in (0,1)");
    if (ds.num_classes < 2) throw std::invalid_argument("flip_labels: need >= 2 classes");

    std::vector<std::int64_t> train = ds.train_rows();
    auto n_flip = static_cast<std::int64_t>(
        std::llround(fraction * static_cast<double>(train.size())));
    std::vector<std::int64_t> chosen =
        rng.sample_without_replacement(static_cast<std::int64_t>(train.size()), n_flip);

    Dataset out = ds;
    CorruptionRecord rec;
    rec.fraction = fraction;
    for (std::int64_t ti : chosen) {
        std::int64_t row = train[static_cast<std::size_t>(ti)];
        int orig = ds.labels[static_cast<std::size_t>(row)];
        int offset = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(ds.num_classes - 1)));
        int flipped = (orig + 1 + offset) % ds.num_classes;
        out.labels[static_cast<std::size_t>(row)] = flipped;
        rec.flipped_indices.push_back(ti);
        rec.original_labels.push_back(orig);
    }
    return {out, rec};
}

Dataset remove_train_rows(const Dataset& ds, const std::vector<std::int64_t>& train_indices) {
    std::vector<std::int64_t> train = ds.train_rows();
    std::set<std::int64_t> drop;
    for (std::int64_t ti : train_indices) {
        if (ti < 0 || ti >= static_cast<std::int64_t>(train.size()))
            throw std::invalid_argument("remove_train_rows: index out of range");
        drop.insert(train[static_cast<std::size_t>(ti)]);
    }
    std::vector<std::int64_t> keep;
    for (std::int64_t i = 0; i < ds.n(); ++i)
        if (!drop.count(i)) keep.push_back(i);

    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(keep.size()), ds.dim());
    out.labels.resize(keep.size());
    out.split.resize(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(keep[i]);
        out.labels[i] = ds.labels[static_cast<std::size_t>(keep[i])];
        out.split[i] = ds.split[static_cast<std::size_t>(keep[i])];
    }
    out.name = ds.name;
    out.num_classes = ds.num_classes;
    return out;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << contents;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

void write_scores(const ScoreFile& sf, const std::string& path) {
    sf.validate();
    json j;
    j["method"] = sf.method;
    j["grouping"] = sf.grouping;
    j["group_size"] = sf.group_size;
    j["seed"] = sf.seed;
    j["groups"] = json::array();
    for (std::size_t g = 0; g < sf.group_members.size(); ++g) {
        json entry;
        entry["id"] = g;
        entry["members"] = sf.group_members[g];
        entry["score"] = sf.scores[g];
        j["groups"].push_back(entry);
    }
    write_file_atomic(path, j.dump(2) + "\n");

    std::ostringstream csv;
    csv << "group_id,score,size\n";
    for (std::size_t g = 0; g < sf.group_members.size(); ++g)
        csv << g << "," << format_double(sf.scores[g]) << "," << sf.group_members[g].size() << "\n";
    std::filesystem::path csv_path(path);
    csv_path.replace_extension(".csv");
    write_file_atomic(csv_path.string(), csv.str());
}

ScoreFile read_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("score file: bad JSON: ") + e.what());
    }
    ScoreFile sf;
    try {
        sf.method = j.at("method").get<std::string>();
        sf.grouping = j.at("grouping").get<std::string>();
        sf.group_size = j.at("group_size").get<std::int64_t>();
        sf.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& entry : j.at("groups")) {
            sf.group_members.push_back(entry.at("members").get<std::vector<std::int64_t>>());
            sf.scores.push_back(entry.at("score").get<double>());
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("score file: missing field: ") + e.what());
    }
    sf.validate();
    return sf;
}

}  // namespace datahub
}  // namespace ggda
