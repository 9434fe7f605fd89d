#ifndef GGDA_DATAHUB_HPP
#define GGDA_DATAHUB_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ggda/numkit.hpp"

namespace ggda {
namespace datahub {

enum class Split { Train, Test };

/// Feature matrix with integer class labels and a train/test tag per row.
/// Immutable once built; operations return new datasets.
///
/// Throughout the library, "train index i" means the i-th train row in
/// dataset row order (0 .. n_train-1), not the raw dataset row id.
struct Dataset {
    Mat features;                   // n x d
    std::vector<int> labels;        // values in [0, C)
    std::vector<Split> split;
    std::string name;
    int num_classes = 0;

    std::int64_t n() const { return features.rows(); }
    std::int64_t dim() const { return features.cols(); }

    std::vector<std::int64_t> train_rows() const;
    std::vector<std::int64_t> test_rows() const;
    std::int64_t n_train() const { return static_cast<std::int64_t>(train_rows().size()); }
    std::int64_t n_test() const { return static_cast<std::int64_t>(test_rows().size()); }

    /// Row/label of the i-th train (test) row.
    Vec train_feature(std::int64_t i) const;
    int train_label(std::int64_t i) const;
    Vec test_feature(std::int64_t i) const;
    int test_label(std::int64_t i) const;

    void validate() const;  // throws SchemaError on a broken invariant
};

/// Which train rows had their label flipped, and to recover what.
struct CorruptionRecord {
    std::vector<std::int64_t> flipped_indices;  // train indices, sorted
    std::vector<int> original_labels;           // parallel to flipped_indices
    double fraction = 0.0;
};

/// Serialized attribution result: one score per group plus the grouping
/// itself, so downstream evaluation needs no other state.
struct ScoreFile {
    std::string method;
    std::string grouping;
    std::int64_t group_size = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::int64_t>> group_members;  // partition of train indices
    std::vector<double> scores;                            // one per group

    void validate() const;  // throws SchemaError
};

/// Reads a CSV with a header row. All non-label numeric columns become
/// features in header order; the label column must hold integers. A column
/// named "split" (values train/test) is honored when present, otherwise all
/// rows are tagged train. Any other non-numeric cell raises ParseError with
/// its row/column locus.
Dataset load_csv(const std::string& path, const std::string& label_column);

/// Writes the dataset back out in the same schema (features, label, split).
void write_csv(const Dataset& ds, const std::string& path,
               const std::string& label_column = "label");

/// Gaussian class blobs, one unit-covariance cluster per class with centroid
/// pairwise distances >= separation, 80/20 train/test split stratified by
/// class.
Dataset make_blobs(std::int64_t n, std::int64_t d, int classes, double separation,
                   numkit::Rng& rng);

/// Tags round(train_fraction * n_c) rows of each class as train, the rest as
/// test. Used to split all-train CSV datasets.
Dataset stratified_split(const Dataset& ds, double train_fraction, numkit::Rng& rng);

/// Flips round(fraction * n_train) uniformly chosen train labels, each to a
/// uniformly chosen different class. Features and test rows are untouched.
std::pair<Dataset, CorruptionRecord> flip_labels(const Dataset& ds, double fraction,
                                                 numkit::Rng& rng);

/// Copy of ds with the given train rows removed (test rows always kept).
Dataset remove_train_rows(const Dataset& ds, const std::vector<std::int64_t>& train_indices);

/// JSON score file plus a flat companion CSV (group_id,score,size) next to it.
void write_scores(const ScoreFile& sf, const std::string& path);
ScoreFile read_scores(const std::string& path);

/// Atomic file write: temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace datahub
}  // namespace ggda

#endif
