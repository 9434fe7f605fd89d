#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ggda/datahub.hpp"
#include "ggda/models.hpp"
#include "test_util.hpp"

using namespace ggda;
using datahub::Dataset;
using numkit::Rng;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "ggda_datahub_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST_CASE("load_csv basic three-row file") {
    auto path = temp_file("basic.csv");
    write_text(path, "a,b,label\n1.0,2.0,0\n3.5,-1.25,1\n0,0,0\n");
    Dataset ds = datahub::load_csv(path.string(), "label");
    CHECK(ds.n() == 3);
    CHECK(ds.dim() == 2);
    CHECK(ds.num_classes == 2);
    CHECK(ds.features(1, 1) == doctest::Approx(-1.25));
    CHECK(ds.labels[1] == 1);
}

TEST_CASE("load_csv missing label column") {
    auto path = temp_file("nolabel.csv");
    write_text(path, "a,b\n1,2\n");
    CHECK_THROWS_AS(datahub::load_csv(path.string(), "label"), MissingColumn);
}

TEST_CASE("load_csv rejects non-numeric cells with a locus") {
    auto path = temp_file("bad.csv");
    write_text(path, "a,b,label\n1,2,0\n1,oops,1\n");
    try {
        datahub::load_csv(path.string(), "label");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row == 2);
        CHECK(e.col == 1);
    }
}

TEST_CASE("load_csv handles a HELOC-shaped file with 23 features") {
    auto path = temp_file("heloc.csv");
    std::string header;
    for (int j = 0; j < 23; ++j) header += "x" + std::to_string(j) + ",";
    header += "label\n";
    std::string row;
    Rng rng(8);
    std::string body;
    for (int i = 0; i < 12; ++i) {
        row.clear();
        for (int j = 0; j < 23; ++j) row += std::to_string(rng.next_double()) + ",";
        row += std::to_string(static_cast<int>(rng.next_below(2))) + "\n";
        body += row;
    }
    write_text(path, header + body);
    Dataset ds = datahub::load_csv(path.string(), "label");
    CHECK(ds.dim() == 23);
    CHECK(ds.n() == 12);
}

TEST_CASE("make_blobs basic shape and split arithmetic") {
    Rng rng(21);
    Dataset ds = datahub::make_blobs(10, 3, 2, 5.0, rng);
    CHECK(ds.n() == 10);
    CHECK(ds.n_train() == 8);
    CHECK(ds.n_test() == 2);

    Rng rng2(22);
    Dataset one_class = datahub::make_blobs(20, 2, 1, 5.0, rng2);
    for (int y : one_class.labels) CHECK(y == 0);
}

TEST_CASE("make_blobs separation is learnable by logistic regression") {
    Rng rng(23);
    Dataset ds = datahub::make_blobs(100, 2, 2, 10.0, rng);
    models::TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.epochs = 200;
    cfg.batch_size = 16;
    cfg.seed = 1;
    auto [state, ckpts] = models::train(models::logreg(2, 2), ds, cfg);
    CHECK(models::accuracy(state, ds, datahub::Split::Test) >= 0.95);
}

TEST_CASE("make_blobs satisfies dataset invariants over random generator inputs") {
    Rng meta(77);
    for (int trial = 0; trial < 50; ++trial) {
        int classes = 1 + static_cast<int>(meta.next_below(4));
        auto n = static_cast<std::int64_t>(classes) + static_cast<std::int64_t>(meta.next_below(60));
        auto d = 1 + static_cast<std::int64_t>(meta.next_below(5));
        Rng rng(meta.next_u64());
        Dataset ds = datahub::make_blobs(n, d, classes, 1.0 + meta.next_double() * 8.0, rng);
        CHECK_NOTHROW(ds.validate());
        CHECK(ds.n_train() + ds.n_test() == n);
    }
}

TEST_CASE("flip_labels flips the exact count and never to the same class") {
    Rng gen(31);
    Dataset ds = datahub::make_blobs(125, 2, 5, 6.0, gen);
    std::int64_t n_train = ds.n_train();
    CHECK(n_train == 100);

    Rng flip_rng(32);
    auto [corrupted, rec] = datahub::flip_labels(ds, 0.2, flip_rng);
    CHECK(rec.flipped_indices.size() == 20);
    for (std::size_t i = 0; i < rec.flipped_indices.size(); ++i) {
        std::int64_t ti = rec.flipped_indices[i];
        CHECK(corrupted.train_label(ti) != rec.original_labels[i]);
        CHECK(ds.train_label(ti) == rec.original_labels[i]);
    }
    // Features and test labels untouched.
    CHECK(corrupted.features == ds.features);
    for (std::int64_t t = 0; t < ds.n_test(); ++t)
        CHECK(corrupted.test_label(t) == ds.test_label(t));
}

TEST_CASE("flip_labels on binary data flips to the complement") {
    Rng gen(33);
    Dataset ds = datahub::make_blobs(50, 2, 2, 6.0, gen);
    Rng flip_rng(34);
    auto [corrupted, rec] = datahub::flip_labels(ds, 0.25, flip_rng);
    for (std::size_t i = 0; i < rec.flipped_indices.size(); ++i)
        CHECK(corrupted.train_label(rec.flipped_indices[i]) == 1 - rec.original_labels[i]);
}

TEST_CASE("flip_labels is deterministic in the seed") {
    Rng gen(35);
    Dataset ds = datahub::make_blobs(60, 2, 2, 6.0, gen);
    Rng r1(99), r2(99);
    auto [c1, rec1] = datahub::flip_labels(ds, 0.2, r1);
    auto [c2, rec2] = datahub::flip_labels(ds, 0.2, r2);
    CHECK(rec1.flipped_indices == rec2.flipped_indices);
    CHECK(c1.labels == c2.labels);
}

TEST_CASE("score file round trip") {
    datahub::ScoreFile sf;
    sf.method = "influence_exact";
    sf.grouping = "random";
    sf.group_size = 2;
    sf.seed = 17;
    sf.group_members = {{0, 3}, {1, 2}, {4}};
    sf.scores = {0.25, -1.5, 3.0e-7};
    auto path = temp_file("scores.json");
    datahub::write_scores(sf, path.string());
    datahub::ScoreFile back = datahub::read_scores(path.string());
    CHECK(back.method == sf.method);
    CHECK(back.grouping == sf.grouping);
    CHECK(back.group_size == sf.group_size);
    CHECK(back.seed == sf.seed);
    CHECK(back.group_members == sf.group_members);
    CHECK(back.scores == sf.scores);
    CHECK(std::filesystem::exists(temp_file("scores.csv")));
}

TEST_CASE("score file schema violations") {
    datahub::ScoreFile sf;
    sf.method = "m";
    sf.grouping = "random";
    sf.group_size = 1;
    sf.group_members = {{0}, {1}};
    sf.scores = {1.0};  // wrong length
    CHECK_THROWS_AS(sf.validate(), SchemaError);

    sf.scores = {1.0, 2.0};
    sf.group_members.clear();  // no groups
    CHECK_THROWS_AS(sf.validate(), SchemaError);
}

TEST_CASE("dataset csv export round trip") {
    Rng gen(41);
    Dataset ds = datahub::make_blobs(25, 3, 2, 4.0, gen);
    auto path = temp_file("ds.csv");
    datahub::write_csv(ds, path.string());
    Dataset back = datahub::load_csv(path.string(), "label");
    CHECK(back.n() == ds.n());
    CHECK(back.dim() == ds.dim());
    CHECK(back.features == ds.features);  // %.17g keeps doubles bit-exact
    CHECK(back.labels == ds.labels);
    CHECK(back.split == ds.split);
}

TEST_CASE("remove_train_rows drops exactly the requested rows") {
    Rng gen(51);
    Dataset ds = datahub::make_blobs(30, 2, 2, 4.0, gen);
    std::int64_t before = ds.n_train();
    Dataset reduced = datahub::remove_train_rows(ds, {0, 2, 5});
    CHECK(reduced.n_train() == before - 3);
    CHECK(reduced.n_test() == ds.n_test());
    Dataset same = datahub::remove_train_rows(ds, {});
    CHECK(same.features == ds.features);
}

TEST_CASE("stratified_split produces both splits per class") {
    Rng gen(61);
    Dataset ds = datahub::make_blobs(100, 2, 2, 4.0, gen);
    for (auto& s : ds.split) s = datahub::Split::Train;
    Rng split_rng(62);
    Dataset out = datahub::stratified_split(ds, 0.8, split_rng);
    CHECK(out.n_train() == 80);
    CHECK(out.n_test() == 20);
}
