#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <set>

#include "dlsa/data.hpp"
#include "dlsa/least_squares.hpp"
#include "dlsa/losses.hpp"
#include "test_util.hpp"

using namespace dlsa;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

ShiftSpec basic_spec() {
    ShiftSpec spec;
    spec.num_classes = 3;
    spec.samples_per_class = 50;
    spec.input_dim = 4;
    spec.rotation_degrees = 30.0;
    spec.translation = Vector(4, 1.0);
    spec.class_std = 0.5;
    spec.seed = 7;
    return spec;
}

}  // namespace

TEST(GenerateShiftedPair, SameSeedIsBitIdentical) {
    ShiftSpec spec = basic_spec();
    auto [s1, t1] = generate_shifted_pair(spec);
    auto [s2, t2] = generate_shifted_pair(spec);
    EXPECT_EQ(s1.features, s2.features);
    EXPECT_EQ(t1.features, t2.features);
    EXPECT_EQ(*s1.labels, *s2.labels);
}

TEST(GenerateShiftedPair, PerClassCountsExact) {
    ShiftSpec spec = basic_spec();
    auto [source, target] = generate_shifted_pair(spec);
    for (const LabeledDataset* ds : {&source, &target}) {
        std::vector<std::size_t> counts(3, 0);
        for (std::size_t l : *ds->labels) ++counts[l];
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(counts[c], 50u);
    }
}

TEST(GenerateShiftedPair, NoShiftGivesSmallMarginalAngle) {
    ShiftSpec spec = basic_spec();
    spec.rotation_degrees = 0.0;
    spec.translation.clear();
    spec.samples_per_class = 500;
    auto [source, target] = generate_shifted_pair(spec);
    LineFit fs = fit_line(split_latent(source.features, 0), true);
    LineFit ft = fit_line(split_latent(target.features, 0), true);
    EXPECT_LT(angle(fs.slope, ft.slope), 0.15);
}

TEST(GenerateShiftedPair, FullRotationEqualsNoRotation) {
    ShiftSpec spec = basic_spec();
    spec.translation.clear();
    spec.rotation_degrees = 0.0;
    auto [s0, t0] = generate_shifted_pair(spec);
    spec.rotation_degrees = 360.0;
    auto [s1, t1] = generate_shifted_pair(spec);
    for (std::size_t i = 0; i < t0.features.size(); ++i)
        EXPECT_NEAR(t0.features.data()[i], t1.features.data()[i], 1e-9);
}

TEST(GenerateShiftedPair, InvalidSpecThrows) {
    ShiftSpec spec = basic_spec();
    spec.samples_per_class = 1;
    EXPECT_THROW(generate_shifted_pair(spec), ConfigError);
}

TEST(FeatureCsv, HandParse) {
    const std::string path = temp_path("dlsa_hand.csv");
    std::ofstream(path) << "1.0,2.0,0\n3.0,4.0,1\n";
    LabeledDataset ds = load_feature_csv(path, true);
    std::remove(path.c_str());
    EXPECT_EQ(ds.features, Matrix(2, 2, {1, 2, 3, 4}));
    EXPECT_EQ(*ds.labels, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(ds.num_classes, 2u);
}

TEST(FeatureCsv, HeaderLineSkipped) {
    const std::string path = temp_path("dlsa_header.csv");
    std::ofstream(path) << "f0,f1,label\n1.0,2.0,0\n";
    LabeledDataset ds = load_feature_csv(path, true);
    std::remove(path.c_str());
    EXPECT_EQ(ds.features.rows(), 1u);
}

TEST(FeatureCsv, WindowsNewlinesAccepted) {
    const std::string path = temp_path("dlsa_crlf.csv");
    std::ofstream(path) << "1.0,2.0,0\r\n3.0,4.0,1\r\n";
    LabeledDataset ds = load_feature_csv(path, true);
    std::remove(path.c_str());
    EXPECT_EQ(ds.features.rows(), 2u);
}

TEST(FeatureCsv, ParseErrors) {
    const std::string ragged = temp_path("dlsa_ragged.csv");
    std::ofstream(ragged) << "1.0,2.0,0\n3.0,1\n";
    EXPECT_THROW(load_feature_csv(ragged, true), ParseError);
    std::remove(ragged.c_str());

    const std::string badlabel = temp_path("dlsa_badlabel.csv");
    std::ofstream(badlabel) << "1.0,2.0,0.5\n";
    EXPECT_THROW(load_feature_csv(badlabel, true), ParseError);
    std::remove(badlabel.c_str());

    const std::string nonfinite = temp_path("dlsa_inf.csv");
    std::ofstream(nonfinite) << "inf,2.0,0\n";
    EXPECT_THROW(load_feature_csv(nonfinite, true), ParseError);
    std::remove(nonfinite.c_str());
}

TEST(FeatureCsv, UnlabeledOmitsLabelColumn) {
    LabeledDataset ds;
    ds.features = Matrix(2, 2, {1, 2, 3, 4});
    const std::string path = temp_path("dlsa_unlabeled.csv");
    save_feature_csv(ds, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    in.close();
    std::remove(path.c_str());
    EXPECT_EQ(line, "1,2");
}

TEST(FeatureCsv, RoundTripIsExact) {
    std::mt19937_64 rng(50);
    LabeledDataset ds;
    ds.features = test::random_matrix(rng, 1000, 8, -100.0, 100.0);
    ds.labels = test::random_labels(rng, 1000, 5);
    ds.num_classes = 5;
    const std::string path = temp_path("dlsa_roundtrip.csv");
    save_feature_csv(ds, path);
    LabeledDataset back = load_feature_csv(path, true);
    std::remove(path.c_str());
    EXPECT_EQ(back.features, ds.features);
    EXPECT_EQ(*back.labels, *ds.labels);
}

TEST(BatchIterator, PartitionAndDeterminism) {
    auto b1 = batch_iterator(4, 2, 9, 0);
    ASSERT_EQ(b1.size(), 2u);
    std::set<std::size_t> seen(b1[0].begin(), b1[0].end());
    seen.insert(b1[1].begin(), b1[1].end());
    EXPECT_EQ(seen, (std::set<std::size_t>{0, 1, 2, 3}));
    EXPECT_EQ(b1, batch_iterator(4, 2, 9, 0));
}

TEST(BatchIterator, ShortFinalBatchDropped) {
    auto batches = batch_iterator(5, 2, 3, 1);
    ASSERT_EQ(batches.size(), 2u);
    EXPECT_EQ(batches[0].size(), 2u);
    EXPECT_EQ(batches[1].size(), 2u);
}

// Properties (>= 1000 random cases each).

TEST(DataProperties, CsvRoundTripIdentity) {
    std::mt19937_64 rng(51);
    std::uniform_int_distribution<std::size_t> nd(1, 20), dd(2, 6);
    const std::string path = temp_path("dlsa_prop_roundtrip.csv");
    for (int iter = 0; iter < 1000; ++iter) {
        LabeledDataset ds;
        ds.features = test::random_matrix(rng, nd(rng), dd(rng), -1e6, 1e6);
        if (iter % 2 == 0) {
            ds.labels = test::random_labels(rng, ds.features.rows(), 4);
            ds.num_classes = 4;
        }
        save_feature_csv(ds, path);
        LabeledDataset back = load_feature_csv(path, ds.has_labels());
        ASSERT_EQ(back.features, ds.features);
        if (ds.has_labels()) ASSERT_EQ(*back.labels, *ds.labels);
    }
    std::remove(path.c_str());
}

TEST(DataProperties, BatchIteratorVisitsEachRetainedIndexOnce) {
    std::mt19937_64 rng(52);
    std::uniform_int_distribution<std::size_t> nd(2, 200), bd(2, 33);
    for (int iter = 0; iter < 1000; ++iter) {
        const std::size_t n = nd(rng), bs = bd(rng);
        auto batches = batch_iterator(n, bs, rng(), iter);
        std::set<std::size_t> seen;
        std::size_t total = 0;
        for (const auto& b : batches) {
            ASSERT_GE(b.size(), 2u);
            for (std::size_t idx : b) {
                ASSERT_LT(idx, n);
                seen.insert(idx);
                ++total;
            }
        }
        ASSERT_EQ(seen.size(), total);  // no repeats
        const std::size_t remainder = n % bs;
        const std::size_t expected = remainder == 1 ? n - 1 : n;
        ASSERT_EQ(total, expected);
    }
}
