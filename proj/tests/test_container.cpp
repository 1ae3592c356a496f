#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "oracles.hpp"
#include "slimstack/container.hpp"
#include "slimstack/rng.hpp"
#include "slimstack/synthetic.hpp"

using namespace slimstack;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "slimstack_tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

LinearModel tiny_model() {
    Rng rng(120);
    LinearModel model;
    model.layers.push_back({"layer0", oracle::random_matrix(rng, 8, 4), Activation::relu});
    model.layers.push_back({"layer1", oracle::random_matrix(rng, 3, 8), Activation::identity});
    return model;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data().data(), b.data().data(),
                       a.data().size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Container, ModelRoundTripIsBitExact) {
    const fs::path dir = scratch_dir("roundtrip");
    const LinearModel model = tiny_model();
    const std::string manifest = (dir / "model.json").string();
    save_model(model, manifest);
    const LinearModel back = load_model(manifest);
    ASSERT_EQ(back.layers.size(), 2u);
    for (std::size_t l = 0; l < 2; ++l) {
        EXPECT_EQ(back.layers[l].name, model.layers[l].name);
        EXPECT_EQ(back.layers[l].act, model.layers[l].act);
        EXPECT_TRUE(bitwise_equal(back.layers[l].w, model.layers[l].w));
    }
}

TEST(Container, ExtrasRoundTrip) {
    const fs::path dir = scratch_dir("extras");
    const LinearModel model = tiny_model();
    ContainerExtras extras;
    extras.metadata["seed"] = "42";
    extras.metadata["note"] = "fixture";
    LayerQuantInfo qi;
    qi.bits = 4;
    qi.rows = {{4, 0.25, 3}, {4, 0.5, -2}};
    extras.quant["layer0"] = qi;

    const std::string manifest = (dir / "model.json").string();
    save_model(model, manifest, &extras);
    ContainerExtras got;
    const LinearModel back = load_model(manifest, &got);
    (void)back;
    EXPECT_EQ(got.metadata.at("seed"), "42");
    EXPECT_EQ(got.metadata.at("note"), "fixture");
    ASSERT_EQ(got.quant.count("layer0"), 1u);
    EXPECT_EQ(got.quant.at("layer0").bits, 4);
    ASSERT_EQ(got.quant.at("layer0").rows.size(), 2u);
    EXPECT_DOUBLE_EQ(got.quant.at("layer0").rows[0].scale, 0.25);
    EXPECT_EQ(got.quant.at("layer0").rows[0].zero_point, 3ll);
    EXPECT_EQ(got.quant.at("layer0").rows[1].zero_point, -2ll);
}

TEST(Container, CalibrationRoundTrip) {
    const fs::path dir = scratch_dir("calib");
    Rng rng(121);
    CalibrationSet calib;
    calib.x0 = oracle::random_matrix(rng, 4, 9);
    const std::string manifest = (dir / "calib.json").string();
    save_calibration(calib, manifest);
    const CalibrationSet back = load_calibration(manifest);
    EXPECT_TRUE(bitwise_equal(back.x0, calib.x0));
}

TEST(Container, MissingTensorReferenceThrows) {
    const fs::path dir = scratch_dir("missing_tensor");
    const LinearModel model = tiny_model();
    const std::string manifest = (dir / "model.json").string();
    save_model(model, manifest);

    // drop layer0's tensor record from the manifest but keep the layer entry
    std::ifstream in(manifest);
    nlohmann::json j = nlohmann::json::parse(in);
    in.close();
    nlohmann::json kept = nlohmann::json::array();
    for (const auto& t : j.at("tensors")) {
        if (t.at("name") != "layer0") kept.push_back(t);
    }
    j["tensors"] = kept;
    std::ofstream out(manifest, std::ios::trunc);
    out << j.dump(2);
    out.close();

    try {
        load_model(manifest);
        FAIL() << "expected missing tensor";
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "missing tensor: layer0");
    }
}

TEST(Container, ChecksumMismatchThrows) {
    const fs::path dir = scratch_dir("checksum");
    const LinearModel model = tiny_model();
    const std::string manifest = (dir / "model.json").string();
    save_model(model, manifest);

    // flip one payload byte
    const fs::path bin = dir / "model.bin";
    std::fstream f(bin, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(5);
    char c;
    f.seekg(5);
    f.get(c);
    f.seekp(5);
    f.put(static_cast<char>(c ^ 0x1));
    f.close();

    try {
        load_model(manifest);
        FAIL() << "expected checksum mismatch";
    } catch (const std::runtime_error& e) {
        EXPECT_EQ(std::string(e.what()).find("checksum mismatch"), 0u);
    }
}

TEST(Container, MissingFilesThrow) {
    const fs::path dir = scratch_dir("missing_files");
    EXPECT_THROW(load_model((dir / "nope.json").string()), std::runtime_error);

    const LinearModel model = tiny_model();
    const std::string manifest = (dir / "model.json").string();
    save_model(model, manifest);
    fs::remove(dir / "model.bin");
    EXPECT_THROW(load_model(manifest), std::runtime_error);
}

TEST(Container, DimensionChainValidation) {
    const fs::path dir = scratch_dir("chain");
    Rng rng(122);
    LinearModel bad;
    bad.layers.push_back({"layer0", oracle::random_matrix(rng, 8, 4), Activation::relu});
    bad.layers.push_back({"layer1", oracle::random_matrix(rng, 3, 7), Activation::identity});
    try {
        validate_model(bad);
        FAIL() << "expected dimension chain error";
    } catch (const std::invalid_argument& e) {
        EXPECT_STREQ(e.what(), "dimension chain broken at layer layer1");
    }
    EXPECT_THROW(save_model(bad, (dir / "model.json").string()), std::invalid_argument);

    // a consistent 4->8->3 chain loads fine
    const LinearModel good = tiny_model();
    save_model(good, (dir / "good.json").string());
    const LinearModel back = load_model((dir / "good.json").string());
    EXPECT_EQ(back.d_in(), 4u);
    EXPECT_EQ(back.d_out(), 3u);
}

TEST(Container, GeneratedModelSurvivesRoundTrip) {
    const fs::path dir = scratch_dir("generated");
    const auto [model, calib] = gen_synthetic_model(3, {6, 8, 8, 5}, 0.7, 9);
    save_model(model, (dir / "model.json").string());
    save_calibration(calib, (dir / "calib.json").string());
    const LinearModel m2 = load_model((dir / "model.json").string());
    const CalibrationSet c2 = load_calibration((dir / "calib.json").string());
    ASSERT_EQ(m2.layers.size(), 3u);
    for (std::size_t l = 0; l < 3; ++l) {
        EXPECT_TRUE(bitwise_equal(m2.layers[l].w, model.layers[l].w));
    }
    EXPECT_TRUE(bitwise_equal(c2.x0, calib.x0));
}
