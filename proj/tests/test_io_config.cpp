// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

using namespace teleview;
using namespace teleview::testing;

namespace {

std::string readBytes(const std::filesystem::path &p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void writeBytes(const std::filesystem::path &p, const std::string &s) {
    std::ofstream os(p, std::ios::binary);
    os << s;
}

template <class F> std::string configErrorMessage(F &&f) {
    try {
        f();
    } catch (const ConfigError &e) {
        return e.what();
    }
    return "<no ConfigError>";
}

} // namespace

TEST(Pfm, ThreeChannelRoundTripAndLayout) {
    const auto dir = scratchDir("pfm_rgb");
    const std::vector<float> v = {0.0f, 1.0f, 2.0f, 3.0f, 4.0f, 5.0f, -1.5f, 1e-30f, 7.0f,
                                  8.0f, 9.0f, 10.0f, 11.0f, 12.0f, 13.0f, 14.0f, 15.0f, 16.0f};
    writePfm(dir / "a.pfm", v, 3, 2, 3);
    const std::string bytes = readBytes(dir / "a.pfm");
    const std::string header = "PF\n3 2\n-1.0\n";
    ASSERT_EQ(bytes.substr(0, header.size()), header);
    ASSERT_EQ(bytes.size(), header.size() + 18 * 4);
    // Bottom row first, little endian: the first stored float is 8.0f.
    const std::string first = bytes.substr(header.size(), 4);
    EXPECT_EQ(first, std::string("\x00\x00\x00\x41", 4));
    const PfmImage p = readPfm(dir / "a.pfm");
    EXPECT_EQ(p.width, 3);
    EXPECT_EQ(p.height, 2);
    EXPECT_EQ(p.channels, 3);
    EXPECT_EQ(p.values, v);
}

TEST(Pfm, ReadsBigEndianFiles) {
    const auto dir = scratchDir("pfm_be");
    std::string s = "Pf\n2 1\n1.0\n";
    s += std::string("\x3f\x80\x00\x00", 4); // 1.0f
    s += std::string("\xc0\x00\x00\x00", 4); // -2.0f
    writeBytes(dir / "be.pfm", s);
    const PfmImage p = readPfm(dir / "be.pfm");
    EXPECT_EQ(p.values, (std::vector<float>{1.0f, -2.0f}));
}

TEST(Pfm, RejectsMalformedFiles) {
    const auto dir = scratchDir("pfm_bad");
    writeBytes(dir / "magic.pfm", "P6\n2 2\n-1.0\n");
    writeBytes(dir / "short.pfm", "Pf\n2 2\n-1.0\n1234");
    EXPECT_THROW(readPfm(dir / "magic.pfm"), IoError);
    EXPECT_THROW(readPfm(dir / "short.pfm"), IoError);
    EXPECT_THROW(readPfm(dir / "missing.pfm"), IoError);
    EXPECT_THROW(writePfm(dir / "x.pfm", {1.0f}, 2, 1, 1), std::invalid_argument);
    EXPECT_THROW(writePfm(dir / "x.pfm", {1.0f, 2.0f}, 1, 1, 2), std::invalid_argument);
}

TEST(Pfm, DepthAndDisparityKeepValidity) {
    const auto dir = scratchDir("pfm_maps");
    DepthMap d(5, 3);
    d.set(1, 1, 1.25);
    d.set(4, 2, 0.5);
    writeDepthPfm(dir / "d.pfm", d);
    EXPECT_EQ(readDepthPfm(dir / "d.pfm"), d);
    DisparityMap q(5, 3);
    q.set(0, 0, 0.0);
    q.set(2, 1, 33.5);
    writeDisparityPfm(dir / "q.pfm", q);
    EXPECT_EQ(readDisparityPfm(dir / "q.pfm"), q);
    writePfm(dir / "rgb.pfm", std::vector<float>(45, 1.0f), 5, 3, 3);
    EXPECT_THROW(readDepthPfm(dir / "rgb.pfm"), IoError);
}

TEST(Pfm, FeatureStackRoundTrip) {
    const auto dir = scratchDir("features");
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    FeatureImage fi(7, 5, 11);
    for (float &v : fi.features) {
        v = u(rng);
    }
    for (float &a : fi.alpha) {
        a = 0.5f * (u(rng) + 1.0f);
    }
    writeFeatureStack(dir, fi);
    EXPECT_TRUE(std::filesystem::exists(dir / "feature_10.pfm"));
    EXPECT_EQ(readFeatureStack(dir), fi);
}

TEST(Png, SixteenBitRoundTripWithGammaChunk) {
    const auto dir = scratchDir("png16");
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageBuffer img(13, 9, 3);
    for (float &v : img.values()) {
        v = u(rng);
    }
    writePng(dir / "a.png", img, 16);
    const ImageBuffer back = readPng(dir / "a.png");
    ASSERT_EQ(back.channels(), 3);
    for (std::size_t i = 0; i < img.values().size(); ++i) {
        EXPECT_NEAR(back.values()[i], img.values()[i], 1e-4);
    }
    const std::string bytes = readBytes(dir / "a.png");
    const auto pos = bytes.find("gAMA");
    ASSERT_NE(pos, std::string::npos);
    // 1 / 2.2 scaled by 100000 and rounded.
    const auto *g = reinterpret_cast<const unsigned char *>(bytes.data() + pos + 4);
    EXPECT_EQ((g[0] << 24) | (g[1] << 16) | (g[2] << 8) | g[3], 45455);
    EXPECT_EQ(bytes.find("tIME"), std::string::npos);
    EXPECT_EQ(bytes.find("tEXt"), std::string::npos);
}

TEST(Png, EightBitQuantizationAndDeterminism) {
    const auto dir = scratchDir("png8");
    ImageBuffer img(4, 1, 1, std::vector<float>{0.0f, 0.18f, 0.5f, 1.0f});
    writePng(dir / "a.png", img, 8);
    writePng(dir / "b.png", img, 8);
    EXPECT_EQ(readBytes(dir / "a.png"), readBytes(dir / "b.png"));
    const ImageBuffer back = readPng(dir / "a.png");
    EXPECT_EQ(back(0, 0, 0), 0.0f);
    EXPECT_EQ(back(3, 0, 0), 1.0f);
    EXPECT_NEAR(back(1, 0, 0), 0.18f, 0.005f);
    EXPECT_NEAR(back(2, 0, 0), 0.5f, 0.005f);
    // Masks are written without gamma encoding.
    Mask m(3, 1);
    m.set(1, 0, true);
    writePng(dir / "m.png", maskToImage(m), 8, false);
    const ImageBuffer mb = readPng(dir / "m.png");
    EXPECT_EQ(mb.values(), (std::vector<float>{0.0f, 1.0f, 0.0f}));
    EXPECT_THROW(writePng(dir / "c.png", img, 12), std::invalid_argument);
    EXPECT_THROW(readPng(dir / "none.png"), IoError);
}

TEST(Hashing, KnownVectors) {
    EXPECT_EQ(fnv1a(std::string()), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a(std::string("a")), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a(std::string("foobar")), 0x85944171f73967e8ULL);
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
    const auto dir = scratchDir("hash");
    writeBytes(dir / "f", "foobar");
    EXPECT_EQ(hashFile(dir / "f"), fnv1a(std::string("foobar")));
}

TEST(Config, MatcherRoundTrip) {
    MatcherConfig m;
    m.max_disparity = 100;
    m.iterations = 7;
    m.min_ncc = 0.3;
    const MatcherConfig back = parseMatcherConfig(toJson(m), "matcher");
    EXPECT_EQ(toJson(back), toJson(m));
}

TEST(Config, UnknownKeyNamesFullPath) {
    const std::string msg = configErrorMessage(
        [] { parseMatcherConfig(Json{{"iterations", 3}, {"iteration", 4}}, "matcher"); });
    EXPECT_NE(msg.find("matcher.iteration"), std::string::npos) << msg;
    EXPECT_NE(msg.find("unknown key"), std::string::npos) << msg;
}

TEST(Config, TypeErrorsNameFullPath) {
    const std::string msg =
        configErrorMessage([] { parseBlendConfig(Json{{"occlusion_threshold", "big"}}, "blend"); });
    EXPECT_NE(msg.find("blend.occlusion_threshold"), std::string::npos) << msg;
    const std::string neg = configErrorMessage([] { parseMatcherConfig(Json{{"iterations", 0}}, "matcher"); });
    EXPECT_NE(neg.find("matcher"), std::string::npos) << neg;
    const std::string arr = configErrorMessage([] {
        parseScene(Json{{"preset", "sphere"}, {"center", Json::array({0, 1})}}, "scene");
    });
    EXPECT_NE(arr.find("scene.center"), std::string::npos) << arr;
}

TEST(Config, CameraFromLookAt) {
    const Json j = {{"fx", 200.0}, {"width", 64}, {"height", 48}, {"center", {0.0, 0.1, 0.0}},
                    {"look_at", {0.0, 0.1, 2.0}}};
    const CameraModel cam = parseCamera(j, "camera");
    EXPECT_NEAR((cam.center() - Vec3(0, 0.1, 0)).norm(), 0.0, 1e-12);
    EXPECT_NEAR(cam.cx(), 31.5, 1e-12);
    const Projection p = project(cam, Vec3(0, 0.1, 2.0));
    EXPECT_NEAR((p.pixel - Vec2(31.5, 23.5)).norm(), 0.0, 1e-9);
    const std::string msg = configErrorMessage([] {
        parseCamera(Json{{"fx", -1.0}, {"width", 4}, {"height", 4}}, "rig.cameras[2]");
    });
    EXPECT_NE(msg.find("rig.cameras[2]"), std::string::npos) << msg;
}

TEST(Config, RigRoundTripThroughExplicitCameras) {
    const RigSpec rig = makeRig(RigOptions{.width = 320, .height = 240, .lower_baseline = 0.45});
    const RigSpec back = parseRig(toJson(rig), "rig");
    for (int i = 0; i < 4; ++i) {
        EXPECT_LT((back.camera(i).center() - rig.camera(i).center()).norm(), 1e-12);
        EXPECT_LT((back.camera(i).rotation() - rig.camera(i).rotation()).norm(), 1e-12);
        EXPECT_EQ(back.camera(i).width(), 320);
    }
    const std::string msg = configErrorMessage([] { parseRig(Json{{"upper_baseline", 0.9}}, "rig"); });
    EXPECT_NE(msg.find("rig"), std::string::npos);
}

TEST(Config, ScenePresetsAndObjectsRoundTrip) {
    const SceneSpec preset = parseScene(Json{{"preset", "mannequin"}, {"seed", 4}}, "scene");
    const SceneSpec back = parseScene(toJson(preset), "scene");
    const CameraModel cam = makeRig(RigOptions{.width = 48, .height = 48}).camera(2);
    const GroundTruthView a = renderGroundTruth(preset, cam);
    const GroundTruthView b = renderGroundTruth(back, cam);
    EXPECT_EQ(a.depth, b.depth);
    EXPECT_EQ(a.foreground, b.foreground);
    for (std::size_t i = 0; i < a.image.values().size(); ++i) {
        EXPECT_NEAR(a.image.values()[i], b.image.values()[i], 1e-6);
    }
    const std::string msg = configErrorMessage([] { parseScene(Json{{"preset", "teapot"}}, "scene"); });
    EXPECT_NE(msg.find("teapot"), std::string::npos);
    EXPECT_THROW(parseScene(Json::object(), "scene"), ConfigError);
}

TEST(Config, JsonReferencesResolveRelativeToBase) {
    const auto dir = scratchDir("refs");
    writeBytes(dir / "m.json", R"({"iterations": 5})");
    const Json j = resolveJsonRef(Json("m.json"), dir, "matcher");
    EXPECT_EQ(j.at("iterations"), 5);
    const std::string msg = configErrorMessage([&] { resolveJsonRef(Json("nope.json"), dir, "rig"); });
    EXPECT_NE(msg.find("nope.json"), std::string::npos) << msg;
    writeBytes(dir / "broken.json", "{");
    EXPECT_THROW(loadJsonFile(dir / "broken.json"), ConfigError);
}
