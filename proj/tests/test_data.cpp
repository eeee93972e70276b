#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "crossway/data.hpp"

using namespace crossway;

TEST_CASE("normalize / denormalize") {
    NormStats st;
    st.min = {-1.0, -1.0};
    st.max = {1.0, 1.0};
    SUBCASE("unit range is the identity map") {
        Rng rng(1);
        Tensor<double> a = rng.uniform_tensor<double>({5, 2}, -1, 1);
        Tensor<double> n = normalize_actions(a, st);
        for (int64_t i = 0; i < a.numel(); ++i) CHECK(n[i] == doctest::Approx(a[i]).epsilon(1e-15));
    }
    SUBCASE("endpoints map to -1 and +1") {
        NormStats s2;
        s2.min = {2.0, -5.0};
        s2.max = {4.0, 7.0};
        Tensor<double> lo({1, 2});
        lo[0] = 2.0;
        lo[1] = -5.0;
        Tensor<double> hi({1, 2});
        hi[0] = 4.0;
        hi[1] = 7.0;
        CHECK(normalize_actions(lo, s2).data == std::vector<double>{-1, -1});
        CHECK(normalize_actions(hi, s2).data == std::vector<double>{1, 1});
    }
    SUBCASE("round-trip over random draws stays within 1e-6") {
        NormStats s2;
        s2.min = {0.13, -2.7};
        s2.max = {0.94, 3.1};
        Rng rng(2);
        Tensor<float> a({5000, 2});
        for (int64_t i = 0; i < a.numel(); ++i)
            a[i] = static_cast<float>(rng.uniform(s2.min[i % 2], s2.max[i % 2]));
        Tensor<float> rt = denormalize_actions(normalize_actions(a, s2), s2);
        for (int64_t i = 0; i < a.numel(); ++i) CHECK(std::abs(rt[i] - a[i]) <= 1e-6f);
    }
    SUBCASE("degenerate stats rejected") {
        NormStats bad;
        bad.min = {0.0};
        bad.max = {0.0};
        Tensor<double> a({1, 1});
        CHECK_THROWS_AS(normalize_actions(a, bad), std::invalid_argument);
    }
}

namespace {

Episode ramp_episode(int64_t len) {
    Episode ep;
    ep.len = len;
    Tensor<float> img({len, 4, 4, 3});
    for (int64_t t = 0; t < len; ++t)
        for (int64_t i = 0; i < 48; ++i) img[t * 48 + i] = static_cast<float>(t);
    ep.images.push_back(std::move(img));
    ep.lowdim = Tensor<float>({len, 2});
    ep.actions = Tensor<float>({len, 2});
    for (int64_t t = 0; t < len; ++t) {
        ep.lowdim[t * 2] = static_cast<float>(t);
        ep.lowdim[t * 2 + 1] = static_cast<float>(10 + t);
        ep.actions[t * 2] = static_cast<float>(100 + t);
        ep.actions[t * 2 + 1] = static_cast<float>(200 + t);
    }
    return ep;
}

}  // namespace

TEST_CASE("windowing edges and interior") {
    Episode ep = ramp_episode(10);
    SUBCASE("start padding replicates s_0") {
        auto [sw, aw] = window(ep, 0, 2, 8);
        CHECK(sw.indices == std::vector<int64_t>{0, 0});
        CHECK(sw.lowdim.data == std::vector<float>{0, 10, 0, 10});
        CHECK(sw.images[0][0] == 0.0f);
    }
    SUBCASE("end padding replicates the last action") {
        auto [sw, aw] = window(ep, 9, 2, 8);
        for (int i = 0; i < 8; ++i) {
            CHECK(aw.actions[i * 2] == 109.0f);
            CHECK(aw.actions[i * 2 + 1] == 209.0f);
        }
    }
    SUBCASE("interior windows are exact slices") {
        auto [sw, aw] = window(ep, 4, 2, 3);
        CHECK(sw.indices == std::vector<int64_t>{3, 4});
        CHECK(sw.lowdim.data == std::vector<float>{3, 13, 4, 14});
        CHECK(aw.actions.data == std::vector<float>{104, 204, 105, 205, 106, 206});
    }
    SUBCASE("all t at T_s = 2, T_a = 8 stay in bounds") {
        for (int64_t t = 0; t < ep.len; ++t) {
            auto [sw, aw] = window(ep, t, 2, 8);
            for (int64_t idx : sw.indices) {
                CHECK(idx >= 0);
                CHECK(idx < ep.len);
            }
            CHECK(aw.actions.shape == std::vector<int64_t>{8, 2});
            CHECK(all_finite(aw.actions));
        }
    }
    SUBCASE("t out of range throws") {
        CHECK_THROWS_AS(window(ep, 10, 2, 8), std::invalid_argument);
    }
}

TEST_CASE("crops") {
    Rng rng(3);
    Tensor<float> frames({2, 10, 12, 3});
    for (int64_t i = 0; i < frames.numel(); ++i) frames[i] = static_cast<float>(i % 251) / 251;
    SUBCASE("full-size crop is the identity") {
        Rng r(1);
        Tensor<float> c = random_crop(frames, 10, 12, r);
        CHECK(c.data == frames.data);
    }
    SUBCASE("temporal consistency: one offset for all frames") {
        Rng r(5);
        Tensor<float> c = random_crop(frames, 6, 7, r);
        // Locate the offset from frame 0, then frame 1 must use the same one.
        bool found = false;
        for (int64_t oy = 0; oy <= 4 && !found; ++oy)
            for (int64_t ox = 0; ox <= 5 && !found; ++ox) {
                bool match = true;
                for (int64_t y = 0; y < 6 && match; ++y)
                    for (int64_t x = 0; x < 7 && match; ++x)
                        for (int ch = 0; ch < 3; ++ch)
                            if (c[((0 * 6 + y) * 7 + x) * 3 + ch] !=
                                frames[((0 * 10 + oy + y) * 12 + ox + x) * 3 + ch]) {
                                match = false;
                                break;
                            }
                if (match) {
                    found = true;
                    for (int64_t y = 0; y < 6; ++y)
                        for (int64_t x = 0; x < 7; ++x)
                            for (int ch = 0; ch < 3; ++ch)
                                CHECK(c[((1 * 6 + y) * 7 + x) * 3 + ch] ==
                                      frames[((1 * 10 + oy + y) * 12 + ox + x) * 3 + ch]);
                }
            }
        CHECK(found);
    }
    SUBCASE("center crop offset arithmetic") {
        Tensor<float> c = center_crop(frames, 6, 8);
        for (int ch = 0; ch < 3; ++ch)
            CHECK(c[ch] == frames[((2 * 12) + 2) * 3 + ch]);  // offset (2, 2)
    }
    SUBCASE("oversize crop throws") {
        Rng r(1);
        CHECK_THROWS_AS(random_crop(frames, 11, 5, r), std::invalid_argument);
        CHECK_THROWS_AS(center_crop(frames, 5, 13), std::invalid_argument);
    }
    SUBCASE("augmentation preserves the value range") {
        Rng r(9);
        Tensor<float> c = random_crop(frames, 4, 4, r);
        for (float v : c.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("dataset save / load round-trip") {
    ToyTask task;
    task.image_size = 24;
    DemoDataset ds = generate_demos(task, 2, 7);
    const auto dir = std::filesystem::path("/tmp/crossway_ds_test");
    std::filesystem::remove_all(dir);
    save_dataset(ds, dir);
    DemoDataset back = load_dataset(dir);

    SUBCASE("bit-exact arrays") {
        REQUIRE(back.episodes.size() == ds.episodes.size());
        for (size_t i = 0; i < ds.episodes.size(); ++i) {
            CHECK(back.episodes[i].images[0].data == ds.episodes[i].images[0].data);
            CHECK(back.episodes[i].lowdim.data == ds.episodes[i].lowdim.data);
            CHECK(back.episodes[i].actions.data == ds.episodes[i].actions.data);
        }
        CHECK(back.norm.min == ds.norm.min);
        CHECK(back.norm.max == ds.norm.max);
    }
    SUBCASE("manifest episode lengths sum to total rows") {
        int64_t total = 0;
        for (const auto& ep : back.episodes) {
            CHECK(ep.images[0].shape[0] == ep.len);
            total += ep.len;
        }
        CHECK(total == ds.total_steps());
    }
    SUBCASE("corrupted blob fails the checksum") {
        {
            std::fstream f(dir / "ep0" / "actions.bin",
                           std::ios::in | std::ios::out | std::ios::binary);
            f.seekp(4);
            char junk = 0x5A;
            f.write(&junk, 1);
        }
        CHECK_THROWS_AS(load_dataset(dir), IntegrityError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("generate_demos determinism") {
    ToyTask task;
    task.image_size = 24;
    DemoDataset a = generate_demos(task, 2, 99);
    DemoDataset b = generate_demos(task, 2, 99);
    REQUIRE(a.episodes.size() == b.episodes.size());
    for (size_t i = 0; i < a.episodes.size(); ++i) {
        CHECK(a.episodes[i].images[0].data == b.episodes[i].images[0].data);
        CHECK(a.episodes[i].actions.data == b.episodes[i].actions.data);
    }
    // Demo quality gates baked into generation.
    for (const auto& ep : a.episodes) CHECK(ep.len >= 16);
}
