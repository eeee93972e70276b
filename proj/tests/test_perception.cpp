#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crossway/perception.hpp"

using namespace crossway;

TEST_CASE("condition layout arithmetic") {
    ConditionLayout lay{2, 1, 64, 2};
    CHECK(lay.dim() == 132);  // 2 * (64 + 2)
    CHECK(lay.image_offset(0, 0) == 0);
    CHECK(lay.lowdim_offset(0) == 64);
    CHECK(lay.image_offset(1, 0) == 66);
    CHECK(lay.lowdim_offset(1) == 130);

    ConditionLayout no_low{2, 1, 64, 0};
    CHECK(no_low.dim() == 128);  // h_t = h_img when L = 0
}

TEST_CASE("assemble_condition layout slices recover inputs") {
    Rng rng(1);
    ConditionLayout lay{2, 2, 6, 3};
    const int64_t B = 3;
    std::vector<Var<double>> h_img;
    for (int i = 0; i < 4; ++i)
        h_img.push_back(make_leaf(rng.normal_tensor<double>({B, 6}), false));
    Tensor<double> low = rng.normal_tensor<double>({B, 2, 3});
    Var<double> h = assemble_condition<double>(h_img, make_leaf(low, false), lay);
    REQUIRE(h.shape() == std::vector<int64_t>{B, lay.dim()});
    for (int64_t b = 0; b < B; ++b)
        for (int t = 0; t < 2; ++t) {
            for (int cam = 0; cam < 2; ++cam)
                for (int i = 0; i < 6; ++i)
                    CHECK(h.val()[b * lay.dim() + lay.image_offset(t, cam) + i] ==
                          h_img[static_cast<size_t>(t * 2 + cam)].val()[b * 6 + i]);
            for (int i = 0; i < 3; ++i)
                CHECK(h.val()[b * lay.dim() + lay.lowdim_offset(t) + i] ==
                      low[(b * 2 + t) * 3 + i]);
        }
}

TEST_CASE("visual encoder") {
    nn::ParamStore<double> ps;
    ps.seed = 42;
    VisualEncoder<double> enc(ps, "enc", 4, 8, 20, 20);
    Rng rng(2);

    SUBCASE("one embedding per frame; width matches config") {
        Var<double> frames = make_leaf(rng.uniform_tensor<double>({6, 3, 20, 20}, 0, 1), false);
        Var<double> emb = enc.forward(frames);
        CHECK(emb.shape() == std::vector<int64_t>{6, 8});
        CHECK(all_finite(emb.val()));
    }
    SUBCASE("weight sharing across time: identical frames, identical embeddings") {
        Tensor<double> one = rng.uniform_tensor<double>({1, 3, 20, 20}, 0, 1);
        Tensor<double> two({2, 3, 20, 20});
        std::copy(one.data.begin(), one.data.end(), two.ptr());
        std::copy(one.data.begin(), one.data.end(), two.ptr() + one.numel());
        Var<double> emb = enc.forward(make_leaf(two, false));
        for (int i = 0; i < 8; ++i) CHECK(emb.val()[i] == emb.val()[8 + i]);
    }
    SUBCASE("gradient w.r.t. input pixels is nonzero") {
        Var<double> frames = make_leaf(rng.uniform_tensor<double>({1, 3, 20, 20}, 0, 1), true);
        Var<double> emb = enc.forward(frames);
        backward(ag::mean_all(emb));
        double norm = 0;
        for (double v : frames.grad().data) norm += v * v;
        CHECK(norm > 0);
    }
    SUBCASE("resolution mismatch throws") {
        Var<double> bad = make_leaf(rng.uniform_tensor<double>({1, 3, 16, 16}, 0, 1), false);
        CHECK_THROWS_AS(enc.forward(bad), std::invalid_argument);
    }
}

// Swapping the cameras in the input while swapping their encoder weights and
// the layout slots leaves the condition identical.
TEST_CASE("camera permutation with matching weight permutation is a no-op") {
    Rng rng(3);
    nn::ParamStore<double> ps1, ps2;
    ps1.seed = 7;
    ps2.seed = 7;
    VisualEncoder<double> a0(ps1, "cam0", 4, 6, 12, 12);
    VisualEncoder<double> a1(ps1, "cam1", 4, 6, 12, 12);
    // Mirror store: construct in swapped order but with swapped names so the
    // per-name init streams give cam0's weights to slot 1 and vice versa.
    VisualEncoder<double> b1(ps2, "cam1", 4, 6, 12, 12);
    VisualEncoder<double> b0(ps2, "cam0", 4, 6, 12, 12);

    Tensor<double> f0 = rng.uniform_tensor<double>({2, 3, 12, 12}, 0, 1);
    Tensor<double> f1 = rng.uniform_tensor<double>({2, 3, 12, 12}, 0, 1);
    Tensor<double> low = rng.normal_tensor<double>({2, 1, 2});
    ConditionLayout lay{1, 2, 6, 2};

    Var<double> h = assemble_condition<double>(
        {a0.forward(make_leaf(f0, false)), a1.forward(make_leaf(f1, false))},
        make_leaf(low, false), lay);
    // Permuted world: cameras swapped, encoders swapped, layout order swapped.
    Var<double> h_perm = assemble_condition<double>(
        {b1.forward(make_leaf(f1, false)), b0.forward(make_leaf(f0, false))},
        make_leaf(low, false), lay);

    // Undo the slot permutation and compare.
    for (int64_t b = 0; b < 2; ++b) {
        for (int i = 0; i < 6; ++i) {
            CHECK(h.val()[b * lay.dim() + lay.image_offset(0, 0) + i] ==
                  h_perm.val()[b * lay.dim() + lay.image_offset(0, 1) + i]);
            CHECK(h.val()[b * lay.dim() + lay.image_offset(0, 1) + i] ==
                  h_perm.val()[b * lay.dim() + lay.image_offset(0, 0) + i]);
        }
        for (int i = 0; i < 2; ++i)
            CHECK(h.val()[b * lay.dim() + lay.lowdim_offset(0) + i] ==
                  h_perm.val()[b * lay.dim() + lay.lowdim_offset(0) + i]);
    }
}

TEST_CASE("embedding count mismatch throws") {
    ConditionLayout lay{2, 1, 4, 0};
    Rng rng(4);
    std::vector<Var<double>> h{make_leaf(rng.normal_tensor<double>({1, 4}), false)};
    Tensor<double> low({1, 2, 0});
    CHECK_THROWS_AS(assemble_condition<double>(h, make_leaf(low, false), lay),
                    std::invalid_argument);
}
