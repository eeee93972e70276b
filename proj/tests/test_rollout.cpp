#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crossway/rollout.hpp"

using namespace crossway;

namespace {

ToyTask small_task() {
    ToyTask t;
    t.image_size = 24;
    return t;
}

// Oracle planner: query the scripted expert T_a times by simulating forward.
Planner expert_planner(const ToyTask& task, int t_act, int* plan_calls = nullptr) {
    return [&task, t_act, plan_calls](const Tensor<float>&, const Tensor<float>&,
                                      const ToyEnvState& s) {
        if (plan_calls) ++*plan_calls;
        Tensor<float> plan({t_act, 2});
        ToyEnvState sim = s;
        for (int i = 0; i < t_act; ++i) {
            auto a = scripted_expert(task, sim);
            plan[i * 2] = static_cast<float>(a[0]);
            plan[i * 2 + 1] = static_cast<float>(a[1]);
            sim = toy_step(task, sim, a);
        }
        return plan;
    };
}

}  // namespace

TEST_CASE("expert-as-policy oracle scores high on nearly all episodes") {
    ToyTask task = small_task();
    int good = 0;
    const int n = 40;
    for (int ep = 0; ep < n; ++ep) {
        double score = run_episode_with_planner(task, 2, 8, expert_planner(task, 8),
                                                stream_seed(1, "env", static_cast<uint64_t>(ep)));
        if (score >= 0.9) ++good;
    }
    CHECK(good >= static_cast<int>(n * 0.95));
}

TEST_CASE("receding-horizon accounting: T_a env steps per plan") {
    ToyTask task = small_task();
    task.success_coverage = 2.0;  // never terminates early
    task.max_steps = 52;
    int plan_calls = 0;
    std::vector<ToyEnvState> states;
    run_episode_with_planner(task, 2, 8, expert_planner(task, 8, &plan_calls),
                             stream_seed(2, "env", 0), &states);
    // 52 steps at 8 per plan: 6 full plans + 1 truncated.
    CHECK(plan_calls == 7);
    CHECK(states.size() == 53);  // initial + one per env step
}

TEST_CASE("same seeds give identical episodes") {
    ToyTask task = small_task();
    int calls = 0;
    double a = run_episode_with_planner(task, 2, 8, expert_planner(task, 8, &calls),
                                        stream_seed(9, "env", 3));
    double b = run_episode_with_planner(task, 2, 8, expert_planner(task, 8, &calls),
                                        stream_seed(9, "env", 3));
    CHECK(a == b);
}

namespace {

struct EvalFixture {
    ModelConfig cfg;
    Schedule sched = make_schedule(4);
    NormStats norm;
    ToyTask task = small_task();

    EvalFixture() {
        cfg.img_h = cfg.img_w = 24;
        cfg.crop_h = cfg.crop_w = 20;
        cfg.rec_h = cfg.rec_w = 24;
        cfg.unet_width = 8;
        cfg.enc_width = 4;
        cfg.vis_emb = 8;
        cfg.pe_channels = 8;
        cfg.variant = Variant::crossway;
        norm.min = {0.0, 0.0};
        norm.max = {1.0, 1.0};
        task.max_steps = 24;
    }
};

}  // namespace

TEST_CASE("evaluate aggregation and determinism") {
    EvalFixture fx;
    PolicyModel<float> model(fx.cfg, 55);
    EvalReport rep = evaluate(model, fx.norm, fx.task, fx.sched, 3, {1, 2}, 4, SamplerKind::ddim);

    SUBCASE("2 seeds x 3 episodes give 6 scores with a consistent mean") {
        REQUIRE(rep.scores.size() == 6);
        double manual = 0;
        for (double v : rep.scores) manual += v;
        CHECK(rep.mean == doctest::Approx(manual / 6).epsilon(1e-12));
        REQUIRE(rep.seed_means.size() == 2);
        CHECK(rep.std_seeds.has_value());
    }
    SUBCASE("identical config gives an identical report") {
        EvalReport rep2 =
            evaluate(model, fx.norm, fx.task, fx.sched, 3, {1, 2}, 4, SamplerKind::ddim);
        CHECK(rep.scores == rep2.scores);
        CHECK(rep.mean == rep2.mean);
    }
    SUBCASE("std is absent with a single seed") {
        EvalReport one = evaluate(model, fx.norm, fx.task, fx.sched, 2, {1}, 4, SamplerKind::ddim);
        CHECK_FALSE(one.std_seeds.has_value());
        CHECK(one.to_json_string().find("std_seeds") == std::string::npos);
    }
}

// Different models, same eval seeds: the environments they see are identical.
TEST_CASE("shared env seeds across compared methods") {
    EvalFixture fx;
    // Observed initial states are a function of (seed, episode) only; assert
    // by reconstructing the inits the way evaluate derives them.
    for (int ep = 0; ep < 4; ++ep) {
        uint64_t env_seed = stream_seed(3, "env", static_cast<uint64_t>(ep));
        Rng r1 = stream_rng(env_seed, "env-init");
        Rng r2 = stream_rng(env_seed, "env-init");
        ToyEnvState a = sample_init(fx.task, r1);
        ToyEnvState b = sample_init(fx.task, r2);
        CHECK(a.agent.x == b.agent.x);
        CHECK(a.block.p.x == b.block.p.x);
        CHECK(a.block.theta == b.block.theta);
    }
}

TEST_CASE("evaluation never touches the state decoder") {
    EvalFixture fx;
    PolicyModel<float> model(fx.cfg, 66);
    REQUIRE(model.cfg.has_state_decoder());
    evaluate(model, fx.norm, fx.task, fx.sched, 2, {4}, 4, SamplerKind::ddim);
    CHECK(model.ds_invocations == 0);
}

TEST_CASE("ddim sweep emits one row per entry plus CSV and plot") {
    EvalFixture fx;
    PolicyModel<float> model(fx.cfg, 77);
    auto csv = std::filesystem::path("/tmp/crossway_sweep_test.csv");
    auto png = std::filesystem::path("/tmp/crossway_sweep_test.png");
    auto rows = ddim_sweep(model, fx.norm, fx.task, fx.sched, {2, 4}, 2, {1}, csv, png);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].steps == 2);
    CHECK(rows[1].steps == 4);
    CHECK(std::filesystem::exists(csv));
    CHECK(std::filesystem::exists(png));
    // The full-step entry must agree with a direct evaluate() at those steps.
    EvalReport direct = evaluate(model, fx.norm, fx.task, fx.sched, 2, {1}, 4, SamplerKind::ddim);
    CHECK(rows[1].mean == doctest::Approx(direct.mean).epsilon(1e-12));
    std::filesystem::remove(csv);
    std::filesystem::remove(png);
}
