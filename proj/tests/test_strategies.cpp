#include <doctest.h>

#include <cmath>

#include "fedbench/strategies.hpp"
#include "test_helpers.hpp"

using namespace fedbench;
using namespace fedbench::testutil;

namespace {

ClientUpdate make_update(int id, std::vector<double> params, std::size_t n) {
    ClientUpdate u;
    u.client_id = id;
    u.payload_params = std::move(params);
    u.n_train = n;
    return u;
}

double l2_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("fedavg aggregation: identity, forced case, brute-force oracle") {
    auto one = server_aggregate_fedavg({make_update(0, {1.5, -2.0}, 17)});
    CHECK(one == std::vector<double>{1.5, -2.0});

    auto forced = server_aggregate_fedavg(
        {make_update(0, {1.0}, 1), make_update(1, {3.0}, 3)});
    CHECK(forced[0] == doctest::Approx(2.5).epsilon(1e-15));

    // high-precision summation oracle over five random clients
    Rng rng(404);
    std::vector<ClientUpdate> updates;
    const std::size_t len = 23;
    for (int cid = 0; cid < 5; ++cid) {
        std::vector<double> p(len);
        for (auto& v : p) v = rng.uniform(-3.0, 3.0);
        updates.push_back(make_update(cid, std::move(p), 1 + rng.below(100)));
    }
    auto got = server_aggregate_fedavg(updates);
    for (std::size_t j = 0; j < len; ++j) {
        long double num = 0.0L, den = 0.0L;
        for (const auto& u : updates) {
            num += static_cast<long double>(u.n_train) *
                   static_cast<long double>(u.payload_params[j]);
            den += static_cast<long double>(u.n_train);
        }
        CHECK(got[j] == doctest::Approx(static_cast<double>(num / den))
                            .epsilon(1e-12));
    }

    // permutation of client order does not change the result
    std::vector<ClientUpdate> shuffled = {updates[3], updates[0], updates[4],
                                          updates[1], updates[2]};
    CHECK(server_aggregate_fedavg(shuffled) == got);

    CHECK_THROWS_AS(server_aggregate_fedavg({}), DimensionError);
    CHECK_THROWS_AS(server_aggregate_fedavg(
                        {make_update(0, {1.0}, 1), make_update(1, {1.0, 2.0}, 1)}),
                    DimensionError);
}

TEST_CASE("fedadam server rule: drift walk and fixed point") {
    auto traj = fedadam_drift_demo();
    REQUIRE(traj.size() == 30);
    CHECK(traj[0] == doctest::Approx(1.96838).epsilon(1e-5));
    CHECK(traj[29] == doctest::Approx(-0.204).epsilon(0.005));
    CHECK(std::abs(traj[29] + 0.204) < 0.001);
    // every client value is +0.1, yet the trajectory crosses zero
    CHECK(*std::min_element(traj.begin(), traj.end()) < 0.0);

    // zero deltas with zero-initialized moments leave the parameter unchanged
    StrategyConfig cfg;
    cfg.kind = StrategyKind::FedAdam;
    cfg.server_lr = 0.1;
    ServerState st;
    st.global_params = {2.0};
    st.fedadam_m = {0.0};
    st.fedadam_v = {0.0};
    for (int r = 0; r < 3; ++r)
        server_aggregate_fedadam(st, {make_update(0, {2.0}, 10)}, cfg);
    CHECK(st.global_params[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("fedadam server rule: first drift step by hand") {
    StrategyConfig cfg;
    cfg.kind = StrategyKind::FedAdam;
    cfg.server_lr = 0.1;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.9;
    cfg.tau = 1e-9;
    ServerState st;
    st.global_params = {2.0};
    st.fedadam_m = {0.0};
    st.fedadam_v = {0.0};
    server_aggregate_fedadam(st, {make_update(0, {0.1}, 1)}, cfg);
    // delta = -1.9, m = -0.19, v = 0.361, x = 2 - 0.1*0.19/sqrt(0.361)
    const double expected = 2.0 - 0.1 * 0.19 / (std::sqrt(0.361) + 1e-9);
    CHECK(st.global_params[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("scaffold server rule") {
    ServerState st;
    st.global_params = {1.0, -1.0};
    st.scaffold_c = {0.0, 0.0};

    auto zero1 = make_update(0, {1.0, -1.0}, 5);
    zero1.scaffold_c_delta = std::vector<double>{0.0, 0.0};
    auto zero2 = make_update(1, {1.0, -1.0}, 9);
    zero2.scaffold_c_delta = std::vector<double>{0.0, 0.0};
    server_aggregate_scaffold(st, {zero1, zero2}, 1.0);
    CHECK(st.global_params == std::vector<double>{1.0, -1.0});
    CHECK(st.scaffold_c == std::vector<double>{0.0, 0.0});

    // opposite deltas cancel at server_lr = 1
    auto up = make_update(0, {2.0, 0.0}, 5);
    up.scaffold_c_delta = std::vector<double>{0.25, 0.0};
    auto down = make_update(1, {0.0, -2.0}, 5);
    down.scaffold_c_delta = std::vector<double>{-0.25, 0.0};
    server_aggregate_scaffold(st, {up, down}, 1.0);
    CHECK(st.global_params[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(st.global_params[1] == doctest::Approx(-1.0).epsilon(1e-15));

    // independent reference: x + lr*(mean(y) - x), c + mean(cd)
    Rng rng(11);
    ServerState ref;
    ref.global_params = {0.3, 0.7, -0.2};
    ref.scaffold_c = {0.1, 0.0, -0.05};
    ServerState impl = ref;
    std::vector<ClientUpdate> ups;
    for (int cid = 0; cid < 3; ++cid) {
        auto u = make_update(cid, {rng.uniform(-1, 1), rng.uniform(-1, 1),
                                   rng.uniform(-1, 1)},
                             7);
        u.scaffold_c_delta = std::vector<double>{
            rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        ups.push_back(u);
    }
    const double lr = 0.4;
    server_aggregate_scaffold(impl, ups, lr);
    for (std::size_t j = 0; j < 3; ++j) {
        double ymean = 0.0, cdmean = 0.0;
        for (const auto& u : ups) {
            ymean += u.payload_params[j] / 3.0;
            cdmean += (*u.scaffold_c_delta)[j] / 3.0;
        }
        CHECK(impl.global_params[j] ==
              doctest::Approx(ref.global_params[j] +
                              lr * (ymean - ref.global_params[j]))
                  .epsilon(1e-12));
        CHECK(impl.scaffold_c[j] ==
              doctest::Approx(ref.scaffold_c[j] + cdmean).epsilon(1e-12));
    }

    auto missing = make_update(0, {0.0, 0.0, 0.0}, 1);
    CHECK_THROWS_AS(server_aggregate_scaffold(impl, {missing}, 1.0),
                    DimensionError);
}

TEST_CASE("apfl_alpha_update") {
    std::vector<double> g{2.0};
    std::vector<double> w{0.0};
    std::vector<double> v{2.0};
    CHECK(apfl_alpha_update(0.5, g, w, v, 0.1) ==
          doctest::Approx(0.1).epsilon(1e-15));

    CHECK(apfl_alpha_update(0.5, g, v, v, 0.1) == 0.5);  // v == w
    std::vector<double> zero{0.0};
    CHECK(apfl_alpha_update(0.3, zero, w, v, 0.1) == 0.3);

    // clamping keeps alpha in [0,1] for any inputs
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> gg{rng.uniform(-50, 50)};
        std::vector<double> ww{rng.uniform(-5, 5)};
        std::vector<double> vv{rng.uniform(-5, 5)};
        const double a =
            apfl_alpha_update(rng.uniform(0, 1), gg, ww, vv, rng.uniform(0, 4));
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
}

TEST_CASE("federated_payload: per-strategy subset sizes") {
    StrategyConfig fedavg{.kind = StrategyKind::FedAvg};
    StrategyConfig fedper{.kind = StrategyKind::FedPer};
    StrategyConfig fenda{.kind = StrategyKind::Fenda};
    StrategyConfig apfl{.kind = StrategyKind::Apfl};

    Model dnn = arch::heart_dnn();
    CHECK(federated_payload(fedavg, dnn, {}).size() == 151);
    CHECK(federated_payload(fedper, dnn, PartitionSpec{.classifier_layers = 1})
              .size() == 140);

    Model fenda_model = arch::heart_fenda();
    CHECK(federated_payload(fenda, fenda_model, {}).size() == 70);

    Model twin = arch::heart_apfl_twin();
    CHECK(federated_payload(apfl, twin, {}).size() == 76);
}

// ---------------------------------------------------------------------------
// Reduction equivalences under shared seeds

namespace {

struct Capture {
    std::vector<std::vector<double>> server_params;  // per round
    std::vector<RoundRecord> records;
};

Capture capture_run(const ExperimentConfig& cfg, const FederatedDataset& data,
                    std::uint64_t seed) {
    FederatedRun run(cfg, data, seed);
    Capture cap;
    for (std::size_t r = 0; r < cfg.n_rounds; ++r) {
        cap.records.push_back(run.run_round());
        cap.server_params.push_back(run.server().global_params);
    }
    return cap;
}

}  // namespace

TEST_CASE("reduction: fedprox with mu 0 is bitwise fedavg") {
    auto data = small_synthetic();
    auto base = small_config(StrategyKind::FedAvg, 4, 10);
    auto prox = base;
    prox.strategy.kind = StrategyKind::FedProx;
    prox.strategy.mu_prox = 0.0;

    auto a = capture_run(base, data, 42);
    auto b = capture_run(prox, data, 42);
    CHECK(a.server_params == b.server_params);
    CHECK(a.records == b.records);

    // and a nonzero mu diverges from fedavg
    prox.strategy.mu_prox = 0.5;
    auto c = capture_run(prox, data, 42);
    CHECK(a.server_params != c.server_params);
}

TEST_CASE("reduction: moon with mu 0 is bitwise fedavg") {
    auto data = small_synthetic();
    auto base = small_config(StrategyKind::FedAvg, 4, 10);
    auto moon = base;
    moon.strategy.kind = StrategyKind::Moon;
    moon.strategy.mu_moon = 0.0;

    auto a = capture_run(base, data, 9);
    auto b = capture_run(moon, data, 9);
    CHECK(a.server_params == b.server_params);
    CHECK(a.records == b.records);
}

TEST_CASE("reduction: perfcl with mu = gamma = 0 is bitwise fenda") {
    auto data = small_synthetic();
    auto fenda = small_config(StrategyKind::Fenda, 4, 10);
    auto perfcl = fenda;
    perfcl.strategy.kind = StrategyKind::PerFcl;
    perfcl.strategy.mu_perfcl = 0.0;
    perfcl.strategy.gamma_perfcl = 0.0;

    auto a = capture_run(fenda, data, 5);
    auto b = capture_run(perfcl, data, 5);
    CHECK(a.server_params == b.server_params);
    CHECK(a.records == b.records);
}

TEST_CASE("reduction: ditto's global trajectory is bitwise fedavg's") {
    auto data = small_synthetic();
    auto base = small_config(StrategyKind::FedAvg, 4, 10);
    auto ditto = small_config(StrategyKind::Ditto, 4, 10);
    ditto.strategy.lambda_ditto = 0.7;
    ditto.checkpoint_modes = {CheckpointMode::Latest, CheckpointMode::Local};

    auto a = capture_run(base, data, 3);
    auto b = capture_run(ditto, data, 3);
    CHECK(a.server_params == b.server_params);
}

TEST_CASE("reduction: apfl with alpha pinned at 1 trains the personal twin "
          "like purely local training") {
    auto data = small_synthetic(2, 40);
    auto cfg = small_config(StrategyKind::Apfl, 3, 6);
    cfg.strategy.alpha_init = 1.0;
    cfg.strategy.alpha_lr = 0.0;

    FederatedRun run(cfg, data, 77);
    for (std::size_t r = 0; r < cfg.n_rounds; ++r) run.run_round();

    // replay client 0's personal path: same init, same batches, same optimizer
    ServerInit si = make_server(cfg.strategy, cfg.model, 77);
    auto splits = realize_splits(cfg, data, 77);
    Model local = cfg.model.build();
    unflatten(local, si.template_params);
    auto opt = OptimizerState::adamw(cfg.strategy.client_lr,
                                     count_params(local), 0.9, 0.999, 1e-8,
                                     cfg.strategy.weight_decay);
    BatchLoader loader(splits[0].train.size(), Rng::stream(77, "client-batches", 0));
    for (std::size_t r = 0; r < cfg.n_rounds; ++r) {
        for (std::size_t s = 0; s < cfg.budget.amount; ++s) {
            auto idx = loader.next_batch(cfg.batch_size);
            Matrix x(idx.size(), splits[0].train.dim());
            std::vector<int> y;
            for (std::size_t k = 0; k < idx.size(); ++k) {
                std::copy_n(splits[0].train.features.row(idx[k]),
                            splits[0].train.dim(), x.row(k));
                y.push_back(splits[0].train.labels[idx[k]]);
            }
            auto fwd = forward(local, x);
            auto loss = bce_loss(fwd.output, y);
            auto grads = backward(local, fwd.cache, loss.grad).grads;
            auto params = flatten(local).values;
            optimizer_step(opt, params, grads.values);
            unflatten(local, params);
        }
    }
    CHECK(flatten(*run.clients()[0].personal_model).values ==
          flatten(local).values);
    CHECK(run.clients()[0].apfl_alpha == 1.0);
}

TEST_CASE("ditto: a large penalty pulls personal weights toward the global") {
    auto data = small_synthetic(2, 40);
    auto base = small_config(StrategyKind::Ditto, 1, 10);

    auto dist_after = [&](double lambda) {
        auto cfg = base;
        cfg.strategy.lambda_ditto = lambda;
        FederatedRun run(cfg, data, 12);
        run.run_round();
        const auto& c = run.clients()[0];
        return l2_dist(flatten(*c.personal_model).values,
                       flatten(c.model).values);
    };
    CHECK(dist_after(1e6) < dist_after(0.0));
}

TEST_CASE("scaffold: server c stays the mean of client control variates") {
    auto data = small_synthetic(3, 45);
    auto cfg = small_config(StrategyKind::Scaffold, 5, 7);
    cfg.strategy.client_lr = 0.05;
    cfg.strategy.server_lr = 0.8;

    FederatedRun run(cfg, data, 31);
    for (std::size_t r = 0; r < cfg.n_rounds; ++r) {
        run.run_round();
        const auto& server_c = run.server().scaffold_c;
        for (std::size_t j = 0; j < server_c.size(); ++j) {
            double mean = 0.0;
            for (const auto& c : run.clients())
                mean += c.scaffold_ci[j] / static_cast<double>(data.n_clients());
            CHECK(std::abs(server_c[j] - mean) < 1e-10);
        }
    }
}

TEST_CASE("apfl: alpha stays in [0,1] under aggressive alpha steps") {
    auto data = small_synthetic(2, 40);
    auto cfg = small_config(StrategyKind::Apfl, 4, 10);
    cfg.strategy.alpha_init = 0.5;
    cfg.strategy.alpha_lr = 5.0;

    FederatedRun run(cfg, data, 8);
    for (std::size_t r = 0; r < cfg.n_rounds; ++r) {
        run.run_round();
        for (const auto& c : run.clients()) {
            CHECK(c.apfl_alpha >= 0.0);
            CHECK(c.apfl_alpha <= 1.0);
        }
    }
}

TEST_CASE("install_payload never touches client-owned roles") {
    auto data = small_synthetic(2, 40);
    Rng rng(66);

    auto check_stability = [&](StrategyKind kind) {
        auto cfg = small_config(kind, 1, 2);
        FederatedRun run(cfg, data, 19);
        run.run_round();
        auto& client = const_cast<ClientState&>(run.clients()[0]);

        const auto part = client.partition();
        auto before = flatten(client.model, part);
        std::vector<double> before_personal;
        if (client.personal_model)
            before_personal = flatten(*client.personal_model).values;

        ServerPayload scrambled;
        scrambled.global_params = run.server().global_params;
        for (auto& v : scrambled.global_params) v = rng.uniform(-2, 2);
        install_payload(client, scrambled);

        auto after = flatten(client.model, part);
        for (std::size_t i = 0; i < before.size(); ++i)
            if (before.partition[i] != Role::Global)
                CHECK(before.values[i] == after.values[i]);
        if (client.personal_model)
            CHECK(before_personal == flatten(*client.personal_model).values);
    };
    check_stability(StrategyKind::Fenda);
    check_stability(StrategyKind::PerFcl);
    check_stability(StrategyKind::FedPer);
    check_stability(StrategyKind::Apfl);
    check_stability(StrategyKind::Ditto);
}

TEST_CASE("one fedavg round of one full-batch sgd step equals a centralized "
          "gradient step on the mean of client losses") {
    auto data = small_synthetic(2, 50, /*seed=*/13, /*label_shift=*/0.0);
    auto cfg = small_config(StrategyKind::FedAvg, 1, 1);
    cfg.strategy.client_optimizer = OptKind::Sgd;
    cfg.strategy.client_lr = 0.2;
    cfg.batch_size = 10000;  // full batch

    FederatedRun run(cfg, data, 25);
    // make the sample counts equal: both clients hold the same pool size
    REQUIRE(run.clients()[0].train.size() == run.clients()[1].train.size());
    run.run_round();

    ServerInit si = make_server(cfg.strategy, cfg.model, 25);
    Model m = cfg.model.build();
    unflatten(m, si.template_params);
    std::vector<double> mean_grad(count_params(m), 0.0);
    for (const auto& c : run.clients()) {
        auto fwd = forward(m, c.train.features);
        auto loss = bce_loss(fwd.output, c.train.labels);
        auto grads = backward(m, fwd.cache, loss.grad).grads;
        for (std::size_t j = 0; j < mean_grad.size(); ++j)
            mean_grad[j] += grads.values[j] / 2.0;
    }
    auto expected = si.template_params;
    for (std::size_t j = 0; j < expected.size(); ++j)
        expected[j] -= cfg.strategy.client_lr * mean_grad[j];

    const auto& got = run.server().global_params;
    for (std::size_t j = 0; j < expected.size(); ++j)
        CHECK(std::abs(got[j] - expected[j]) < 1e-10);
}

TEST_CASE("client_update: empty training split errors") {
    auto data = small_synthetic(2, 40);
    auto cfg = small_config(StrategyKind::FedAvg, 1, 2);
    FederatedRun run(cfg, data, 1);
    auto& client = const_cast<ClientState&>(run.clients()[0]);
    client.train = TabularDataset{};
    ServerPayload payload = broadcast_payload(run.server(), cfg.strategy);
    CHECK_THROWS_AS(client_update(client, payload, TrainSettings{4, 2}),
                    TrainingError);
}
