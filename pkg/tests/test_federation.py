#!/usr/bin/env python3
"""
Test Federation
Weighted averaging, client updates, rounds and the full simulation loop
"""
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftl_nids.dataset_io import SplitSpec, partition_among_clients
from ftl_nids.errors import (
    EmptyInputError,
    FingerprintMismatchError,
    PartitionError,
    RoundAbortedError,
    ShapeMismatchError,
)
from ftl_nids.federation import (
    ClientState,
    RoundConfig,
    ServerState,
    SimulationConfig,
    bootstrap_server,
    client_gradient,
    client_local_loss,
    client_local_train,
    client_sgd_update,
    deploy_to_clients,
    derive_seed,
    federated_weighted_average,
    register_clients,
    run_round,
    run_simulation,
)
from ftl_nids.neuralnet import (
    Batch,
    ComboNetConfig,
    GradientSet,
    ParamBlock,
    TrainParams,
    forward,
    full_batch_gradient,
    init_model,
    mean_loss,
    sgd_step,
)


@pytest.fixture
def net_config():
    return ComboNetConfig(input_dim=2, stem_channels=3, residual_blocks=1, dense_hidden=(6,),
                          n_classes=3, init_seed=5)


# stem(1) + bias(1) + logits(2) + bias(2)
SCALAR_CONFIG = ComboNetConfig(input_dim=1, stem_channels=1, residual_blocks=0, kernel_size=1,
                               dense_hidden=(), n_classes=2)


@pytest.fixture
def scalar_config():
    return SCALAR_CONFIG


def _server(weights, clients):
    return register_clients(ServerState(global_weights=weights), clients)


def _clients(data, n, seed=0):
    shares = partition_among_clients(data, n, seed)
    return [ClientState(client_id=i, local_data=s) for i, s in enumerate(shares)]


class TestWeightedAverage:
    def test_three_to_one_weighting(self, scalar_config):
        base = init_model(scalar_config)
        ones = base.from_flat(np.ones(base.n_parameters))
        zeros = base.from_flat(np.zeros(base.n_parameters))
        avg = federated_weighted_average([(ones, 30), (zeros, 10)])
        np.testing.assert_allclose(avg.flat(), 0.75)

    def test_matches_explicit_sum(self, net_config, rng):
        base = init_model(net_config)
        models = [base.from_flat(rng.normal(size=base.n_parameters)) for _ in range(4)]
        counts = [5, 17, 1, 9]
        expected = sum(n * m.flat() for m, n in zip(models, counts)) / sum(counts)
        avg = federated_weighted_average(list(zip(models, counts)))
        np.testing.assert_allclose(avg.flat(), expected, rtol=1e-12, atol=1e-14)

    def test_identical_models_are_a_fixed_point(self, net_config):
        w = init_model(net_config)
        avg = federated_weighted_average([(w, 3), (w.copy(), 8), (w.copy(), 1)])
        np.testing.assert_allclose(avg.flat(), w.flat(), rtol=0, atol=1e-14)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            federated_weighted_average([])

    def test_nonpositive_count(self, net_config):
        w = init_model(net_config)
        with pytest.raises(ValueError):
            federated_weighted_average([(w, 3), (w, 0)])

    def test_mixed_architectures(self, net_config):
        other = net_config.model_copy(update={'stem_channels': 2})
        with pytest.raises(ShapeMismatchError):
            federated_weighted_average([(init_model(net_config), 1), (init_model(other), 1)])

    @settings(max_examples=50, deadline=None)
    @given(counts=st.lists(st.integers(1, 1000), min_size=1, max_size=6), seed=st.integers(0, 2 ** 32))
    def test_result_lies_within_coordinate_bounds(self, counts, seed):
        rng = np.random.default_rng(seed)
        base = init_model(SCALAR_CONFIG)
        flats = [rng.normal(size=base.n_parameters) for _ in counts]
        avg = federated_weighted_average([(base.from_flat(f), n) for f, n in zip(flats, counts)]).flat()
        stacked = np.stack(flats)
        assert np.all(avg >= stacked.min(axis=0) - 1e-12)
        assert np.all(avg <= stacked.max(axis=0) + 1e-12)


class TestDeploy:
    def test_clients_get_independent_copies(self, net_config, three_class_dataset):
        clients = _clients(three_class_dataset, 2)
        server = _server(init_model(net_config), clients)
        deployed = deploy_to_clients(server, clients)
        deployed[0].current_weights.blocks[0].weight[...] = 99.0
        assert not np.any(server.global_weights.blocks[0].weight == 99.0)
        assert not np.any(deployed[1].current_weights.blocks[0].weight == 99.0)

    def test_unregistered_client_list(self, net_config, three_class_dataset):
        clients = _clients(three_class_dataset, 3)
        server = _server(init_model(net_config), clients[:2])
        with pytest.raises(PartitionError):
            deploy_to_clients(server, clients)

    def test_client_holding_foreign_weights(self, net_config, three_class_dataset):
        clients = _clients(three_class_dataset, 2)
        other = init_model(net_config.model_copy(update={'dense_hidden': (4,)}))
        clients[1] = ClientState(client_id=1, local_data=clients[1].local_data, current_weights=other)
        server = _server(init_model(net_config), clients)
        with pytest.raises(FingerprintMismatchError):
            deploy_to_clients(server, clients)


class TestClientUpdates:
    def test_zero_local_epochs_returns_deployed_weights(self, net_config, three_class_dataset):
        clients = _clients(three_class_dataset, 2)
        deployed = deploy_to_clients(_server(init_model(net_config), clients), clients)
        cfg = RoundConfig(local_epochs=0)
        assert client_local_train(deployed[0], cfg).equals(deployed[0].current_weights)

    def test_local_training_is_seeded_per_client_and_round(self, net_config, three_class_dataset):
        clients = _clients(three_class_dataset, 2)
        deployed = deploy_to_clients(_server(init_model(net_config), clients), clients)
        cfg = RoundConfig(local_epochs=2, batch_size=8, seed=4)
        a = client_local_train(deployed[0], cfg, round_index=1)
        b = client_local_train(deployed[0], cfg, round_index=1)
        c = client_local_train(deployed[0], cfg, round_index=2)
        assert a.equals(b)
        assert not a.equals(c)

    def test_derive_seed_is_stable_and_distinct(self):
        assert derive_seed(7, 0, 1) == derive_seed(7, 0, 1)
        assert len({derive_seed(7, i, r) for i in range(4) for r in range(4)}) == 16

    def test_local_training_lowers_local_loss(self, separable_blobs):
        config = ComboNetConfig(input_dim=4, n_classes=2, stem_channels=4, residual_blocks=1,
                                dense_hidden=(8,), init_seed=1)
        client = ClientState(client_id=0, local_data=separable_blobs, current_weights=init_model(config))
        trained = client_local_train(client, RoundConfig(local_epochs=5, batch_size=16, seed=2))
        assert client_local_loss(replace(client, current_weights=trained)) <= client_local_loss(client)


def _client_with(weights, data, client_id=0):
    return ClientState(client_id=client_id, local_data=data, current_weights=weights)


class TestClientLoss:
    def test_zero_weights_give_log_class_count(self, net_config, three_class_dataset):
        base = init_model(net_config)
        zeros = base.from_flat(np.zeros(base.n_parameters))
        assert client_local_loss(_client_with(zeros, three_class_dataset)) == pytest.approx(math.log(3), rel=1e-12)

    def test_equals_full_batch_network_loss(self, net_config, three_class_dataset):
        weights = init_model(net_config)
        expected = mean_loss(weights, three_class_dataset.features, three_class_dataset.labels)
        assert client_local_loss(_client_with(weights, three_class_dataset)) == expected

    def test_recombines_from_two_parts(self, net_config, three_class_dataset):
        weights = init_model(net_config)
        head = three_class_dataset.subset(range(0, 100, 3))
        tail = three_class_dataset.subset([i for i in range(100) if i % 3])
        whole = client_local_loss(_client_with(weights, three_class_dataset))
        parts = (head.n_samples * client_local_loss(_client_with(weights, head))
                 + tail.n_samples * client_local_loss(_client_with(weights, tail))) / 100
        assert whole == pytest.approx(parts, rel=0, abs=1e-10)

    def test_client_without_weights_rejected(self, three_class_dataset):
        with pytest.raises(ValueError):
            client_local_loss(ClientState(client_id=0, local_data=three_class_dataset))


class TestClientGradient:
    def test_matches_central_differences(self, net_config, three_class_dataset):
        clients = _clients(three_class_dataset, 2)
        client = deploy_to_clients(_server(init_model(net_config), clients), clients)[0]
        data = client.local_data
        analytic = client_gradient(client).flat()
        theta = client.current_weights.flat()

        def evaluate_at(vector):
            weights = client.current_weights.from_flat(vector)
            _, cache = forward(weights, Batch(data.features, data.labels))
            return client_local_loss(replace(client, current_weights=weights)), cache.relu_pattern()

        _, base_pattern = evaluate_at(theta)
        h = 1e-5
        checked = 0
        for i in range(theta.size):
            step = np.zeros_like(theta)
            step[i] = h
            f_plus, pat_plus = evaluate_at(theta + step)
            f_minus, pat_minus = evaluate_at(theta - step)
            # a ReLU switching inside ±h makes the loss non-differentiable there
            if not (np.array_equal(pat_plus, base_pattern) and np.array_equal(pat_minus, base_pattern)):
                continue
            checked += 1
            numeric = (f_plus - f_minus) / (2 * h)
            assert abs(numeric - analytic[i]) <= 1e-7 + 1e-4 * abs(analytic[i])
        assert checked > 0.9 * theta.size


def _uniform_gradient(weights, value):
    return GradientSet(
        blocks=tuple(ParamBlock(b.layer_id, b.kind, np.full_like(b.weight, value), np.full_like(b.bias, value))
                     for b in weights.blocks),
        sample_count=1,
    )


class TestClientSgdUpdate:
    def test_zero_gradient_is_identity(self, net_config):
        weights = init_model(net_config)
        assert client_sgd_update(weights, _uniform_gradient(weights, 0.0), 0.1).equals(weights)

    def test_matches_plain_sgd_step(self, net_config, three_class_dataset):
        weights = init_model(net_config)
        _, grads = full_batch_gradient(weights, three_class_dataset.features, three_class_dataset.labels)
        assert client_sgd_update(weights, grads, 0.05).equals(sgd_step(weights, grads, 0.05))

    def test_hand_computed_step(self, scalar_config):
        weights = init_model(scalar_config).from_flat(np.ones(6))
        stepped = client_sgd_update(weights, _uniform_gradient(weights, 0.5), 0.1)
        np.testing.assert_allclose(stepped.flat(), 0.95, rtol=0, atol=1e-15)

    def test_halving_the_rate_halves_the_step(self, net_config, three_class_dataset):
        weights = init_model(net_config)
        _, grads = full_batch_gradient(weights, three_class_dataset.features, three_class_dataset.labels)
        full = weights.flat() - client_sgd_update(weights, grads, 0.2).flat()
        half = weights.flat() - client_sgd_update(weights, grads, 0.1).flat()
        np.testing.assert_allclose(half, 0.5 * full, rtol=1e-9, atol=1e-14)

    def test_two_half_steps_equal_one_step(self, net_config, three_class_dataset):
        weights = init_model(net_config)
        _, grads = full_batch_gradient(weights, three_class_dataset.features, three_class_dataset.labels)
        twice = client_sgd_update(client_sgd_update(weights, grads, 0.05), grads, 0.05)
        once = client_sgd_update(weights, grads, 0.1)
        np.testing.assert_allclose(twice.flat(), once.flat(), rtol=0, atol=1e-12)

    def test_incongruent_gradient_rejected(self, net_config, scalar_config):
        weights = init_model(net_config)
        with pytest.raises(ShapeMismatchError):
            client_sgd_update(weights, _uniform_gradient(init_model(scalar_config), 1.0), 0.1)


class TestRound:
    def test_fedsgd_single_client_equals_plain_sgd(self, net_config, three_class_dataset):
        weights = init_model(net_config)
        clients = [ClientState(client_id=0, local_data=three_class_dataset)]
        server = _server(weights, clients)
        cfg = RoundConfig(mode='fedsgd', learning_rate=0.1)

        new_server, log = run_round(server, clients, cfg, three_class_dataset)

        _, grads = full_batch_gradient(weights, three_class_dataset.features, three_class_dataset.labels)
        expected = sgd_step(weights, grads, 0.1)
        np.testing.assert_allclose(new_server.global_weights.flat(), expected.flat(), rtol=0, atol=1e-10)
        assert new_server.round == 1
        assert log.round == 1

    def test_fedsgd_duplicate_clients_equal_one_client(self, net_config, three_class_dataset):
        weights = init_model(net_config)
        one = [ClientState(client_id=0, local_data=three_class_dataset)]
        two = one + [ClientState(client_id=1, local_data=three_class_dataset)]
        cfg = RoundConfig(mode='fedsgd', learning_rate=0.1)
        a, _ = run_round(_server(weights, one), one, cfg, three_class_dataset)
        b, _ = run_round(_server(weights, two), two, cfg, three_class_dataset)
        np.testing.assert_allclose(a.global_weights.flat(), b.global_weights.flat(), rtol=0, atol=1e-12)

    def test_fedsgd_gradient_sample_count(self, net_config, three_class_dataset):
        clients = _clients(three_class_dataset, 2)
        deployed = deploy_to_clients(_server(init_model(net_config), clients), clients)
        assert client_gradient(deployed[0]).sample_count == deployed[0].n_i

    def test_serial_and_threaded_rounds_agree(self, net_config, three_class_dataset):
        clients = _clients(three_class_dataset, 4)
        server = _server(init_model(net_config), clients)
        serial, log_a = run_round(server, clients, RoundConfig(local_epochs=2, seed=1, max_workers=1),
                                  three_class_dataset)
        threaded, log_b = run_round(server, clients, RoundConfig(local_epochs=2, seed=1, max_workers=4),
                                    three_class_dataset)
        assert serial.global_weights.equals(threaded.global_weights)
        assert log_a.to_dict() == log_b.to_dict()

    def test_failed_client_aborts_round_and_leaves_server_untouched(self, net_config, three_class_dataset):
        clients = _clients(three_class_dataset, 2)
        clients[1] = ClientState(client_id=1, local_data=three_class_dataset.subset([]))
        server = _server(init_model(net_config), clients)
        before = server.global_weights.flat().copy()

        with pytest.raises(RoundAbortedError) as exc:
            run_round(server, clients, RoundConfig(), three_class_dataset)
        assert exc.value.client_id == 1
        assert exc.value.round_index == 1
        assert server.round == 0
        assert np.array_equal(server.global_weights.flat(), before)

    def test_client_log_entries_follow_client_order(self, net_config, three_class_dataset):
        clients = _clients(three_class_dataset, 3)
        _, log = run_round(_server(init_model(net_config), clients), clients, RoundConfig(), three_class_dataset)
        assert [e.client_id for e in log.clients] == [0, 1, 2]
        assert sum(e.n_i for e in log.clients) == three_class_dataset.n_samples
        assert log.weight_delta > 0


class TestSimulation:
    @pytest.fixture
    def sim_config(self, net_config):
        return SimulationConfig(
            network=net_config,
            bootstrap=TrainParams(epochs=2, batch_size=16, shuffle_seed=3),
            round=RoundConfig(local_epochs=1, batch_size=16, seed=3),
            rounds=2,
        )

    def test_zero_rounds_logs_only_bootstrap(self, sim_config, three_class_dataset):
        config = sim_config.model_copy(update={'rounds': 0})
        server_data, pool = three_class_dataset.subset(range(0, 100, 2)), three_class_dataset.subset(range(1, 100, 2))
        result = run_simulation(config, server_data, [pool], three_class_dataset)
        assert [log.round for log in result.logs] == [0]
        assert result.round_logs == []
        assert result.bootstrap_log.weight_delta is None

    def test_reruns_are_identical(self, sim_config, three_class_dataset):
        spec = SplitSpec(seed=2)
        server_data = three_class_dataset.subset(range(0, 100, 2))
        pool = three_class_dataset.subset(range(1, 100, 2))
        shares = partition_among_clients(pool, 2, spec.seed)

        a = run_simulation(sim_config, server_data, shares, three_class_dataset)
        b = run_simulation(sim_config, server_data, shares, three_class_dataset)
        assert a.final_weights.equals(b.final_weights)
        assert [log.to_dict() for log in a.logs] == [log.to_dict() for log in b.logs]
        assert [log.round for log in a.logs] == [0, 1, 2]

    def test_stops_once_weights_stop_moving(self, sim_config, three_class_dataset):
        config = sim_config.model_copy(update={
            'rounds': 5, 'round': sim_config.round.model_copy(update={'local_epochs': 0}),
        })
        server_data = three_class_dataset.subset(range(0, 100, 2))
        pool = three_class_dataset.subset(range(1, 100, 2))
        result = run_simulation(config, server_data, [pool], three_class_dataset)
        assert result.stopped_early
        assert len(result.round_logs) == 1
        assert result.round_logs[0].weight_delta == 0.0

    def test_bootstrap_reports_loss_trace(self, net_config, three_class_dataset):
        server = bootstrap_server(net_config, three_class_dataset, TrainParams(epochs=3, batch_size=10))
        assert len(server.bootstrap_loss_trace) == 3
        assert server.round == 0

    def test_bootstrap_loss_never_rises_on_separable_data(self, separable_blobs):
        config = ComboNetConfig(input_dim=4, n_classes=2, stem_channels=4, residual_blocks=1,
                                dense_hidden=(8,), init_seed=1)
        params = TrainParams(epochs=20, batch_size=separable_blobs.n_samples, learning_rate=0.01)
        trace = bootstrap_server(config, separable_blobs, params).bootstrap_loss_trace
        assert len(trace) == 20
        assert all(later <= earlier for earlier, later in zip(trace, trace[1:]))
        assert trace[-1] < trace[0]

    def test_zero_epoch_bootstrap_keeps_fresh_weights(self, net_config, three_class_dataset):
        server = bootstrap_server(net_config, three_class_dataset, TrainParams(epochs=0))
        assert server.global_weights.equals(init_model(net_config))
