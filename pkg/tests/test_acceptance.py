#!/usr/bin/env python3
"""
Test Acceptance
Full experiment runs on the shipped configs; slowest suite
"""
import json

import pytest

from ftl_nids.cli import main
from ftl_nids.config import load_experiment_config

from tests.conftest import CONFIG_DIR

BLOBS_CONFIG = CONFIG_DIR / 'synthetic_blobs.json'
FIXTURE_CONFIG = CONFIG_DIR / 'iiot_fixture.json'


def _results(path):
    return json.loads(path.read_text(encoding='utf-8'))['results']


@pytest.fixture(scope='module')
def blobs_run(tmp_path_factory):
    out = tmp_path_factory.mktemp('blobs')
    assert main(['train-federated', '--config', str(BLOBS_CONFIG), '--out', str(out)]) == 0
    return out


@pytest.fixture(scope='module')
def fixture_run(tmp_path_factory):
    out = tmp_path_factory.mktemp('fixture')
    for stage in ('preprocess', 'train-federated', 'train-baselines'):
        assert main([stage, '--config', str(FIXTURE_CONFIG), '--out', str(out)]) == 0
    return out


@pytest.mark.parametrize('config', [BLOBS_CONFIG, FIXTURE_CONFIG], ids=['blobs', 'fixture'])
def test_shipped_configs_pool_by_averaging(config):
    assert load_experiment_config(config).network.pooling == 'avg'


class TestSyntheticBlobs:
    def test_federated_model_separates_blobs(self, blobs_run):
        results = _results(blobs_run / 'federated_metrics.json')
        assert results['network']['pooling'] == 'avg'
        assert results['rounds_completed'] <= 10
        assert results['final']['accuracy'] >= 0.95

    def test_each_round_logs_both_clients(self, blobs_run):
        rounds = [json.loads(line) for line in (blobs_run / 'rounds.jsonl').read_text().splitlines()]
        assert rounds
        assert all([c['client_id'] for c in r['clients']] == [0, 1] for r in rounds)

    def test_train_accuracy_not_below_test_accuracy(self, blobs_run, tmp_path):
        accuracy = {}
        for split in ('train', 'test'):
            out = tmp_path / split
            code = main(['evaluate', '--config', str(BLOBS_CONFIG), '--out', str(out),
                         '--weights', str(blobs_run / 'final_weights.ftlw'), '--split', split])
            assert code == 0
            accuracy[split] = _results(out / 'evaluation_metrics.json')['report']['accuracy']
        assert accuracy['train'] >= accuracy['test']
        assert accuracy['test'] == _results(blobs_run / 'federated_metrics.json')['final']['accuracy']


class TestCaptureFixture:
    def test_preprocess_selects_expected_features(self, fixture_run):
        report = _results(fixture_run / 'preprocess_report.json')
        assert report['selected_features'] == [
            'ip.proto', 'tcp.len', 'tcp.ack_ratio', 'dns.qry_len', 'tcp.conn_count', 'http.content_length',
        ]

    def test_federated_model_beats_naive_bayes(self, fixture_run):
        comparison = _results(fixture_run / 'baselines_metrics.json')['comparison']
        assert comparison['ftl']['accuracy'] > comparison['gnb']['accuracy'] + 0.05

    def test_federated_model_keeps_up_with_linear_baselines(self, fixture_run):
        comparison = _results(fixture_run / 'baselines_metrics.json')['comparison']
        for kind in ('lr', 'sgd'):
            assert comparison['ftl']['accuracy'] >= comparison[kind]['accuracy'] - 0.02
