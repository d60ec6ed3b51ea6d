#!/usr/bin/env python3
"""
FTL experiment driver

Usage:
    python -m ftl_nids preprocess --config configs/iiot_fixture.json --out runs/fixture
    python -m ftl_nids train-federated --config configs/iiot_fixture.json --out runs/fixture
    python -m ftl_nids train-baselines --config configs/iiot_fixture.json --out runs/fixture
    python -m ftl_nids evaluate --config configs/iiot_fixture.json --out runs/fixture \\
        --weights runs/fixture/final_weights.ftlw --split test
"""
import argparse
import json
import logging
import platform
import sys
import time
import traceback
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
import psutil

from . import __version__
from .baselines import fit_baseline, predict_baseline
from .config import Config, ExperimentConfig, load_experiment_config, sub_seed
from .dataset_io import (
    Dataset,
    load_csv,
    partition_among_clients,
    partition_client_server,
    split_train_test,
)
from .errors import FTLError, MissingFileError
from .federation import run_simulation
from .formatters import ConsoleFormatter, JSONFormatter
from .metrics import evaluate
from .neuralnet import deserialize_weights, predict_classes, serialize_weights
from .preprocess import PreprocessReport, apply_scaler, fit_minmax_scaler, run_pipeline
from .synthetic import dataset_to_table, make_blobs

logger = logging.getLogger('CLI')


@dataclass(frozen=True)
class PreparedData:
    """Everything the commands need, rebuilt deterministically from the config"""
    report: PreprocessReport
    train: Dataset
    test: Dataset
    server: Dataset
    clients: List[Dataset]


class ExperimentRunner:
    """Main orchestrator for one experiment config"""

    def __init__(self, config: ExperimentConfig, out_dir: Path):
        Config.validate()
        self.config = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.console_formatter = ConsoleFormatter()
        self.json_formatter = JSONFormatter()
        self._started = time.perf_counter()
        self._started_at = datetime.now(timezone.utc)

    # Data

    def _load_table(self):
        ds = self.config.dataset
        if ds.source == 'blobs':
            blobs = ds.synthetic
            data = make_blobs(
                n_samples=blobs.n_samples,
                n_features=blobs.n_features,
                n_classes=blobs.n_classes,
                cluster_std=blobs.cluster_std,
                center_box=blobs.center_box,
                seed=sub_seed(self.config.seed, 'blobs'),
            )
            logger.info(f"📄 Generated {data.n_samples} synthetic blob rows")
            return dataset_to_table(data, label_column=ds.label_column)
        return load_csv(ds.path, ds.label_column)

    def prepare_data(self) -> PreparedData:
        table = self._load_table()
        data, report = run_pipeline(table, self.config.preprocess)

        spec = self.config.split_spec()
        train, test = split_train_test(data, spec)
        scaler = fit_minmax_scaler(train)
        train, test = apply_scaler(train, scaler), apply_scaler(test, scaler)
        report = replace(report, scaler=scaler)

        server, pool = partition_client_server(train, spec)
        clients = partition_among_clients(
            pool, spec.n_clients, spec.seed, mode=spec.client_partition, alpha=spec.dirichlet_alpha
        )
        return PreparedData(report=report, train=train, test=test, server=server, clients=clients)

    # Output

    def _meta(self, command: str) -> Dict:
        process = psutil.Process()
        return {
            'command': command,
            'version': __version__,
            'seed': self.config.seed,
            'started_at': self._started_at,
            'finished_at': datetime.now(timezone.utc),
            'duration_seconds': round(time.perf_counter() - self._started, 3),
            'host': {
                'platform': platform.platform(),
                'python': platform.python_version(),
                'cpu_count': psutil.cpu_count(logical=True),
                'rss_mb': round(process.memory_info().rss / (1024 * 1024), 1),
            },
        }

    def _write_report(self, name: str, command: str, results: Dict) -> Path:
        path = self.out_dir / name
        path.write_text(self.json_formatter.format_stats({'meta': self._meta(command), 'results': results}))
        logger.info(f"📄 Wrote {path}")
        return path

    def _write_dataset_csv(self, data: Dataset, name: str):
        frame = pd.DataFrame(data.features, columns=data.feature_names)
        frame.insert(0, 'row_id', data.row_ids)
        frame[self.config.dataset.label_column] = [data.label_names[y] for y in data.labels]
        path = self.out_dir / name
        frame.to_csv(path, index=False)
        logger.info(f"📄 Wrote {path} ({data.n_samples} rows)")

    # Commands

    def cmd_preprocess(self) -> Dict:
        prepared = self.prepare_data()
        results = prepared.report.to_dict()
        results['split'] = {
            'train': prepared.train.n_samples,
            'test': prepared.test.n_samples,
            'server': prepared.server.n_samples,
            'clients': [c.n_samples for c in prepared.clients],
        }
        self._write_report('preprocess_report.json', 'preprocess', results)
        self._write_dataset_csv(prepared.train, 'dataset_train.csv')
        self._write_dataset_csv(prepared.test, 'dataset_test.csv')
        print(self.console_formatter.format_preprocess(results))
        return results

    def cmd_train_federated(self) -> Dict:
        prepared = self.prepare_data()
        sim_config = self.config.simulation_config(prepared.train.n_features, prepared.train.n_classes)
        result = run_simulation(
            sim_config, prepared.server, prepared.clients, prepared.test, progress=Config.SHOW_PROGRESS
        )

        label_names = prepared.train.label_names
        with open(self.out_dir / 'rounds.jsonl', 'w', encoding='utf-8') as f:
            for log in result.round_logs:
                f.write(self.json_formatter.format_line(log.to_dict(label_names)) + "\n")

        weights_path = self.out_dir / 'final_weights.ftlw'
        weights_path.write_bytes(serialize_weights(result.final_weights))
        logger.info(f"📄 Wrote {weights_path}")

        final = result.logs[-1].server.to_dict(label_names)
        results = {
            'network': sim_config.network.model_dump(mode='json'),
            'mode': sim_config.round.mode,
            'rounds_requested': sim_config.rounds,
            'rounds_completed': len(result.round_logs),
            'stopped_early': result.stopped_early,
            'bootstrap': result.bootstrap_log.to_dict(label_names),
            'rounds': [log.to_dict(label_names) for log in result.round_logs],
            'final': final,
        }
        self._write_report('federated_metrics.json', 'train-federated', results)
        print(self.console_formatter.format_rounds([log.to_dict(label_names) for log in result.logs]))
        return results

    def cmd_train_baselines(self) -> Dict:
        prepared = self.prepare_data()
        label_names = prepared.train.label_names
        reports = {}
        for kind in self.config.baselines.kinds:
            model = fit_baseline(
                kind,
                prepared.train,
                self.config.baselines.params_for(kind),
                seed=self.config.baseline_seed(kind),
                progress=Config.SHOW_PROGRESS,
            )
            predicted = predict_baseline(model, prepared.test.features)
            reports[kind] = evaluate(prepared.test.labels, predicted, prepared.test.n_classes).to_dict(label_names)
            (self.out_dir / f'baseline_{kind}.json').write_text(self.json_formatter.format_stats(model.to_dict()))

        comparison = {kind: _headline(r) for kind, r in reports.items()}
        federated = self.out_dir / 'federated_metrics.json'
        if federated.exists():
            final = json.loads(federated.read_text(encoding='utf-8'))['results']['final']
            comparison['ftl'] = _headline(final)

        results = {'reports': reports, 'comparison': comparison}
        self._write_report('baselines_metrics.json', 'train-baselines', results)
        print(self.console_formatter.format_comparison(comparison))
        return results

    def cmd_evaluate(self, weights_path: Path, split: str = 'test') -> Dict:
        prepared = self.prepare_data()
        weights_path = Path(weights_path)
        if not weights_path.is_file():
            raise MissingFileError(weights_path)
        data = prepared.train if split == 'train' else prepared.test
        net_config = self.config.network_config(data.n_features, data.n_classes)
        weights = deserialize_weights(weights_path.read_bytes(), net_config)

        report = evaluate(data.labels, predict_classes(weights, data.features), data.n_classes)
        results = {'split': split, 'n_samples': data.n_samples, 'report': report.to_dict(data.label_names)}
        self._write_report('evaluation_metrics.json', 'evaluate', results)
        print(self.console_formatter.format_report(results['report'], title=f"EVALUATION ({split})"))
        return results


def _headline(report: Dict) -> Dict:
    return {k: report[k] for k in ('accuracy', 'macro_precision', 'macro_recall', 'macro_f1')}


def _emit_error(e: BaseException, exit_code: int):
    sys.stderr.write(json.dumps({
        'error': type(e).__name__,
        'exit_code': exit_code,
        'message': str(e),
    }) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='ftl_nids',
        description='Federated transfer learning simulator for IIoT intrusion detection',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Clean, select and scale the bundled fixture
  python -m ftl_nids preprocess --config configs/iiot_fixture.json --out runs/fixture

  # Bootstrap the server and run the federated rounds
  python -m ftl_nids train-federated --config configs/iiot_fixture.json --out runs/fixture

  # Fit LR / GNB / SGD / RF and compare against the federated run
  python -m ftl_nids train-baselines --config configs/iiot_fixture.json --out runs/fixture

  # Score a saved weight file on the train split
  python -m ftl_nids evaluate --config configs/iiot_fixture.json --out runs/fixture \\
      --weights runs/fixture/final_weights.ftlw --split train
        """
    )
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('--config', required=True, help='Experiment config JSON')
        p.add_argument('--out', help='Output directory (default: config output_dir, then FTL_OUTPUT_DIR)')
        p.add_argument('--seed', type=int, help='Override the global seed')

    common(sub.add_parser('preprocess', help='Clean, encode, select and scale the dataset'))
    common(sub.add_parser('train-federated', help='Run the federated simulation'))
    common(sub.add_parser('train-baselines', help='Fit and score the baseline classifiers'))

    ev = sub.add_parser('evaluate', help='Score a weight file on a data split')
    common(ev)
    ev.add_argument('--weights', required=True, help='Weight file written by train-federated')
    ev.add_argument('--split', choices=['train', 'test'], default='test', help='Split to score (default: test)')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)

    try:
        config = load_experiment_config(args.config, seed=args.seed)
        out_dir = Path(args.out or config.output_dir or Config.OUTPUT_DIR)
        runner = ExperimentRunner(config, out_dir)

        logger.info(f"🚀 {args.command} (seed {config.seed}) → {out_dir}")
        if args.command == 'preprocess':
            runner.cmd_preprocess()
        elif args.command == 'train-federated':
            runner.cmd_train_federated()
        elif args.command == 'train-baselines':
            runner.cmd_train_baselines()
        else:
            runner.cmd_evaluate(Path(args.weights), split=args.split)

        logger.info(f"✅ {args.command} completed")
        return 0

    except FTLError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        logger.debug(traceback.format_exc())
        _emit_error(e, e.exit_code)
        return e.exit_code
    except Exception as e:
        logger.error(f"❌ {args.command} failed: {e}")
        logger.error(traceback.format_exc())
        _emit_error(e, 1)
        return 1
