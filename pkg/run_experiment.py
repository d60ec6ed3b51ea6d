#!/usr/bin/env python3
"""
FTL-NIDS - Full Experiment Entry Point
Runs preprocess → train-federated → train-baselines for one config in a single process

Usage:
    python run_experiment.py --config configs/iiot_fixture.json
    python run_experiment.py --config configs/synthetic_blobs.json --out runs/blobs --seed 3
"""

import argparse
import sys
import logging
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from ftl_nids.cli import main as cli_main
from ftl_nids.utils import setup_logging

logger = logging.getLogger(__name__)

STAGES = ['preprocess', 'train-federated', 'train-baselines']


def main():
    """Run every experiment stage in order; stops at the first failing stage"""
    parser = argparse.ArgumentParser(
        description='Run the full FTL-NIDS experiment for one config',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Fixture run (outputs land in the config's output_dir)
  python run_experiment.py --config configs/iiot_fixture.json

  # Synthetic blobs with an explicit output dir and seed
  python run_experiment.py --config configs/synthetic_blobs.json --out runs/blobs --seed 3
        """
    )
    parser.add_argument('--config', required=True, help='Experiment config JSON')
    parser.add_argument('--out', help='Output directory')
    parser.add_argument('--seed', type=int, help='Override the global seed')
    args = parser.parse_args()

    setup_logging()

    logger.info("=" * 60)
    logger.info("🛰️  FTL-NIDS experiment")
    logger.info("=" * 60)

    shared = ['--config', args.config]
    if args.out:
        shared += ['--out', args.out]
    if args.seed is not None:
        shared += ['--seed', str(args.seed)]

    for stage in STAGES:
        logger.info(f"📍 Stage: {stage}")
        code = cli_main([stage] + shared)
        if code != 0:
            logger.error(f"❌ Stage {stage} failed with exit code {code}")
            return code

    logger.info("✅ All stages completed")
    return 0


if __name__ == '__main__':
    sys.exit(main())
