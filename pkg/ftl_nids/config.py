"""
Configuration management for the FTL simulator

Two layers:
- `Config`: process settings from the environment (.env.local, then .env)
- `ExperimentConfig`: one JSON document describing an experiment, validated
  by pydantic with unknown keys rejected
"""
import hashlib
import json
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .baselines import BASELINE_KINDS, GNBParams, LRParams, RFParams, SGDParams
from .dataset_io import SplitSpec
from .errors import ConfigError
from .federation import RoundConfig, SimulationConfig
from .neuralnet import ComboNetConfig, TrainParams
from .preprocess import PreprocessPolicy

# Load environment variables from the repo root
env_path = Path(__file__).parent.parent / '.env.local'
if env_path.exists():
    load_dotenv(env_path)
else:
    env_path = Path(__file__).parent.parent / '.env'
    if env_path.exists():
        load_dotenv(env_path)


class Config:
    """Process-level settings"""

    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    ENVIRONMENT = os.getenv('ENVIRONMENT', 'development')

    # Output
    OUTPUT_DIR = os.getenv('FTL_OUTPUT_DIR', 'runs')

    # Client-phase thread pool size when the experiment does not set one
    MAX_WORKERS = int(os.getenv('FTL_MAX_WORKERS', '1'))

    SHOW_PROGRESS = os.getenv('FTL_SHOW_PROGRESS', 'false').lower() == 'true'

    SCHEMA_VERSION = 1

    @classmethod
    def validate(cls):
        """Validate process configuration"""
        if cls.MAX_WORKERS < 1:
            raise ConfigError("FTL_MAX_WORKERS must be >= 1")
        if cls.LOG_LEVEL.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ConfigError(f"Unknown LOG_LEVEL: {cls.LOG_LEVEL}")
        return True


class _Fragment(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class BlobsConfig(_Fragment):
    n_samples: int = Field(2500, ge=2)
    n_features: int = Field(10, ge=1)
    n_classes: int = Field(3, ge=2)
    cluster_std: float = Field(1.0, gt=0.0)
    center_box: Tuple[float, float] = (-10.0, 10.0)


class DatasetConfig(_Fragment):
    source: Literal['csv', 'blobs'] = 'csv'
    path: Optional[str] = None
    label_column: str = 'Attack_type'
    synthetic: BlobsConfig = BlobsConfig()


class SplitConfig(_Fragment):
    test_fraction: float = Field(0.2, gt=0.0, lt=0.5)
    server_fraction: float = Field(0.5, gt=0.0, lt=1.0)
    n_clients: int = Field(2, ge=1)
    client_partition: Literal['iid', 'dirichlet'] = 'iid'
    dirichlet_alpha: float = Field(0.5, gt=0.0)


class NetworkConfig(_Fragment):
    stem_channels: int = Field(8, ge=1)
    residual_blocks: int = Field(2, ge=0)
    kernel_size: int = Field(3, ge=1)
    dense_hidden: Tuple[int, ...] = (32,)
    pooling: Literal['avg', 'flatten'] = 'avg'


class BootstrapConfig(_Fragment):
    epochs: int = Field(20, ge=0)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(0.05, gt=0.0)


class FederationConfig(_Fragment):
    mode: Literal['fedsgd', 'fedavg'] = 'fedavg'
    learning_rate: float = Field(0.05, gt=0.0)
    local_epochs: int = Field(1, ge=0)
    batch_size: int = Field(32, ge=1)
    rounds: int = Field(2, ge=0)
    tolerance: float = Field(1e-6, ge=0.0)
    max_workers: Optional[int] = Field(None, ge=1)


class BaselinesConfig(_Fragment):
    kinds: List[Literal['lr', 'gnb', 'sgd', 'rf']] = list(BASELINE_KINDS)
    lr: LRParams = LRParams()
    sgd: SGDParams = SGDParams()
    gnb: GNBParams = GNBParams()
    rf: RFParams = RFParams()

    def params_for(self, kind: str):
        return getattr(self, kind)


def sub_seed(seed: int, tag: str) -> int:
    """Independent 64-bit seed per consumer of the global seed"""
    digest = hashlib.sha256(f'{seed}:{tag}'.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little')


class ExperimentConfig(_Fragment):
    schema_version: int = Config.SCHEMA_VERSION
    seed: int = Field(0, ge=0, lt=2 ** 64)
    dataset: DatasetConfig = DatasetConfig()
    preprocess: PreprocessPolicy = PreprocessPolicy()
    split: SplitConfig = SplitConfig()
    network: NetworkConfig = NetworkConfig()
    bootstrap: BootstrapConfig = BootstrapConfig()
    federation: FederationConfig = FederationConfig()
    baselines: BaselinesConfig = BaselinesConfig()
    output_dir: Optional[str] = None

    @field_validator('schema_version')
    @classmethod
    def _known_schema(cls, v):
        if v != Config.SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; expected {Config.SCHEMA_VERSION}")
        return v

    def split_spec(self) -> SplitSpec:
        return SplitSpec(seed=self.seed, **self.split.model_dump())

    def network_config(self, input_dim: int, n_classes: int) -> ComboNetConfig:
        return ComboNetConfig(
            input_dim=input_dim,
            n_classes=n_classes,
            init_seed=sub_seed(self.seed, 'init'),
            **self.network.model_dump(),
        )

    def bootstrap_params(self) -> TrainParams:
        return TrainParams(shuffle_seed=sub_seed(self.seed, 'bootstrap'), **self.bootstrap.model_dump())

    def round_config(self) -> RoundConfig:
        fed = self.federation
        return RoundConfig(
            mode=fed.mode,
            learning_rate=fed.learning_rate,
            local_epochs=fed.local_epochs,
            batch_size=fed.batch_size,
            seed=sub_seed(self.seed, 'rounds'),
            max_workers=fed.max_workers or Config.MAX_WORKERS,
        )

    def simulation_config(self, input_dim: int, n_classes: int) -> SimulationConfig:
        return SimulationConfig(
            network=self.network_config(input_dim, n_classes),
            bootstrap=self.bootstrap_params(),
            round=self.round_config(),
            rounds=self.federation.rounds,
            tolerance=self.federation.tolerance,
        )

    def baseline_seed(self, kind: str) -> int:
        return sub_seed(self.seed, f'baseline:{kind}')


def load_experiment_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    """Read and validate an experiment JSON; relative dataset and output paths resolve against its directory"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a JSON object")

    if seed is not None:
        raw['seed'] = seed

    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = '.'.join(str(p) for p in first['loc'])
        raise ConfigError(f"Invalid config {path}: {where}: {first['msg']}")

    if cfg.dataset.source == 'csv':
        if not cfg.dataset.path:
            raise ConfigError("dataset.path is required when dataset.source is 'csv'")
        data_path = Path(cfg.dataset.path)
        if not data_path.is_absolute():
            data_path = (path.parent / data_path).resolve()
        cfg = cfg.model_copy(update={'dataset': cfg.dataset.model_copy(update={'path': str(data_path)})})

    if cfg.output_dir and not Path(cfg.output_dir).is_absolute():
        cfg = cfg.model_copy(update={'output_dir': str((path.parent / cfg.output_dir).resolve())})

    return cfg
