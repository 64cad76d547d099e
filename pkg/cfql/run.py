"""Run directories, manifests and the end-to-end training pipeline

A run directory holds::

    config.json      resolved config
    manifest.json    seeds, dataset hash, timestamps, artifact paths
    metrics.csv      loss and evaluation rows
    result.json      final summary
    checkpoints/     tensor containers
    dataset.bin      generated dataset, if no dataset file was configured
"""

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from .bundle import NetworkBundle, load_bundle, save_bundle
from .C import *  # noqa: F403
from .cmdp import ContinuousCmdpEnv, sample_trajectories
from .dataset import TransitionDataset, get_dataset, write_dataset
from .envs import get_env_spec, make_env
from .format_version import __format_version__
from .trainer import RunMetrics, TrainConfig, train_offline, train_online
from .version import __version__

logger = logging.getLogger(__name__)
__all__ = ['RunManifest', 'blob_sha1', 'write_manifest', 'read_manifest',
           'verify_manifest', 'resolve_dataset', 'execute_run',
           'execute_finetune', 'write_json']


def blob_sha1(filename: Union[str, Path]) -> str:
    """Content hash as computed by ``git hash-object``"""
    data = Path(filename).read_bytes()
    digest = hashlib.sha1(f"blob {len(data)}\0".encode('ascii'))
    digest.update(data)
    return digest.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    """Provenance record of a run

    Attributes:
        config: Resolved config snapshot.
        seeds: Seeds of the run by purpose.
        dataset: Dataset path, relative to the run directory if inside it.
        dataset_sha1: Git blob hash of the dataset file.
        created: ISO timestamp of the manifest.
        finished: ISO timestamp of the end of training, if finished.
        artifacts: Artifact paths relative to the run directory.
        cfql_version: Package version that produced the run.
    """
    config: Dict[str, Any]
    seeds: Dict[str, int]
    dataset: str
    dataset_sha1: str
    created: str = field(default_factory=_now)
    finished: Optional[str] = None
    artifacts: Dict[str, str] = field(default_factory=lambda: {
        'config': CONFIG_FILE,
        'metrics': METRICS_FILE,
        'result': RESULT_FILE,
        'checkpoints': CHECKPOINT_DIR,
    })
    cfql_version: str = __version__

    def to_dict(self) -> Dict[str, Any]:
        return {FORMAT_VERSION: __format_version__, **asdict(self)}


def write_json(data: Dict[str, Any], filename: Union[str, Path]) -> None:
    with open(filename, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def write_manifest(manifest: RunManifest,
                   run_dir: Union[str, Path]) -> Path:
    """Write ``manifest.json`` into ``run_dir``"""
    path = Path(run_dir, MANIFEST_FILE)
    write_json(manifest.to_dict(), path)
    return path


def read_manifest(run_dir: Union[str, Path]) -> RunManifest:
    """Read ``manifest.json`` of ``run_dir``

    Raises:
        FileNotFoundError: if the manifest does not exist.
    """
    with open(Path(run_dir, MANIFEST_FILE)) as f:
        data = json.load(f)
    data.pop(FORMAT_VERSION, None)
    return RunManifest(**data)


def verify_manifest(run_dir: Union[str, Path]) -> bool:
    """Check that the recorded dataset hash still matches the dataset

    Returns:
        ``True`` if the hash matches, ``False`` otherwise.
    """
    manifest = read_manifest(run_dir)
    path = Path(run_dir, manifest.dataset)
    if not path.exists():
        logger.error(f"Dataset {path} of run {run_dir} does not exist.")
        return False
    actual = blob_sha1(path)
    if actual != manifest.dataset_sha1:
        logger.error(f"Dataset {path} has hash {actual}, manifest records "
                     f"{manifest.dataset_sha1}.")
        return False
    return True


def _relative(path: Path, run_dir: Path) -> str:
    try:
        return str(path.resolve().relative_to(run_dir.resolve()))
    except ValueError:
        return str(path.resolve())


def resolve_dataset(
        config: TrainConfig,
        run_dir: Union[None, str, Path] = None
) -> Tuple[TransitionDataset, Optional[Path]]:
    """Load the configured dataset or generate it

    Generated data comes from the behavioral policy of ``config.env`` with
    ``config.dataset_episodes`` episodes (or the environment's default) and
    is written into ``run_dir`` if given.

    Returns:
        The dataset and its file, ``None`` for unsaved generated data.

    Raises:
        FileNotFoundError: if a configured dataset does not exist.
    """
    if config.dataset is not None:
        path = Path(config.dataset)
        return get_dataset(path), path
    spec = get_env_spec(config.env)
    episodes = config.dataset_episodes or spec.default_episodes
    logger.info(f"Generating {episodes} episodes of {config.env}.")
    dataset = sample_trajectories(make_env(config.env, config.seed),
                                  episodes, config.seed)
    if run_dir is None:
        return dataset, None
    path = Path(run_dir, DATASET_FILE)
    write_dataset(dataset, path)
    return dataset, path


def _summary(config: TrainConfig, bundle: NetworkBundle,
             metrics: RunMetrics, seconds: float) -> Dict[str, Any]:
    result = {
        'mode': config.mode,
        'env': config.env,
        SEED: config.seed,
        'gradient_steps': bundle.step,
        'seconds': round(seconds, 3),
    }
    evaluations = metrics.evaluations()
    if len(evaluations):
        final = evaluations.iloc[-1]
        for key in (SUCCESS_RATE, SUCCESS_SE, MEAN_RETURN, RETURN_SE):
            result[key] = float(final[key])
    return result


def _start_run(config: TrainConfig, run_dir: Path,
               **artifacts: str) -> Tuple[TransitionDataset, RunManifest]:
    run_dir.mkdir(parents=True, exist_ok=True)
    dataset, dataset_path = resolve_dataset(config, run_dir)
    write_json(config.to_dict(), run_dir / CONFIG_FILE)
    manifest = RunManifest(
        config=config.to_dict(),
        seeds={'run': config.seed,
               'dataset': int(dataset.metadata.get(SEED, config.seed))},
        dataset=_relative(dataset_path, run_dir),
        dataset_sha1=blob_sha1(dataset_path))
    manifest.artifacts.update(artifacts)
    write_manifest(manifest, run_dir)
    return dataset, manifest


def _finish_run(config: TrainConfig, run_dir: Path, manifest: RunManifest,
                bundle: NetworkBundle, metrics: RunMetrics,
                seconds: float) -> Dict[str, Any]:
    checkpoint_dir = run_dir / CHECKPOINT_DIR
    checkpoint_dir.mkdir(exist_ok=True)
    save_bundle(bundle, checkpoint_dir / FINAL_CHECKPOINT)
    metrics.write_csv(run_dir / METRICS_FILE)
    result = _summary(config, bundle, metrics, seconds)
    write_json(result, run_dir / RESULT_FILE)
    manifest.finished = _now()
    write_manifest(manifest, run_dir)
    logger.info(f"Run finished after {bundle.step} gradient steps; "
                f"artifacts in {run_dir}.")
    return result


def execute_run(
        config: TrainConfig,
        run_dir: Union[str, Path]
) -> Tuple[NetworkBundle, RunMetrics, Dict[str, Any]]:
    """Offline training, optional fine-tuning and all run artifacts

    The manifest is written before training starts and completed
    afterwards.

    Arguments:
        config: Resolved config.
        run_dir: Output directory, created if needed.

    Returns:
        Final networks, metrics and the result summary.
    """
    run_dir = Path(run_dir)
    dataset, manifest = _start_run(config, run_dir)
    start = time.perf_counter()
    checkpoint_dir = run_dir / CHECKPOINT_DIR
    env = make_env(config.env, config.seed)
    env = env if isinstance(env, ContinuousCmdpEnv) else None
    bundle, metrics = train_offline(config, dataset, env, checkpoint_dir)
    if config.online['steps'] and env is not None:
        bundle, online_metrics = train_online(config, bundle, env, dataset,
                                              checkpoint_dir)
        metrics.extend(online_metrics)
    result = _finish_run(config, run_dir, manifest, bundle, metrics,
                         time.perf_counter() - start)
    return bundle, metrics, result


def execute_finetune(
        checkpoint: Union[str, Path],
        config: TrainConfig,
        run_dir: Union[str, Path]
) -> Tuple[NetworkBundle, RunMetrics, Dict[str, Any]]:
    """Fine-tune a saved bundle online and write the run artifacts

    Arguments:
        checkpoint: Offline-trained bundle.
        config: Resolved config with the ``online`` section.
        run_dir: Output directory, created if needed.

    Raises:
        FileNotFoundError: if the checkpoint does not exist.
        ValueError: if ``config.env`` is tabular.
    """
    run_dir = Path(run_dir)
    env = make_env(config.env, config.seed)
    if not isinstance(env, ContinuousCmdpEnv):
        raise ValueError(f"Cannot fine-tune on tabular '{config.env}'.")
    bundle = load_bundle(checkpoint)
    dataset, manifest = _start_run(
        config, run_dir, initial_checkpoint=str(Path(checkpoint).resolve()))
    start = time.perf_counter()
    bundle, metrics = train_online(config, bundle, env, dataset,
                                   run_dir / CHECKPOINT_DIR)
    result = _finish_run(config, run_dir, manifest, bundle, metrics,
                         time.perf_counter() - start)
    return bundle, metrics, result
