"""Konfiguration: Defaults, Umgebungsvariablen, Logging und Worker-Pool"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'

RIP_DEFAULTS = {
    'num_samples': 1000,
    'percentile': 0.95,
    'matrix_seeds': 5,
    'min_samples': 100,
}

TRAIN_DEFAULTS = {
    'optimizer': 'adam',
    'lr': 1e-2,
    'beta1': 0.9,
    'beta2': 0.999,
    'eps': 1e-8,
    'weight_decay': 0.0,
    'batch_size': 64,
    'pool_batches': 8,
    'steps': 5000,
    'schedule': 'cosine',
    'warmup_ratio': 0.0,
    'divergence_factor': 1e6,
    'convergence_floor': 1e-20,
}

BUDGET_DEFAULTS = {
    'bytes_per_param': 4,
    'opt_multiplier': 3,
    'seed_bytes': 8,
}

ANALYSIS_DEFAULTS = {
    'sparsity_threshold': 1e-4,
    'energy': 0.95,
}

# Referenz-Preset der RIP-Studie (Basis 512x256, vier Kompressionsstufen)
REFERENCE_STUDY = {
    'm': 512,
    'n': 256,
    'configs': [(32, 8), (64, 16), (128, 32), (256, 64)],
    'sparsities': [5, 10, 20],
    'num_samples': 1000,
    'matrix_seeds': 5,
}


def default_threads() -> int:
    """Worker-Anzahl aus COSA_THREADS (Default 1)"""
    raw = os.environ.get('COSA_THREADS', '1')
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def configure_logging(level: str = None) -> None:
    """Richtet das Logging einmalig ein (stderr, damit Reports auf stdout sauber bleiben)"""
    level = (level or os.environ.get('COSA_LOG_LEVEL', 'INFO')).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format=LOG_FORMAT,
        datefmt=LOG_DATEFMT,
    )


class _SerialExecutor:
    """Executor-Ersatz für threads <= 1"""

    def map(self, fn, *iterables):
        return list(map(fn, *iterables))


@contextmanager
def worker_pool(threads: int = 1):
    """Context manager für Worker-Threads; map() liefert immer in Eingabe-Reihenfolge"""
    if threads is None or threads <= 1:
        yield _SerialExecutor()
        return
    pool = ThreadPoolExecutor(max_workers=threads)
    try:
        yield pool
    finally:
        pool.shutdown(wait=True)
