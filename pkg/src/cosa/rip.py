"""
Empirische RIP-Schätzung, theoretische Schranke, konservativer Faktor und
OMP-Rekonstruktion über dem impliziten Kronecker-Wörterbuch.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import RIP_DEFAULTS, worker_pool
from .errors import ArgumentError, NumericalError, ShapeError
from .models import RipTheoryConfig
from .numerics import condition_number, frobenius_norm, percentile
from .projection import (DictionaryView, apply_dictionary, atom_gram, coherence,
                         column_norms, correlation_map, dictionary_view, make_pair, vec)
from .randgen import derive_seed, new_stream, partial_shuffle

logger = logging.getLogger(__name__)

RATIO_RESERVOIR = 100_000
GRAM_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class SparseVector:
    """
    s-dünner Koeffizientenvektor über dem ab-dimensionalen Kernraum.

    Leerer Träger ist nur als OMP-Ergebnis für ein Nullziel erlaubt.
    """
    dim: int
    support: Tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        support = tuple(int(k) for k in self.support)
        values = np.array(self.values, dtype=np.float64).ravel()
        if self.dim < 1:
            raise ArgumentError(f"sparse vector dimension must be positive, got {self.dim}")
        if len(support) != values.size:
            raise ShapeError("support/value length mismatch", (len(support),), values.shape)
        if any(b <= a for a, b in zip(support, support[1:])):
            raise ArgumentError("support must be sorted and distinct")
        if support and (support[0] < 0 or support[-1] >= self.dim):
            raise ArgumentError(f"support index out of range for dimension {self.dim}")
        if not np.all(np.isfinite(values)):
            raise NumericalError("sparse vector values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_unsorted(cls, dim: int, support: Sequence[int], values: Sequence[float]) -> "SparseVector":
        order = np.argsort(np.asarray(support, dtype=np.int64), kind="stable")
        return cls(dim=dim, support=tuple(int(support[k]) for k in order),
                   values=np.asarray(values, dtype=np.float64)[order])

    @property
    def sparsity(self) -> int:
        return len(self.support)

    def norm_squared(self) -> float:
        return float(self.values @ self.values)

    def scaled(self, factor: float) -> "SparseVector":
        return SparseVector(self.dim, self.support, self.values * factor)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[list(self.support)] = self.values
        return dense


def sample_sparse_vector(seed: int, dim: int, s: int) -> SparseVector:
    """Träger gleichverteilt ohne Zurücklegen (partieller Fisher-Yates), Werte N(0,1)"""
    if not 1 <= s <= dim:
        raise ArgumentError(f"sparsity must satisfy 1 <= s <= dim, got s={s}, dim={dim}")
    stream = new_stream(seed)
    support = partial_shuffle(stream, dim, s)
    values = stream.normals(s)
    # exakte Nullen (Wahrscheinlichkeit 2^-53) neu ziehen
    while np.any(values == 0.0):
        zeros = values == 0.0
        values[zeros] = stream.normals(int(zeros.sum()))
    return SparseVector.from_unsorted(dim, support, values)


def isometry_ratio(view: DictionaryView, alpha: SparseVector) -> float:
    """‖Ψα‖² / ‖α‖²"""
    if alpha.dim != view.dim:
        raise ShapeError("sparse coefficient dimension mismatch", (alpha.dim,), (view.dim,))
    energy = alpha.norm_squared()
    if energy == 0.0:
        raise ArgumentError("isometry ratio of a zero vector is undefined")
    return frobenius_norm(apply_dictionary(view, alpha)) ** 2 / energy


def difference_ratio(view: DictionaryView, first: SparseVector, second: SparseVector) -> float:
    """Isometrie-Verhältnis von α₁ − α₂ (höchstens 2s-dünn)"""
    if first.dim != second.dim:
        raise ShapeError("sparse vectors differ in dimension", (first.dim,), (second.dim,))
    diff: Dict[int, float] = dict(zip(first.support, first.values))
    for k, v in zip(second.support, second.values):
        diff[k] = diff.get(k, 0.0) - v
    diff = {k: v for k, v in diff.items() if v != 0.0}
    if not diff:
        raise ArgumentError("difference of identical vectors has no isometry ratio")
    return isometry_ratio(view, SparseVector.from_unsorted(first.dim, list(diff), list(diff.values())))


@dataclass(frozen=True)
class RipEstimate:
    s: int
    num_samples: int
    delta: float
    base_seed: int
    ratios: Optional[np.ndarray] = None
    q: float = RIP_DEFAULTS['percentile']


def estimate_rip(view: DictionaryView, s: int, num_samples: int = RIP_DEFAULTS['num_samples'],
                 base_seed: int = 0, threads: int = 1, keep_ratios: bool = False) -> RipEstimate:
    """
    Monte-Carlo-Schätzung δ_s = percentile_95 |r_i − 1|.

    Stichprobe i benutzt derive_seed(base_seed, i); das Ergebnis hängt daher
    nicht von der Ausführungsreihenfolge ab.
    """
    if num_samples < RIP_DEFAULTS['min_samples']:
        raise ArgumentError(f"need at least {RIP_DEFAULTS['min_samples']} samples, got {num_samples}")
    if not 1 <= s <= view.dim:
        raise ArgumentError(f"sparsity must satisfy 1 <= s <= {view.dim}, got {s}")

    def one(index: int) -> float:
        return isometry_ratio(view, sample_sparse_vector(derive_seed(base_seed, index), view.dim, s))

    with worker_pool(threads) as pool:
        ratios = np.array(list(pool.map(one, range(num_samples))), dtype=np.float64)
    delta = percentile(np.abs(ratios - 1.0), RIP_DEFAULTS['percentile'])
    kept = ratios[:RATIO_RESERVOIR].copy() if keep_ratios else None
    return RipEstimate(s=s, num_samples=num_samples, delta=delta, base_seed=base_seed, ratios=kept)


def ratio_histogram(estimate: RipEstimate, bins: int = 20) -> List[Dict]:
    """Histogramm der behaltenen Verhältnisse (plotfertige Zeilen)"""
    if estimate.ratios is None:
        raise ArgumentError("estimate was computed without keep_ratios")
    counts, edges = np.histogram(estimate.ratios, bins=bins)
    return [{'s': estimate.s, 'bin_lo': float(lo), 'bin_hi': float(hi), 'count': int(c)}
            for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def theoretical_bound(cfg: RipTheoryConfig, s: int) -> float:
    """C·√(s·log(n_ambient)/m_eff); Logarithmus zur Basis cfg.log_base (Default e)"""
    if s < 1:
        raise ArgumentError(f"sparsity must be >= 1, got {s}")
    if cfg.m_eff is None or cfg.n_ambient is None:
        raise ArgumentError("bound needs m_eff and n_ambient (see RipTheoryConfig.resolved)")
    return cfg.C * math.sqrt(s * math.log(cfg.n_ambient, cfg.log_base) / cfg.m_eff)


def conservative_factor(empirical, bound: float) -> float:
    """Schranke / empirisches δ; math.inf bei δ = 0"""
    delta = empirical.delta if isinstance(empirical, RipEstimate) else float(empirical)
    if delta < 0:
        raise ArgumentError(f"empirical delta must be non-negative, got {delta}")
    if delta == 0.0:
        return math.inf
    return bound / delta


@dataclass(frozen=True)
class RipStudyRow:
    config: str
    a: int
    b: int
    compression_ratio: float
    s: int
    delta_mean: float
    delta_std: float
    coherence: Optional[float]
    bound: float
    conservative_factor: float
    deltas: Tuple[float, ...] = ()

    def as_dict(self) -> Dict:
        return {
            'config': self.config, 'a': self.a, 'b': self.b,
            'compression_ratio': self.compression_ratio, 's': self.s,
            'delta_mean': self.delta_mean, 'delta_std': self.delta_std,
            'coherence': self.coherence, 'bound': self.bound,
            'conservative_factor': self.conservative_factor,
        }


@dataclass(frozen=True)
class RipStudyReport:
    m: int
    n: int
    num_samples: int
    matrix_seeds: Tuple[int, ...]
    rows: List[RipStudyRow] = field(default_factory=list)

    def as_rows(self) -> List[Dict]:
        return [row.as_dict() for row in self.rows]

    def row(self, a: int, b: int, s: int) -> RipStudyRow:
        for row in self.rows:
            if (row.a, row.b, row.s) == (a, b, s):
                return row
        raise KeyError((a, b, s))


def sample_base_seed(matrix_seed: int, s: int) -> int:
    """Stichproben-Seed einer Studienzelle (getrennt von den Seeds für L und R)"""
    return derive_seed(derive_seed(matrix_seed, 2), s)


def run_rip_study(configs: Sequence[Tuple[int, int]], sparsities: Sequence[int],
                  base_dims: Tuple[int, int], num_samples: int = RIP_DEFAULTS['num_samples'],
                  matrix_seeds: Sequence[int] = (0,), theory: RipTheoryConfig = None,
                  orthonormalize: bool = False, threads: int = 1) -> RipStudyReport:
    """
    Kreuzprodukt Konfigurationen × Sparsity über mehrere Matrix-Seeds.

    Mittelwert und Streuung (ddof=0) von δ laufen über die Matrix-Seeds.
    """
    if not configs or not sparsities or not matrix_seeds:
        raise ArgumentError("configs, sparsities and matrix_seeds must be non-empty")
    theory = theory or RipTheoryConfig()
    m, n = base_dims
    rows = []
    for a, b in configs:
        coherences = []
        deltas = {s: [] for s in sparsities}
        for seed in matrix_seeds:
            view = dictionary_view(make_pair(seed, m, n, a, b, orthonormalize=orthonormalize))
            if a * b >= 2:
                coherences.append(coherence(view))
            for s in sparsities:
                estimate = estimate_rip(view, s, num_samples, sample_base_seed(seed, s), threads=threads)
                deltas[s].append(estimate.delta)
        for s in sparsities:
            values = np.array(deltas[s])
            delta_mean = float(values.mean())
            bound = theoretical_bound(theory.resolved(m, n, a, b), s)
            rows.append(RipStudyRow(
                config=f"{a}x{b}", a=a, b=b, compression_ratio=m * n / (a * b), s=s,
                delta_mean=delta_mean, delta_std=float(values.std()),
                coherence=float(np.mean(coherences)) if coherences else None,
                bound=bound, conservative_factor=conservative_factor(delta_mean, bound),
                deltas=tuple(float(v) for v in values),
            ))
            logger.info(f"RIP-Zelle ({a},{b}) s={s}: delta={delta_mean:.4f} ± {values.std():.4f}")
    return RipStudyReport(m=m, n=n, num_samples=num_samples, matrix_seeds=tuple(matrix_seeds), rows=rows)


def omp_recover(view: DictionaryView, target: np.ndarray, s: int) -> SparseVector:
    """
    Orthogonal Matching Pursuit über Ψ, ohne Ψ zu bilden.

    Pro Iteration: Korrelationen des Residuums durch Atomnormen teilen,
    stärkstes Atom wählen (bei Gleichstand der kleinste Index), Kleinste-
    Quadrate über die Normalgleichungen der gewählten Atome lösen. Ein
    Nullziel liefert den leeren Träger.
    """
    pair = view.pair
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (pair.m, pair.n):
        raise ShapeError("target shape mismatch", target.shape, (pair.m, pair.n))
    if not 1 <= s <= view.dim:
        raise ArgumentError(f"sparsity must satisfy 1 <= s <= {view.dim}, got {s}")

    target_norm = frobenius_norm(target)
    if target_norm == 0.0:
        return SparseVector(dim=view.dim, support=(), values=np.zeros(0))

    norms = vec(column_norms(view))
    rhs_all = vec(correlation_map(view, target))
    residual = target
    support: List[int] = []
    coeffs = np.zeros(0)
    for step in range(s):
        scores = np.abs(vec(correlation_map(view, residual))) / norms
        scores[support] = -1.0
        support.append(int(np.argmax(scores)))
        gram = atom_gram(view, support)
        cond = condition_number(gram)
        if cond > GRAM_CONDITION_LIMIT:
            raise NumericalError(f"OMP Gram system ill-conditioned at step {step + 1} (cond={cond:.3e})")
        coeffs = np.linalg.solve(gram, rhs_all[support])
        estimate = SparseVector.from_unsorted(view.dim, support, coeffs)
        residual = target - apply_dictionary(view, estimate)
        remaining = frobenius_norm(residual)
        logger.debug(f"OMP Schritt {step + 1}: Atom {support[-1]}, Residuum {remaining:.3e}")
        if remaining <= 1e-13 * target_norm:
            break
    return SparseVector.from_unsorted(view.dim, support, coeffs)


@dataclass(frozen=True)
class RecoveryTrials:
    trials: int
    successes: int
    max_coefficient_error: float
    rows: List[Dict]

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials


def planted_recovery_trials(view: DictionaryView, s: int, trials: int, base_seed: int = 0,
                            min_magnitude: float = 0.5) -> RecoveryTrials:
    """Plant s-dünne Kerne mit |Wert| >= min_magnitude und prüft OMP auf exakten Träger"""
    if trials < 1:
        raise ArgumentError(f"need at least one trial, got {trials}")
    rows = []
    successes = 0
    worst = 0.0
    for trial in range(trials):
        drawn = sample_sparse_vector(derive_seed(base_seed, trial), view.dim, s)
        planted = SparseVector(drawn.dim, drawn.support,
                               np.sign(drawn.values) * (min_magnitude + np.abs(drawn.values)))
        recovered = omp_recover(view, apply_dictionary(view, planted), s)
        exact = recovered.support == planted.support
        error = float(np.max(np.abs(recovered.values - planted.values))) if exact else math.inf
        if exact:
            successes += 1
            worst = max(worst, error)
        rows.append({'trial': trial, 'support': list(planted.support),
                     'recovered': list(recovered.support), 'exact': exact,
                     'coefficient_error': error if exact else None})
    logger.info(f"OMP: {successes}/{trials} Träger exakt rekonstruiert")
    return RecoveryTrials(trials=trials, successes=successes, max_coefficient_error=worst, rows=rows)
