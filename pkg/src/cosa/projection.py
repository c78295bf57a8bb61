"""
Feste Projektionspaare (L, R) und das implizite Kronecker-Wörterbuch Ψ = Rᵀ⊗L.

Ψ wird nie materialisiert: alle Wörterbuch-Operationen laufen über die
Identitäten vec(L·Y·R) = (Rᵀ⊗L)·vec(Y) und Ψᵀ·vec(E) = vec(Lᵀ·E·Rᵀ).
vec(·) ist spaltenweise: Koeffizient k gehört zu Y[i, j] mit k = i + j·a.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ArgumentError, NumericalError, ShapeError
from .randgen import derive_seed, gaussian_matrix, parse_seed

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=np.float64)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class ProjectionPair:
    m: int
    n: int
    a: int
    b: int
    seed: int
    L: np.ndarray
    R: np.ndarray
    orthonormalized: bool = False
    # (a, b) des Gauß-Zugs; weicht bei leading_block von (a, b) ab
    draw_dims: Optional[Tuple[int, int]] = None

    @property
    def drawn_as(self) -> Tuple[int, int]:
        return self.draw_dims or (self.a, self.b)


def _check_dims(m: int, n: int, a: int, b: int) -> None:
    if min(m, n, a, b) < 1:
        raise ArgumentError(f"dimensions must be positive, got (m,n,a,b)=({m},{n},{a},{b})")
    if a > m or b > n:
        raise ArgumentError(f"need a <= m and b <= n, got (m,n,a,b)=({m},{n},{a},{b})")


def orthonormalize_columns(A: np.ndarray) -> np.ndarray:
    """Modifiziertes Gram-Schmidt mit zweitem Durchlauf"""
    Q = np.array(A, dtype=np.float64, copy=True)
    for k in range(Q.shape[1]):
        for _ in range(2):
            for j in range(k):
                Q[:, k] -= (Q[:, j] @ Q[:, k]) * Q[:, j]
        norm = float(np.linalg.norm(Q[:, k]))
        if norm <= 1e-12 * max(1.0, float(np.linalg.norm(A[:, k]))):
            raise NumericalError(f"column {k} is linearly dependent", residual=norm)
        Q[:, k] /= norm
    return Q


def make_pair(seed: int, m: int, n: int, a: int, b: int, orthonormalize: bool = False) -> ProjectionPair:
    """
    Zieht L (m×a) und R (b×n) aus zwei abgeleiteten Seeds.

    L = gaussian_matrix(derive_seed(seed, 0), m, a),
    R = gaussian_matrix(derive_seed(seed, 1), b, n).
    Mit orthonormalize werden die Spalten von L und die Zeilen von R
    orthonormalisiert.
    """
    _check_dims(m, n, a, b)
    seed = parse_seed(seed)
    L = gaussian_matrix(derive_seed(seed, 0), m, a)
    R = gaussian_matrix(derive_seed(seed, 1), b, n)
    if orthonormalize:
        L = orthonormalize_columns(L)
        R = orthonormalize_columns(R.T).T
    return ProjectionPair(m=m, n=n, a=a, b=b, seed=seed, L=_frozen(L), R=_frozen(R),
                          orthonormalized=orthonormalize)


def leading_block(pair: ProjectionPair, a: int, b: int) -> ProjectionPair:
    """Die ersten a Spalten von L und b Zeilen von R (verschachtelte Hypothesenräume)"""
    if not (1 <= a <= pair.a and 1 <= b <= pair.b):
        raise ArgumentError(f"leading block ({a},{b}) exceeds pair dims ({pair.a},{pair.b})")
    return ProjectionPair(m=pair.m, n=pair.n, a=a, b=b, seed=pair.seed,
                          L=_frozen(pair.L[:, :a]), R=_frozen(pair.R[:b, :]),
                          orthonormalized=pair.orthonormalized, draw_dims=pair.drawn_as)


def regenerate(pair: ProjectionPair) -> ProjectionPair:
    """Baut das Paar allein aus Seed und Dimensionen neu auf"""
    da, db = pair.drawn_as
    full = make_pair(pair.seed, pair.m, pair.n, da, db, orthonormalize=pair.orthonormalized)
    if (da, db) == (pair.a, pair.b):
        return full
    return leading_block(full, pair.a, pair.b)


@dataclass(frozen=True)
class DictionaryView:
    pair: ProjectionPair
    normalization: float

    @property
    def dim(self) -> int:
        return self.pair.a * self.pair.b


def dictionary_view(pair: ProjectionPair, normalization: float = None) -> DictionaryView:
    """
    Implizites Ψ = normalization·(Rᵀ⊗L).

    Default 1/√(mn) für Gauß-Paare (Spaltennormen ≈ 1); orthonormalisierte
    Paare haben bereits Einheitsspalten und bekommen 1.
    """
    if normalization is None:
        normalization = 1.0 if pair.orthonormalized else 1.0 / math.sqrt(pair.m * pair.n)
    return DictionaryView(pair=pair, normalization=float(normalization))


def unvec(alpha: np.ndarray, a: int, b: int) -> np.ndarray:
    """Koeffizientenvektor -> Y (a×b), spaltenweise"""
    return np.asarray(alpha, dtype=np.float64).reshape((a, b), order="F")


def vec(Y: np.ndarray) -> np.ndarray:
    return np.asarray(Y, dtype=np.float64).ravel(order="F")


def atom_index(k, a: int):
    """Koeffizientenindex -> (i, j) mit Spalte i von L und Zeile j von R"""
    return np.asarray(k) % a, np.asarray(k) // a


def apply_dictionary(view: DictionaryView, alpha) -> np.ndarray:
    """
    Ψ·α als m×n-Matrix, also normalization·L·Y·R.

    Dünne Vektoren (mit .support/.values) laufen über die Atome des Trägers:
    Kosten O(s·m·n) statt O(a·b·(m+n)).
    """
    pair = view.pair
    if hasattr(alpha, "support"):
        if alpha.dim != view.dim:
            raise ShapeError("sparse coefficient dimension mismatch", (alpha.dim,), (view.dim,))
        if len(alpha.support) == 0:
            return np.zeros((pair.m, pair.n))
        i, j = atom_index(np.asarray(alpha.support, dtype=np.int64), pair.a)
        values = np.asarray(alpha.values, dtype=np.float64)
        return view.normalization * ((pair.L[:, i] * values) @ pair.R[j, :])
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim == 2:
        if alpha.shape != (pair.a, pair.b):
            raise ShapeError("core matrix shape mismatch", alpha.shape, (pair.a, pair.b))
        Y = alpha
    else:
        if alpha.size != view.dim:
            raise ShapeError("coefficient dimension mismatch", alpha.shape, (view.dim,))
        Y = unvec(alpha, pair.a, pair.b)
    return view.normalization * (pair.L @ Y @ pair.R)


def correlation_map(view: DictionaryView, E: np.ndarray) -> np.ndarray:
    """
    Ψᵀ·vec(E) als a×b-Matrix: normalization·Lᵀ·E·Rᵀ.

    Eintrag (i, j) ist ⟨ψ_(j,i), vec(E)⟩ mit unnormierten Atomen; für
    Kosinus-Korrelationen durch column_norms teilen.
    """
    pair = view.pair
    E = np.asarray(E, dtype=np.float64)
    if E.shape != (pair.m, pair.n):
        raise ShapeError("residual shape mismatch", E.shape, (pair.m, pair.n))
    return view.normalization * (pair.L.T @ E @ pair.R.T)


def column_norms(view: DictionaryView) -> np.ndarray:
    """‖ψ_(j,i)‖ = normalization·‖L_i‖·‖R_j‖ als a×b-Matrix"""
    pair = view.pair
    return view.normalization * np.outer(np.linalg.norm(pair.L, axis=0), np.linalg.norm(pair.R, axis=1))


def atom_gram(view: DictionaryView, support) -> np.ndarray:
    """Gram-Matrix ⟨ψ_p, ψ_q⟩ der gewählten Atome aus Faktor-Skalarprodukten"""
    pair = view.pair
    i, j = atom_index(np.asarray(support, dtype=np.int64), pair.a)
    GL = pair.L[:, i].T @ pair.L[:, i]
    GR = pair.R[j, :] @ pair.R[j, :].T
    return view.normalization ** 2 * GL * GR


def _max_offdiag_cosine(vectors: np.ndarray) -> float:
    """Größter |cos| zwischen verschiedenen Zeilen"""
    if vectors.shape[0] < 2:
        return 0.0
    unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    gram = np.abs(unit @ unit.T)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def coherence(view: DictionaryView) -> float:
    """
    Wechselseitige Kohärenz μ(Ψ) = max(μ_L, μ_R).

    Folgt aus cos(ψ_(j,i), ψ_(l,k)) = cos_L(i,k)·cos_R(j,l).
    """
    pair = view.pair
    if pair.a * pair.b < 2:
        raise ArgumentError("coherence needs at least two dictionary atoms")
    mu_l = _max_offdiag_cosine(pair.L.T)
    mu_r = _max_offdiag_cosine(pair.R)
    logger.debug(f"Kohärenz ({pair.a},{pair.b}): mu_L={mu_l:.4f}, mu_R={mu_r:.4f}")
    return max(mu_l, mu_r)
