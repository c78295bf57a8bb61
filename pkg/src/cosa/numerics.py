"""
Dichte Matrix-Kernel und Statistik-Primitive.

Alle Matrizen sind float64-ndarrays (zeilenweise gespeichert). Jede Operation
ist rein: gleiche Eingaben liefern bitidentische Ausgaben.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

MAX_SVD_DIM = 4096
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60
SINGULAR_CUTOFF = 1e-14


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Wandelt Eingaben in eine endliche 2D-float64-Matrix um"""
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2D matrix", matrix.shape)
    if not np.all(np.isfinite(matrix)):
        raise NumericalError(f"{name} contains non-finite entries")
    return matrix


def matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """
    Matrixprodukt mit Dimensionsprüfung.

    Rechnet über numpy/BLAS. Innerhalb eines Prozesses sind wiederholte
    Aufrufe bitgleich; über verschiedene BLAS-Threadzahlen oder -Bibliotheken
    hinweg kann die Summationsreihenfolge und damit das letzte Bit abweichen.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ShapeError("matmul dimension mismatch", A.shape, B.shape)
    return A @ B


def frobenius_norm(A: np.ndarray) -> float:
    """√(Σ a_ij²)"""
    return float(np.linalg.norm(np.asarray(A, dtype=np.float64), 'fro'))


def percentile(values: Sequence[float], q: float) -> float:
    """
    Perzentil mit linearer Interpolation auf Rang q·(N−1).

    Args:
        values: nicht-leere Liste endlicher Werte
        q: Anteil in [0, 1]
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ArgumentError("percentile of empty input")
    if not 0.0 <= q <= 1.0:
        raise ArgumentError(f"percentile fraction must lie in [0, 1], got {q}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("percentile input contains non-finite values")
    return float(np.quantile(arr, q, method="linear"))


@dataclass(frozen=True)
class SvdResult:
    """Singulärwerte absteigend; Faktoren optional"""
    singular_values: np.ndarray
    u: Optional[np.ndarray] = None
    vt: Optional[np.ndarray] = None
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        if self.u is None or self.vt is None:
            raise ArgumentError("SVD factors were not requested")
        return (self.u * self.singular_values) @ self.vt


def _one_sided_jacobi(A: np.ndarray):
    """Hestenes-Jacobi auf den Spalten von A (rows >= cols)"""
    work = A.copy()
    cols = work.shape[1]
    V = np.eye(cols)
    # Spalten unterhalb dieser Norm gelten als numerisch null
    floor = (1e-15 * float(np.linalg.norm(A))) ** 2
    off = 0.0
    for sweep in range(1, JACOBI_MAX_SWEEPS + 1):
        rotated = False
        off = 0.0
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = float(work[:, p] @ work[:, p])
                beta = float(work[:, q] @ work[:, q])
                gamma = float(work[:, p] @ work[:, q])
                if alpha <= floor or beta <= floor:
                    continue
                ratio = abs(gamma) / math.sqrt(alpha * beta)
                off = max(off, ratio)
                if ratio <= JACOBI_TOL:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                wp = work[:, p].copy()
                work[:, p] = c * wp - s * work[:, q]
                work[:, q] = s * wp + c * work[:, q]
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
        if not rotated:
            return work, V, sweep
    raise NumericalError(f"Jacobi SVD did not converge after {JACOBI_MAX_SWEEPS} sweeps", residual=off)


def jacobi_svd(A: np.ndarray, compute_factors: bool = False) -> SvdResult:
    """
    Einseitige Jacobi-SVD.

    Rotiert Spalten, bis alle normierten Gram-Nebendiagonalen <= 1e-12 sind.
    Für breite Matrizen wird auf Aᵀ gearbeitet.
    """
    A = as_matrix(A, "A")
    rows, cols = A.shape
    if rows > MAX_SVD_DIM or cols > MAX_SVD_DIM:
        raise ArgumentError(f"jacobi_svd limited to {MAX_SVD_DIM} per side, got {A.shape}")
    transposed = rows < cols
    work, V, sweeps = _one_sided_jacobi(A.T if transposed else A)
    sigma = np.sqrt(np.einsum('ij,ij->j', work, work))
    order = np.argsort(-sigma, kind='stable')
    sigma = sigma[order]
    logger.debug(f"Jacobi-SVD {A.shape}: {sweeps} Sweeps")
    if not compute_factors:
        return SvdResult(singular_values=sigma, sweeps=sweeps)

    work = work[:, order]
    V = V[:, order]
    U = np.zeros_like(work)
    nonzero = sigma > 0
    U[:, nonzero] = work[:, nonzero] / sigma[nonzero]
    if transposed:
        # A = (U Σ Vᵀ)ᵀ = V Σ Uᵀ
        return SvdResult(singular_values=sigma, u=V, vt=U.T, sweeps=sweeps)
    return SvdResult(singular_values=sigma, u=U, vt=V.T, sweeps=sweeps)


def condition_from_singular_values(sigma: np.ndarray) -> float:
    """σ_max/σ_min aus absteigenden Singulärwerten; math.inf wenn σ_min < 1e-14·σ_max"""
    if sigma[0] == 0.0:
        raise ArgumentError("condition number of a zero matrix is undefined")
    if sigma[-1] < SINGULAR_CUTOFF * sigma[0]:
        return math.inf
    return float(sigma[0] / sigma[-1])


def condition_number(A: np.ndarray) -> float:
    return condition_from_singular_values(jacobi_svd(A).singular_values)
