"""
Adaptierte lineare Schicht Z = W0·X + α·L·(Y·(R·X)) mit analytischen
Gradienten, LoRA-Vergleichsschicht, COSA1-Dateiformat und Kernanalyse.
"""
import logging
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from .config import ANALYSIS_DEFAULTS
from .errors import ArgumentError, FormatError, ShapeError, TruncatedFileError
from .numerics import condition_from_singular_values, frobenius_norm, jacobi_svd
from .projection import ProjectionPair, make_pair
from .randgen import derive_seed, gaussian_matrix, parse_seed

logger = logging.getLogger(__name__)

MAGIC = b"COSA"
VERSION = 1
HEADER_FORMAT = struct.Struct("<4sHHIIIIdQ")
CRC_FORMAT = struct.Struct("<I")
# Obergrenze je Header-Dimension; L und R werden beim Laden voll regeneriert
MAX_DIM = 1 << 16


class CosaAdapter:
    """
    Trainierbarer Kern Y (a×b) über festen, aus dem Seed regenerierten L und R.

    Y startet exakt bei null. Nur Y ist veränderlich (ein Schreiber).
    """
    kind = "cosa"

    def __init__(self, m: int, n: int, a: int, b: int, seed: int = 0,
                 alpha_scale: float = 1.0, Y: np.ndarray = None, pair: ProjectionPair = None):
        self.pair = pair if pair is not None else make_pair(seed, m, n, a, b)
        if (self.pair.m, self.pair.n, self.pair.a, self.pair.b) != (m, n, a, b):
            raise ShapeError("projection pair does not match adapter dims",
                             (self.pair.m, self.pair.n, self.pair.a, self.pair.b), (m, n, a, b))
        self.m, self.n, self.a, self.b = m, n, a, b
        self.seed = self.pair.seed
        self.alpha_scale = float(alpha_scale)
        if Y is None:
            self.Y = np.zeros((a, b))
        else:
            Y = np.array(Y, dtype=np.float64)
            if Y.shape != (a, b):
                raise ShapeError("core shape mismatch", Y.shape, (a, b))
            self.Y = Y

    @property
    def L(self) -> np.ndarray:
        return self.pair.L

    @property
    def R(self) -> np.ndarray:
        return self.pair.R

    @property
    def num_params(self) -> int:
        return self.a * self.b

    def trainable(self) -> Dict[str, np.ndarray]:
        return {"Y": self.Y}

    def assign(self, name: str, value: np.ndarray) -> None:
        if name != "Y":
            raise ArgumentError(f"CoSA adapter has no trainable matrix {name!r}")
        self.Y = value


class LoraAdapter:
    """ΔW = B·A; A Gauß-initialisiert (Skala 1/√n), B startet bei null"""
    kind = "lora"

    def __init__(self, m: int, n: int, r: int, seed: int = 0, alpha_scale: float = 1.0):
        if not 1 <= r <= min(m, n):
            raise ArgumentError(f"LoRA rank must satisfy 1 <= r <= min(m, n), got {r}")
        self.m, self.n, self.r = m, n, r
        self.seed = parse_seed(seed)
        self.alpha_scale = float(alpha_scale)
        self.A = gaussian_matrix(derive_seed(self.seed, 0), r, n) / math.sqrt(n)
        self.B = np.zeros((m, r))

    @property
    def num_params(self) -> int:
        return (self.m + self.n) * self.r

    def trainable(self) -> Dict[str, np.ndarray]:
        return {"A": self.A, "B": self.B}

    def assign(self, name: str, value: np.ndarray) -> None:
        if name not in ("A", "B"):
            raise ArgumentError(f"LoRA adapter has no trainable matrix {name!r}")
        setattr(self, name, value)


class AdaptedLinear:
    """Eingefrorene Basisgewichte W0 (m×n) plus Adapter"""

    def __init__(self, W0: np.ndarray, adapter: Union[CosaAdapter, LoraAdapter]):
        W0 = np.array(W0, dtype=np.float64)
        if W0.shape != (adapter.m, adapter.n):
            raise ShapeError("base weight does not match adapter dims", W0.shape, (adapter.m, adapter.n))
        W0.flags.writeable = False
        self.W0 = W0
        self.adapter = adapter


@dataclass(frozen=True)
class CosaGradients:
    grad_y: np.ndarray
    grad_x: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {"Y": self.grad_y}


@dataclass(frozen=True)
class LoraGradients:
    grad_a: np.ndarray
    grad_b: np.ndarray
    grad_x: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {"A": self.grad_a, "B": self.grad_b}


def _check_input(layer: AdaptedLinear, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != layer.W0.shape[1]:
        raise ShapeError("input must be n x batch", X.shape, (layer.W0.shape[1], "batch"))
    return X


def _check_upstream(layer: AdaptedLinear, X: np.ndarray, g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (layer.W0.shape[0], X.shape[1]):
        raise ShapeError("upstream gradient must be m x batch", g.shape, (layer.W0.shape[0], X.shape[1]))
    return g


def cosa_forward(layer: AdaptedLinear, X: np.ndarray) -> np.ndarray:
    """
    Drei Stufen von rechts nach links: u = R·X, v = Y·u, Z = W0·X + α·L·v.

    ΔW wird nie gebildet; bei Y = 0 ist das Ergebnis bitgleich W0·X.
    """
    X = _check_input(layer, X)
    adapter = layer.adapter
    base = layer.W0 @ X
    if not adapter.Y.any():
        return base
    u = adapter.R @ X
    v = adapter.Y @ u
    return base + adapter.alpha_scale * (adapter.L @ v)


def cosa_backward(layer: AdaptedLinear, X: np.ndarray, g: np.ndarray) -> CosaGradients:
    """
    ∂ℓ/∂Y = α·(Lᵀg)(RX)ᵀ (Summe über den Batch);
    ∂ℓ/∂X = W0ᵀg + α·Rᵀ·Yᵀ·Lᵀg. W0, L, R bekommen keinen Gradienten.
    """
    X = _check_input(layer, X)
    g = _check_upstream(layer, X, g)
    adapter = layer.adapter
    lg = adapter.L.T @ g
    u = adapter.R @ X
    grad_y = adapter.alpha_scale * (lg @ u.T)
    grad_x = layer.W0.T @ g + adapter.alpha_scale * (adapter.R.T @ (adapter.Y.T @ lg))
    return CosaGradients(grad_y=grad_y, grad_x=grad_x)


def lora_forward(layer: AdaptedLinear, X: np.ndarray) -> np.ndarray:
    """Z = W0·X + α·B·(A·X); bei B = 0 bitgleich W0·X"""
    X = _check_input(layer, X)
    adapter = layer.adapter
    base = layer.W0 @ X
    if not adapter.B.any():
        return base
    return base + adapter.alpha_scale * (adapter.B @ (adapter.A @ X))


def lora_backward(layer: AdaptedLinear, X: np.ndarray, g: np.ndarray) -> LoraGradients:
    X = _check_input(layer, X)
    g = _check_upstream(layer, X, g)
    adapter = layer.adapter
    ax = adapter.A @ X
    btg = adapter.B.T @ g
    return LoraGradients(
        grad_a=adapter.alpha_scale * (btg @ X.T),
        grad_b=adapter.alpha_scale * (g @ ax.T),
        grad_x=layer.W0.T @ g + adapter.alpha_scale * (adapter.A.T @ btg),
    )


def layer_forward(layer: AdaptedLinear, X: np.ndarray) -> np.ndarray:
    if layer.adapter.kind == "cosa":
        return cosa_forward(layer, X)
    return lora_forward(layer, X)


def layer_backward(layer: AdaptedLinear, X: np.ndarray, g: np.ndarray):
    if layer.adapter.kind == "cosa":
        return cosa_backward(layer, X, g)
    return lora_backward(layer, X, g)


def merge_delta(layer: AdaptedLinear) -> np.ndarray:
    """ΔW explizit (nur zum Einfalten in W0 beim Deployment)"""
    adapter = layer.adapter
    if adapter.kind == "cosa":
        return adapter.alpha_scale * (adapter.L @ adapter.Y @ adapter.R)
    return adapter.alpha_scale * (adapter.B @ adapter.A)


# COSA1-Dateiformat


@dataclass(frozen=True)
class FileHeader:
    m: int
    n: int
    a: int
    b: int
    alpha_scale: float
    seed: int
    version: int = VERSION
    flags: int = 0

    SIZE = HEADER_FORMAT.size

    def encode(self) -> bytes:
        return HEADER_FORMAT.pack(MAGIC, self.version, self.flags, self.m, self.n, self.a, self.b,
                                  self.alpha_scale, self.seed)

    @classmethod
    def decode(cls, data: bytes) -> "FileHeader":
        if len(data) < HEADER_FORMAT.size:
            raise TruncatedFileError(f"header needs {HEADER_FORMAT.size} bytes, got {len(data)}")
        magic, version, flags, m, n, a, b, alpha_scale, seed = HEADER_FORMAT.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"invalid version {version}")
        if flags != 0:
            raise FormatError(f"unsupported flags 0x{flags:04x}")
        if min(m, n, a, b) < 1 or a > m or b > n:
            raise FormatError(f"invalid dims (m,n,a,b)=({m},{n},{a},{b})")
        if max(m, n) > MAX_DIM:
            raise FormatError(f"dims (m,n)=({m},{n}) exceed the limit {MAX_DIM}")
        return cls(m=m, n=n, a=a, b=b, alpha_scale=alpha_scale, seed=seed, version=version, flags=flags)

    def payload_size(self) -> int:
        return 8 * self.a * self.b


def encode_adapter(adapter: CosaAdapter) -> bytes:
    header = FileHeader(m=adapter.m, n=adapter.n, a=adapter.a, b=adapter.b,
                        alpha_scale=adapter.alpha_scale, seed=adapter.seed)
    body = header.encode() + np.ascontiguousarray(adapter.Y, dtype="<f8").tobytes()
    return body + CRC_FORMAT.pack(zlib.crc32(body) & 0xFFFFFFFF)


def decode_adapter(data: bytes) -> CosaAdapter:
    header = FileHeader.decode(data)
    expected = header.SIZE + header.payload_size() + CRC_FORMAT.size
    if len(data) < expected:
        raise TruncatedFileError(f"adapter file truncated: {len(data)} of {expected} bytes")
    if len(data) > expected:
        raise FormatError(f"trailing data: {len(data)} bytes, expected {expected}")
    body = data[:-CRC_FORMAT.size]
    (stored,) = CRC_FORMAT.unpack(data[-CRC_FORMAT.size:])
    actual = zlib.crc32(body) & 0xFFFFFFFF
    if stored != actual:
        raise FormatError(f"CRC mismatch: stored 0x{stored:08x}, computed 0x{actual:08x}")
    Y = np.frombuffer(body, dtype="<f8", offset=header.SIZE).reshape(header.a, header.b)
    return CosaAdapter(header.m, header.n, header.a, header.b, seed=header.seed,
                       alpha_scale=header.alpha_scale, Y=Y.astype(np.float64))


def save_adapter(adapter: CosaAdapter, path) -> int:
    """Schreibt COSA1 (nur Y und Seed, nicht L/R); gibt die Dateigröße zurück"""
    if adapter.pair.draw_dims is not None or adapter.pair.orthonormalized:
        raise ArgumentError("only plain seed-drawn projection pairs can be stored as COSA1")
    data = encode_adapter(adapter)
    Path(path).write_bytes(data)
    logger.info(f"Adapter gespeichert: {path} ({len(data)} Bytes)")
    return len(data)


def load_adapter(path) -> CosaAdapter:
    """Liest COSA1 und regeneriert L, R aus dem Seed"""
    return decode_adapter(Path(path).read_bytes())


def expected_file_size(a: int, b: int) -> int:
    return HEADER_FORMAT.size + 8 * a * b + CRC_FORMAT.size


def adapter_to_dict(adapter: CosaAdapter) -> Dict:
    """JSON-Beschreibung (Header-Felder plus Y zeilenweise)"""
    return {'m': adapter.m, 'n': adapter.n, 'a': adapter.a, 'b': adapter.b, 'seed': adapter.seed,
            'alpha_scale': adapter.alpha_scale, 'Y': adapter.Y.tolist()}


def adapter_from_dict(data: Dict) -> CosaAdapter:
    try:
        dims = [int(data[key]) for key in ('m', 'n', 'a', 'b')]
        Y = np.array(data.get('Y', np.zeros(dims[2:])), dtype=np.float64)
        return CosaAdapter(*dims, seed=parse_seed(data.get('seed', 0)),
                           alpha_scale=float(data.get('alpha_scale', 1.0)), Y=Y)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ArgumentError):
            raise
        raise FormatError(f"invalid adapter description: {e}")


# Kernanalyse


@dataclass(frozen=True)
class CoreStats:
    """Strukturkennzahlen eines trainierten Kerns; None = undefiniert (Y = 0)"""
    sparsity_fraction: float
    effective_rank: Optional[int]
    frobenius_norm: float
    condition_number: Optional[float]
    singular_values: Optional[tuple] = None

    def as_dict(self) -> Dict:
        cond = self.condition_number
        return {
            'sparsity_fraction': self.sparsity_fraction,
            'effective_rank': self.effective_rank,
            'frobenius_norm': self.frobenius_norm,
            'condition_number': "inf" if cond is not None and math.isinf(cond) else cond,
        }


def effective_rank(singular_values: np.ndarray, energy: float) -> int:
    """Kleinstes k mit Σ_{i<=k} σ_i² >= energy·Σσ_i²"""
    power = np.asarray(singular_values, dtype=np.float64) ** 2
    cumulative = np.cumsum(power)
    threshold = energy * cumulative[-1] * (1.0 - 1e-12)
    return int(np.searchsorted(cumulative, threshold, side="left") + 1)


def analyze_core(Y: np.ndarray, sparsity_threshold: float = ANALYSIS_DEFAULTS['sparsity_threshold'],
                 energy: float = ANALYSIS_DEFAULTS['energy']) -> CoreStats:
    """Sparsity-Anteil, effektiver Rang (Spektralenergie), Frobenius-Norm, Konditionszahl"""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ShapeError("core must be a matrix", Y.shape)
    if not 0.0 < energy <= 1.0:
        raise ArgumentError(f"energy fraction must lie in (0, 1], got {energy}")
    sparsity = float(np.count_nonzero(np.abs(Y) < sparsity_threshold) / Y.size)
    if not Y.any():
        return CoreStats(sparsity_fraction=sparsity, effective_rank=None,
                         frobenius_norm=0.0, condition_number=None)
    sigma = jacobi_svd(Y).singular_values
    return CoreStats(
        sparsity_fraction=sparsity,
        effective_rank=effective_rank(sigma, energy),
        frobenius_norm=frobenius_norm(Y),
        condition_number=condition_from_singular_values(sigma),
        singular_values=tuple(float(v) for v in sigma),
    )
