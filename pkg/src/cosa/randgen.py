"""
Deterministische Zufallszahlen: SplitMix64 zum Seeden, xoshiro256++ als
Generator, Box-Muller für Normalverteilung.

Die Folgen sind reine Funktionen des Seeds und plattformunabhängig, damit
L und R aus einem gespeicherten Seed exakt regeneriert werden können.
"""
import math
from typing import List, Union

import numpy as np

from .errors import ArgumentError

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
TWO_PI = 2.0 * math.pi
INV_2_53 = 1.0 / (1 << 53)


def parse_seed(value: Union[int, str]) -> int:
    """Seed aus int, Dezimal- oder 0x-Hex-String"""
    if isinstance(value, str):
        text = value.strip().lower()
        try:
            value = int(text, 16) if text.startswith("0x") else int(text, 10)
        except ValueError:
            raise ArgumentError(f"invalid seed {value!r}")
    if not 0 <= value <= MASK64:
        raise ArgumentError(f"seed must be a 64-bit unsigned integer, got {value}")
    return int(value)


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64(state: int):
    """Ein SplitMix64-Schritt: (neuer Zustand, Ausgabe)"""
    state = (state + GOLDEN_GAMMA) & MASK64
    return state, _mix64(state)


def derive_seed(base: int, index: int) -> int:
    """
    Zustandsloser Seed für Teilströme.

    Entspricht der Ausgabe eines SplitMix64-Schritts vom Zustand
    base + index·γ; derive_seed(0, 0) ist damit die erste Referenzausgabe
    von SplitMix64 mit Seed 0.
    """
    return splitmix64((base + index * GOLDEN_GAMMA) & MASK64)[1]


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class RngStream:
    """xoshiro256++ Strom; gehört genau einem Nutzer (nicht thread-sicher)"""

    def __init__(self, seed: int):
        self.origin_seed = parse_seed(seed)
        state = self.origin_seed
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        if not any(words):
            words[0] = GOLDEN_GAMMA
        self._s = words

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & MASK64, 23) + s0) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def raw(self, count: int) -> np.ndarray:
        """count Rohwerte als uint64-Array"""
        return np.fromiter((self.next_u64() for _ in range(count)), dtype=np.uint64, count=count)

    def uniform(self) -> float:
        """Gleichverteilt in [0, 1)"""
        return (self.next_u64() >> 11) * INV_2_53

    def uniforms(self, count: int) -> np.ndarray:
        return (self.raw(count) >> np.uint64(11)).astype(np.float64) * INV_2_53

    def randbelow(self, bound: int) -> int:
        """Unverzerrte Ganzzahl in [0, bound) per Rejection"""
        if bound < 1:
            raise ArgumentError(f"bound must be positive, got {bound}")
        limit = ((MASK64 + 1) // bound) * bound
        while True:
            x = self.next_u64()
            if x < limit:
                return x % bound

    def normals(self, count: int) -> np.ndarray:
        """
        count Standardnormal-Werte per Box-Muller.

        Beide Werte eines Paares werden benutzt (cos zuerst); bei ungerader
        Anzahl fällt der letzte sin-Wert weg. u1 liegt in (0, 1].
        """
        pairs = (count + 1) // 2
        raw = self.raw(2 * pairs).reshape(pairs, 2)
        u = (raw >> np.uint64(11)).astype(np.float64) * INV_2_53
        u1 = 1.0 - u[:, 0]
        u2 = u[:, 1]
        radius = np.sqrt(-2.0 * np.log(u1))
        z = np.empty((pairs, 2), dtype=np.float64)
        z[:, 0] = radius * np.cos(TWO_PI * u2)
        z[:, 1] = radius * np.sin(TWO_PI * u2)
        return z.ravel()[:count]


def new_stream(seed: int) -> RngStream:
    return RngStream(seed)


def gaussian_matrix(seed: int, rows: int, cols: int) -> np.ndarray:
    """rows×cols Matrix mit i.i.d. N(0,1)-Einträgen, zeilenweise gefüllt"""
    if rows < 1 or cols < 1:
        raise ArgumentError(f"gaussian_matrix needs positive dims, got {rows}x{cols}")
    return new_stream(seed).normals(rows * cols).reshape(rows, cols)


def partial_shuffle(stream: RngStream, dim: int, s: int) -> List[int]:
    """Ersten s Positionen eines Fisher-Yates-Shuffles über range(dim), O(s) Speicher"""
    swapped = {}
    picked = []
    for i in range(s):
        j = i + stream.randbelow(dim - i)
        picked.append(swapped.get(j, j))
        swapped[j] = swapped.get(i, i)
    return picked
