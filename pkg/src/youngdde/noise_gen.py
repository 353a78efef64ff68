"""Two-sided fractional Brownian motion, the increment shift, and the moment Γ(β).

Paths come from one exact circulant-embedding draw of fractional Gaussian
noise over the whole lattice ``[-T, T]``, summed and pinned at zero.  A
``TwoSidedPath`` keeps that pinned array and an anchor index; shifting just
moves the anchor, so composing shifts is exact.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .holder_paths import GridError, GridPath, holder_seminorm
from .stats import ErgodicEstimate, batch_means

_MAGIC = b"YDP1"
_ALIGN_TOL = 1e-8


@dataclass(frozen=True)
class FbmSpec:
    hurst: float
    m: int
    T: float
    h: float
    seed: int

    def __post_init__(self):
        if not 0.5 < self.hurst < 1:
            raise ValueError(f"hurst must lie in (1/2, 1), got {self.hurst}")
        if self.m < 1:
            raise ValueError("dimension m must be positive")
        if not (self.h > 0 and self.T > 0):
            raise ValueError("T and h must be positive")
        k = self.T / self.h
        if abs(k - round(k)) > _ALIGN_TOL * max(1.0, k):
            raise GridError("T must be an integer multiple of h")

    @property
    def half(self) -> int:
        return int(round(self.T / self.h))


@dataclass(frozen=True, eq=False)
class TwoSidedPath:
    """A pinned two-sided path.

    ``base`` holds samples on a symmetric lattice; the path is
    ``base[anchor + j] - base[anchor]`` for ``|j| <= half``.
    """

    base: np.ndarray
    h: float
    anchor: int
    half: int

    def __post_init__(self):
        b = np.asarray(self.base, dtype=np.float64)
        if b.ndim == 1:
            b = b[:, None]
        if not (0 <= self.anchor - self.half and self.anchor + self.half < b.shape[0]):
            raise GridError("two-sided window exceeds stored samples")
        if self.half < 1:
            raise GridError("two-sided window exhausted")
        b = b.view()
        b.flags.writeable = False
        object.__setattr__(self, "base", b)

    @property
    def m(self) -> int:
        return self.base.shape[1]

    @property
    def T(self) -> float:
        return self.half * self.h

    def _steps(self, s: float) -> int:
        k = s / self.h
        kr = int(round(k))
        if abs(k - kr) > _ALIGN_TOL * max(1.0, abs(k)):
            raise GridError(f"shift {s} is not a multiple of h={self.h}")
        return kr

    def segment(self, a: float, b: float) -> GridPath:
        """``x`` itself on ``[a, b]`` (values relative to time 0)."""
        ka, kb = self._steps(a), self._steps(b)
        if not (-self.half <= ka < kb <= self.half):
            raise GridError(f"[{a}, {b}] outside [-{self.T}, {self.T}]")
        z = self.anchor
        vals = self.base[z + ka:z + kb + 1] - self.base[z]
        return GridPath(ka * self.h, self.h, vals)

    @property
    def path(self) -> GridPath:
        return self.segment(-self.T, self.T)

    def increments_from(self, s: float, length: float) -> GridPath:
        """``θ_s x`` on ``[0, length]`` as a driver for a forward solve.

        Only needs ``[s, s + length]`` inside the stored lattice, unlike
        :func:`shift_path` which keeps a symmetric window.
        """
        ks, kl = self._steps(s), self._steps(length)
        lo = self.anchor + ks
        if kl < 1 or lo < self.anchor - self.half or lo + kl > self.anchor + self.half:
            raise GridError(f"driver window [{s}, {s + length}] outside the path")
        vals = self.base[lo:lo + kl + 1] - self.base[lo]
        return GridPath(0.0, self.h, vals)


def shift_path(x: TwoSidedPath, s: float) -> TwoSidedPath:
    """``(θ_s x)(t) = x(t + s) - x(s)`` on the surviving symmetric window."""
    k = x._steps(s)
    half = x.half - abs(k)
    if half < 1:
        raise GridError(f"shift {s} exhausts the window [-{x.T}, {x.T}]")
    return TwoSidedPath(x.base, x.h, x.anchor + k, half)


def ramp_path(T: float, h: float, m: int = 1) -> TwoSidedPath:
    """Deterministic ``x(t) = t`` in every coordinate."""
    n = int(round(T / h))
    t = np.arange(-n, n + 1) * h
    return TwoSidedPath(np.repeat(t[:, None], m, axis=1), h, n, n)


def zero_path(T: float, h: float, m: int = 1) -> TwoSidedPath:
    n = int(round(T / h))
    return TwoSidedPath(np.zeros((2 * n + 1, m)), h, n, n)


# ---------------------------------------------------------------------------
# generation

@lru_cache(maxsize=32)
def _circulant_sqrt(n: int, hurst: float) -> np.ndarray:
    # fGn autocovariance at unit step, embedded in a circulant of size 2n
    k = np.arange(n + 1, dtype=float)
    H2 = 2.0 * hurst
    gamma = 0.5 * (np.abs(k + 1) ** H2 - 2 * k ** H2 + np.abs(k - 1) ** H2)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise ValueError(
            f"circulant embedding is not positive definite (min eigenvalue {lam.min():.3e}); "
            "use a larger embedding length")
    out = np.sqrt(np.clip(lam, 0.0, None) / row.size)
    out.flags.writeable = False
    return out


def path_rng(base_seed: int, index: int) -> np.random.Generator:
    """Generator for ensemble member ``index``; independent of generation order."""
    return np.random.default_rng(np.random.SeedSequence(int(base_seed) & (2 ** 64 - 1),
                                                        spawn_key=(int(index),)))


def fgn(n: int, hurst: float, rng: np.random.Generator, m: int = 1) -> np.ndarray:
    """``n`` unit-step fractional Gaussian noise increments per coordinate, shape (n, m)."""
    root = _circulant_sqrt(n, float(hurst))
    M = root.size
    out = np.empty((n, m))
    for c in range(m):
        z = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        out[:, c] = np.fft.fft(root * z).real[:n]
    return out


def sample_fbm_two_sided(spec: FbmSpec, index: int = 0) -> TwoSidedPath:
    """One two-sided fBm path on ``[-T, T]``; member ``index`` of the ensemble seeded by ``spec.seed``."""
    N = spec.half
    inc = fgn(2 * N, spec.hurst, path_rng(spec.seed, index), spec.m) * spec.h ** spec.hurst
    base = np.zeros((2 * N + 1, spec.m))
    np.cumsum(inc, axis=0, out=base[1:])
    base -= base[N].copy()
    return TwoSidedPath(base, spec.h, N, N)


def sample_ensemble(spec: FbmSpec, count: int, start: int = 0):
    return [sample_fbm_two_sided(spec, i) for i in range(start, start + count)]


# ---------------------------------------------------------------------------
# moment Γ(β)

def gamma_moment(ensemble, beta: float, nu: float, r: float) -> ErgodicEstimate:
    """Γ(β) = (E ⦀x⦀_{β,[-r,r]}^{1/(ν-β)})^{ν-β} with a delta-method CI."""
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    if not beta < nu:
        raise ValueError("need beta < nu")
    p = nu - beta
    vals = []
    for x in ensemble:
        seg = x.segment(-r, r)
        vals.append(holder_seminorm(seg, seg.full_window(), beta).seminorm ** (1.0 / p))
    mean, ci, nb = batch_means(vals)
    value = mean ** p
    if mean > 0 and np.isfinite(ci):
        ci_g = p * mean ** (p - 1.0) * ci
    else:
        ci_g = 0.0 if len(vals) > 1 and mean == 0 else ci
    return ErgodicEstimate("gamma", float(value), float(ci_g), len(vals), nb)


# ---------------------------------------------------------------------------
# YDP1 binary format

def write_ydp1(fname, x: TwoSidedPath, hurst: float) -> str:
    """Write the stored lattice of ``x``; returns the sha256 hex digest of the file."""
    vals = np.ascontiguousarray(x.path.values, dtype="<f8")
    head = _MAGIC + struct.pack("<dddqq", float(hurst), float(x.h), float(x.T),
                                vals.shape[1], vals.shape[0])
    blob = head + vals.tobytes(order="C")
    Path(fname).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def read_ydp1(fname):
    """Returns ``(TwoSidedPath, hurst)``; raises ValueError on a malformed file."""
    blob = Path(fname).read_bytes()
    if blob[:4] != _MAGIC or len(blob) < 44:
        raise ValueError(f"{fname}: not a YDP1 file")
    hurst, h, T, m, count = struct.unpack("<dddqq", blob[4:44])
    body = blob[44:]
    if len(body) != 8 * m * count or count % 2 != 1:
        raise ValueError(f"{fname}: truncated or inconsistent YDP1 payload")
    vals = np.frombuffer(body, dtype="<f8").reshape(count, m).astype(np.float64)
    half = count // 2
    return TwoSidedPath(vals, h, half, half), hurst
