"""Central finite differences and tolerance-aware tensor comparison."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Retraction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _euclidean(x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return x + delta


@dataclass(frozen=True)
class FdConfig:
    h_fo: float = 4e-6
    h_so: float = 1e-4
    retraction: Retraction = _euclidean
    scheme: str = "central"
    points: int = 2          # 2: (f(+h) - f(-h)) / 2h; 4: adds the +-2h samples, O(h^4) truncation

    def __post_init__(self) -> None:
        if self.h_fo <= 0 or self.h_so <= 0:
            raise ValueError("finite-difference steps must be positive")
        if self.scheme != "central":
            raise ValueError("only the central scheme is supported")
        if self.points not in (2, 4):
            raise ValueError("central stencils have 2 or 4 points")


def _checked(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("function returned non-finite values")
    return y


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, cfg: FdConfig = FdConfig(),
                ndir: int | None = None, h: float | None = None) -> np.ndarray:
    """Derivative of f along each tangent direction, stacked on a new last axis.

    ``ndir`` is the tangent dimension (defaults to ``len(x)``). For a
    matrix-valued f the result is a tensor with the direction on axis 3.
    """
    x = np.asarray(x, dtype=float)
    n = len(x) if ndir is None else ndir
    step = cfg.h_fo if h is None else h
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        d1 = _checked(f(cfg.retraction(x, e))) - _checked(f(cfg.retraction(x, -e)))
        if cfg.points == 2:
            cols.append(d1 / (2 * step))
        else:
            d2 = _checked(f(cfg.retraction(x, 2 * e))) - _checked(f(cfg.retraction(x, -2 * e)))
            cols.append((8 * d1 - d2) / (12 * step))
    return np.stack(cols, axis=-1)


def fd_hessian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, cfg: FdConfig = FdConfig(),
               ndir: int | None = None, symmetrize: bool = True, h: float | None = None) -> np.ndarray:
    """Nested central differences; entry [..., j, k] differentiates along j, then k."""
    step = cfg.h_so if h is None else h
    x = np.asarray(x, dtype=float)
    n = len(x) if ndir is None else ndir

    def grad(y: np.ndarray) -> np.ndarray:
        return fd_jacobian(f, y, cfg, n, step)

    H = fd_jacobian(grad, x, cfg, n, step)
    if symmetrize:
        H = 0.5 * (H + np.swapaxes(H, -1, -2))
    return H


@dataclass(frozen=True)
class CompareReport:
    max_abs_err: float
    max_rel_err: float
    argmax: tuple[int, ...]
    passed: bool
    tol_rel: float
    tol_abs: float
    worst_ratio: float = 0.0     # largest |a-b| / allowed over entries; <= 1 means pass

    def __bool__(self) -> bool:
        return self.passed

    def as_dict(self) -> dict:
        return {"max_abs_err": self.max_abs_err, "max_rel_err": self.max_rel_err,
                "argmax": list(self.argmax), "pass": self.passed,
                "tol_rel": self.tol_rel, "tol_abs": self.tol_abs, "worst_ratio": self.worst_ratio}


REL_EPS = 1e-8


def compare(a, b, tol_rel: float, tol_abs: float = 0.0) -> CompareReport:
    """Entrywise comparison; an entry passes when |a-b| <= max(tol_abs, tol_rel*max(|a|,|b|)).

    The boundary is inclusive. ``max_rel_err`` uses the denominator
    max(|a|, |b|, 1e-8) and ``argmax`` points at the worst entry by the
    pass margin.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return CompareReport(0.0, 0.0, (), True, tol_rel, tol_abs)
    err = np.abs(a - b)
    mag = np.maximum(np.abs(a), np.abs(b))
    rel = err / np.maximum(mag, REL_EPS)
    allowed = np.maximum(tol_abs, tol_rel * mag)
    margin = np.where(allowed > 0, err / np.where(allowed > 0, allowed, 1.0), np.where(err > 0, np.inf, 0.0))
    worst = np.unravel_index(int(np.argmax(margin)), a.shape)
    return CompareReport(float(err.max()), float(rel.max()), tuple(int(i) for i in worst),
                         bool(np.all(err <= allowed)), tol_rel, tol_abs, float(margin[worst]))


def compare_scaled(a, b, tol_rel: float) -> CompareReport:
    """Relative comparison with an absolute floor of tol_rel * max(1, max|b|).

    This is how oracle checks read "relative error <= tol": entries far
    below the tensor's own scale are judged against that scale instead of
    their own magnitude, which finite differences cannot resolve.
    """
    scale = max(1.0, float(np.max(np.abs(b))) if np.size(b) else 1.0)
    return compare(a, b, tol_rel, tol_rel * scale)
