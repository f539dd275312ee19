"""Interpretation of learned stencils.

* Stability: roots of ``xi^o - c_1 xi^(o-1) - ... - c_o`` and the root
  condition ``max |xi| <= 1``.
* Third-order basis: coordinates of a length-3 stencil in the first, second
  and third finite-difference stencils.
* Consistency: apply a stencil to samples of ``sin(2 pi t)`` and measure how
  well the residual matches a scaled second derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, PreconditionError, ShapeError

MAX_ORDER = 32
SUM_TOLERANCE = 1e-6
RESIDUAL_TOLERANCE = 1e-10
MAX_SWEEPS = 500
STABILITY_TOLERANCE = 1e-6
UNIT_MODULUS_TOLERANCE = 1e-6
REPEATED_ROOT_DISTANCE = 1e-5

BASIS = np.array([[1.0, 0.0, 0.0],
                  [2.0, -1.0, 0.0],
                  [2.0, -2.0, 1.0]])


def _as_stencil(c, sum_tol: float = SUM_TOLERANCE) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1 or c.size < 1:
        raise ShapeError(f"stencil must be a non-empty vector, got shape {c.shape}")
    if c.size > MAX_ORDER:
        raise PreconditionError(f"order {c.size} exceeds the supported maximum {MAX_ORDER}")
    if not np.all(np.isfinite(c)):
        raise PreconditionError("stencil contains non-finite entries")
    total = c.sum()
    if abs(total - 1.0) > sum_tol:
        raise PreconditionError(f"stencil sums to {total!r}, not 1 (tolerance {sum_tol:g})")
    return c


def characteristic_polynomial(c) -> np.ndarray:
    """Coefficients ``[1, -c_1, ..., -c_o]``, highest degree first."""
    return np.concatenate([[1.0], -np.asarray(c, dtype=np.float64)])


def _horner(a: np.ndarray, z: complex) -> tuple[complex, complex]:
    p = 0j
    dp = 0j
    for coef in a:
        dp = dp * z + p
        p = p * z + coef
    return p, dp


def _eval_scale(a: np.ndarray, z: complex) -> float:
    """Magnitude scale of the terms of ``p(z)``; bounds its rounding error."""
    return float(np.sum(np.abs(a) * np.abs(z) ** np.arange(a.size - 1, -1, -1)))


def aberth(a: np.ndarray, tol: float = RESIDUAL_TOLERANCE, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """All roots of the monic polynomial ``a`` by Aberth-Ehrlich iteration.

    Starts on a circle enclosing every root, rotated off the real axis, and
    updates in place (Gauss-Seidel).  Stops a few sweeps after every
    residual falls below ``tol`` relative to the evaluation scale.
    """
    a = np.asarray(a, dtype=np.float64)
    deg = a.size - 1
    if deg == 0:
        return np.zeros(0, dtype=complex)
    tail = np.abs(a[1:])
    radius = max(1.0, 2.0 * max(tail[p] ** (1.0 / (p + 1)) for p in range(deg)))
    z = radius * np.exp(1j * (2 * np.pi * np.arange(deg) / deg + 0.4))
    polish = 0
    residuals = None
    for _ in range(max_sweeps):
        for i in range(deg):
            p, dp = _horner(a, z[i])
            if p == 0:
                continue
            ratio = p / dp if dp != 0 else p
            repulsion = sum(1.0 / (z[i] - z[j]) for j in range(deg) if j != i)
            z[i] -= ratio / (1.0 - ratio * repulsion)
        residuals = np.array([abs(_horner(a, zi)[0]) for zi in z])
        limits = np.array([tol * max(1.0, _eval_scale(a, zi)) for zi in z])
        if np.all(residuals < limits):
            polish += 1
            if polish > 3:
                return z
    raise NumericalError(
        f"Aberth iteration did not converge in {max_sweeps} sweeps; residuals {residuals}",
        residuals=residuals,
    )


def characteristic_roots(c) -> np.ndarray:
    """Roots of ``xi^o - c_1 xi^(o-1) - ... - c_o``, sorted by decreasing modulus.

    When the stencil sums to one to working precision the known root 1 is
    divided out first and the quotient is solved by Aberth iteration, which
    keeps repeated unit roots exact.
    """
    c = _as_stencil(c)
    a = characteristic_polynomial(c)
    if abs(c.sum() - 1.0) <= 1e-12:
        quotient = np.cumsum(a)[:-1]
        roots = np.concatenate([[1.0 + 0j], aberth(quotient)])
    else:
        roots = aberth(a)
    roots = np.where(np.abs(roots.imag) < 1e-13 * np.maximum(1.0, np.abs(roots)), roots.real + 0j, roots)
    order = np.lexsort((np.angle(roots), -np.round(np.abs(roots), 12)))
    return roots[order]


@dataclass
class StabilityReport:
    order: int
    coefficients: list[float]
    roots: np.ndarray
    max_abs_root: float
    stable: bool
    weakly_stable_warning: bool
    tolerance: float = STABILITY_TOLERANCE

    @property
    def abs_roots(self) -> np.ndarray:
        return np.abs(self.roots)

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "coefficients": [float(x) for x in self.coefficients],
            "roots": [{"re": float(r.real), "im": float(r.imag), "abs": float(abs(r))} for r in self.roots],
            "max_abs_root": float(self.max_abs_root),
            "stable": bool(self.stable),
            "weakly_stable_warning": bool(self.weakly_stable_warning),
        }


def root_condition(c, tol: float = STABILITY_TOLERANCE) -> StabilityReport:
    """Root-condition verdict: stable iff every root satisfies ``|xi| <= 1 + tol``.

    ``weakly_stable_warning`` flags a repeated root on the unit circle, for
    which the homogeneous recurrence grows linearly even though the verdict
    is stable.
    """
    c = _as_stencil(c)
    roots = characteristic_roots(c)
    mods = np.abs(roots)
    max_abs = float(mods.max())
    on_circle = np.flatnonzero(np.abs(mods - 1.0) <= UNIT_MODULUS_TOLERANCE)
    repeated = any(abs(roots[i] - roots[j]) < REPEATED_ROOT_DISTANCE
                   for i in on_circle for j in range(roots.size) if j != i)
    return StabilityReport(
        order=int(c.size),
        coefficients=c.tolist(),
        roots=roots,
        max_abs_root=max_abs,
        stable=bool(max_abs <= 1.0 + tol),
        weakly_stable_warning=bool(repeated),
        tolerance=tol,
    )


def basis_decomposition(c) -> np.ndarray:
    """Weights of ``c`` on the stencils [1,0,0], [2,-1,0], [2,-2,1]."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (3,):
        raise ShapeError(f"basis decomposition needs a length-3 stencil, got shape {c.shape}")
    c = _as_stencil(c)
    a3 = c[2]
    a2 = -c[1] - 2.0 * c[2]
    a1 = 1.0 - a2 - a3
    alpha = np.array([a1, a2, a3])
    if abs(alpha.sum() - 1.0) > 1e-12:
        raise NumericalError(f"basis weights sum to {alpha.sum()!r}")
    return alpha


def recompose(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (3,):
        raise ShapeError(f"expected 3 basis weights, got shape {alpha.shape}")
    return alpha @ BASIS


def _sin2pi(t: np.ndarray, derivative: int = 0) -> np.ndarray:
    w = 2.0 * np.pi
    return w ** derivative * np.sin(w * t + derivative * np.pi / 2)


TEST_FUNCTIONS = {"sin2pi": _sin2pi}


def parse_grid(spec: str) -> tuple[float, float, float]:
    """``"start:stop:step"`` -> floats."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise PreconditionError(f"grid must look like start:stop:step, got {spec!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise PreconditionError(f"grid must look like start:stop:step, got {spec!r}") from None
    return start, stop, step


def grid_points(start: float, stop: float, step: float) -> np.ndarray:
    if not step > 0 or not stop > start:
        raise PreconditionError(f"degenerate grid {start}:{stop}:{step}")
    count = int(round((stop - start) / step)) + 1
    return start + step * np.arange(count)


def stencil_residuals(c, y: np.ndarray) -> np.ndarray:
    """``r_l = y_(l+1) - sum_p c_p y_(l-p+1)`` for every l with a full history."""
    c = np.asarray(c, dtype=np.float64)
    o = c.size
    r = y[o:].copy()
    for p in range(o):
        r -= c[p] * y[o - 1 - p:y.size - 1 - p]
    return r


def _fit(r: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """Least squares ``r ~ beta * target`` through the origin; returns (beta, R^2)."""
    denom = float(target @ target)
    beta = float(r @ target) / denom if denom > 0 else 0.0
    ss_res = float(np.sum((r - beta * target) ** 2))
    ss_tot = float(np.sum((r - r.mean()) ** 2))
    if ss_tot == 0.0:
        return beta, 1.0 if ss_res == 0.0 else 0.0
    return beta, 1.0 - ss_res / ss_tot


@dataclass
class ConsistencyReport:
    grid_step: float
    residuals: np.ndarray
    beta: float
    r2: float
    inferred_order: int | None
    fits: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "grid_step": float(self.grid_step),
            "beta": float(self.beta),
            "r2": float(self.r2),
            "inferred_order": self.inferred_order,
        }


def consistency_check(c, test_fn: str = "sin2pi", grid: tuple[float, float, float] = (0.0, 1.0, 0.01),
                      threshold: float = 0.99) -> ConsistencyReport:
    """Fit the stencil residual on a sampled test function against its second derivative.

    The derivative order is inferred as 2 when that fit reaches R^2 >=
    ``threshold``; otherwise the first and third derivatives are tried.
    """
    c = _as_stencil(c)
    try:
        fn = TEST_FUNCTIONS[test_fn]
    except KeyError:
        raise PreconditionError(f"unknown test function {test_fn!r}; known: {sorted(TEST_FUNCTIONS)}") from None
    t = grid_points(*grid)
    o = c.size
    if t.size < o + 2:
        raise PreconditionError(f"grid has {t.size} points; order {o} needs at least {o + 2}")
    r = stencil_residuals(c, fn(t))
    t_l = t[o - 1:t.size - 1]
    fits = {m: _fit(r, fn(t_l, m)) for m in (1, 2, 3)}
    beta, r2 = fits[2]
    inferred = None
    for m in (2, 1, 3):
        if fits[m][1] >= threshold:
            inferred = m
            break
    return ConsistencyReport(grid_step=float(grid[2]), residuals=r, beta=beta, r2=r2,
                             inferred_order=inferred, fits=fits)
