"""Sampled controlled trajectories, quadrature weights and file ingestion.

Trajectory CSV rows are ``t, x_1..x_n, u_1..u_m`` with no header.  An optional
sidecar ``<basename>.meta.json`` holds ``{"s": int, "init_derivs": [[...], ...]}``;
when ``init_derivs`` is present it overrides numerical differentiation.
"""

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError

GRID_RTOL = 1e-9
RULES = ("trapezoid", "simpson")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A uniformly sampled state path with its control signal.

    Arrays are stored read-only.  ``initial_derivatives`` row ``l - 1`` holds
    the ``l``-th time derivative of the state at ``times[0]``; it has zero rows
    for first-order problems or when the derivatives are not yet known.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray = None
    initial_derivatives: np.ndarray = None
    dt: float = field(init=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        N = times.shape[0]
        if N < 3:
            raise ValueError(f"a trajectory needs at least 3 samples, got {N}")
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.ndim != 2 or states.shape[0] != N:
            raise ValueError(f"states must have {N} rows, got shape {states.shape}")
        controls = self.controls
        if controls is None:
            controls = np.zeros((N, 0))
        controls = np.asarray(controls, dtype=float)
        if controls.ndim == 1:
            controls = controls[:, None]
        if controls.ndim != 2 or controls.shape[0] != N:
            raise ValueError(f"controls must have {N} rows, got shape {controls.shape}")
        steps = np.diff(times)
        dt = (times[-1] - times[0]) / (N - 1)
        if dt <= 0 or np.any(np.abs(steps - dt) > GRID_RTOL * dt):
            raise ValueError("time grid is not uniform and strictly increasing")
        derivs = self.initial_derivatives
        if derivs is None:
            derivs = np.zeros((0, states.shape[1]))
        derivs = np.asarray(derivs, dtype=float).reshape(-1, states.shape[1])
        for name, value in (("times", times), ("states", states), ("controls", controls),
                            ("initial_derivatives", derivs)):
            object.__setattr__(self, name, _frozen(value))
        object.__setattr__(self, "dt", float(dt))

    @property
    def N(self):
        return self.times.shape[0]

    @property
    def n(self):
        return self.states.shape[1]

    @property
    def m(self):
        return self.controls.shape[1]

    @property
    def horizon(self):
        return float(self.times[-1] - self.times[0])

    def with_initial_derivatives(self, derivs):
        return Trajectory(self.times, self.states, self.controls, derivs)

    def rows(self):
        """Samples as ``(N, 1 + n + m)`` rows in file order."""
        return np.column_stack([self.times, self.states, self.controls])


@dataclass(frozen=True)
class QuadratureRule:
    """A named rule with its per-sample weights (units of time)."""

    rule: str
    weights: np.ndarray


def quadrature_rule(traj, rule="trapezoid"):
    """Composite quadrature weights on the trajectory's uniform grid.

    Simpson needs an odd sample count; for even ``N`` the last interval is
    integrated with the trapezoid rule.
    """
    if rule not in RULES:
        raise ValueError(f"unknown quadrature rule {rule!r}; expected one of {RULES}")
    N, h = traj.N, traj.dt
    w = np.zeros(N)
    if rule == "trapezoid":
        w[:] = h
        w[0] = w[-1] = h / 2
    else:
        k = N if N % 2 == 1 else N - 1
        w[:k:2] = 2 * h / 3
        w[1:k:2] = 4 * h / 3
        w[0] = h / 3
        w[k - 1] = h / 3
        if k < N:
            w[k - 1] += h / 2
            w[k] = h / 2
    return QuadratureRule(rule, _frozen(w))


def cauchy_weights(traj, s, rule="trapezoid"):
    """Quadrature weights for ``int_0^T (T - t)^(s-1) / (s-1)! h(t) dt``.

    ``sum(weights * h(samples))`` approximates the ``s``-fold iterated
    integral of ``h`` over the horizon.
    """
    if int(s) != s or s < 1:
        raise ValueError(f"order s must be a positive integer, got {s!r}")
    s = int(s)
    if isinstance(rule, QuadratureRule):
        q = rule.weights
    else:
        q = quadrature_rule(traj, rule).weights
    if s == 1:
        return np.array(q)
    lag = traj.times[-1] - traj.times
    return q * lag ** (s - 1) / math.factorial(s - 1)


def forward_stencil(order, npoints):
    """Weights ``c`` with ``sum(c[k] * y[k]) / h**order ~ y^(order)(0)`` on a forward grid."""
    k = np.arange(npoints, dtype=float)
    V = np.vander(k, npoints, increasing=True).T
    rhs = np.zeros(npoints)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def estimate_initial_derivatives(traj, s, smooth=False, window=None):
    """Estimate derivatives of orders ``1..s-1`` at the first sample.

    Default: second-order-accurate forward differences (``l + 2`` points for
    the ``l``-th derivative).  With ``smooth=True`` a least-squares polynomial
    of degree ``s + 1`` is fitted to the first ``window`` samples (default
    ``2s + 1``) and differentiated; a longer window trades bias for noise.
    """
    if int(s) != s or s < 1:
        raise ValueError(f"order s must be a positive integer, got {s!r}")
    s = int(s)
    if s == 1:
        return np.zeros((0, traj.n))
    if window is None:
        window = 2 * s + 1
    if traj.N < max(2 * s + 1, window):
        raise ValueError(f"trajectory has {traj.N} samples; the stencil needs {max(2 * s + 1, window)}")
    h = traj.dt
    out = np.empty((s - 1, traj.n))
    if smooth:
        deg = min(s + 1, window - 1)
        tau = np.arange(window, dtype=float)
        coef = np.polynomial.polynomial.polyfit(tau, traj.states[:window], deg)
        for l in range(1, s):
            out[l - 1] = math.factorial(l) * coef[l] / h**l
        return out
    for l in range(1, s):
        c = forward_stencil(l, l + 2)
        out[l - 1] = c @ traj.states[: l + 2] / h**l
    return out


def sidecar_path(path):
    return Path(path).with_suffix(".meta.json")


def read_sidecar(path):
    """Return the sidecar metadata dict for a trajectory file, or ``None``."""
    meta = sidecar_path(path)
    if not meta.exists():
        return None
    try:
        d = json.loads(meta.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{meta}: invalid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise DataFormatError(f"{meta}: expected a JSON object")
    return d


def load_trajectory(path, n, m, s=None):
    """Read a trajectory CSV (and its sidecar, if any).

    When ``s`` is given and the sidecar records a different order, a
    ``DataFormatError`` is raised.  Initial derivatives are attached only when
    the sidecar provides them.
    """
    path = Path(path)
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 1 + n + m:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {1 + n + m} columns, found {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed row ({exc})") from exc
    if len(rows) < 3:
        raise DataFormatError(f"{path}: a trajectory needs at least 3 samples, got {len(rows)}")
    data = np.array(rows)
    if not np.all(np.isfinite(data)):
        raise DataFormatError(f"{path}: non-finite values")
    derivs = None
    meta = read_sidecar(path)
    if meta is not None:
        if s is not None and "s" in meta and int(meta["s"]) != int(s):
            raise DataFormatError(f"{path}: sidecar order s={meta['s']} does not match s={s}")
        if meta.get("init_derivs") is not None:
            derivs = np.asarray(meta["init_derivs"], dtype=float).reshape(-1, n)
            if s is not None and derivs.shape[0] != int(s) - 1:
                raise DataFormatError(
                    f"{path}: sidecar has {derivs.shape[0]} derivative rows, order {s} needs {int(s) - 1}")
    try:
        return Trajectory(data[:, 0], data[:, 1:1 + n], data[:, 1 + n:], derivs)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def format_rows(rows):
    # repr() of a Python float round-trips exactly
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in rows)


def save_trajectory(traj, path, s=None):
    """Write the CSV and, when ``s`` is given, a sidecar with ``s`` and any known derivatives."""
    _atomic_write(path, format_rows(traj.rows()))
    if s is not None:
        meta = {"s": int(s)}
        if traj.initial_derivatives.shape[0]:
            meta["init_derivs"] = traj.initial_derivatives.tolist()
        _atomic_write(sidecar_path(path), json.dumps(meta) + "\n")
