"""Ridge regression over the occupation-kernel basis.

Minimizing the squared mismatch between ``<(f_i g_i), Gamma_j>`` and the
trajectory targets plus ``lam * |(f_i g_i)|^2`` over the vector-valued space
has a minimizer ``sum_j W[j, i] Gamma_j``, with ``W`` solving
``(G + lam I) W = B``.  All ``n`` output rows share ``G`` and are solved with
one factorization.
"""

import json
import os
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import DataFormatError, NumericalError
from .kernel import KernelConfig, kernel_cross_matrix
from .occkernel import OccupationBasis, gram_matrix, occ_eval, target_matrix
from .trajectory import Trajectory

MODEL_FORMAT_VERSION = 1
RESIDUAL_RTOL = 1e-8
# query rows per kernel block in predict_batch
QUERY_CHUNK = 256


@dataclass(frozen=True, eq=False)
class IdentifiedModel:
    """Fitted weights ``W`` (``M x n``) over an occupation basis."""

    basis: OccupationBasis
    weights: np.ndarray
    lam: float
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        if W.shape != (len(self.basis), self.basis.n):
            raise ValueError(f"weights must be {len(self.basis)} x {self.basis.n}, got {W.shape}")
        W = W.copy()
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    @property
    def n(self):
        return self.basis.n

    @property
    def m(self):
        return self.basis.m

    @cached_property
    def _coefficients(self):
        # per-sample (m + 1) x n blocks: weight * (1, u) outer W[owner]
        b = self.basis
        owner = np.repeat(np.arange(len(b)), np.diff(b.offsets))
        A = (b.sample_weights[:, None, None] * b.augmented_controls[:, :, None]
             * self.weights[owner][:, None, :])
        return A.reshape(A.shape[0], -1)

    def __call__(self, X):
        return predict_batch(self, X)


def _solve_spd(A, B):
    """Solve ``A W = B`` for symmetric ``A``; returns ``(W, method, rcond)``."""
    try:
        c, low = scipy.linalg.cho_factor(A, lower=False, check_finite=True)
        W = scipy.linalg.cho_solve((c, low), B)
        anorm = np.linalg.norm(A, 1)
        rcond, info = lapack.dpocon(c, anorm)
        return W, "cholesky", float(rcond)
    except np.linalg.LinAlgError:
        pass
    try:
        W = scipy.linalg.solve(A, B, assume_a="sym")
        method = "symmetric-indefinite"
    except np.linalg.LinAlgError:
        W = scipy.linalg.lstsq(A, B)[0]
        method = "least-squares"
    return W, method, 1.0 / np.linalg.cond(A, 1)


def solve_regularized(G, B, lam):
    """Solve ``(G + lam I) W = B`` with iterative refinement.

    Returns ``(W, info)``; raises ``NumericalError`` when the relative
    residual stays above ``RESIDUAL_RTOL``.
    """
    G = np.asarray(G, dtype=float)
    B = np.asarray(B, dtype=float)
    if lam <= 0:
        raise ValueError(f"ridge weight must be positive, got {lam!r}")
    A = G + lam * np.eye(G.shape[0])
    A = 0.5 * (A + A.T)
    W, method, rcond = _solve_spd(A, B)
    bnorm = np.linalg.norm(B)
    for _ in range(3):
        R = B - A @ W
        rel = np.linalg.norm(R) / bnorm if bnorm > 0 else np.linalg.norm(R)
        if rel <= RESIDUAL_RTOL:
            break
        W = W + _solve_spd(A, R)[0]
    else:
        R = B - A @ W
        rel = np.linalg.norm(R) / bnorm if bnorm > 0 else np.linalg.norm(R)
    if not np.all(np.isfinite(W)) or rel > RESIDUAL_RTOL:
        cond = 1.0 / rcond if rcond > 0 else np.inf
        raise NumericalError(
            f"ridge solve failed: relative residual {rel:.3e} (condition estimate {cond:.3e}, {method})")
    return W, {"method": method, "condition_estimate": 1.0 / rcond if rcond > 0 else float("inf"),
               "relative_residual": float(rel)}


def fit(basis, lam, threads=1):
    """Fit drift and control effectiveness simultaneously for all ``n`` rows."""
    if not lam > 0:
        raise ValueError(f"ridge weight must be positive, got {lam!r}")
    t0 = time.perf_counter()
    G = gram_matrix(basis, threads=threads).entries
    B = target_matrix(basis)
    t1 = time.perf_counter()
    W, info = solve_regularized(G, B, lam)
    t2 = time.perf_counter()
    info.update(M=len(basis), gram_seconds=t1 - t0, solve_seconds=t2 - t1,
                gram_max_eigenvalue_bound=float(np.abs(G).sum(axis=1).max()))
    return IdentifiedModel(basis, W, float(lam), info)


def predict(model, x):
    """Return ``(f_hat(x), g_hat(x))`` with shapes ``(n,)`` and ``(n, m)``.

    Evaluates every basis element separately; ``predict_batch`` computes the
    same quantity with shared kernel blocks.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != model.n:
        raise ValueError(f"state dimension mismatch: {x.shape[0]} vs {model.n}")
    out = np.zeros((model.n, model.m + 1))
    for j in range(len(model.basis)):
        out += np.outer(model.weights[j], occ_eval(model.basis, j, x))
    return out[:, 0], out[:, 1:]


def predict_batch(model, X):
    """Vectorized ``predict`` over rows of ``X``.

    Returns ``(F, G)`` with ``F[k] = f_hat(X[k])`` of shape ``(q, n)`` and
    ``G[k] = g_hat(X[k])`` of shape ``(q, n, m)``.
    """
    n, m = model.n, model.m
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros((0, n)), np.zeros((0, n, m))
    X = X.reshape(-1, n) if X.ndim != 2 else X
    if X.shape[1] != n:
        raise ValueError(f"state dimension mismatch: {X.shape[1]} vs {n}")
    A = model._coefficients
    out = np.empty((X.shape[0], A.shape[1]))
    for k in range(0, X.shape[0], QUERY_CHUNK):
        K = kernel_cross_matrix(model.basis.kernel, X[k:k + QUERY_CHUNK], model.basis.samples)
        out[k:k + QUERY_CHUNK] = K @ A
    out = out.reshape(X.shape[0], m + 1, n)
    return out[:, 0, :].copy(), out[:, 1:, :].transpose(0, 2, 1).copy()


def model_to_dict(model):
    b = model.basis
    return {
        "version": MODEL_FORMAT_VERSION,
        "kernel": b.kernel.to_dict(),
        "s": b.order,
        "rule": b.rule,
        "lambda": model.lam,
        "n": b.n,
        "m": b.m,
        "weights": model.weights.tolist(),
        "trajectories": [
            {"rows": tr.rows().tolist(), "init_derivs": tr.initial_derivatives.tolist()}
            for tr in b.trajectories
        ],
        "report": model.report,
    }


def model_from_dict(d):
    if not isinstance(d, dict) or "version" not in d:
        raise DataFormatError("model document has no version field")
    if d["version"] != MODEL_FORMAT_VERSION:
        raise DataFormatError(
            f"unsupported model format version {d['version']!r} (this build reads {MODEL_FORMAT_VERSION})")
    try:
        n, m, s = int(d["n"]), int(d["m"]), int(d["s"])
        trajs = []
        for t in d["trajectories"]:
            rows = np.asarray(t["rows"], dtype=float).reshape(-1, 1 + n + m)
            trajs.append(Trajectory(rows[:, 0], rows[:, 1:1 + n], rows[:, 1 + n:],
                                    np.asarray(t["init_derivs"], dtype=float).reshape(-1, n)))
        basis = OccupationBasis(tuple(trajs), s, KernelConfig.from_dict(d["kernel"]), d.get("rule", "trapezoid"))
        return IdentifiedModel(basis, np.asarray(d["weights"], dtype=float), float(d["lambda"]),
                               d.get("report", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed model document: {exc}") from exc


def save_model(model, path):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(json.dumps(model_to_dict(model)) + "\n")
    os.replace(tmp, path)


def load_model(path):
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not a valid model file ({exc})") from exc
    return model_from_dict(d)
