"""Higher-order control occupation kernels.

For a trajectory ``gamma`` with control ``u`` on ``[0, T]`` the order-``s``
occupation kernel represents the functional

    h -> 1/(s-1)! int_0^T (T - t)^(s-1) h(gamma(t)) (1, u(t)) dt

on the space of ``R^(m+1)``-row-valued functions.  Under the separable kernel
``K(x, y) = k(x, y) I`` every inner product reduces to a double quadrature of
the scalar kernel times ``1 + u_i(t)^T u_j(tau)``.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .kernel import KernelConfig, kernel_cross_matrix
from .trajectory import RULES, cauchy_weights

# samples per Gram block side; a block of cross-kernel values is at most this squared
BLOCK_SAMPLES = 2048


@dataclass(frozen=True, eq=False)
class OccupationBasis:
    """``M`` trajectories sharing dimensions, plus order, kernel and quadrature rule."""

    trajectories: tuple
    order: int
    kernel: KernelConfig
    rule: str = "trapezoid"

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise ValueError("an occupation basis needs at least one trajectory")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order s must be a positive integer, got {self.order!r}")
        if self.rule not in RULES:
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        n, m = trajs[0].n, trajs[0].m
        for j, tr in enumerate(trajs):
            if tr.n != n or tr.m != m:
                raise ValueError(
                    f"trajectory {j} has dimensions (n={tr.n}, m={tr.m}), expected (n={n}, m={m})")
            if tr.initial_derivatives.shape[0] != self.order - 1:
                raise ValueError(
                    f"trajectory {j} carries {tr.initial_derivatives.shape[0]} initial-derivative rows; "
                    f"order {self.order} needs {self.order - 1}")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "order", int(self.order))

    def __len__(self):
        return len(self.trajectories)

    @property
    def n(self):
        return self.trajectories[0].n

    @property
    def m(self):
        return self.trajectories[0].m

    @cached_property
    def weights(self):
        """Cauchy quadrature weights, one array per trajectory."""
        return [cauchy_weights(tr, self.order, self.rule) for tr in self.trajectories]

    @cached_property
    def offsets(self):
        lengths = [tr.N for tr in self.trajectories]
        return np.concatenate([[0], np.cumsum(lengths)])

    @cached_property
    def samples(self):
        """All trajectory samples stacked, ``(S, n)``."""
        return np.concatenate([tr.states for tr in self.trajectories])

    @cached_property
    def augmented_controls(self):
        """Rows ``(1, u^T)`` for every sample, ``(S, m + 1)``."""
        u = np.concatenate([tr.controls for tr in self.trajectories])
        return np.column_stack([np.ones(u.shape[0]), u])

    @cached_property
    def sample_weights(self):
        return np.concatenate(self.weights)

    def _check_index(self, j):
        if not 0 <= j < len(self):
            raise IndexError(f"basis index {j} out of range for M={len(self)}")


@dataclass(frozen=True)
class GramMatrix:
    """Occupation-kernel inner products with the ridge weight attached later."""

    entries: np.ndarray
    lam: float = 0.0

    def regularized(self):
        return self.entries + self.lam * np.eye(self.entries.shape[0])


def _pair_factor(ui, uj):
    if ui.shape[1] == 0:
        return None
    return 1.0 + ui @ uj.T


def gram_entry(basis, i, j):
    """``<Gamma_i, Gamma_j>`` as a direct double quadrature."""
    basis._check_index(i)
    basis._check_index(j)
    ti, tj = basis.trajectories[i], basis.trajectories[j]
    C = kernel_cross_matrix(basis.kernel, ti.states, tj.states)
    F = _pair_factor(ti.controls, tj.controls)
    if F is not None:
        C *= F
    return float(basis.weights[i] @ C @ basis.weights[j])


def _blocks(basis, block_samples):
    """Partition trajectory indices into consecutive runs of at most ``block_samples`` samples."""
    blocks, start, count = [], 0, 0
    for j, tr in enumerate(basis.trajectories):
        if count and count + tr.N > block_samples:
            blocks.append((start, j))
            start, count = j, 0
        count += tr.N
    blocks.append((start, len(basis)))
    return blocks


def _block_inner(basis, bi, bj):
    off = basis.offsets
    (i0, i1), (j0, j1) = bi, bj
    si, sj = slice(off[i0], off[i1]), slice(off[j0], off[j1])
    X, Y = basis.samples[si], basis.samples[sj]
    C = kernel_cross_matrix(basis.kernel, X, Y)
    F = _pair_factor(basis.augmented_controls[si, 1:], basis.augmented_controls[sj, 1:])
    if F is not None:
        C *= F
    C *= basis.sample_weights[sj][None, :]
    cols = np.add.reduceat(C, off[j0:j1] - off[j0], axis=1)
    cols *= basis.sample_weights[si][:, None]
    return np.add.reduceat(cols, off[i0:i1] - off[i0], axis=0)


def gram_matrix(basis, threads=1, block_samples=BLOCK_SAMPLES):
    """Assemble the ``M x M`` Gram matrix over the upper triangle and mirror it.

    Blocks of trajectories are processed independently (optionally on a
    thread pool); each task writes a disjoint region, so the result does not
    depend on ``threads``.
    """
    M = len(basis)
    G = np.zeros((M, M))
    blocks = _blocks(basis, block_samples)
    pairs = [(a, b) for a in range(len(blocks)) for b in range(a, len(blocks))]

    def work(pair):
        a, b = pairs[pair]
        (i0, i1), (j0, j1) = blocks[a], blocks[b]
        G[i0:i1, j0:j1] = _block_inner(basis, blocks[a], blocks[b])

    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(pairs))))
    else:
        for p in range(len(pairs)):
            work(p)
    upper = np.triu(G)
    return GramMatrix(upper + np.triu(G, 1).T)


def target_vector(traj, s):
    """``gamma(T) - sum_{l=0}^{s-1} T^l / l! gamma^(l)(0)``."""
    s = int(s)
    derivs = traj.initial_derivatives
    if derivs.shape[0] != s - 1:
        raise ValueError(
            f"order {s} needs {s - 1} initial-derivative rows, trajectory carries {derivs.shape[0]}")
    T = traj.horizon
    out = traj.states[-1] - traj.states[0]
    for l in range(1, s):
        out = out - T**l / math.factorial(l) * derivs[l - 1]
    return np.array(out)


def target_matrix(basis):
    """Stacked target vectors, ``(M, n)``."""
    return np.array([target_vector(tr, basis.order) for tr in basis.trajectories])


def occ_eval_batch(basis, j, X):
    """Evaluate ``Gamma_j`` at each row of ``X``; returns ``(q, m + 1)``."""
    basis._check_index(j)
    X = np.asarray(X, dtype=float).reshape(-1, basis.n)
    tr = basis.trajectories[j]
    K = kernel_cross_matrix(basis.kernel, tr.states, X)
    A = basis.weights[j][:, None] * np.column_stack([np.ones(tr.N), tr.controls])
    return K.T @ A


def occ_eval(basis, j, x):
    """Evaluate ``Gamma_j(x)``: entry 0 pairs with the drift, entries ``1..m`` with ``g``'s columns."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != basis.n:
        raise ValueError(f"state dimension mismatch: {x.shape[0]} vs {basis.n}")
    return occ_eval_batch(basis, j, x[None, :])[0]
