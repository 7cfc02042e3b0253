"""Benchmark plants, fixed-step RK4 simulation and closed-loop regulation.

Two plants ship with analytic ground truth:

* ``duffing``: ``x'' = (x - x^3) + (2 + sin x) u``, order 2, ``n = m = 1``.
* ``twolink``: a two-link manipulator ``M(q) q'' = -C(q, q') + tau`` written as
  the first-order system ``(q, q')' = (q', -M^-1 C) + (0; M^-1) tau``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import NumericalError
from .trajectory import Trajectory

TWOLINK_PARAMS = {
    "p1": 3.473, "p2": 0.196, "p3": 0.242,
    "fd1": 5.3, "fd2": 1.1, "fs1": 8.45, "fs2": 2.35,
}
DEFAULT_KP = 20.0 * np.eye(2)
DEFAULT_KV = 30.0 * np.eye(2)
INVERSION_COND_LIMIT = 1e8


@dataclass(frozen=True)
class PlantSpec:
    """Control-affine plant ``d^s x / dt^s = f(x) + g(x) u`` with ``f: R^n -> R^n``, ``g: R^n -> R^(n x m)``."""

    name: str
    order: int
    n: int
    m: int
    drift: callable
    effectiveness: callable
    params: dict = field(default_factory=dict)

    def f(self, x):
        return np.asarray(self.drift(np.asarray(x, dtype=float)), dtype=float).reshape(self.n)

    def g(self, x):
        return np.asarray(self.effectiveness(np.asarray(x, dtype=float)), dtype=float).reshape(self.n, self.m)

    def evaluate(self, X):
        """Ground truth at each row of ``X``: ``(F (q, n), G (q, n, m))``."""
        X = np.asarray(X, dtype=float).reshape(-1, self.n)
        F = np.array([self.f(x) for x in X]).reshape(-1, self.n)
        G = np.array([self.g(x) for x in X]).reshape(-1, self.n, self.m)
        return F, G


def duffing_plant():
    return PlantSpec(
        "duffing", 2, 1, 1,
        lambda x: x - x**3,
        lambda x: (2.0 + np.sin(x)).reshape(1, 1),
    )


def twolink_inertia(q, params=TWOLINK_PARAMS):
    c2 = np.cos(q[1])
    p1, p2, p3 = params["p1"], params["p2"], params["p3"]
    off = p2 + p3 * c2
    return np.array([[p1 + 2 * p3 * c2, off], [off, p2]])


def twolink_coriolis(q, qd, params=TWOLINK_PARAMS):
    """``C(q, q') = (V(q, q') + F_d) q' + F_s(q')``."""
    p3s2 = params["p3"] * np.sin(q[1])
    V = np.array([[-p3s2 * qd[1], -p3s2 * (qd[0] + qd[1])],
                  [p3s2 * qd[0], 0.0]])
    Fd = np.diag([params["fd1"], params["fd2"]])
    Fs = np.array([params["fs1"] * np.tanh(qd[0]), params["fs2"] * np.tanh(qd[1])])
    return (V + Fd) @ qd + Fs


def twolink_plant(params=None):
    p = dict(TWOLINK_PARAMS)
    if params:
        p.update(params)

    def drift(x):
        q, qd = x[:2], x[2:]
        return np.concatenate([qd, -np.linalg.solve(twolink_inertia(q, p), twolink_coriolis(q, qd, p))])

    def effectiveness(x):
        g = np.zeros((4, 2))
        g[2:] = np.linalg.inv(twolink_inertia(x[:2], p))
        return g

    return PlantSpec("twolink", 1, 4, 2, drift, effectiveness, p)


def make_plant(name, params=None):
    if name == "duffing":
        return duffing_plant()
    if name == "twolink":
        return twolink_plant(params)
    raise ValueError(f"no built-in plant named {name!r}")


def _grid(T, dt):
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(T, dt):
        raise ValueError(f"step {dt} does not divide horizon {T}")
    return np.arange(steps + 1) * dt


def rk4_integrate(rhs, z0, times):
    """Classical RK4 of ``z' = rhs(t, z)`` on the given uniform grid."""
    z = np.array(z0, dtype=float)
    Z = np.empty((len(times), z.size))
    Z[0] = z
    # overflow is caught below as a non-finite state
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(len(times) - 1):
            t, h = times[k], times[k + 1] - times[k]
            k1 = rhs(t, z)
            k2 = rhs(t + h / 2, z + h / 2 * k1)
            k3 = rhs(t + h / 2, z + h / 2 * k2)
            k4 = rhs(t + h, z + h * k3)
            z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(z)):
                raise NumericalError(f"simulation diverged: non-finite state at step {k + 1}")
            Z[k + 1] = z
    return Z


def _augmented_rhs(plant, control):
    n, s = plant.n, plant.order

    def rhs(t, z):
        x = z[:n]
        u = control(t, z)
        top = z[n:]
        acc = plant.f(x) + plant.g(x) @ np.asarray(u, dtype=float).reshape(plant.m)
        return np.concatenate([top, acc]) if s > 1 else acc

    return rhs


def rk4_simulate(plant, u, x0, T, dt):
    """Simulate the plant under open-loop control ``u(t)``.

    ``x0`` stacks the position and its derivatives up to order ``s - 1``
    (length ``s * n``).  The returned trajectory records positions, controls at
    the sample times, and the initial derivatives taken from ``x0``.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != plant.order * plant.n:
        raise ValueError(f"initial state must have {plant.order * plant.n} entries, got {x0.size}")
    times = _grid(T, dt)
    Z = rk4_integrate(_augmented_rhs(plant, lambda t, z: u(t)), x0, times)
    U = np.array([np.asarray(u(t), dtype=float).reshape(plant.m) for t in times]).reshape(len(times), plant.m)
    return Trajectory(times, Z[:, :plant.n], U, x0[plant.n:].reshape(plant.order - 1, plant.n))


def simulate_closed_loop(plant, controller, x0, T, dt):
    """Simulate with state feedback ``u = controller(t, z)`` evaluated at every RK4 stage.

    Returns ``(times, Z, U)`` with the full augmented state ``Z`` and the
    control applied at each sample time.
    """
    times = _grid(T, dt)
    Z = rk4_integrate(_augmented_rhs(plant, controller), x0, times)
    U = np.array([np.asarray(controller(t, z), dtype=float).reshape(plant.m) for t, z in zip(times, Z)])
    return times, Z, U


@dataclass(frozen=True)
class ExcitationSpec:
    """Random sum-of-sines excitation, ``num_terms`` terms per control channel."""

    num_terms: int = 3
    amplitude_range: tuple = (-1.0, 1.0)
    frequency_range: tuple = (0.1, 5.0)
    phase_range: tuple = (0.0, 2 * np.pi)
    seed: int = 0

    def __post_init__(self):
        if self.num_terms < 1:
            raise ValueError("num_terms must be at least 1")
        for name in ("amplitude_range", "frequency_range", "phase_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} must satisfy low <= high, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))


@dataclass(frozen=True)
class SumOfSines:
    """``u_c(t) = sum_k A[c, k] sin(w[c, k] t + phi[c, k])``."""

    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        vals = np.sin(self.frequencies * t[..., None, None] + self.phases) * self.amplitudes
        return vals.sum(axis=-1)


def excitation_signal(spec, m):
    rng = np.random.default_rng(spec.seed)
    shape = (m, spec.num_terms)
    A = rng.uniform(*spec.amplitude_range, size=shape)
    w = rng.uniform(*spec.frequency_range, size=shape)
    phi = rng.uniform(*spec.phase_range, size=shape)
    return SumOfSines(A, w, phi)


def halton_points(dim, count, center=0.0, side=1.0):
    """Unscrambled Halton points (indices ``1..count``) mapped to ``[center - side/2, center + side/2)^dim``."""
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    # index 0 of the unscrambled sequence is the origin; skip it
    unit = qmc.Halton(d=dim, scramble=False).random(count + 1)[1:]
    center = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
    return center + side * (unit - 0.5)


def add_noise(traj, sigma, seed):
    """Add i.i.d. Gaussian noise to every state sample.

    Known initial derivatives are dropped when ``sigma > 0``: a measured
    trajectory has to have them re-estimated from the noisy samples.
    """
    if sigma < 0:
        raise ValueError(f"noise standard deviation must be non-negative, got {sigma}")
    if sigma == 0:
        return traj
    rng = np.random.default_rng(seed)
    noisy = traj.states + rng.normal(0.0, sigma, size=traj.states.shape)
    return Trajectory(traj.times, noisy, traj.controls)


def manipulator_terms(f, g, cond_limit=INVERSION_COND_LIMIT):
    """Recover ``(M, C)`` from drift and effectiveness of the first-order form.

    The lower ``2 x 2`` block of ``g`` estimates ``M^-1``; the lower half of
    ``f`` estimates ``-M^-1 C``.
    """
    f = np.asarray(f, dtype=float).reshape(4)
    Minv = np.asarray(g, dtype=float).reshape(4, 2)[2:]
    cond = np.linalg.cond(Minv)
    if not np.isfinite(cond) or cond > cond_limit:
        raise NumericalError(f"estimated inverse inertia is singular (condition number {cond:.3e})")
    M = np.linalg.inv(Minv)
    return M, -M @ f[2:]


def recover_manipulator_terms(model, q, qdot, cond_limit=INVERSION_COND_LIMIT):
    """``(M_hat(q), C_hat(q, q'))`` from an identified two-link model."""
    x = np.concatenate([np.asarray(q, dtype=float), np.asarray(qdot, dtype=float)])
    F, G = model(x[None, :])
    return manipulator_terms(F[0], G[0], cond_limit)


def computed_torque(M, C, q, qdot, Kp=DEFAULT_KP, Kv=DEFAULT_KV):
    """Regulating torque ``M (-Kv q' - Kp q) + C``."""
    return np.asarray(M) @ (-np.asarray(Kv) @ np.asarray(qdot) - np.asarray(Kp) @ np.asarray(q)) + np.asarray(C)
