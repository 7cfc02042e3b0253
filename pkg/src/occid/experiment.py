"""Config-driven pipeline: data generation, identification, evaluation,
Monte-Carlo studies and the closed-loop regulation demo.

Every ``cmd_*`` function validates its inputs before writing and writes each
file through a temporary name followed by an atomic rename.
"""

import csv
import io
import json
import logging
import os
import shutil
import tempfile
import time
from pathlib import Path

import numpy as np

from .config import grid_side
from .errors import ConfigError, DataFormatError, NumericalError
from .occkernel import OccupationBasis
from .regression import fit, load_model, save_model
from .simulation import (
    ExcitationSpec,
    add_noise,
    computed_torque,
    excitation_signal,
    halton_points,
    recover_manipulator_terms,
    rk4_simulate,
    simulate_closed_loop,
    twolink_coriolis,
    twolink_inertia,
)
from .trajectory import estimate_initial_derivatives, load_trajectory, save_trajectory

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


# -- file helpers -------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path):
    """Return ``(header, rows)`` with every value as float."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows).reshape(-1, len(header))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- sampling -----------------------------------------------------------------

def sample_points(sampling, count, dims):
    """Grid or Halton point set as a ``(count, dims)`` array, optionally sorted by distance."""
    if sampling.method == "grid":
        k = grid_side(count, dims)
        axes = [np.linspace(lo, hi, k) for lo, hi in sampling.bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        P = np.column_stack([a.ravel() for a in mesh])
    else:
        P = halton_points(dims, count, sampling.center, sampling.side)
    if sampling.order == "distance_desc":
        P = P[np.argsort(-np.linalg.norm(P, axis=1), kind="stable")]
    return P


def probe_points(cfg):
    return sample_points(cfg.eval.probe_sampling, cfg.eval.probe_count, cfg.make_plant().n)


# -- generation ---------------------------------------------------------------

def trajectory_seeds(seed, count):
    """Per-trajectory ``(excitation_seed, noise_seed)`` pairs derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [tuple(int(v) for v in c.generate_state(2, np.uint64)) for c in children]


def generate_dataset(cfg, seed=None):
    """Simulate the configured plant; returns ``(trajectories, records)``."""
    seed = cfg.seed if seed is None else seed
    plant = cfg.make_plant()
    d = cfg.data
    X0 = sample_points(d.init_sampling, d.num_trajectories, plant.order * plant.n)
    exc = d.excitation
    trajs, records = [], []
    for k, (exc_seed, noise_seed) in enumerate(trajectory_seeds(seed, d.num_trajectories)):
        spec = ExcitationSpec(exc.num_terms, tuple(exc.amplitude_range), tuple(exc.frequency_range),
                              tuple(exc.phase_range), exc_seed)
        u = excitation_signal(spec, plant.m)
        tr = rk4_simulate(plant, u, X0[k], d.horizon, d.dt)
        trajs.append(add_noise(tr, d.noise_sigma, noise_seed))
        records.append({"excitation_seed": exc_seed, "noise_seed": noise_seed, "x0": X0[k].tolist()})
    return trajs, records


def cmd_generate(cfg, out_dir):
    """Write trajectory CSVs, sidecars and ``manifest.json`` into ``<out_dir>/data``."""
    plant = cfg.make_plant()
    trajs, records = generate_dataset(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    final = out_dir / "data"
    staging = Path(tempfile.mkdtemp(prefix=".data.", dir=out_dir))
    try:
        for k, (tr, rec) in enumerate(zip(trajs, records)):
            name = f"traj_{k:04d}.csv"
            save_trajectory(tr, staging / name, s=plant.order)
            rec["file"] = name
        manifest = {
            "version": MANIFEST_VERSION,
            "plant": {"name": plant.name, "params": plant.params},
            "n": plant.n, "m": plant.m, "s": plant.order,
            "seed": cfg.seed,
            "files": records,
            "config": cfg.to_dict(),
        }
        write_json(staging / "manifest.json", manifest)
        if final.exists():
            shutil.rmtree(final)
        os.replace(staging, final)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    log.info("wrote %d trajectories to %s", len(trajs), final)
    return final / "manifest.json"


# -- identification -----------------------------------------------------------

def attach_initial_derivatives(trajs, cfg):
    """Estimate missing initial derivatives the way the configuration asks."""
    s = cfg.model.s
    out = []
    for tr in trajs:
        if tr.initial_derivatives.shape[0] != s - 1:
            tr = tr.with_initial_derivatives(estimate_initial_derivatives(
                tr, s, smooth=cfg.model.smooth_init_derivs, window=cfg.model.init_deriv_window))
        out.append(tr)
    return out


def identify(cfg, trajs, threads=1):
    """Fit the occupation-kernel model to in-memory trajectories."""
    trajs = attach_initial_derivatives(trajs, cfg)
    basis = OccupationBasis(tuple(trajs), cfg.model.s, cfg.model.kernel_config, cfg.model.quadrature)
    return fit(basis, cfg.model.lam, threads=threads)


def read_dataset(cfg, data_dir):
    data_dir = Path(data_dir)
    try:
        manifest = json.loads((data_dir / "manifest.json").read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{data_dir / 'manifest.json'}: invalid JSON ({exc})") from None
    plant = cfg.make_plant()
    for key, want in (("n", plant.n), ("m", plant.m), ("s", cfg.model.s)):
        if manifest.get(key) != want:
            raise ConfigError(f"dataset {key}={manifest.get(key)!r} does not match configuration {key}={want}")
    if manifest.get("plant", {}).get("name") != plant.name:
        raise ConfigError(f"dataset was generated for plant {manifest.get('plant', {}).get('name')!r}, "
                          f"configuration names {plant.name!r}")
    return [load_trajectory(data_dir / rec["file"], plant.n, plant.m, s=cfg.model.s)
            for rec in manifest["files"]]


def cmd_identify(cfg, data_dir, out_dir, threads=1):
    """Fit a model to a dataset on disk; writes ``model.json`` and ``fit_report.json``."""
    trajs = read_dataset(cfg, data_dir)
    t0 = time.perf_counter()
    model = identify(cfg, trajs, threads=threads)
    wall = time.perf_counter() - t0
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = dict(model.report)
    timing = {k: report.pop(k) for k in ("gram_seconds", "solve_seconds")}
    stored = type(model)(model.basis, model.weights, model.lam, report)
    save_model(stored, out_dir / "model.json")
    write_json(out_dir / "fit_report.json", {**report, **timing, "wall_seconds": wall,
                                             "lambda": model.lam, "weights_shape": list(model.weights.shape)})
    log.info("fitted M=%d basis elements (condition estimate %.3e)", len(model.basis),
             report["condition_estimate"])
    return out_dir / "model.json"


# -- evaluation ---------------------------------------------------------------

def _rel(num, den):
    # 0/0 is an exact match; nonzero error against a zero truth has no finite ratio
    out = np.where(num == 0, 0.0, np.nan)
    return np.divide(num, den, out=out, where=den > 0)


def evaluate_predictor(plant, predictor, probes, core_bounds=None):
    """Compare a predictor ``X -> (F, G)`` against the plant at the probe points.

    Returns ``(header, rows, summary)`` where ``summary`` maps metric names to
    floats.
    """
    P = np.asarray(probes, dtype=float).reshape(-1, plant.n)
    Fh, Gh = predictor(P)
    F, G = plant.evaluate(P)
    Ft, Gt = F - Fh, G - Gh
    n, m = plant.n, plant.m
    ef = np.linalg.norm(Ft, axis=1)
    rf = _rel(ef, np.linalg.norm(F, axis=1))
    eg = np.linalg.norm(Gt, axis=1)          # (q, m): per-column norms
    rg = _rel(eg, np.linalg.norm(G, axis=1))
    eg_all = np.linalg.norm(Gt.reshape(len(P), -1), axis=1)

    header = ["index", "distance"] + [f"x{i + 1}" for i in range(n)]
    header += [f"f{i + 1}" for i in range(n)] + [f"fhat{i + 1}" for i in range(n)]
    header += [f"ftilde{i + 1}" for i in range(n)]
    gcols = [(r, c) for r in range(n) for c in range(m)]
    header += [f"g{r + 1}_{c + 1}" for r, c in gcols] + [f"ghat{r + 1}_{c + 1}" for r, c in gcols]
    header += [f"gtilde{r + 1}_{c + 1}" for r, c in gcols]
    header += ["f_abs_err", "f_rel_err"]
    for c in range(m):
        header += [f"g{c + 1}_abs_err", f"g{c + 1}_rel_err"]
    rows = []
    for k in range(len(P)):
        row = [k, float(np.linalg.norm(P[k]))] + P[k].tolist() + F[k].tolist() + Fh[k].tolist() + Ft[k].tolist()
        row += [G[k, r, c] for r, c in gcols] + [Gh[k, r, c] for r, c in gcols] + [Gt[k, r, c] for r, c in gcols]
        row += [ef[k], rf[k]]
        for c in range(m):
            row += [eg[k, c], rg[k, c]]
        rows.append(row)

    summary = {"probe_count": len(P), "max_abs_f": ef.max(), "mean_abs_f": ef.mean(),
               "median_rel_f": np.nanmedian(rf), "max_abs_g": eg_all.max(), "mean_abs_g": eg_all.mean()}
    for c in range(m):
        summary[f"max_abs_g{c + 1}"] = eg[:, c].max()
        summary[f"mean_abs_g{c + 1}"] = eg[:, c].mean()
        summary[f"median_rel_g{c + 1}"] = np.nanmedian(rg[:, c])
    if core_bounds is not None:
        inside = np.all([(P[:, i] >= lo) & (P[:, i] <= hi) for i, (lo, hi) in enumerate(core_bounds)], axis=0)
        summary["core_probe_count"] = int(inside.sum())
        if inside.any():
            summary["core_max_abs_f"] = ef[inside].max()
            summary["core_mean_abs_f"] = ef[inside].mean()
            summary["core_max_abs_g"] = eg_all[inside].max()
            summary["core_mean_abs_g"] = eg_all[inside].mean()
    return header, rows, {k: float(v) if not isinstance(v, int) else v for k, v in summary.items()}


def cmd_evaluate(cfg, model_path, out_dir, plots=True):
    """Per-probe error table ``errors.csv`` plus ``error_summary.csv`` (and figures)."""
    plant = cfg.make_plant()
    model = load_model(model_path)
    if (model.n, model.m, model.basis.order) != (plant.n, plant.m, plant.order):
        raise ConfigError(f"model dimensions (n={model.n}, m={model.m}, s={model.basis.order}) do not match "
                          f"the {plant.name} plant")
    probes = probe_points(cfg)
    header, rows, summary = evaluate_predictor(plant, model, probes, cfg.eval.core_bounds)
    out_dir = Path(out_dir)
    write_csv(out_dir / "errors.csv", header, rows)
    write_csv(out_dir / "error_summary.csv", ["metric", "value"], sorted(summary.items()))
    if plots:
        from . import plotting
        plotting.evaluation_figures(plant, header, rows, out_dir / "figures")
    return out_dir / "errors.csv"


# -- Monte-Carlo --------------------------------------------------------------

MC_COLUMNS = ["trial", "seed", "mean_abs_f", "mean_abs_g", "max_abs_f", "max_abs_g"]
MC_CORE_COLUMNS = ["core_mean_abs_f", "core_mean_abs_g", "core_max_abs_f", "core_max_abs_g"]


def trial_seeds(seed, trials):
    return [int(c.generate_state(1, np.uint64)[0]) for c in np.random.SeedSequence([seed, 1]).spawn(trials)]


def run_montecarlo(cfg, trials, threads=1, progress=None):
    """One identification per trial with fresh excitation and noise; returns ``(header, rows)``."""
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigError(f"trials must be a positive integer, got {trials!r}")
    plant = cfg.make_plant()
    probes = probe_points(cfg)
    core = cfg.eval.core_bounds is not None
    header = MC_COLUMNS + (MC_CORE_COLUMNS if core else [])
    rows = []
    for k, seed in enumerate(trial_seeds(cfg.seed, trials)):
        trajs, _ = generate_dataset(cfg, seed=seed)
        model = identify(cfg, trajs, threads=threads)
        _, _, s = evaluate_predictor(plant, model, probes, cfg.eval.core_bounds)
        row = [k, seed, s["mean_abs_f"], s["mean_abs_g"], s["max_abs_f"], s["max_abs_g"]]
        if core:
            row += [s.get(c, float("nan")) for c in MC_CORE_COLUMNS]
        rows.append(row)
        if progress:
            progress(k, row)
    return header, rows


def cmd_montecarlo(cfg, trials, out_dir, threads=1, plots=True):
    header, rows = run_montecarlo(cfg, trials, threads,
                                  progress=lambda k, r: log.info("trial %d: mean|f~|=%.4g mean|g~|=%.4g", k, r[2], r[3]))
    out_dir = Path(out_dir)
    write_csv(out_dir / "montecarlo.csv", header, rows)
    data = np.array([r[2:] for r in rows], dtype=float)
    stats = []
    for name, fn in (("mean", np.mean), ("std", np.std), ("min", np.min), ("median", np.median), ("max", np.max)):
        stats.append([name] + fn(data, axis=0).tolist())
    write_csv(out_dir / "montecarlo_summary.csv", ["statistic"] + header[2:], stats)
    if plots:
        from . import plotting
        plotting.montecarlo_figure(header, rows, out_dir / "figures")
    return out_dir / "montecarlo.csv"


# -- closed loop --------------------------------------------------------------

CLOSED_LOOP_COLUMNS = ["t", "q1", "q2", "qd1", "qd2", "tau1", "tau2"]


def exact_controller(plant, Kp, Kv):
    def control(t, z):
        q, qd = z[:2], z[2:]
        return computed_torque(twolink_inertia(q, plant.params), twolink_coriolis(q, qd, plant.params),
                               q, qd, Kp, Kv)
    return control


def estimated_controller(model, Kp, Kv):
    def control(t, z):
        q, qd = z[:2], z[2:]
        try:
            M, C = recover_manipulator_terms(model, q, qd)
        except NumericalError as exc:
            raise NumericalError(f"t={t:.6g}: {exc}") from None
        return computed_torque(M, C, q, qd, Kp, Kv)
    return control


def run_closed_loop(cfg, model=None):
    """Regulate the true two-link plant; ``model=None`` uses the exact inertia and Coriolis terms."""
    plant = cfg.make_plant()
    if plant.name != "twolink":
        raise ConfigError("the closed-loop demo needs the twolink plant")
    c = cfg.control
    Kp, Kv = np.diag(c.kp), np.diag(c.kv)
    if model is None:
        ctl = exact_controller(plant, Kp, Kv)
    else:
        if (model.n, model.m) != (4, 2):
            raise ConfigError(f"model has n={model.n}, m={model.m}; the two-link demo needs n=4, m=2")
        ctl = estimated_controller(model, Kp, Kv)
    return simulate_closed_loop(plant, ctl, c.x0, c.horizon, c.dt)


def cmd_control_demo(cfg, model_path, out_dir, plots=True):
    """Closed-loop CSVs for the exact model and, when a model file is given, the estimated one."""
    if cfg.make_plant().name != "twolink":
        raise ConfigError("the closed-loop demo needs the twolink plant")
    model = None if model_path in (None, "exact") else load_model(model_path)
    runs = {"exact": run_closed_loop(cfg)}
    if model is not None:
        runs["estimated"] = run_closed_loop(cfg, model)
    out_dir = Path(out_dir)
    paths = []
    for name, (t, Z, U) in runs.items():
        path = out_dir / f"closed_loop_{name}.csv"
        write_csv(path, CLOSED_LOOP_COLUMNS, np.column_stack([t, Z, U]).tolist())
        paths.append(path)
        log.info("%s model: |x(T)| = %.4g", name, np.linalg.norm(Z[-1]))
    if plots:
        from . import plotting
        plotting.closed_loop_figure(runs, out_dir / "figures")
    return paths
