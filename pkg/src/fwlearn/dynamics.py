"""Deterministic gradient flow, its small-noise Euler-Maruyama counterpart,
bootstrap ensembles and the data-perturbation consistency probe."""
import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._rng import stream
from .problem import EmpiricalRisk

NOISE_CHUNK = 4096


class IntegrationError(RuntimeError):
    """A trajectory left the finite numbers."""

    def __init__(self, step, trajectory=None):
        self.step = step
        self.trajectory = trajectory
        where = f" (trajectory {trajectory})" if trajectory is not None else ""
        super().__init__(f"integration diverged at step {step}{where}")


@dataclass
class Path:
    """Values on the uniform grid ``t_k = k * T / n_steps``, shape ``(n_steps + 1, p)``."""

    T: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 2:
            raise ValueError("path needs at least two grid points")
        if not self.T > 0:
            raise ValueError("horizon must be positive")

    @property
    def n_steps(self):
        return self.values.shape[0] - 1

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def h(self):
        return self.T / self.n_steps

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.n_steps + 1)

    @property
    def terminal(self):
        return self.values[-1]

    def to_csv(self, path, prefix="theta"):
        write_columns(path, self.times, {prefix: self.values})

    @classmethod
    def from_csv(cls, path, dim=None):
        """Read a ``t,theta_0,...`` file; the grid must be uniform from 0."""
        header, data = read_columns(path)
        if header[0] != "t" or len(header) < 2:
            raise ValueError(f"{path}: expected header 't,theta_0,...'")
        if data.shape[0] < 2:
            raise ValueError(f"{path}: need at least two rows")
        t = data[:, 0]
        T = t[-1]
        n = t.size - 1
        if t[0] != 0.0 or not np.allclose(t, np.linspace(0.0, T, n + 1), rtol=0, atol=1e-9 * max(1.0, T)):
            raise ValueError(f"{path}: time grid is not uniform from 0")
        values = data[:, 1:]
        if dim is not None and values.shape[1] != dim:
            raise DimensionMismatch(f"{path}: path has dimension {values.shape[1]}, problem has {dim}")
        return cls(T, values)


class DimensionMismatch(ValueError):
    pass


def write_columns(path, t, blocks):
    """Write ``t`` plus named 2-D blocks as ``t,name_0,name_1,...`` columns."""
    header = ["t"]
    cols = [np.asarray(t)[:, None]]
    for name, arr in blocks.items():
        header += [f"{name}_{i}" for i in range(arr.shape[1])]
        cols.append(arr)
    table = np.hstack(cols)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_columns(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite entries")
    return header, data


@dataclass
class SdeConfig:
    epsilon: float
    T: float
    n_steps: int
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if not self.T > 0 or self.n_steps < 1:
            raise ValueError("need T > 0 and n_steps >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative 64-bit integer")

    @property
    def h(self):
        return self.T / self.n_steps


def gradient_flow(spec, theta0, T, n_steps, stop_tol=0.0):
    """Explicit Euler for ``theta' = -grad J(theta)``.

    Stops once ``|grad J| <= stop_tol`` and pads the rest of the path with the
    fixed point. Returns ``(path, steady_state)``.
    """
    if not T > 0 or n_steps < 1 or stop_tol < 0:
        raise ValueError("need T > 0, n_steps >= 1 and stop_tol >= 0")
    h = T / n_steps
    theta = np.array(theta0, dtype=float)
    out = np.empty((n_steps + 1, theta.size))
    out[0] = theta
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            g = spec.grad(theta)
            if np.sqrt(g @ g) <= stop_tol:
                out[k + 1:] = theta
                break
            theta = theta - h * g
            if not np.all(np.isfinite(theta)):
                raise IntegrationError(k + 1)
            out[k + 1] = theta
    return Path(T, out), out[-1].copy()


def euler_maruyama(spec, cfg, theta0, index=0):
    """One Euler-Maruyama path of ``d theta = -grad J dt + sqrt(eps) dW``.

    Noise comes from stream ``index`` of ``cfg.seed``; ``eps = 0`` reproduces
    :func:`gradient_flow` bit for bit.
    """
    h = cfg.h
    sd = np.sqrt(cfg.epsilon * h)
    theta = np.array(theta0, dtype=float)
    p = theta.size
    out = np.empty((cfg.n_steps + 1, p))
    out[0] = theta
    rng = stream(cfg.seed, index)
    k = 0
    while k < cfg.n_steps:
        m = min(NOISE_CHUNK, cfg.n_steps - k)
        xi = rng.standard_normal((m, p)) if cfg.epsilon > 0 else None
        for j in range(m):
            theta = theta - h * spec.grad(theta)
            if xi is not None:
                theta = theta + sd * xi[j]
            k += 1
            if not np.all(np.isfinite(theta)):
                raise IntegrationError(k)
            out[k] = theta
    return Path(cfg.T, out)


def _integrate_batch(grad, theta0, h, n_steps, eps, rngs, first_index=0):
    """Euler-Maruyama for a stack of trajectories; returns terminal states.

    Each row owns ``rngs[i]``; noise is drawn per row in step order so a
    row's result does not depend on which other rows share the batch.
    """
    theta = np.array(theta0, dtype=float)
    B, p = theta.shape
    sd = np.sqrt(eps * h)
    k = 0
    while k < n_steps:
        m = min(NOISE_CHUNK, n_steps - k)
        if eps > 0:
            xi = np.stack([r.standard_normal((m, p)) for r in rngs], axis=1)
        for j in range(m):
            theta = theta - h * grad(theta)
            if eps > 0:
                theta = theta + sd * xi[j]
            k += 1
            bad = ~np.all(np.isfinite(theta), axis=1)
            if bad.any():
                raise IntegrationError(k, first_index + int(np.argmax(bad)))
    return theta


@dataclass
class EnsembleStats:
    terminal_samples: np.ndarray
    epsilon: float
    seed: int

    def __post_init__(self):
        self.terminal_samples = np.asarray(self.terminal_samples, dtype=float)

    @property
    def n(self):
        return self.terminal_samples.shape[0]

    @property
    def means(self):
        return self.terminal_samples.mean(axis=0)

    @property
    def variances(self):
        return self.terminal_samples.var(axis=0, ddof=1)

    def to_dict(self, include_samples=False):
        d = {
            "n": self.n,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }
        if include_samples:
            d["terminal_samples"] = self.terminal_samples.tolist()
        return d

    def to_json(self, path, include_samples=False):
        with open(path, "w") as fh:
            json.dump(self.to_dict(include_samples), fh, indent=2)
            fh.write("\n")


def _blocks(N, threads):
    threads = max(1, min(int(threads), N))
    edges = np.linspace(0, N, threads + 1).astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def ensemble(spec, cfg, theta0, N, bootstrap=False, threads=1):
    """Terminal states of ``N`` independent trajectories.

    Trajectory ``i`` draws from stream ``i`` of ``cfg.seed``: first its
    bootstrap resample (if requested), then its Brownian increments. The
    result is identical for any ``threads``.
    """
    if N < 2:
        raise ValueError("ensemble needs N >= 2")
    if bootstrap and not isinstance(spec, EmpiricalRisk):
        raise TypeError("bootstrap requires a data-driven objective")
    theta0 = np.asarray(theta0, dtype=float)

    def run(block):
        a, b = block
        rngs = [stream(cfg.seed, i) for i in range(a, b)]
        batch_spec = spec
        if bootstrap:
            n = spec.x.shape[-1]
            idx = np.stack([r.integers(0, n, size=n) for r in rngs])
            batch_spec = EmpiricalRisk(spec.model, (spec.x[idx], spec.y[idx]), spec.reg_weight)
        start = np.tile(theta0, (b - a, 1))
        return _integrate_batch(batch_spec.grad, start, cfg.h, cfg.n_steps, cfg.epsilon, rngs, a)

    blocks = _blocks(N, threads)
    if len(blocks) == 1:
        parts = [run(blocks[0])]
    else:
        with ThreadPoolExecutor(len(blocks)) as pool:
            parts = list(pool.map(run, blocks))
    return EnsembleStats(np.concatenate(parts), cfg.epsilon, cfg.seed)


def consistency_probe(spec, cfg, theta0, deltas):
    """Sup-in-time deviation between the SDE on the training data and on
    data whose outputs are shifted by ``delta * u`` (``|u|_2 = 1``).

    Both systems are driven by the same Brownian increments. Returns a list
    of ``(delta, sup_deviation)``.
    """
    if not isinstance(spec, EmpiricalRisk):
        raise TypeError("consistency probe requires a data-driven objective")
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas):
        raise ValueError("deltas must be non-negative")
    n = spec.x.shape[-1]
    u = stream(cfg.seed, 1).standard_normal(n)
    u /= np.linalg.norm(u)
    B = len(deltas) + 1
    ys = np.vstack([spec.y] + [spec.y + d * u for d in deltas])
    xs = np.broadcast_to(spec.x, ys.shape)
    grad = EmpiricalRisk(spec.model, (xs, ys), spec.reg_weight).grad

    rng = stream(cfg.seed, 0)
    h = cfg.h
    sd = np.sqrt(cfg.epsilon * h)
    p = len(theta0)
    theta = np.tile(np.asarray(theta0, dtype=float), (B, 1))
    sup = np.zeros(B - 1)
    k = 0
    while k < cfg.n_steps:
        m = min(NOISE_CHUNK, cfg.n_steps - k)
        xi = rng.standard_normal((m, p))
        for j in range(m):
            theta = theta - h * grad(theta)
            if cfg.epsilon > 0:
                theta = theta + sd * xi[j]
            k += 1
            if not np.all(np.isfinite(theta)):
                raise IntegrationError(k)
            dev = np.linalg.norm(theta[1:] - theta[0], axis=1)
            np.maximum(sup, dev, out=sup)
    return list(zip(deltas, sup.tolist()))


def descent_step_bound(spec, points):
    """``2 / L`` with ``L`` the largest Hessian eigenvalue over ``points``.

    Euler steps no larger than this decrease ``J`` wherever the curvature
    stays below ``L``.
    """
    H = spec.hess(np.atleast_2d(points))
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    lmax = np.max(np.linalg.eigvalsh(H))
    return np.inf if lmax <= 0 else 2.0 / lmax


def descent_violations(spec, path, rtol=1e-12):
    """Indices ``k`` where ``J(theta_{k+1}) > J(theta_k)`` by more than rounding."""
    J = spec.value(path.values)
    return np.nonzero(np.diff(J) > rtol * np.abs(J[:-1]))[0]
