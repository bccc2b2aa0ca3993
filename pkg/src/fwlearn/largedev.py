"""Freidlin-Wentzell action, Hamiltonian and rare-event probability estimates."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._rng import stream
from .dynamics import _blocks, _integrate_batch

MC_BATCH = 2048


@dataclass
class ActionReport:
    action: float
    contributions: np.ndarray
    rule: str = "midpoint"

    def to_dict(self, include_contributions=False):
        d = {"action": self.action, "rule": self.rule}
        if include_contributions:
            d["contributions"] = np.asarray(self.contributions).tolist()
        return d


@dataclass
class RareEvent:
    """The terminal event ``target(theta_T) <= zeta``.

    ``target`` is any objective with ``value``/``grad`` (typically the test
    loss). ``zeta=None`` means no threshold: only the penalty direction
    ``grad target`` is used.
    """

    target: object
    zeta: float = None

    def occurs(self, theta):
        if self.zeta is None:
            raise ValueError("event has no threshold")
        return self.target.value(theta) <= self.zeta


def lagrangian(spec, phi, phidot):
    """``0.5 * |phidot + grad J(phi)|^2``, batched over leading axes."""
    v = np.asarray(phidot, dtype=float) + spec.grad(phi)
    return 0.5 * np.sum(v * v, axis=-1)


def action(spec, path):
    """Midpoint-rule action of a discrete path."""
    phi = path.values
    h = path.h
    mid = 0.5 * (phi[1:] + phi[:-1])
    vel = np.diff(phi, axis=0) / h
    contrib = h * lagrangian(spec, mid, vel)
    return ActionReport(float(np.sum(contrib)), contrib)


def hamiltonian(spec, phi, psi):
    """``<-grad J(phi), psi> + 0.5 |psi|^2``, batched over leading axes."""
    psi = np.asarray(psi, dtype=float)
    return np.sum(-spec.grad(phi) * psi, axis=-1) + 0.5 * np.sum(psi * psi, axis=-1)


def el_residual(spec, path, psi_path):
    """Largest forward-difference residual of the Hamiltonian system

        phi' = -grad J(phi) + psi,   psi' = Jac(grad J)(phi)^T psi

    over interior grid points.
    """
    if path.values.shape != psi_path.values.shape or path.T != psi_path.T:
        raise ValueError("phi and psi must share the grid")
    phi, psi, h = path.values, psi_path.values, path.h
    k = slice(1, None) if path.n_steps > 1 else slice(None)
    r1 = (phi[1:] - phi[:-1]) / h + spec.grad(phi[:-1]) - psi[:-1]
    jac = spec.hess(phi[:-1])
    r2 = (psi[1:] - psi[:-1]) / h - np.einsum("kij,ki->kj", jac, psi[:-1])
    n1 = np.linalg.norm(r1[k], axis=1)
    n2 = np.linalg.norm(r2[k], axis=1)
    return float(max(n1.max(), n2.max()))


def log_prob_estimate(action_value, epsilon):
    """Leading-order ``log P ~ -S / eps``."""
    if action_value < 0 or not epsilon > 0:
        raise ValueError("need action >= 0 and epsilon > 0")
    return -action_value / epsilon


def rate_function(spec, event, cfg):
    """Action of the converged instanton for ``event`` (zero if the
    deterministic flow already ends inside the event)."""
    from .instanton import ConvergenceError, free_path, solve_instanton

    flow = free_path(spec, cfg.theta0, cfg.T, cfg.n_steps)
    if event.zeta is not None and event.target.value(flow.terminal) <= event.zeta:
        return 0.0
    result = solve_instanton(spec, event, cfg)
    if not result.converged:
        raise ConvergenceError(result)
    return result.action


def mc_hit_probability(spec, cfg, theta0, event, n_samples, threads=1):
    """Fraction of Euler-Maruyama endpoints inside the event, with its
    binomial standard error. Sample ``i`` uses stream ``i`` of ``cfg.seed``."""
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    theta0 = np.asarray(theta0, dtype=float)
    batches = [(a, min(a + MC_BATCH, n_samples)) for a in range(0, n_samples, MC_BATCH)]

    def run(block):
        a, b = block
        hits = 0
        for lo in range(a, b, MC_BATCH):
            hi = min(lo + MC_BATCH, b)
            rngs = [stream(cfg.seed, i) for i in range(lo, hi)]
            end = _integrate_batch(spec.grad, np.tile(theta0, (hi - lo, 1)),
                                   cfg.h, cfg.n_steps, cfg.epsilon, rngs, lo)
            hits += int(np.count_nonzero(event.target.value(end) <= event.zeta))
        return hits

    # whole MC batches per worker keep the batch composition thread-independent
    groups = [(batches[a][0], batches[b - 1][1]) for a, b in _blocks(len(batches), threads)]
    if len(groups) == 1:
        hits = run(groups[0])
    else:
        with ThreadPoolExecutor(len(groups)) as pool:
            hits = sum(pool.map(run, groups))
    p_hat = hits / n_samples
    return p_hat, float(np.sqrt(p_hat * (1.0 - p_hat) / n_samples))
