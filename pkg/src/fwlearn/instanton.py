"""Two-sweep fixed-point iteration for the minimum-action path.

Each iteration integrates the adjoint equation backward from the terminal
penalty ``psi(T) = -lambda * grad Phi(phi(T))`` and then the controlled flow
``phi' = -grad J(phi) + psi`` forward from ``theta0``. Both sweeps use Heun's
method on a shared uniform grid.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import IntegrationError, Path, write_columns
from .largedev import action

MIN_DAMPING = 1.0 / 16.0
# consecutive oscillating, non-contracting updates that trigger a damping cut
GROWTH_PATIENCE = 3
STALL_RATIO = 0.9
AITKEN_MIN = 1e-3


class ConvergenceError(RuntimeError):
    def __init__(self, result):
        self.result = result
        super().__init__(f"instanton iteration stopped with status {result.status!r} "
                         f"after {result.iterations} iterations")


@dataclass
class InstantonConfig:
    T: float
    n_steps: int
    theta0: np.ndarray
    lambda_term: float = 1.0
    tol: float = 1e-10
    max_iter: int = 500
    damping: float = 1.0
    schedule: list = None
    relaxation: str = "fixed"
    refine: int = 0

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=float)
        if not self.T > 0 or self.n_steps < 1:
            raise ValueError("need T > 0 and n_steps >= 1")
        if not self.tol > 0 or self.max_iter < 0:
            raise ValueError("need tol > 0 and max_iter >= 0")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.refine < 0:
            raise ValueError("refine must be non-negative")
        if self.relaxation not in ("fixed", "aitken"):
            raise ValueError("relaxation must be 'fixed' or 'aitken'")
        if self.lambda_term < 0:
            raise ValueError("lambda_term must be non-negative")
        if self.schedule is not None:
            self.schedule = [float(v) for v in self.schedule]
            if not self.schedule or np.any(np.diff(self.schedule) <= 0) or self.schedule[0] < 0:
                raise ValueError("schedule must be a non-empty ascending list")

    @property
    def lambdas(self):
        return self.schedule if self.schedule is not None else [float(self.lambda_term)]


@dataclass
class InstantonResult:
    phi: Path
    psi: Path
    action: float
    iterations: int
    converged: bool
    sup_changes: list
    terminal_phi: float
    lambda_term: float
    damping: float
    status: str = "converged"
    legs: list = field(default_factory=list)

    def to_dict(self):
        return {
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
            "action": self.action,
            "terminal_phi": self.terminal_phi,
            "terminal_point": self.phi.terminal.tolist(),
            "lambda_term": self.lambda_term,
            "damping": self.damping,
            "legs": self.legs,
            "sup_changes": list(self.sup_changes),
        }

    def write(self, json_path, csv_path=None):
        with open(json_path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        if csv_path is not None:
            write_columns(csv_path, self.phi.times, {"phi": self.phi.values, "psi": self.psi.values})


@dataclass
class ControlReport:
    control_cost: float
    action: float
    cost_action_gap: float
    stationarity_residual: float
    terminal_gap: float = None

    def to_dict(self):
        return dict(self.__dict__)


def backward_sweep(spec, phi, lambda_term, event):
    """Adjoint ``psi' = Jac(grad J)(phi)^T psi`` from ``psi(T) = -lambda grad Phi(phi(T))``."""
    h = phi.h
    p = phi.dim
    N = phi.n_steps
    psi = np.empty_like(phi.values)
    psi[N] = -lambda_term * event.target.grad(phi.values[N])
    At = np.swapaxes(spec.hess(phi.values), -1, -2)
    # Heun step from t_{k+1} back to t_k as one linear map per interval
    eye = np.eye(p)
    M = eye - 0.5 * h * (At[1:] + At[:-1]) + 0.5 * h * h * (At[:-1] @ At[1:])
    cur = psi[N]
    for k in range(N - 1, -1, -1):
        cur = M[k] @ cur
        psi[k] = cur
    if not np.all(np.isfinite(psi)):
        bad = np.nonzero(~np.all(np.isfinite(psi), axis=1))[0]
        raise IntegrationError(int(N - bad.max()))
    return Path(phi.T, psi)


def forward_sweep(spec, psi, theta0):
    """Controlled flow ``phi' = -grad J(phi) + psi(t)`` from ``phi(0) = theta0``."""
    h = psi.h
    u = psi.values
    grad = spec.grad
    out = np.empty_like(u)
    half = 0.5 * h
    cur = np.array(theta0, dtype=float)
    out[0] = cur
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(psi.n_steps):
            f0 = u[k] - grad(cur)
            cur = cur + half * (f0 + u[k + 1] - grad(cur + h * f0))
            out[k + 1] = cur
    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():
        raise IntegrationError(int(np.argmax(bad)))
    return Path(psi.T, out)


def free_path(spec, theta0, T, n_steps):
    """Uncontrolled flow on the sweep integrator; the zero-action anchor."""
    return forward_sweep(spec, Path(T, np.zeros((n_steps + 1, len(theta0)))), theta0)


class _Diverging(Exception):
    pass


def _iterate(spec, event, start, lam, cfg, alpha):
    """Relaxed Picard iteration for one penalty weight.

    Returns ``(phi, iterations, converged, changes, alpha)``. Raises
    ``_Diverging`` when a sweep blows up or when successive updates flip
    sign while growing (or, under fixed relaxation, while shrinking by less
    than ``STALL_RATIO``) for ``GROWTH_PATIENCE`` iterations in a row.
    """
    aitken = cfg.relaxation == "aitken"
    phi = start
    changes = []
    prev_step = prev_res = None
    growing = stalled = 0
    for it in range(1, cfg.max_iter + 1):
        try:
            psi = backward_sweep(spec, phi, lam, event)
            new = forward_sweep(spec, psi, cfg.theta0)
        except IntegrationError as exc:
            raise _Diverging(str(exc)) from None
        res = new.values - phi.values
        if aitken and prev_res is not None:
            # Irons-Tuck update of the relaxation factor
            dres = res - prev_res
            denom = np.vdot(dres, dres)
            if denom > 0:
                omega = -alpha * np.vdot(prev_res, dres) / denom
                # a non-positive estimate means the iterate is leaving a repelling point
                alpha = float(np.clip(omega, AITKEN_MIN, 1.0)) if omega > 0 else 1.0
        step = res if alpha == 1.0 else alpha * res
        change = float(np.max(np.linalg.norm(step, axis=1)))
        changes.append(change)
        if not np.isfinite(change):
            raise _Diverging("non-finite update")
        phi = Path(cfg.T, new.values if alpha == 1.0 else phi.values + step)
        if change <= cfg.tol:
            return phi, it, True, changes, alpha
        if prev_step is not None:
            # monotone growth is allowed: it is how the path escapes a repelling point
            ratio = change / changes[-2]
            flipped = np.vdot(step, prev_step) < 0
            growing = growing + 1 if flipped and ratio > 1.0 else 0
            stalled = stalled + 1 if flipped and ratio > STALL_RATIO and not aitken else 0
            if growing >= GROWTH_PATIENCE or stalled >= GROWTH_PATIENCE:
                raise _Diverging("updates oscillating without contraction")
        prev_step, prev_res = step, res
    return phi, cfg.max_iter, False, changes, alpha


def _leg(spec, event, start, lam, cfg, alpha):
    """Solve for one penalty weight, halving the damping on divergence."""
    while True:
        try:
            phi, its, ok, changes, used = _iterate(spec, event, start, lam, cfg, alpha)
            return phi, its, ok, changes, alpha, used, ("converged" if ok else "max_iter")
        except _Diverging:
            if alpha / 2 < MIN_DAMPING:
                return start, 0, False, [], alpha, alpha, "diverged"
            alpha /= 2


def solve_instanton(spec, event, cfg, start=None):
    """Minimum-action path toward ``event`` for the training objective ``spec``.

    With a continuation ``schedule`` each penalty weight is warm-started from
    the previous solution, and the sweep stops at the first weight whose
    terminal point satisfies ``event`` (when it has a threshold); ``refine``
    bisection steps then pull the weight back toward the event boundary. A
    diverging leg is restarted with half the damping, down to ``MIN_DAMPING``.
    """
    phi = start if start is not None else free_path(spec, cfg.theta0, cfg.T, cfg.n_steps)
    alpha = float(cfg.damping)
    total = 0
    all_changes = []
    legs = []
    status = "converged" if cfg.max_iter > 0 else "max_iter"
    targeted = cfg.schedule is not None and event.zeta is not None
    hit = lambda path: event.target.value(path.terminal) <= event.zeta

    def run(phi, lam, alpha):
        nonlocal total
        phi, its, ok, changes, alpha, used, leg_status = _leg(spec, event, phi, lam, cfg, alpha)
        total += its
        all_changes.extend(changes)
        legs.append({"lambda_term": lam, "iterations": its, "converged": ok, "damping": used})
        if cfg.relaxation == "aitken":
            alpha = used
        return phi, ok, alpha, leg_status

    lam, below = cfg.lambdas[0], 0.0
    reached = False
    for lam in cfg.lambdas:
        phi, ok, alpha, leg_status = run(phi, lam, alpha)
        if not ok:
            status = leg_status
            break
        if targeted and hit(phi):
            reached = True
            break
        below = lam

    if reached and cfg.refine:
        above = lam
        for _ in range(cfg.refine):
            mid = 0.5 * (below + above)
            trial, ok, alpha_t, leg_status = run(phi, mid, alpha)
            if not ok:
                break
            if hit(trial):
                above, phi, alpha = mid, trial, alpha_t
            else:
                below = mid
        lam = above

    psi = backward_sweep(spec, phi, lam, event)
    return InstantonResult(
        phi=phi,
        psi=psi,
        action=action(spec, phi).action,
        iterations=total,
        converged=status == "converged",
        sup_changes=all_changes,
        terminal_phi=float(event.target.value(phi.terminal)),
        lambda_term=lam,
        damping=alpha,
        status=status,
        legs=legs,
    )


def verify_control(spec, result, event=None):
    """Compare the control cost of ``u = psi`` with the action of ``phi``."""
    psi = result.psi.values
    h = result.psi.h
    mid = 0.5 * (psi[1:] + psi[:-1])
    cost = 0.5 * h * float(np.sum(mid * mid))
    act = action(spec, result.phi).action
    u = result.psi.values
    gap = None
    if event is not None and event.zeta is not None and np.isfinite(event.zeta):
        gap = abs(float(event.target.value(result.phi.terminal)) - event.zeta)
    return ControlReport(
        control_cost=cost,
        action=act,
        cost_action_gap=abs(cost - act),
        stationarity_residual=float(np.max(np.abs(u - psi))),
        terminal_gap=gap,
    )
