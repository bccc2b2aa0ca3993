"""Independent reference values, computed without touching fwlearn internals."""
import numpy as np

RATE_DATA = np.array([
    [0.3330, 3.6360],
    [0.1670, 3.6360],
    [0.0833, 3.2360],
    [0.0416, 2.6660],
    [0.0208, 2.1140],
    [0.0104, 1.4660],
    [0.0052, 0.8661],
])


def mm_residuals(theta, x, y):
    return theta[0] * x / (theta[1] + x) - y


def gauss_newton(x, y, theta0, iters=100):
    """Plain Gauss-Newton with step halving for the rate-law least squares."""
    theta = np.array(theta0, dtype=float)
    r = mm_residuals(theta, x, y)
    for _ in range(iters):
        d = theta[1] + x
        jac = np.column_stack([x / d, -theta[0] * x / d**2])
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            trial = theta + t * step
            rt = mm_residuals(trial, x, y)
            if trial[1] > -x.min() and rt @ rt <= r @ r:
                break
            t /= 2
        theta, r = trial, rt
        if np.max(np.abs(t * step)) < 1e-15 * (1 + np.max(np.abs(theta))):
            break
    return theta, float(r @ r / x.size)


def least_squares_optimum():
    """Best Gauss-Newton solution over a grid of starts."""
    x, y = RATE_DATA[:, 0], RATE_DATA[:, 1]
    best = None
    for a in (1.0, 3.0, 5.0, 8.0):
        for b in (0.005, 0.02, 0.1, 0.5):
            theta, mse = gauss_newton(x, y, (a, b))
            if np.all(np.isfinite(theta)) and (best is None or mse < best[1]):
                best = (theta, mse)
    return best


def quadratic_fixed_point(b, theta0, T, lam):
    """Closed-form instanton for J = |theta|^2 / 2, Phi = |theta - b|^2 / 2.

    Solves psi_T = -lam (phi(T) - b) with
    phi(t) = (theta0 - psi_T/2 e^{-T}) e^{-t} + psi_T/2 e^{t-T} and
    psi(t) = psi_T e^{t-T}. Returns callables for phi, psi and the action.
    """
    b, theta0 = np.asarray(b, float), np.asarray(theta0, float)
    c = 0.5 * (1.0 - np.exp(-2 * T))
    psi_T = lam * (b - theta0 * np.exp(-T)) / (1.0 + lam * c)

    def phi(t):
        t = np.asarray(t)[:, None]
        return (theta0 - 0.5 * psi_T * np.exp(-T)) * np.exp(-t) + 0.5 * psi_T * np.exp(t - T)

    def psi(t):
        return psi_T * np.exp(np.asarray(t)[:, None] - T)

    return phi, psi, 0.5 * float(psi_T @ psi_T) * c


def uphill_action(T, b_norm=1.0):
    """Action of phi(t) = b e^{t-T} on J = |theta|^2 / 2."""
    return b_norm**2 * (1.0 - np.exp(-2 * T))


def disk_exit_rate(r0, R, T):
    """Minimum action to reach |theta| >= R at time T from |theta0| = r0 under
    theta' = -theta + u."""
    return max(R - r0 * np.exp(-T), 0.0) ** 2 / (1.0 - np.exp(-2 * T))
