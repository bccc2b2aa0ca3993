"""Models, datasets and the empirical-risk objectives that drive the dynamics.

Every objective exposes ``value``, ``grad`` and ``hess`` that accept a
parameter array of shape ``(p,)`` or a stack of shape ``(..., p)``, so whole
paths or ensembles can be evaluated in one call.
"""
import csv
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

DENOMINATOR_GUARD = 1e-12
_FD_SCALE = np.cbrt(np.finfo(float).eps)


class DomainError(ValueError):
    """Raised when a model is evaluated where it is undefined."""


@dataclass(frozen=True)
class Dataset:
    """Observation pairs ``(x_i, y_i)`` tagged as training or testing data."""

    x: np.ndarray
    y: np.ndarray
    role: str = "train"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-D arrays of equal length")
        if x.size == 0:
            raise ValueError("dataset is empty")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.x.size

    @classmethod
    def from_csv(cls, path, role="train"):
        """Read a ``x,y`` CSV file (header required)."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0]] != ["x", "y"]:
            raise ValueError(f"{path}: expected header 'x,y'")
        body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
        try:
            data = np.array([[float(a), float(b)] for a, b in body])
        except ValueError as exc:
            raise ValueError(f"{path}: malformed row ({exc})") from None
        if data.size == 0:
            raise ValueError(f"{path}: no observations")
        return cls(data[:, 0], data[:, 1], role)

    @classmethod
    def rate_data(cls, role="train"):
        """The seven substrate-concentration / rate observations of the benchmark."""
        ref = resources.files("fwlearn") / "data" / "rate_data.csv"
        with resources.as_file(ref) as path:
            return cls.from_csv(path, role)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y"])
            for a, b in zip(self.x, self.y):
                writer.writerow([repr(float(a)), repr(float(b))])

    def subset(self, indices, role=None):
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.x[idx], self.y[idx], role or self.role)

    def resample(self, rng):
        """Bootstrap resample with replacement, same size."""
        idx = rng.integers(0, len(self), size=len(self))
        return self.subset(idx)

    def with_outputs(self, y):
        return Dataset(self.x, y, self.role)


class MichaelisMenten:
    """Saturating rate law ``h(w) = theta_0 * w / (theta_1 + w)``."""

    n_params = 2

    def _denominator(self, theta, x):
        d = theta[..., 1, None] + x
        if np.abs(d).min() < DENOMINATOR_GUARD:
            raise DomainError("theta_1 + x is within the pole guard band")
        return d

    def predict(self, theta, x):
        theta = np.asarray(theta, dtype=float)
        return theta[..., 0, None] * x / self._denominator(theta, x)

    def jacobian(self, theta, x):
        """Derivatives of the prediction w.r.t. theta, shape ``(..., n, 2)``."""
        return self.predict_and_jacobian(theta, x)[1]

    def predict_and_jacobian(self, theta, x):
        theta = np.asarray(theta, dtype=float)
        q = x / self._denominator(theta, x)
        a = theta[..., 0, None]
        h = a * q
        jac = np.empty(q.shape + (2,))
        jac[..., 0] = q
        jac[..., 1] = -h / (theta[..., 1, None] + x)
        return h, jac


@dataclass
class CustomModel:
    """User-supplied model; ``jacobian`` must return shape ``(..., n, p)``."""

    predict_fn: object
    jacobian_fn: object
    n_params: int

    def predict(self, theta, x):
        return self.predict_fn(np.asarray(theta, dtype=float), x)

    def jacobian(self, theta, x):
        return self.jacobian_fn(np.asarray(theta, dtype=float), x)


def fd_jacobian(fun, theta):
    """Central-difference Jacobian of a vector field, batched over leading axes.

    Returns ``J[..., i, j] = d fun_i / d theta_j``.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[-1]
    cols = []
    for j in range(p):
        step = _FD_SCALE * np.maximum(1.0, np.abs(theta[..., j]))
        e = np.zeros_like(theta)
        e[..., j] = step
        # exact representable step, so the divisor matches the actual spacing
        hi, lo = theta + e, theta - e
        span = hi[..., j] - lo[..., j]
        cols.append((fun(hi) - fun(lo)) / span[..., None])
    return np.stack(cols, axis=-1)


class EmpiricalRisk:
    """Mean squared error of ``model`` on a dataset plus ``reg_weight * |theta|^2``.

    ``x`` and ``y`` may carry a leading batch axis (one dataset per
    trajectory), in which case ``theta`` must carry the same batch axis.
    """

    def __init__(self, model, data, reg_weight=0.0):
        if reg_weight < 0:
            raise ValueError("reg_weight must be non-negative")
        self.model = model
        self.reg_weight = float(reg_weight)
        if isinstance(data, Dataset):
            self.data = data
            self.x, self.y = data.x, data.y
        else:
            self.data = None
            self.x, self.y = (np.asarray(a, dtype=float) for a in data)
        if self.x.shape[-1] == 0:
            raise ValueError("dataset is empty")

    @property
    def n_params(self):
        return self.model.n_params

    def residuals(self, theta):
        return self.model.predict(theta, self.x) - self.y

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.residuals(theta)
        val = np.mean(r * r, axis=-1)
        if self.reg_weight:
            val = val + self.reg_weight * np.sum(theta * theta, axis=-1)
        return val

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        if hasattr(self.model, "predict_and_jacobian"):
            pred, jac = self.model.predict_and_jacobian(theta, self.x)
        else:
            pred, jac = self.model.predict(theta, self.x), self.model.jacobian(theta, self.x)
        r = pred - self.y
        g = (2.0 / self.x.shape[-1]) * np.sum(r[..., None] * jac, axis=-2)
        if self.reg_weight:
            g = g + 2.0 * self.reg_weight * theta
        return g

    def hess(self, theta):
        return fd_jacobian(self.grad, theta)


@dataclass
class QuadraticObjective:
    """``0.5 * (theta - c)^T A (theta - c)``; an analytic test problem."""

    center: np.ndarray
    scale: np.ndarray = field(default=None)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        p = self.center.size
        self.scale = np.eye(p) if self.scale is None else np.asarray(self.scale, dtype=float)
        if self.scale.shape != (p, p):
            raise ValueError("scale must be a p x p matrix")
        self._sym = 0.5 * (self.scale + self.scale.T)

    @property
    def n_params(self):
        return self.center.size

    def value(self, theta):
        d = np.asarray(theta, dtype=float) - self.center
        return 0.5 * np.sum(d * (d @ self.scale.T), axis=-1)

    def grad(self, theta):
        return (np.asarray(theta, dtype=float) - self.center) @ self._sym

    def hess(self, theta):
        return fd_jacobian(self.grad, theta)


def predict(model, theta, x):
    return model.predict(theta, x)


def objective(spec, theta):
    return spec.value(theta)


def grad_objective(spec, theta):
    return spec.grad(theta)


def hess_objective(spec, theta):
    """Jacobian of the gradient by central differences of the analytic gradient."""
    return fd_jacobian(spec.grad, theta)


def target_phi(test_data, model, theta):
    """Unregularized mean squared error on the test data."""
    return EmpiricalRisk(model, test_data).value(theta)


def grad_target_phi(test_data, model, theta):
    return EmpiricalRisk(model, test_data).grad(theta)


@dataclass
class GaussianBump:
    """``exp(-|theta - c|^2 / (2 w^2))``; its sublevel sets are disk exteriors."""

    center: np.ndarray
    width: float = 1.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if not self.width > 0:
            raise ValueError("width must be positive")

    @property
    def n_params(self):
        return self.center.size

    def value(self, theta):
        d = np.asarray(theta, dtype=float) - self.center
        return np.exp(-0.5 * np.sum(d * d, axis=-1) / self.width**2)

    def grad(self, theta):
        d = np.asarray(theta, dtype=float) - self.center
        return -d / self.width**2 * self.value(theta)[..., None]

    def hess(self, theta):
        return fd_jacobian(self.grad, theta)

    def radius(self, zeta):
        """Radius of the disk outside which ``value <= zeta``."""
        return self.width * np.sqrt(-2.0 * np.log(zeta))
