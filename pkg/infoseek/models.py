"""
Motion and range-measurement models.

All functions broadcast over leading axes: a state argument may be a single
vector of shape (dim,) or a stack of shape (..., dim).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from infoseek.core import DimensionError, positions

LOG_2PI = float(np.log(2.0 * np.pi))

# target dynamics: constant velocity, unit time step
CV_TRANSITION = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
CV_NOISE_GAIN = np.array([[0.5, 0.0], [0.0, 0.5], [1.0, 0.0], [0.0, 1.0]])


class CoincidentPositionsError(ValueError):
    """Range gradient requested at zero distance."""


class SingularJacobianError(ValueError):
    """Jacobian determinant of the mean transition vanishes."""


def _check_dim(x, dim, label):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (dim,):
        raise DimensionError(
            f"{label} must have trailing dimension {dim}, got {x.shape}"
        )
    return x


@dataclass(frozen=True, eq=False)
class LinearAdditive:
    """x⁺ = A x + B u + W q with q ~ N(0, sigma_q2 I).

    ``B`` is None for agents that are not controlled (targets); such agents
    only accept an all-zero control vector.
    """

    A: np.ndarray
    W: np.ndarray
    sigma_q2: float
    B: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if W.shape[0] != A.shape[0]:
            raise DimensionError(f"W has {W.shape[0]} rows, state has {A.shape[0]}")
        if self.sigma_q2 < 0:
            raise ValueError("sigma_q2 must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "W", W)
        if self.B is not None:
            B = np.atleast_2d(np.asarray(self.B, dtype=float))
            if B.shape[0] != A.shape[0]:
                raise DimensionError(f"B has {B.shape[0]} rows, state has {A.shape[0]}")
            object.__setattr__(self, "B", B)

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def noise_dim(self):
        return self.W.shape[1]

    @property
    def control_dim(self):
        return 2 if self.B is None else self.B.shape[1]

    # Jacobian determinant does not depend on (x, u)
    jacobian_constant = True

    def _control_term(self, u):
        u = _check_dim(u, self.control_dim, "control")
        if self.B is None:
            if np.any(u != 0.0):
                raise DimensionError("uncontrolled model requires a zero control")
            return 0.0
        return u @ self.B.T

    def evolve(self, x, u, q):
        x = _check_dim(x, self.state_dim, "state")
        q = _check_dim(q, self.noise_dim, "noise")
        return x @ self.A.T + self._control_term(u) + q @ self.W.T

    def mean_evolve(self, x, u):
        x = _check_dim(x, self.state_dim, "state")
        return x @ self.A.T + self._control_term(u)

    def mean_evolve_grad_u(self, x, u):
        _check_dim(x, self.state_dim, "state")
        _check_dim(u, self.control_dim, "control")
        if self.B is None:
            return np.zeros((self.state_dim, self.control_dim))
        return self.B.copy()

    def jacobian_det(self, x, u):
        return float(np.linalg.det(self.A))

    def jacobian_det_grad_u(self, x, u):
        return np.zeros(self.control_dim)

    def draw_noise(self, rng, count):
        scale = np.sqrt(self.sigma_q2)
        return rng.normal(0.0, scale, size=(count, self.noise_dim))


@dataclass(frozen=True)
class Odometry:
    """Planar pose (x1, x2, θ) driven by u = (ν, ω): turn by ω, then move ν."""

    sigma_q2: float = 0.0

    state_dim = 3
    noise_dim = 3
    control_dim = 2
    jacobian_constant = True

    def mean_evolve(self, x, u):
        x = _check_dim(x, 3, "pose")
        u = _check_dim(u, 2, "control")
        nu, omega = u[..., 0], u[..., 1]
        heading = x[..., 2] + omega
        return np.stack(
            [
                x[..., 0] + nu * np.cos(heading),
                x[..., 1] + nu * np.sin(heading),
                heading,
            ],
            axis=-1,
        )

    def evolve(self, x, u, q):
        return self.mean_evolve(x, u) + _check_dim(q, 3, "noise")

    def mean_evolve_grad_u(self, x, u):
        x = _check_dim(x, 3, "pose")
        nu, omega = _check_dim(u, 2, "control")
        heading = x[2] + omega
        return np.array(
            [
                [np.cos(heading), -nu * np.sin(heading)],
                [np.sin(heading), nu * np.cos(heading)],
                [0.0, 1.0],
            ]
        )

    def jacobian_det(self, x, u):
        return 1.0

    def jacobian_det_grad_u(self, x, u):
        return np.zeros(2)

    def draw_noise(self, rng, count):
        return rng.normal(0.0, np.sqrt(self.sigma_q2), size=(count, 3))


@dataclass(frozen=True)
class ScaledLinear:
    """x⁺ = diag(1 + u1, 1) x + u + q; Jacobian determinant 1 + u1."""

    sigma_q2: float = 0.0

    state_dim = 2
    noise_dim = 2
    control_dim = 2
    jacobian_constant = False

    def mean_evolve(self, x, u):
        x = _check_dim(x, 2, "state")
        u = _check_dim(u, 2, "control")
        scale = np.stack([1.0 + u[..., 0], np.ones_like(u[..., 0])], axis=-1)
        return x * scale + u

    def evolve(self, x, u, q):
        return self.mean_evolve(x, u) + _check_dim(q, 2, "noise")

    def mean_evolve_grad_u(self, x, u):
        x = _check_dim(x, 2, "state")
        _check_dim(u, 2, "control")
        return np.array([[x[0] + 1.0, 0.0], [0.0, 1.0]])

    def jacobian_det(self, x, u):
        return float(1.0 + np.asarray(u, dtype=float)[0])

    def jacobian_det_grad_u(self, x, u):
        return np.array([1.0, 0.0])

    def draw_noise(self, rng, count):
        return rng.normal(0.0, np.sqrt(self.sigma_q2), size=(count, 2))


def ca_motion(sigma_q2=1e-3):
    """Mobile CA: x⁺ = x + u + q."""
    eye = np.eye(2)
    return LinearAdditive(A=eye, W=eye, sigma_q2=sigma_q2, B=eye)


def target_motion(sigma_q2=1e-5):
    """Target: constant-velocity model x⁺ = G x + W q."""
    return LinearAdditive(A=CV_TRANSITION, W=CV_NOISE_GAIN, sigma_q2=sigma_q2)


def evolve(model, x, u, q):
    return model.evolve(x, u, q)


def mean_evolve(model, x, u):
    return model.mean_evolve(x, u)


def mean_evolve_grad_u(model, x, u):
    return model.mean_evolve_grad_u(x, u)


def jacobian_det(model, x, u):
    return model.jacobian_det(x, u)


@dataclass(frozen=True)
class MeasModel:
    """Range noise with variance sigma0_2 up to d0 and polynomial growth beyond."""

    sigma0_2: float = 50.0
    d0: float = 50.0
    kappa: float = 2.0

    def __post_init__(self):
        if self.sigma0_2 <= 0:
            raise ValueError("sigma0_2 must be positive")
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


def distance(x_l, x_k):
    diff = positions(x_l) - positions(x_k)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def noise_var(meas: MeasModel, dist):
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < 0):
        raise ValueError("distance must be nonnegative")
    if meas.kappa == 0:
        return np.where(dist <= meas.d0, meas.sigma0_2, 2.0 * meas.sigma0_2)
    excess = np.maximum(dist / meas.d0 - 1.0, 0.0)
    return meas.sigma0_2 * (excess**meas.kappa + 1.0)


def noise_var_grad(meas: MeasModel, dist):
    """d σ² / d dist; zero in the flat region."""
    dist = np.asarray(dist, dtype=float)
    excess = np.maximum(dist / meas.d0 - 1.0, 0.0)
    if meas.kappa == 0:
        return np.zeros_like(excess)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = meas.sigma0_2 * meas.kappa * excess ** (meas.kappa - 1.0) / meas.d0
    return np.where(excess > 0.0, slope, 0.0)


def noise_stddev(meas: MeasModel, dist):
    sd = np.sqrt(noise_var(meas, dist))
    return float(sd) if np.ndim(sd) == 0 else sd


def measure(meas: MeasModel, x_l, x_k, rng):
    """Noisy range between two states (or stacks of states)."""
    dist = distance(x_l, x_k)
    noisy = dist + np.sqrt(noise_var(meas, dist)) * rng.standard_normal(np.shape(dist))
    return float(noisy) if np.ndim(noisy) == 0 else noisy


def log_likelihood(meas: MeasModel, y, x_l, x_k):
    dist = distance(x_l, x_k)
    var = noise_var(meas, dist)
    resid = np.asarray(y, dtype=float) - dist
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * resid * resid / var


def likelihood(meas: MeasModel, y, x_l, x_k):
    value = np.exp(log_likelihood(meas, y, x_l, x_k))
    return float(value) if np.ndim(value) == 0 else value


def log_likelihood_grad_xl(meas: MeasModel, y, x_l, x_k):
    """Score ∂ log f(y | x_l, x_k) / ∂x_l, zero beyond the position axes."""
    x_l = np.asarray(x_l, dtype=float)
    diff = positions(x_l) - positions(x_k)
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    if np.any(dist == 0.0):
        raise CoincidentPositionsError("range gradient is singular at zero distance")
    var = noise_var(meas, dist)
    resid = np.asarray(y, dtype=float) - dist
    d_logf_d_dist = resid / var + (resid * resid / var - 1.0) / (2.0 * var) * (
        noise_var_grad(meas, dist)
    )
    grad_pos = (d_logf_d_dist / dist)[..., None] * diff
    shape = np.broadcast_shapes(x_l.shape, grad_pos.shape[:-1] + x_l.shape[-1:])
    grad = np.zeros(shape)
    grad[..., :2] = grad_pos
    return grad


def likelihood_grad_xl(meas: MeasModel, y, x_l, x_k):
    score = log_likelihood_grad_xl(meas, y, x_l, x_k)
    return np.exp(log_likelihood(meas, y, x_l, x_k))[..., None] * score
