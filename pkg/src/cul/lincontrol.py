# src/cul/lincontrol.py
"""
Model-based controller (MBC): a discrete LTI map from tracking error to force,

    u_k   = C_c x^c_k + D_c e_k
    x^c+  = A_c x^c_k + B_c e_k

synthesized as an integral-augmented LQG design on the nominal linear model.
"""

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from common.serialization import dump_matrices, load_matrices
from cul.errors import NoConvergenceError, UnstableClosedLoopError

logger = logging.getLogger(__name__)


@dataclass
class SynthesisWeights:
    output_weight: float = 1e4
    integral_weight: float = 1e4
    input_weight: float = 1e-2
    process_noise: float = 1e-6
    measurement_noise: float = 1e-8

    def validate(self):
        if self.output_weight < 0 or self.integral_weight < 0:
            raise ValueError("state weights must be >= 0")
        if self.input_weight <= 0 or self.process_noise <= 0 or self.measurement_noise <= 0:
            raise ValueError("input weight and noise covariances must be > 0")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class StateSpaceController:
    a_c: np.ndarray
    b_c: np.ndarray
    c_c: np.ndarray
    d_c: np.ndarray
    dt: float
    x_c: np.ndarray = field(default=None)

    def __post_init__(self):
        self.a_c = np.atleast_2d(np.asarray(self.a_c, dtype=float))
        self.b_c = np.atleast_2d(np.asarray(self.b_c, dtype=float))
        self.c_c = np.atleast_2d(np.asarray(self.c_c, dtype=float))
        self.d_c = np.atleast_2d(np.asarray(self.d_c, dtype=float))
        nc = self.a_c.shape[0]
        if self.a_c.shape != (nc, nc) or self.b_c.shape[0] != nc or self.c_c.shape[1] != nc:
            raise ValueError(
                f"inconsistent controller dimensions: A_c {self.a_c.shape}, "
                f"B_c {self.b_c.shape}, C_c {self.c_c.shape}, D_c {self.d_c.shape}"
            )
        if self.d_c.shape != (self.c_c.shape[0], self.b_c.shape[1]):
            raise ValueError(f"D_c shape {self.d_c.shape} does not match C_c/B_c")
        if self.x_c is None:
            self.x_c = np.zeros(nc)
        else:
            self.x_c = np.asarray(self.x_c, dtype=float).copy()

    @property
    def order(self):
        return self.a_c.shape[0]

    def reset(self):
        self.x_c = np.zeros(self.order)

    def copy(self):
        return StateSpaceController(self.a_c.copy(), self.b_c.copy(), self.c_c.copy(),
                                    self.d_c.copy(), self.dt, self.x_c.copy())

    def output(self, e):
        """u for error e without advancing the internal state."""
        return float(self.c_c[0] @ self.x_c + self.d_c[0, 0] * e)

    def step(self, e):
        return mbc_step(self, e)

    @classmethod
    def zeros_like(cls, other):
        return cls(np.zeros_like(other.a_c), np.zeros_like(other.b_c),
                   np.zeros_like(other.c_c), np.zeros_like(other.d_c), other.dt)


def mbc_step(c, e):
    """Output first, then state update."""
    u = float(c.c_c[0] @ c.x_c + c.d_c[0, 0] * e)
    c.x_c = c.a_c @ c.x_c + c.b_c[:, 0] * e
    return u


def riccati_residual(a, b, q, r, p):
    bp = b.T @ p
    rhs = a.T @ p @ a - a.T @ p @ b @ np.linalg.solve(r + bp @ b, bp @ a) + q
    return np.linalg.norm(p - rhs)


def solve_dare(a, b, q, r, max_iter=100, tol=1e-14):
    """
    Stabilizing solution of P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q.

    Structured doubling: A_{k+1} = A_k W^-1 A_k, G_{k+1} = G_k + A_k W^-1 G_k A_k',
    H_{k+1} = H_k + A_k' H_k W^-1 A_k with W = I + G_k H_k; H_k converges
    quadratically to P.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    n = a.shape[0]
    if b.shape[0] != n or q.shape != (n, n) or r.shape != (b.shape[1], b.shape[1]):
        raise ValueError(f"inconsistent shapes A{a.shape} B{b.shape} Q{q.shape} R{r.shape}")

    eye = np.eye(n)
    ak = a.copy()
    gk = b @ np.linalg.solve(r, b.T)
    hk = q.copy()
    for it in range(1, max_iter + 1):
        w = eye + gk @ hk
        try:
            w_inv_a = np.linalg.solve(w, ak)
            w_inv_g = np.linalg.solve(w, gk)
        except np.linalg.LinAlgError as e:
            raise NoConvergenceError(f"doubling step {it}: singular I + GH") from e
        h_next = hk + ak.T @ hk @ w_inv_a
        gk = gk + ak @ w_inv_g @ ak.T
        ak = ak @ w_inv_a
        h_next = 0.5 * (h_next + h_next.T)
        gk = 0.5 * (gk + gk.T)
        if not np.all(np.isfinite(h_next)):
            raise NoConvergenceError(f"doubling diverged at step {it} (system not stabilizable?)")
        delta = np.linalg.norm(h_next - hk)
        hk = h_next
        if delta <= tol * (1.0 + np.linalg.norm(hk)):
            break
    else:
        raise NoConvergenceError(f"no convergence within {max_iter} doubling steps")

    p = 0.5 * (hk + hk.T)
    k = np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
    radius = np.max(np.abs(np.linalg.eigvals(a - b @ k)))
    if radius >= 1.0:
        raise NoConvergenceError(f"solution is not stabilizing (radius {radius:.6f})")
    logger.debug(f"solve_dare: n={n}, steps={it}, residual={riccati_residual(a, b, q, r, p):.3e}")
    return p


def lqr_gain(a, b, q, r):
    p = solve_dare(a, b, q, r)
    return np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a), p


def kalman_gain(a, c, w, v):
    """Predictor-form steady-state gain L: x^+ = A x^ + B u + L (y - C x^)."""
    s = solve_dare(a.T, c.T, w, v)
    return np.linalg.solve(c @ s @ c.T + v, c @ s @ a.T).T, s


def synthesize_mbc(model, weights=None):
    """
    Integral-augmented LQG servo on the nominal model.

    The controller sees only e = y^r - y. It integrates e (z+ = z + e) for zero
    steady-state error, estimates the plant state from -e with a predictor
    observer, and feeds back u = -K_x x^ - K_z z.
    """
    weights = (weights or SynthesisWeights()).validate()
    a, b, c = model.a, model.b2, model.c
    n = a.shape[0]

    # augmented regulator design (y^r = 0 so e = -C x)
    a_aug = np.block([[a, np.zeros((n, 1))], [-c, np.ones((1, 1))]])
    b_aug = np.vstack([b, np.zeros((1, 1))])
    q_aug = np.zeros((n + 1, n + 1))
    q_aug[:n, :n] = weights.output_weight * (c.T @ c)
    q_aug[n, n] = weights.integral_weight
    r_aug = np.array([[weights.input_weight]])
    k, _ = lqr_gain(a_aug, b_aug, q_aug, r_aug)
    k_x, k_z = k[:, :n], k[:, n:]

    l, _ = kalman_gain(a, c, weights.process_noise * np.eye(n), np.array([[weights.measurement_noise]]))

    a_c = np.block([
        [a - b @ k_x - l @ c, -b @ k_z],
        [np.zeros((1, n)), np.ones((1, 1))],
    ])
    b_c = np.vstack([-l, np.ones((1, 1))])
    c_c = -np.hstack([k_x, k_z])
    d_c = np.zeros((1, 1))
    ctrl = StateSpaceController(a_c, b_c, c_c, d_c, model.dt)

    radius = closed_loop_spectral_radius(model, ctrl)
    logger.info(f"synthesize_mbc: controller order {ctrl.order}, closed-loop spectral radius {radius:.6f}")
    if radius >= 1.0:
        raise UnstableClosedLoopError(radius)
    return ctrl


def closed_loop_matrix(model, ctrl):
    """Transition matrix of (plant, controller) under y^r = 0, w = 0."""
    a, b, c = model.a, model.b2, model.c
    return np.block([
        [a - b @ ctrl.d_c @ c, b @ ctrl.c_c],
        [-ctrl.b_c @ c, ctrl.a_c],
    ])


def closed_loop_spectral_radius(model, ctrl):
    return float(np.max(np.abs(np.linalg.eigvals(closed_loop_matrix(model, ctrl)))))


def export_controller(ctrl, path, header=None):
    dump_matrices(path, {"A_c": ctrl.a_c, "B_c": ctrl.b_c, "C_c": ctrl.c_c, "D_c": ctrl.d_c,
                         "dt": np.array([[ctrl.dt]])}, header=header)
    logger.info(f"Controller matrices written to {path}")


def import_controller(path):
    mats, header = load_matrices(path)
    missing = [k for k in ("A_c", "B_c", "C_c", "D_c", "dt") if k not in mats]
    if missing:
        raise ValueError(f"{path}: missing controller matrices {missing}")
    ctrl = StateSpaceController(mats["A_c"], mats["B_c"], mats["C_c"], mats["D_c"], float(mats["dt"][0, 0]))
    return ctrl, header
