# src/cul/dynamics.py
"""
Powertrain plant: three lumped masses in a chain with a dead-zone backlash.

    ground --(C_cl)-- M_E --(K_G, C_G)-- m_G --(K_D, C_D, backlash)-- M_B --(K_C, C_C)-- ground

Control force u and disturbance w act on M_E; the measured output is x_B.
State order everywhere: (x_E, x_G, x_B, v_E, v_G, v_B).
"""

import math
import logging
from dataclasses import dataclass, fields, asdict, replace

import numpy as np
from scipy.linalg import expm

from cul.errors import InvalidParamsError, NonFiniteError

logger = logging.getLogger(__name__)

X_E, X_G, X_B, V_E, V_G, V_B = range(6)
STATE_NAMES = ("x_e", "x_g", "x_b", "v_e", "v_g", "v_b")
N_STATES = 6

DEFAULT_SUBSTEPS = 20

# uncertainty components switched on at each curriculum stage (cumulative)
STAGE_COMPONENTS = (
    (),
    ("masses", "reference"),
    ("dampings",),
    ("backlash", "reference_enlarged"),
    ("backlash_width",),
)
N_STAGES = len(STAGE_COMPONENTS)


@dataclass(frozen=True)
class PlantParams:
    k_c: float = 660.0
    k_g: float = 5.3e4
    k_d: float = 2.2e4
    m_e: float = 1.04
    m_g: float = 0.039
    m_b: float = 0.232
    c_d: float = 12.5
    c_c: float = 0.1
    c_cl: float = 1.5
    c_g: float = 36.0
    delta: float = 0.005
    yr_seg1: float = -0.006
    yr_seg2: float = 0.0227
    switch_time: float = 2.0

    @classmethod
    def nominal(cls):
        return cls()

    def validate(self):
        for name in ("k_c", "k_g", "k_d", "m_e", "m_g", "m_b"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise InvalidParamsError(f"{name} must be finite and > 0, got {v}")
        for name in ("c_d", "c_c", "c_cl", "c_g", "delta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise InvalidParamsError(f"{name} must be finite and >= 0, got {v}")
        for name in ("yr_seg1", "yr_seg2", "switch_time"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParamsError(f"{name} must be finite")
        return self

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidParamsError(f"unknown plant parameter(s): {', '.join(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()}).validate()


@dataclass(frozen=True)
class UncertaintyRanges:
    """Closed sampling intervals; every draw is uniform on its interval."""

    m_b: tuple = (0.1160, 0.3480)
    m_e: tuple = (0.5200, 1.5600)
    c_g: tuple = (18.0, 54.0)
    c_d: tuple = (6.25, 18.75)
    c_c: tuple = (0.05, 0.15)
    delta: tuple = (0.0025, 0.0075)
    yr_seg1: tuple = (-0.01515, 0.030303)
    yr_seg2: tuple = (-0.01515, 0.030303)
    # stage-1 reference interval: full interval shrunk by this factor about its midpoint
    reference_stage1_scale: float = 0.5

    INTERVALS = ("m_b", "m_e", "c_g", "c_d", "c_c", "delta", "yr_seg1", "yr_seg2")

    def __post_init__(self):
        for name in self.INTERVALS:
            lo, hi = (float(v) for v in getattr(self, name))
            object.__setattr__(self, name, (lo, hi))
            if not lo <= hi:
                raise InvalidParamsError(f"range {name}: min {lo} > max {hi}")
        if not 0.0 <= self.reference_stage1_scale <= 1.0:
            raise InvalidParamsError("reference_stage1_scale must lie in [0, 1]")

    def bound(self, name, which):
        lo, hi = getattr(self, name)
        return lo if which == "min" else hi

    def stage1_reference(self, name):
        lo, hi = getattr(self, name)
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) * self.reference_stage1_scale
        return mid - half, mid + half

    def to_dict(self):
        out = {name: list(getattr(self, name)) for name in self.INTERVALS}
        out["reference_stage1_scale"] = self.reference_stage1_scale
        return out


@dataclass
class LinearModel:
    """x+ = A x + B1 w + B2 u,  y = C x   (ZOH discretization)."""

    a: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    c: np.ndarray
    dt: float

    def step(self, x, u, w=0.0):
        return self.a @ x + self.b2[:, 0] * u + self.b1[:, 0] * w

    def output(self, x):
        return float(self.c[0] @ x)


def rest_state():
    return np.zeros(N_STATES)


def dead_zone(d, delta):
    """Effective spring deflection of a backlash of total width delta."""
    half = 0.5 * delta
    if d > half:
        return d - half
    if d < -half:
        return d + half
    return 0.0


def _coeffs(p):
    return (p.k_c, p.k_g, p.k_d, p.m_e, p.m_g, p.m_b, p.c_d, p.c_c, p.c_cl, p.c_g, 0.5 * p.delta)


def _deriv(s, f, c):
    k_c, k_g, k_d, m_e, m_g, m_b, c_d, c_c, c_cl, c_g, half = c
    xe, xg, xb, ve, vg, vb = s
    f_g = k_g * (xe - xg) + c_g * (ve - vg)
    rel = xg - xb
    # zero width: always in contact, so the delta -> 0 limit is exactly linear
    if half <= 0.0:
        f_d = k_d * rel + c_d * (vg - vb)
    elif rel > half:
        f_d = k_d * (rel - half) + c_d * (vg - vb)
    elif rel < -half:
        f_d = k_d * (rel + half) + c_d * (vg - vb)
    else:
        f_d = 0.0
    f_ground = k_c * xb + c_c * vb
    return (
        ve,
        vg,
        vb,
        (f - f_g - c_cl * ve) / m_e,
        (f_g - f_d) / m_g,
        (f_d - f_ground) / m_b,
    )


def plant_accel(state, u, w, p):
    """Accelerations (a_E, a_G, a_B) of the three masses."""
    d = _deriv(tuple(float(v) for v in state), float(u) + float(w), _coeffs(p))
    return np.array(d[3:])


def step_plant(state, u, w, p, dt, substeps=DEFAULT_SUBSTEPS):
    """
    Advance the continuous model by dt with `substeps` RK4 stages, u and w held.

    Contact is re-evaluated at every stage. Raises NonFiniteError if the state
    blows up.
    """
    if dt <= 0.0 or substeps < 1:
        raise ValueError(f"need dt > 0 and substeps >= 1, got dt={dt}, substeps={substeps}")
    c = _coeffs(p)
    f = float(u) + float(w)
    h = dt / substeps
    hh = 0.5 * h
    s = tuple(float(v) for v in state)
    for _ in range(substeps):
        k1 = _deriv(s, f, c)
        k2 = _deriv(tuple(x + hh * k for x, k in zip(s, k1)), f, c)
        k3 = _deriv(tuple(x + hh * k for x, k in zip(s, k2)), f, c)
        k4 = _deriv(tuple(x + h * k for x, k in zip(s, k3)), f, c)
        s = tuple(
            x + (h / 6.0) * (a + 2.0 * b + 2.0 * cc + d)
            for x, a, b, cc, d in zip(s, k1, k2, k3, k4)
        )
    if not all(math.isfinite(v) for v in s):
        raise NonFiniteError(f"plant state left the finite range: {s}")
    return np.array(s)


def mechanical_energy(state, p):
    """Kinetic plus elastic energy (J); the K_D spring stores energy only in contact."""
    xe, xg, xb, ve, vg, vb = (float(v) for v in state)
    kinetic = 0.5 * (p.m_e * ve * ve + p.m_g * vg * vg + p.m_b * vb * vb)
    dz = dead_zone(xg - xb, p.delta)
    elastic = 0.5 * (p.k_g * (xe - xg) ** 2 + p.k_d * dz * dz + p.k_c * xb * xb)
    return kinetic + elastic


def continuous_matrices(p):
    """(A, B) of the always-engaged dynamics; B has the single force-on-M_E column."""
    a = np.zeros((N_STATES, N_STATES))
    a[0:3, 3:6] = np.eye(3)
    # M_E
    a[V_E, X_E] = -p.k_g / p.m_e
    a[V_E, X_G] = p.k_g / p.m_e
    a[V_E, V_E] = -(p.c_g + p.c_cl) / p.m_e
    a[V_E, V_G] = p.c_g / p.m_e
    # m_G
    a[V_G, X_E] = p.k_g / p.m_g
    a[V_G, X_G] = -(p.k_g + p.k_d) / p.m_g
    a[V_G, X_B] = p.k_d / p.m_g
    a[V_G, V_E] = p.c_g / p.m_g
    a[V_G, V_G] = -(p.c_g + p.c_d) / p.m_g
    a[V_G, V_B] = p.c_d / p.m_g
    # M_B
    a[V_B, X_G] = p.k_d / p.m_b
    a[V_B, X_B] = -(p.k_d + p.k_c) / p.m_b
    a[V_B, V_G] = p.c_d / p.m_b
    a[V_B, V_B] = -(p.c_d + p.c_c) / p.m_b
    b = np.zeros((N_STATES, 1))
    b[V_E, 0] = 1.0 / p.m_e
    return a, b


def linearize_nominal(p, dt):
    """ZOH discretization of the delta = 0 dynamics via expm of [[A, B], [0, 0]]."""
    p.validate()
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    a, b = continuous_matrices(p)
    n = N_STATES
    block = np.zeros((n + 2, n + 2))
    block[:n, :n] = a
    block[:n, n:n + 1] = b   # u
    block[:n, n + 1:n + 2] = b  # w
    e = expm(block * dt)
    c = np.zeros((1, n))
    c[0, X_B] = 1.0
    model = LinearModel(a=e[:n, :n], b1=e[:n, n + 1:n + 2], b2=e[:n, n:n + 1], c=c, dt=float(dt))
    logger.debug(f"linearize_nominal: dt={dt}, spectral radius={np.max(np.abs(np.linalg.eigvals(model.a))):.6f}")
    return model


def reference_signal(p, t):
    """Ideal step reference: yr_seg1 before switch_time, yr_seg2 from then on."""
    return p.yr_seg1 if t < p.switch_time else p.yr_seg2


def no_disturbance(t):
    return 0.0


def active_components(stage):
    if not 0 <= stage < N_STAGES:
        raise ValueError(f"stage must be in 0..{N_STAGES - 1}, got {stage}")
    out = []
    for comps in STAGE_COMPONENTS[:stage + 1]:
        out.extend(comps)
    return tuple(out)


def sample_plant(stage, ranges, rng, nominal=None):
    """
    Nominal parameters with exactly the components active at `stage` redrawn.

    Stage 0 is the linear nominal plant (delta = 0). Backlash enters at stage 3 with
    the nominal width and is itself randomized at stage 4.
    """
    base = nominal if nominal is not None else PlantParams.nominal()
    comps = active_components(stage)
    changes = {"delta": 0.0}

    if "masses" in comps:
        changes["m_b"] = rng.uniform(*ranges.m_b)
        changes["m_e"] = rng.uniform(*ranges.m_e)
    if "reference" in comps:
        if "reference_enlarged" in comps:
            seg1, seg2 = ranges.yr_seg1, ranges.yr_seg2
        else:
            seg1, seg2 = ranges.stage1_reference("yr_seg1"), ranges.stage1_reference("yr_seg2")
        changes["yr_seg1"] = rng.uniform(*seg1)
        changes["yr_seg2"] = rng.uniform(*seg2)
    if "dampings" in comps:
        changes["c_g"] = rng.uniform(*ranges.c_g)
        changes["c_d"] = rng.uniform(*ranges.c_d)
        changes["c_c"] = rng.uniform(*ranges.c_c)
    if "backlash" in comps:
        changes["delta"] = base.delta
    if "backlash_width" in comps:
        changes["delta"] = rng.uniform(*ranges.delta)

    params = base.replace(**{k: float(v) for k, v in changes.items()}).validate()
    logger.debug(f"sample_plant(stage={stage}): {changes}")
    return params
