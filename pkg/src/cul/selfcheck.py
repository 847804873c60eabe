# src/cul/selfcheck.py
"""Fast property checks of the numerical core, each returning (name, passed, detail)."""

import logging
from dataclasses import replace

import numpy as np

from common.rng import rng_stream
from cul.agent import AgentSettings, consolidate_task, create_agent, ewc_penalty, multi_anchor_penalty
from cul.curriculum import EVAL, ControlMode, EpisodeSettings, run_episode
from cul.dynamics import PlantParams, dead_zone, linearize_nominal
from cul.lincontrol import mbc_step, riccati_residual, solve_dare, synthesize_mbc
from cul.neural import backward, forward, init_net

logger = logging.getLogger(__name__)


def check_dead_zone():
    ds = np.linspace(-0.02, 0.02, 401)
    odd = all(dead_zone(-d, 0.005) == -dead_zone(d, 0.005) for d in ds)
    identity = all(dead_zone(d, 0.0) == d for d in ds)
    jumps = np.abs(np.diff([dead_zone(d, 0.005) for d in ds]))
    continuous = float(jumps.max()) <= float(ds[1] - ds[0]) + 1e-15
    return "dead_zone", odd and identity and continuous, f"odd={odd} identity={identity} continuous={continuous}"


def check_dare(n_systems=20, seed=0):
    rng = rng_stream(seed, "selfcheck/dare")
    worst = 0.0
    for _ in range(n_systems):
        n = int(rng.integers(3, 7))
        a = rng.standard_normal((n, n)) * 0.5
        b = rng.standard_normal((n, 1))
        q = np.eye(n)
        r = np.eye(1)
        p = solve_dare(a, b, q, r)
        worst = max(worst, riccati_residual(a, b, q, r, p) / (1.0 + np.linalg.norm(p)))
    return "dare_residual", worst <= 1e-10, f"worst scaled residual {worst:.3e}"


def _relative_error(g, fd):
    return np.abs(g - fd) / np.maximum(np.abs(g) + np.abs(fd), 1e-6)


def gradient_check(net, x, upstream, h=1e-5):
    """Max relative error of backward() against central differences of sum(upstream * out)."""
    grad, _ = backward(net, forward(net, x)[1], upstream)
    fd = np.zeros_like(grad)
    base = net.params.copy()
    for j in range(net.n_params):
        net.params = base.copy()
        net.params[j] += h
        plus = float(np.sum(upstream * forward(net, x)[0]))
        net.params[j] -= 2.0 * h
        minus = float(np.sum(upstream * forward(net, x)[0]))
        fd[j] = (plus - minus) / (2.0 * h)
    net.params = base
    return float(np.max(_relative_error(grad, fd)))


def away_from_kinks(net, rng, batch, margin=1e-3):
    """Random inputs whose hidden pre-activations all clear the ReLU kink by `margin`."""
    while True:
        x = rng.standard_normal((batch, net.sizes[0]))
        _, cache = forward(net, x)
        if all(np.all(np.abs(z) > margin) for z in cache.pre[:-1]):
            return x


def check_gradients(n_nets=10, seed=0):
    rng = rng_stream(seed, "selfcheck/grad")
    worst = 0.0
    for i in range(n_nets):
        head = "tanh" if i % 2 == 0 else "linear"
        net = init_net((3, 5, 4, 1), head, rng)
        x = away_from_kinks(net, rng, 4)
        upstream = rng.standard_normal((4, 1))
        worst = max(worst, gradient_check(net, x, upstream))
    return "gradients", worst <= 1e-4, f"worst relative error {worst:.3e}"


def check_mbc_servo(params=None, dt=0.006, steps=667):
    params = params or PlantParams.nominal()
    model = linearize_nominal(params, dt)
    ctrl = synthesize_mbc(model)
    x = np.zeros(model.a.shape[0])
    e = 0.0
    for k in range(steps):
        y_r = params.yr_seg1 if k * dt < params.switch_time else params.yr_seg2
        e = y_r - model.output(x)
        x = model.step(x, mbc_step(ctrl, e))
    return "mbc_servo", abs(e) < 1e-4, f"terminal |e| {abs(e):.3e}"


def check_residual_identity(seed=0, horizon=100):
    settings = replace(EpisodeSettings(), horizon=horizon)
    params = PlantParams.nominal()
    mbc = synthesize_mbc(linearize_nominal(params, settings.dt))
    agent = create_agent(6, AgentSettings(hidden=8, batch_size=4, buffer_size=16), rng_stream(seed, "selfcheck/init"))
    w, b = agent.actor.layer(agent.actor.n_layers - 1)
    w[...] = 0.0
    b[...] = 0.0
    residual = run_episode(params, mbc, agent, EVAL, ControlMode.RESIDUAL, None, settings)
    baseline = run_episode(params, mbc, None, EVAL, ControlMode.MBC_ONLY, None, settings)
    same = np.array_equal(residual.y, baseline.y) and np.array_equal(residual.u, baseline.u)
    return "residual_identity", bool(same), "zero actor matches MBC-only" if same else "trajectories differ"


def check_ewc_algebra(seed=0, n_tasks=3, gamma=0.9):
    rng = rng_stream(seed, "selfcheck/ewc")
    n = 50
    anchor = rng.standard_normal(n)
    fishers = [rng.uniform(0.0, 1.0, n) for _ in range(n_tasks)]
    snapshot = None
    for f in fishers:
        snapshot = consolidate_task(snapshot, anchor, f, gamma)
    brute = sum(gamma ** (n_tasks - 1 - m) * f for m, f in enumerate(fishers))
    recursion_err = float(np.max(np.abs(snapshot.fisher - brute)))
    theta = anchor + rng.standard_normal(n)
    online = ewc_penalty(snapshot, theta, 1.0, 1.0)
    standard = multi_anchor_penalty([(anchor, gamma ** (n_tasks - 1 - m) * f) for m, f in enumerate(fishers)], theta, 1.0)
    at_anchor = ewc_penalty(snapshot, anchor, 1.0, gamma)
    ok = recursion_err <= 1e-12 and abs(online - standard) <= 1e-12 * (1.0 + abs(standard)) and at_anchor == 0.0
    return "ewc_algebra", ok, f"recursion error {recursion_err:.3e}, penalty at anchor {at_anchor}"


CHECKS = (
    check_dead_zone,
    check_dare,
    check_gradients,
    check_mbc_servo,
    check_residual_identity,
    check_ewc_algebra,
)


def run_all():
    results = []
    for check in CHECKS:
        try:
            name, passed, detail = check()
        except Exception as e:
            logger.exception(f"selfcheck {check.__name__} raised")
            name, passed, detail = check.__name__.replace("check_", ""), False, f"raised {type(e).__name__}: {e}"
        logger.info(f"selfcheck {name}: {'ok' if passed else 'FAILED'} ({detail})")
        results.append({"check": name, "passed": bool(passed), "detail": detail})
    return results
