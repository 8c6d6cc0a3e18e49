"""Pure-numpy reference implementation of the hot kernels.

Mirrors ``_kernels.pyx`` operation for operation; :mod:`quadmech.kernels`
selects between the two.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def schedule_value(t_knots, c_knots, length, t):
    """Piecewise-linear interpolation, clamped at both ends."""
    return float(np.interp(t, t_knots[:length], c_knots[:length]))


def channel_rates(prog, t):
    """Rates (per ms) of every exchange channel at time ``t``; shape ``(C, n)``."""
    if prog.ch_k.size == 0:
        return np.zeros((0, prog.n))
    centers = np.array(
        [schedule_value(prog.sch_t[s], prog.sch_c[s], prog.sch_len[s], t) for s in prog.ch_sched]
    )
    idx = np.arange(prog.n, dtype=float)
    x = prog.ch_slope[:, None] * (idx[None, :] - centers[:, None]) + prog.ch_off[:, None]
    return prog.ch_pref / (1.0 + x * x)


def _chain(p, up, dn):
    d = -(up + dn) * p
    d[1:] += up[:-1] * p[:-1]
    d[:-1] += dn[1:] * p[1:]
    return d


def derivative(prog, t, pg, pe):
    """Right-hand side ``(dpg/dt, dpe/dt)`` of the rate equations."""
    dg = _chain(pg, prog.g_up, prog.g_dn)
    de = _chain(pe, prog.e_up, prog.e_dn)
    if prog.gamma1:
        de -= prog.gamma1 * pe
        dg += prog.gamma1 * (prog.w_dense.T @ pe)
    if prog.ch_k.size:
        rates = channel_rates(prog, t)
        n = prog.n
        for c in range(prog.ch_k.size):
            k = int(prog.ch_k[c])
            lo = max(0, -k)
            hi = min(n, n - k)
            g = rates[c, lo:hi]
            flux = g * (pg[lo:hi] - pe[lo + k:hi + k])
            dg[lo:hi] -= flux
            de[lo + k:hi + k] += flux
    return dg, de


def _enforce(pg, pe, stats):
    lo = min(pg.min(), pe.min())
    if lo < stats["min_entry"]:
        stats["min_entry"] = float(lo)
    neg = -(pg[pg < 0].sum() + pe[pe < 0].sum())
    if neg > 0:
        np.clip(pg, 0.0, None, out=pg)
        np.clip(pe, 0.0, None, out=pe)
        stats["clipped_mass"] += float(neg)
        if neg > stats["max_clip_step"]:
            stats["max_clip_step"] = float(neg)
    last = pg.size - 1
    pe[last] = 0.0
    rest = pg[:last].sum() + pe[:last].sum()
    top = 1.0 - rest
    if top < 0.0:
        pg[:last] /= rest
        pe[:last] /= rest
        top = 0.0
    pg[last] = top
    if top > stats["boundary_max"]:
        stats["boundary_max"] = float(top)


def integrate(prog, pg0, pe0, t0, dt, n_steps, sample_every):
    """Fixed-step RK4 with the per-step conservation rule.

    Returns ``(times, pg_samples, pe_samples, stats)``; the initial state is
    sample 0 and a sample is stored every ``sample_every`` steps and at the
    final step.
    """
    pg = np.array(pg0, dtype=float)
    pe = np.array(pe0, dtype=float)
    stats = {"min_entry": 0.0, "clipped_mass": 0.0, "max_clip_step": 0.0, "boundary_max": 0.0}
    times = [t0]
    gs = [pg.copy()]
    es = [pe.copy()]
    t = t0
    half = 0.5 * dt
    for step in range(1, n_steps + 1):
        k1g, k1e = derivative(prog, t, pg, pe)
        k2g, k2e = derivative(prog, t + half, pg + half * k1g, pe + half * k1e)
        k3g, k3e = derivative(prog, t + half, pg + half * k2g, pe + half * k2e)
        k4g, k4e = derivative(prog, t + dt, pg + dt * k3g, pe + dt * k3e)
        pg += dt / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
        pe += dt / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
        t = t0 + step * dt
        _enforce(pg, pe, stats)
        if step % sample_every == 0 or step == n_steps:
            times.append(t)
            gs.append(pg.copy())
            es.append(pe.copy())
    return np.array(times), np.array(gs), np.array(es), stats


def richardson_lucy(psf, data, iterations, floor, tol):
    """Multiplicative Richardson-Lucy updates for ``data ~ P @ psf``.

    Starts from a flat ``P`` scaled so the prediction carries the data's
    total weight. Stops after ``iterations`` updates, or earlier once the
    Poisson log-likelihood gain of an update falls to ``tol`` relative.

    Returns ``(P, loglik_history, n_decreases)``; ``P`` is not normalised
    and ``loglik_history[0]`` belongs to the starting point.
    """
    psf = np.asarray(psf, dtype=float)
    d = np.asarray(data, dtype=float)
    norm = psf.sum(axis=1)
    active = norm > 0
    safe_norm = np.where(active, norm, 1.0)
    p = np.where(active, d.sum() / psf.sum(), 0.0)
    model = np.maximum(p @ psf, floor)
    ll = float(np.dot(d, np.log(model)) - model.sum())
    history = [ll]
    decreases = 0
    for _ in range(iterations):
        p = np.where(active, p * (psf @ (d / model)) / safe_norm, 0.0)
        model = np.maximum(p @ psf, floor)
        new = float(np.dot(d, np.log(model)) - model.sum())
        if new < ll - 1e-12 * abs(ll):
            decreases += 1
        history.append(new)
        gain = new - ll
        ll = new
        if tol > 0 and abs(gain) <= tol * abs(ll):
            break
    return p, np.array(history), decreases
