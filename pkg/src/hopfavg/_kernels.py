"""Hot loops: the noisy delay equation and the reduced one-dimensional SDE.

Each loop exists twice.  The ``*_path`` functions advance one trajectory and
are compiled with numba when available; the ``*_batch`` functions advance a
batch of trajectories in lockstep with vectorised numpy.  Both consume the
same increments in the same order and agree to rounding.

Status codes: 0 running, 1 exited the amplitude domain, 2 reached the end,
3 non-finite state.
"""

import numpy as np

from ._accel import njit

RUNNING, EXITED, FINISHED, BLOWUP = 0, 1, 2, 3
EULER, HEUN = 0, 1

# ---------------------------------------------------------------- full model


@njit
def _record(buf, base, n, proj_w, phi_grid, j, rec_h, rec_stable, rec_sup, rec_states, store):
    z0 = 0.0
    z1 = 0.0
    for i in range(n + 1):
        v = buf[base + i]
        z0 += proj_w[0, i] * v
        z1 += proj_w[1, i] * v
    stable = 0.0
    sup = 0.0
    for i in range(n + 1):
        v = buf[base + i]
        d = abs(v - phi_grid[i, 0] * z0 - phi_grid[i, 1] * z1)
        if d > stable:
            stable = d
        if abs(v) > sup:
            sup = abs(v)
    h = 0.5 * (z0 * z0 + z1 * z1)
    rec_h[j] = h
    rec_stable[j] = stable
    rec_sup[j] = sup
    if store:
        for i in range(n + 1):
            rec_states[j, i] = buf[base + i]
    return h


@njit
def sdde_path(
    buf, istate, fstate, dW, n, dt, eps, scheme,
    l0_idx, l0_w, gq, g, mult, sigma, l1_idx, l1_w, reuse,
    rec_steps, proj_w, phi_grid, h_star, h_lower,
    rec_h, rec_stable, rec_sup, rec_states, store,
):  # fmt: skip
    """Advance one trajectory through the increments ``dW``.

    ``istate = [head, step, next_record, status]`` and ``fstate = [f0, have_f0]``
    carry the integrator state between calls.  Returns the number of
    increments consumed.

    The drift is written out inside the loop: calling a helper with array
    arguments here costs reference-count traffic that dominates the step.
    """
    qi, qf, qc, qp = gq
    gi, gf, gc, gp = g
    eps2 = eps * eps
    p = istate[0]
    step = istate[1]
    rp = istate[2]
    status = istate[3]
    have = fstate[1] != 0.0
    f0 = fstate[0]
    cap = buf.size
    n_stage = 2 if scheme == HEUN else 1
    used = 0
    if step == 0 and rp == 0 and status == RUNNING:
        h = _record(buf, p - n, n, proj_w, phi_grid, 0, rec_h, rec_stable, rec_sup, rec_states, store)
        rp = 1
        if h >= h_star or h <= h_lower:
            status = EXITED
        elif rp == rec_steps.size:
            status = FINISHED
    while used < dW.size and status == RUNNING:
        if p + 1 >= cap:
            for i in range(n + 1):
                buf[i] = buf[p - n + i]
            p = n
        base = p - n
        if mult:
            fn = 0.0
            for i in range(l1_idx.size):
                fn += l1_w[i] * buf[base + l1_idx[i]]
        else:
            fn = sigma
        incr = eps * fn * dW[used]
        used += 1
        x = buf[p]
        f1 = 0.0
        for stage in range(n_stage):
            if stage == 0 and have:
                continue
            if stage == 1:
                buf[p + 1] = x + f0 * dt + incr
            b = base + stage
            f = 0.0
            for i in range(l0_idx.size):
                f += l0_w[i] * buf[b + l0_idx[i]]
            for t in range(qc.size):
                term = qc[t]
                for j in range(qi.size):
                    k = b + qi[j]
                    v = buf[k] * (1.0 - qf[j]) + buf[k + 1] * qf[j]
                    for _ in range(qp[t, j]):
                        term *= v
                f += eps * term
            for t in range(gc.size):
                term = gc[t]
                for j in range(gi.size):
                    k = b + gi[j]
                    v = buf[k] * (1.0 - gf[j]) + buf[k + 1] * gf[j]
                    for _ in range(gp[t, j]):
                        term *= v
                f += eps2 * term
            if stage == 0:
                f0 = f
            else:
                f1 = f
        if scheme == HEUN:
            x_new = x + 0.5 * (f0 + f1) * dt + incr
        else:
            x_new = x + f0 * dt + incr
        buf[p + 1] = x_new
        p += 1
        step += 1
        have = scheme == HEUN and reuse
        if have:
            f0 = f1
        if not np.isfinite(x_new):
            status = BLOWUP
            break
        if step == rec_steps[rp]:
            h = _record(buf, p - n, n, proj_w, phi_grid, rp, rec_h, rec_stable, rec_sup, rec_states, store)
            rp += 1
            if h >= h_star or h <= h_lower:
                status = EXITED
            elif rp == rec_steps.size:
                status = FINISHED
    istate[0] = p
    istate[1] = step
    istate[2] = rp
    istate[3] = status
    fstate[0] = f0
    fstate[1] = 1.0 if have else 0.0
    return used


def _poly_batch(seg, poly):
    idx, frac, coef, powers = poly
    total = np.zeros(seg.shape[0])
    for t in range(coef.size):
        term = np.full(seg.shape[0], coef[t])
        for j in range(idx.size):
            pw = powers[t, j]
            if pw:
                k = idx[j]
                v = seg[:, k] * (1.0 - frac[j]) + seg[:, k + 1] * frac[j]
                for _ in range(pw):
                    term = term * v
        total = total + term
    return total


def _drift_batch(seg, eps, l0_idx, l0_w, gq, g):
    f = seg[:, l0_idx] @ l0_w if l0_idx.size else np.zeros(seg.shape[0])
    if gq[2].size:
        f = f + eps * _poly_batch(seg, gq)
    if g[2].size:
        f = f + eps * eps * _poly_batch(seg, g)
    return f


def _record_batch(seg, proj_w, phi_grid, mask, j, rec_h, rec_stable, rec_sup, rec_states, store):
    z = seg @ proj_w.T
    h = 0.5 * (z[:, 0] * z[:, 0] + z[:, 1] * z[:, 1])
    stable = np.max(np.abs(seg - z @ phi_grid.T), axis=1)
    sup = np.max(np.abs(seg), axis=1)
    rec_h[mask, j] = h[mask]
    rec_stable[mask, j] = stable[mask]
    rec_sup[mask, j] = sup[mask]
    if store:
        rec_states[mask, j] = seg[mask]
    return h


def sdde_batch(
    buf, istate, fstate, dW, n, dt, eps, scheme,
    l0_idx, l0_w, gq, g, mult, sigma, l1_idx, l1_w, reuse,
    rec_steps, proj_w, phi_grid, h_star, h_lower,
    rec_h, rec_stable, rec_sup, rec_states, store,
):  # fmt: skip
    """Vectorised counterpart of :func:`sdde_path`.

    ``buf`` has shape ``(P, cap)`` and ``dW`` shape ``(P, m)``; ``istate`` is
    ``[head, step, next_record]`` shared by the batch plus a per-path
    ``status`` array in ``fstate["status"]``.
    """
    p, step, rp = istate[0], istate[1], istate[2]
    status = fstate["status"]
    f0c = fstate["f0"]
    have = fstate["have"]
    cap = buf.shape[1]
    if step == 0 and rp == 0:
        run = status == RUNNING
        h = _record_batch(buf[:, p - n : p + 1], proj_w, phi_grid, run, 0, rec_h, rec_stable, rec_sup, rec_states, store)
        rp = 1
        hit = run & ((h >= h_star) | (h <= h_lower))
        status[hit] = EXITED
        if rp == rec_steps.size:
            status[status == RUNNING] = FINISHED
    used = 0
    with np.errstate(all="ignore"):
        while used < dW.shape[1] and np.any(status == RUNNING):
            run = status == RUNNING
            seg = buf[:, p - n : p + 1]
            f0 = f0c if have else _drift_batch(seg, eps, l0_idx, l0_w, gq, g)
            fn = seg[:, l1_idx] @ l1_w if mult else sigma
            incr = eps * fn * dW[:, used]
            used += 1
            if p + 1 >= cap:
                buf[:, : n + 1] = buf[:, p - n : p + 1]
                p = n
            x = buf[:, p]
            if scheme == HEUN:
                buf[:, p + 1] = x + f0 * dt + incr
                f1 = _drift_batch(buf[:, p + 1 - n : p + 2], eps, l0_idx, l0_w, gq, g)
                x_new = x + 0.5 * (f0 + f1) * dt + incr
            else:
                f1 = None
                x_new = x + f0 * dt + incr
            buf[:, p + 1] = x_new
            p += 1
            step += 1
            if scheme == HEUN and reuse:
                f0c, have = f1, True
            else:
                have = False
            bad = run & ~np.isfinite(x_new)
            status[bad] = BLOWUP
            if step == rec_steps[rp]:
                run = status == RUNNING
                h = _record_batch(buf[:, p - n : p + 1], proj_w, phi_grid, run, rp, rec_h, rec_stable, rec_sup, rec_states, store)
                rp += 1
                hit = run & ((h >= h_star) | (h <= h_lower))
                status[hit] = EXITED
                if rp == rec_steps.size:
                    status[status == RUNNING] = FINISHED
    istate[0], istate[1], istate[2] = p, step, rp
    fstate["f0"] = f0c
    fstate["have"] = have
    return used


# ---------------------------------------------------------------- reduced model


@njit
def _spline_eval(c, h_max, x):
    """Cubic spline with coefficients ``c`` (4, m) on uniform nodes over ``[0, h_max]``."""
    m = c.shape[1]
    if m == 0:
        return 0.0
    step = h_max / m
    k = int(x / step)
    if k < 0:
        k = 0
    elif k > m - 1:
        k = m - 1
    u = x - k * step
    return ((c[0, k] * u + c[1, k]) * u + c[2, k]) * u + c[3, k]


@njit
def reduced_path(h0, dW, dt, b0, b1, spl, h_max, s1, s2, h_star, h_lower, clamp, record_every, out):
    """Full-truncation Euler for ``dh = b(h) dt + sqrt(s1 h + s2 h^2) dW``.

    Records every ``record_every`` steps into ``out`` (NaN after exit).
    Returns ``(exit_index, status)``; ``exit_index`` is -1 when no exit.
    """
    h = h0
    out[0] = h
    if h >= h_star or h <= h_lower:
        return 0, EXITED
    j = 1
    for k in range(dW.size):
        hp = h if h > 0.0 else 0.0
        drift = b0 + b1 * hp + _spline_eval(spl, h_max, hp)
        var = s1 * hp + s2 * hp * hp
        diff = np.sqrt(var) if var > 0.0 else 0.0
        h = h + drift * dt + diff * dW[k]
        if clamp and h < 0.0:
            h = 0.0
        if not np.isfinite(h):
            return j, BLOWUP
        if (k + 1) % record_every == 0:
            out[j] = h
            if h >= h_star or h <= h_lower:
                return j, EXITED
            j += 1
    return -1, FINISHED


def reduced_batch(h0, dW, dt, b0, b1, spl, h_max, s1, s2, h_star, h_lower, clamp, record_every, out):
    """Vectorised counterpart of :func:`reduced_path` over rows of ``dW``."""
    P = dW.shape[0]
    h = np.array(h0, dtype=float).copy()
    out[:, 0] = h
    status = np.where((h >= h_star) | (h <= h_lower), EXITED, RUNNING)
    exit_idx = np.where(status == EXITED, 0, -1)
    m = spl.shape[1]
    step = h_max / m if m else 1.0
    j = 1
    with np.errstate(all="ignore"):
        for k in range(dW.shape[1]):
            run = status == RUNNING
            if not run.any():
                break
            hp = np.maximum(h, 0.0)
            drift = b0 + b1 * hp
            if m:
                idx = np.clip((hp / step).astype(np.int64), 0, m - 1)
                u = hp - idx * step
                drift = drift + ((spl[0, idx] * u + spl[1, idx]) * u + spl[2, idx]) * u + spl[3, idx]
            var = s1 * hp + s2 * hp * hp
            diff = np.sqrt(np.maximum(var, 0.0))
            h_new = h + drift * dt + diff * dW[:, k]
            if clamp:
                h_new = np.where(h_new < 0.0, 0.0, h_new)
            h = np.where(run, h_new, h)
            bad = run & ~np.isfinite(h)
            status[bad] = BLOWUP
            exit_idx[bad] = j
            if (k + 1) % record_every == 0:
                run = status == RUNNING
                out[run, j] = h[run]
                hit = run & ((h >= h_star) | (h <= h_lower))
                status[hit] = EXITED
                exit_idx[hit] = j
                j += 1
    status[status == RUNNING] = FINISHED
    return exit_idx, status
