"""Scalar particle kernels (numba-compiled unless disabled).

One routine serves both senses: the forward process streams with +omega,
scatters at Sigma_s with kernel p and attenuates with Sigma_a; the adjoint
process streams with -omega, scatters at S with kernel q and attenuates with
Sigma_t - S.  Only the tables and ``sense`` differ.

Draw order per particle (counter-based streams make this part of the
contract): one uniform for the initial countdown; per step, one uniform for
analog absorption (analog mode only); per scatter, three uniforms for the
outcome followed by one for the next countdown.
"""

import math

import numpy as np

from .._backend import jit, jit_parallel, prange
from ..rng import uniform

EXIT_LEFT = 0
EXIT_ABSORBED = 1
EXIT_CENSUS = 2

FLAG_SAMPLE = 0
FLAG_SCATTER = 1
FLAG_EXIT = 2
FLAG_START = 3

NO_SCATTER = 2 ** 62
REC_COLS = 7  # step, time, x, omega, energy, depth, flag


@jit
def lookup(edges, v):
    """Index of the interval of ``edges`` holding ``v``, clamped to the ends."""
    i = np.searchsorted(edges, v, side="right") - 1
    if i < 0:
        i = 0
    n = edges.size - 2
    if i > n:
        i = n
    return i


@jit
def cell_of(om_b, en_b, mu, e, has_e):
    i = lookup(om_b, mu)
    if has_e:
        return i * (en_b.size - 1) + lookup(en_b, e)
    return i


@jit
def countdown_from_uniform(u, rate, v, dt):
    """Smallest k >= 1 with k*dt >= T, T ~ Exp(rate*v) drawn by inversion of u."""
    lam = rate * v
    if lam <= 0.0:
        return NO_SCATTER
    t = -math.log1p(-u) / lam
    r = t / dt
    if r >= 4.0e18:
        return NO_SCATTER
    k = np.int64(math.ceil(r))
    if k < 1:
        k = np.int64(1)
    if k > 1 and (k - 1) * dt >= t:
        k -= 1
    return k


@jit
def countdown(rate, v, dt, key, ctr):
    return countdown_from_uniform(uniform(key, ctr), rate, v, dt)


@jit
def sample_outcome(cdf_row, out_b, has_e, key, ctr):
    u1 = uniform(key, ctr)
    u2 = uniform(key, ctr + 1)
    u3 = uniform(key, ctr + 2)
    b = np.searchsorted(cdf_row, u1, side="right")
    if b > cdf_row.size - 1:
        b = cdf_row.size - 1
    mu = out_b[b, 0] + u2 * (out_b[b, 1] - out_b[b, 0])
    e = 0.0
    if has_e:
        e = out_b[b, 2] + u3 * (out_b[b, 3] - out_b[b, 2])
    return mu, e


@jit
def add_scores(x, mu, e, w, sc_rects, sc_vals, sc_group, scores):
    for k in range(sc_vals.size):
        if (
            sc_rects[k, 0] <= x <= sc_rects[k, 1]
            and sc_rects[k, 2] <= mu <= sc_rects[k, 3]
            and sc_rects[k, 4] <= e <= sc_rects[k, 5]
        ):
            scores[sc_group[k]] += sc_vals[k] * w


@jit
def mesh_cell(mxe, mme, x, mu):
    if mxe.size < 2:
        return -1
    if x < mxe[0] or x > mxe[mxe.size - 1] or mu < mme[0] or mu > mme[mme.size - 1]:
        return -1
    return lookup(mxe, x) * (mme.size - 1) + lookup(mme, mu)


@jit
def _touch(cell, w, scratch, mark, touched, n_touch):
    scratch[cell] += w
    if mark[cell] == 0:
        mark[cell] = 1
        touched[n_touch] = cell
        n_touch += 1
    return n_touch


@jit
def _record(rec, row, step, t, x, mu, e, depth, flag):
    rec[row, 0] = step
    rec[row, 1] = t
    rec[row, 2] = x
    rec[row, 3] = mu
    rec[row, 4] = e
    rec[row, 5] = depth
    rec[row, 6] = flag


@jit
def _outside_angles(dom, mu, e, has_e):
    if mu < dom[2] or mu > dom[3]:
        return True
    return has_e and (e < dom[4] or e > dom[5])


@jit
def transport_discrete(x0, mu0, e0, key, sense, dt, v, max_steps, analog,
                       dom, x_breaks, om_b, en_b, has_e, rate, att, cdf, out_b,
                       sc_rects, sc_vals, sc_group, scores,
                       mxe, mme, scratch, mark, touched,
                       rec, rec_row, recording):
    """Discrete-time history; scores right-endpoint samples j = 1, 2, ...

    Returns ``(n_touched, exit_kind, steps, events, x, mu, e, depth, draws, rows)``.
    """
    n_touch = 0
    ctr = 0
    x = x0
    mu = mu0
    e = e0
    depth = 0.0
    ix = lookup(x_breaks, x)
    c = cell_of(om_b, en_b, mu, e, has_e)
    row = rec_row
    if recording:
        _record(rec, row, 0, 0.0, x, mu, e, 0.0, FLAG_START)
        row += 1
    vdt = v * dt
    smu = sense * mu
    next_sc = countdown(rate[ix, c], v, dt, key, ctr)
    ctr += 1
    j = 0
    j_ev = 0
    x_ev = x
    n_ev = 0
    kind = EXIT_CENSUS
    while True:
        a = att[ix, c]
        j += 1
        x = x_ev + (j - j_ev) * (vdt * smu)
        if not analog:
            depth += a * vdt
        if x < dom[0] or x > dom[1]:
            kind = EXIT_LEFT
            break
        if analog:
            u = uniform(key, ctr)
            ctr += 1
            if u < -math.expm1(-a * vdt):
                kind = EXIT_ABSORBED
                break
        ix = lookup(x_breaks, x)
        flag = FLAG_SAMPLE
        if j == next_sc:
            mu, e = sample_outcome(cdf[ix, c], out_b, has_e, key, ctr)
            ctr += 3
            n_ev += 1
            if _outside_angles(dom, mu, e, has_e):
                kind = EXIT_LEFT
                break
            c = cell_of(om_b, en_b, mu, e, has_e)
            smu = sense * mu
            x_ev = x
            j_ev = j
            next_sc = j + countdown(rate[ix, c], v, dt, key, ctr)
            ctr += 1
            flag = FLAG_SCATTER
        wdt = math.exp(-depth) * dt
        add_scores(x, mu, e, wdt, sc_rects, sc_vals, sc_group, scores)
        cell = mesh_cell(mxe, mme, x, mu)
        if cell >= 0:
            n_touch = _touch(cell, wdt, scratch, mark, touched, n_touch)
        if recording:
            _record(rec, row, j, j * dt, x, mu, e, depth, flag)
            row += 1
        if j >= max_steps:
            kind = EXIT_CENSUS
            break
    if recording:
        _record(rec, row, j, j * dt, x, mu, e, depth, FLAG_EXIT)
        row += 1
    return n_touch, kind, j, n_ev, x, mu, e, depth, ctr, row - rec_row


@jit
def transport_exact(x0, mu0, e0, key, sense, v, max_steps, analog,
                    dom, x_breaks, om_b, en_b, has_e, rate, att, cdf, out_b,
                    sc_rects, sc_vals, sc_group, scores,
                    mxe, mme, scratch, mark, touched, bp,
                    rec, rec_row, recording):
    """Event-driven history with exact time integrals between breakpoints.

    ``bp`` holds every x at which a rate, a score density, or a mesh cell can
    change, clipped to the domain and including both domain bounds, so that
    everything is constant on each sub-segment of a flight.  The scatter
    (and analog absorption) times are sampled exactly through the piecewise
    rates.  ``max_steps`` caps the number of scatter events.
    """
    n_touch = 0
    ctr = 0
    x = x0
    mu = mu0
    e = e0
    depth = 0.0
    t = 0.0
    n_ev = 0
    c = cell_of(om_b, en_b, mu, e, has_e)
    row = rec_row
    if recording:
        _record(rec, row, 0, 0.0, x, mu, e, 0.0, FLAG_START)
        row += 1
    nbp = bp.size
    kind = EXIT_CENSUS
    done = False
    while n_ev < max_steps:
        xi_s = -math.log1p(-uniform(key, ctr))
        ctr += 1
        xi_a = np.inf
        if analog:
            xi_a = -math.log1p(-uniform(key, ctr))
            ctr += 1
        vel = v * sense * mu
        scattered = False
        while True:
            if vel > 0.0:
                kk = np.searchsorted(bp, x, side="right")
                if kk >= nbp:
                    kind = EXIT_LEFT
                    done = True
                    break
                xt = bp[kk]
                seg = (xt - x) / vel
            elif vel < 0.0:
                kk = np.searchsorted(bp, x, side="left") - 1
                if kk < 0:
                    kind = EXIT_LEFT
                    done = True
                    break
                xt = bp[kk]
                seg = (xt - x) / vel
            else:
                xt = x
                seg = np.inf
            xm = 0.5 * (x + xt)
            ix = lookup(x_breaks, xm)
            r = rate[ix, c]
            a = att[ix, c]
            ts = xi_s / r if r > 0.0 else np.inf
            ta = xi_a / a if (analog and a > 0.0) else np.inf
            tau = min(seg, ts, ta)
            if tau == np.inf:
                kind = EXIT_CENSUS
                done = True
                break
            if analog:
                integ = tau
            elif a == 0.0:
                integ = math.exp(-depth) * tau
            else:
                integ = math.exp(-depth) * (-math.expm1(-a * tau) / a)
            add_scores(xm, mu, e, integ, sc_rects, sc_vals, sc_group, scores)
            cell = mesh_cell(mxe, mme, xm, mu)
            if cell >= 0:
                n_touch = _touch(cell, integ, scratch, mark, touched, n_touch)
            if not analog:
                depth += a * tau
            t += tau
            xi_s -= r * tau
            if analog:
                xi_a -= a * tau
            if tau == seg:
                x = xt
                continue
            x = x + vel * tau
            if tau == ta:
                kind = EXIT_ABSORBED
                done = True
                break
            scattered = True
            break
        if done:
            break
        if scattered:
            ix = lookup(x_breaks, x)
            mu, e = sample_outcome(cdf[ix, c], out_b, has_e, key, ctr)
            ctr += 3
            n_ev += 1
            if _outside_angles(dom, mu, e, has_e):
                kind = EXIT_LEFT
                break
            c = cell_of(om_b, en_b, mu, e, has_e)
            if recording:
                _record(rec, row, n_ev, t, x, mu, e, depth, FLAG_SCATTER)
                row += 1
    if recording:
        _record(rec, row, n_ev, t, x, mu, e, depth, FLAG_EXIT)
        row += 1
    return n_touch, kind, n_ev, n_ev, x, mu, e, depth, ctr, row - rec_row


@jit_parallel
def run_chunks(x0s, mu0s, e0s, keys, chunk, sense, dt, v, max_steps, analog, exact,
               dom, x_breaks, om_b, en_b, has_e, rate, att, cdf, out_b,
               sc_rects, sc_vals, sc_group, scores,
               mxe, mme, n_mesh, chunk_sum, chunk_sq, bp, rec, rec_offsets,
               exit_x, exit_mu, exit_e, exit_depth, exit_kind, n_steps, n_events,
               n_draws, n_rows):
    """Transport every start; chunk ``ci`` owns rows of the partial mesh sums.

    Chunk boundaries depend only on ``chunk``, so the per-chunk partials, and
    therefore the ordered reduction done by the caller, are the same for any
    thread count.
    """
    n = x0s.size
    nch = (n + chunk - 1) // chunk
    recording = rec.shape[0] > 0
    width = max(n_mesh, 1)
    for ci in prange(nch):
        scratch = np.zeros(width)
        mark = np.zeros(width, dtype=np.uint8)
        touched = np.zeros(width, dtype=np.int64)
        lo = ci * chunk
        hi = min(n, lo + chunk)
        for p in range(lo, hi):
            row = rec_offsets[p] if recording else 0
            if exact:
                res = transport_exact(
                    x0s[p], mu0s[p], e0s[p], keys[p], sense, v, max_steps, analog,
                    dom, x_breaks, om_b, en_b, has_e, rate, att, cdf, out_b,
                    sc_rects, sc_vals, sc_group, scores[p],
                    mxe, mme, scratch, mark, touched, bp, rec, row, recording)
            else:
                res = transport_discrete(
                    x0s[p], mu0s[p], e0s[p], keys[p], sense, dt, v, max_steps, analog,
                    dom, x_breaks, om_b, en_b, has_e, rate, att, cdf, out_b,
                    sc_rects, sc_vals, sc_group, scores[p],
                    mxe, mme, scratch, mark, touched, rec, row, recording)
            for tix in range(res[0]):
                cc = touched[tix]
                s = scratch[cc]
                chunk_sum[ci, cc] += s
                chunk_sq[ci, cc] += s * s
                scratch[cc] = 0.0
                mark[cc] = 0
            exit_kind[p] = res[1]
            n_steps[p] = res[2]
            n_events[p] = res[3]
            exit_x[p] = res[4]
            exit_mu[p] = res[5]
            exit_e[p] = res[6]
            exit_depth[p] = res[7]
            n_draws[p] = res[8]
            n_rows[p] = res[9]
