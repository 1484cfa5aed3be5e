"""Pure-numpy lock-step engine for discrete-time ensembles.

All live particles of a block advance one time step per iteration.  The
per-particle arithmetic and the stream draw order mirror
``_kernels.transport_discrete`` exactly, so the two backends produce the same
histories; scores may differ in the last few ulps because numpy and libm
``exp``/``log1p`` are not guaranteed to round identically.
"""

import numpy as np

from ..rng import uniform_np
from ._kernels import EXIT_ABSORBED, EXIT_CENSUS, EXIT_LEFT, NO_SCATTER


def _lookup(edges, v):
    return np.clip(np.searchsorted(edges, v, "right") - 1, 0, edges.size - 2)


def _cells(om_b, en_b, mu, e, has_e):
    i = _lookup(om_b, mu)
    if has_e:
        return i * (en_b.size - 1) + _lookup(en_b, e)
    return i


def _countdown(rate, v, dt, u):
    lam = rate * v
    out = np.full(u.shape, NO_SCATTER, dtype=np.int64)
    ok = lam > 0.0
    if not ok.any():
        return out
    with np.errstate(divide="ignore"):
        t = -np.log1p(-u[ok]) / lam[ok]
    r = t / dt
    big = r >= 4.0e18
    k = np.ceil(np.where(big, 0.0, r)).astype(np.int64)
    k = np.maximum(k, 1)
    back = (k > 1) & ((k - 1) * dt >= t)
    k[back] -= 1
    k[big] = NO_SCATTER
    out[ok] = k
    return out


def _sample(cdf_rows, out_b, has_e, keys, ctr):
    u1 = uniform_np(keys, ctr)
    u2 = uniform_np(keys, ctr + 1)
    u3 = uniform_np(keys, ctr + 2)
    b = np.minimum((cdf_rows <= u1[:, None]).sum(axis=1), cdf_rows.shape[1] - 1)
    mu = out_b[b, 0] + u2 * (out_b[b, 1] - out_b[b, 0])
    e = out_b[b, 2] + u3 * (out_b[b, 3] - out_b[b, 2]) if has_e else np.zeros(b.size)
    return mu, e


def _mesh_cells(mxe, mme, x, mu):
    if mxe.size < 2:
        return np.full(x.shape, -1, dtype=np.int64)
    nm = mme.size - 1
    inside = (x >= mxe[0]) & (x <= mxe[-1]) & (mu >= mme[0]) & (mu <= mme[-1])
    return np.where(inside, _lookup(mxe, x) * nm + _lookup(mme, mu), -1)


def run_block(lo, hi, x0s, mu0s, e0s, keys, sense, dt, v, max_steps, analog,
              dom, x_breaks, om_b, en_b, has_e, rate, att, cdf, out_b,
              sc_rects, sc_vals, sc_group, scores, mxe, mme, n_mesh,
              exit_x, exit_mu, exit_e, exit_depth, exit_kind, n_steps, n_events, n_draws):
    """Transport particles ``lo:hi``; returns per-cell (sum, sum of squares) of histories."""
    m = hi - lo
    key = keys[lo:hi]
    x = x0s[lo:hi].astype(np.float64).copy()
    mu = mu0s[lo:hi].astype(np.float64).copy()
    e = e0s[lo:hi].astype(np.float64).copy()
    ctr = np.zeros(m, dtype=np.int64)
    depth = np.zeros(m)
    j = np.zeros(m, dtype=np.int64)
    j_ev = np.zeros(m, dtype=np.int64)
    x_ev = x.copy()
    n_ev = np.zeros(m, dtype=np.int64)
    ix = _lookup(x_breaks, x)
    c = _cells(om_b, en_b, mu, e, has_e)
    next_sc = _countdown(rate[ix, c], v, dt, uniform_np(key, ctr))
    ctr += 1
    smu = sense * mu
    kind = np.full(m, EXIT_CENSUS, dtype=np.int64)
    vdt = v * dt
    sc = scores[lo:hi]
    vis_p, vis_c, vis_w = [], [], []
    act = np.arange(m)
    while act.size:
        a = att[ix[act], c[act]]
        j[act] += 1
        xa = x_ev[act] + (j[act] - j_ev[act]) * (vdt * smu[act])
        x[act] = xa
        if not analog:
            depth[act] += a * vdt
        keep = ~((xa < dom[0]) | (xa > dom[1]))
        kind[act[~keep]] = EXIT_LEFT
        if analog:
            sub = act[keep]
            u = uniform_np(key[sub], ctr[sub])
            ctr[sub] += 1
            absd = u < -np.expm1(-a[keep] * vdt)
            kind[sub[absd]] = EXIT_ABSORBED
            keep[np.flatnonzero(keep)[absd]] = False
        act = act[keep]
        if not act.size:
            break
        ix[act] = _lookup(x_breaks, x[act])
        scat = act[j[act] == next_sc[act]]
        if scat.size:
            nmu, ne = _sample(cdf[ix[scat], c[scat]], out_b, has_e, key[scat], ctr[scat])
            ctr[scat] += 3
            n_ev[scat] += 1
            mu[scat] = nmu
            e[scat] = ne
            bad = (nmu < dom[2]) | (nmu > dom[3])
            if has_e:
                bad |= (ne < dom[4]) | (ne > dom[5])
            if bad.any():
                kind[scat[bad]] = EXIT_LEFT
                act = act[~np.isin(act, scat[bad])]
            ok = scat[~bad]
            c[ok] = _cells(om_b, en_b, mu[ok], e[ok], has_e)
            smu[ok] = sense * mu[ok]
            x_ev[ok] = x[ok]
            j_ev[ok] = j[ok]
            next_sc[ok] = j[ok] + _countdown(rate[ix[ok], c[ok]], v, dt, uniform_np(key[ok], ctr[ok]))
            ctr[ok] += 1
        wdt = np.exp(-depth[act]) * dt
        xa, ma, ea = x[act], mu[act], e[act]
        for k in range(sc_vals.size):
            r = sc_rects[k]
            hit = (
                (xa >= r[0]) & (xa <= r[1]) & (ma >= r[2]) & (ma <= r[3])
                & (ea >= r[4]) & (ea <= r[5])
            )
            sc[act[hit], sc_group[k]] += sc_vals[k] * wdt[hit]
        if n_mesh:
            cell = _mesh_cells(mxe, mme, xa, ma)
            sel = cell >= 0
            if sel.any():
                vis_p.append(act[sel])
                vis_c.append(cell[sel])
                vis_w.append(wdt[sel])
        cap = j[act] >= max_steps
        if cap.any():
            kind[act[cap]] = EXIT_CENSUS
            act = act[~cap]
    sl = slice(lo, hi)
    exit_x[sl], exit_mu[sl], exit_e[sl], exit_depth[sl] = x, mu, e, depth
    exit_kind[sl], n_steps[sl], n_events[sl], n_draws[sl] = kind, j, n_ev, ctr
    csum = np.zeros(max(n_mesh, 1))
    csq = np.zeros(max(n_mesh, 1))
    if vis_p:
        p = np.concatenate(vis_p)
        cc = np.concatenate(vis_c)
        w = np.concatenate(vis_w)
        hk = p * n_mesh + cc
        order = np.argsort(hk, kind="stable")
        hk = hk[order]
        uniq, first = np.unique(hk, return_index=True)
        hist = np.add.reduceat(w[order], first)
        cells = uniq % n_mesh
        csum[: n_mesh] = np.bincount(cells, hist, minlength=n_mesh)
        csq[: n_mesh] = np.bincount(cells, hist * hist, minlength=n_mesh)
    return csum, csq
