"""Compiled inner loops for the projected SOR sweep.

Gauss-Seidel order is sequential by nature, so the sweep cannot be
vectorized; numba keeps it at compiled-loop speed for the dense
lower-Hessenberg matrices the solver produces.

Steep ratios of the frozen diffusivity across one cell (the sharp front a
porous-medium-type profile develops) can flip the sign of isolated diagonal
entries of the conjugated matrix.  A scalar relaxation update is ill-posed
on such a row, so those rows are merged with their left neighbour into a
small block whose complementarity subproblem is solved exactly, by active-set
enumeration, inside every sweep.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# row roles for the sweep
_SCALAR = 0
_BLOCK_START = 1
_BLOCK_MEMBER = 2

MAX_BLOCK = 10


def partition_rows(mat: np.ndarray) -> tuple[np.ndarray, int]:
    """Classify rows into scalar updates and left-paired exact blocks.

    Scalar relaxation needs a diagonal that dominates the neighbouring band
    couplings: a weak (or sign-flipped) diagonal turns the sweep into an
    amplifying cascade.  Such rows join a block together with their left
    neighbour; adjacent blocks merge.  Returns ``(roles, n_weak)`` where
    roles[i] is one of the module's row-role constants.
    """
    n = mat.shape[0]
    diag = mat.diagonal()
    band = np.zeros(n)
    if n > 1:
        band[1:] = np.abs(np.diagonal(mat, -1))
        band[:-1] = np.maximum(band[:-1], np.abs(np.diagonal(mat, 1)))
    weak = (diag <= 0.0) | (diag < 1.05 * band)
    roles = np.zeros(n, dtype=np.int8)
    if not weak.any():
        return roles, 0
    in_block = np.zeros(n, dtype=bool)
    for i in np.flatnonzero(weak):
        in_block[i] = True
        in_block[max(i - 1, 0)] = True
    start = None
    for i in range(n):
        if in_block[i]:
            if start is None:
                start = i
                roles[i] = _BLOCK_START
            else:
                roles[i] = _BLOCK_MEMBER
        else:
            start = None
    return roles, int(weak.sum())


@njit(cache=True, nogil=True)
def _solve_dense(a, b, x):
    """Gaussian elimination with partial pivoting; returns False if singular."""
    n = b.shape[0]
    for i in range(n):
        piv = i
        best = abs(a[i, i])
        for r in range(i + 1, n):
            if abs(a[r, i]) > best:
                best = abs(a[r, i])
                piv = r
        if best == 0.0:
            return False
        if piv != i:
            for c in range(n):
                tmp = a[i, c]
                a[i, c] = a[piv, c]
                a[piv, c] = tmp
            tmp = b[i]
            b[i] = b[piv]
            b[piv] = tmp
        for r in range(i + 1, n):
            f = a[r, i] / a[i, i]
            for c in range(i, n):
                a[r, c] -= f * a[i, c]
            b[r] -= f * b[i]
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for c in range(i + 1, n):
            acc -= a[i, c] * x[c]
        x[i] = acc / a[i, i]
    return True


@njit(cache=True, nogil=True)
def _block_lcp(bmat, q, gb, out):
    """Exact complementarity solve on a tiny block by active-set enumeration.

    Picks the first pattern with no feasibility violation, falling back to
    the least-violating one; the caller's global residual check guards the
    final answer either way.
    """
    nb = q.shape[0]
    best_viol = np.inf
    work_a = np.empty((nb, nb))
    work_b = np.empty(nb)
    sol = np.empty(nb)
    cand = np.empty(nb)
    scale = 1.0
    for i in range(nb):
        if abs(q[i]) > scale:
            scale = abs(q[i])
    for mask in range(1 << nb):
        n_free = 0
        for i in range(nb):
            if not (mask >> i) & 1:
                n_free += 1
        # assemble the free subsystem
        fa = work_a[:n_free, :n_free]
        fb = work_b[:n_free]
        fi = 0
        for i in range(nb):
            if (mask >> i) & 1:
                continue
            fb[fi] = q[i]
            fj = 0
            for jcol in range(nb):
                if (mask >> jcol) & 1:
                    fb[fi] -= bmat[i, jcol] * gb[jcol]
                else:
                    fa[fi, fj] = bmat[i, jcol]
                    fj += 1
            fi += 1
        if n_free > 0:
            if not _solve_dense(fa, fb, sol[:n_free]):
                continue
        fi = 0
        finite = True
        for i in range(nb):
            if (mask >> i) & 1:
                cand[i] = gb[i]
            else:
                cand[i] = sol[fi]
                fi += 1
            if not np.isfinite(cand[i]) or abs(cand[i]) > 1e100:
                finite = False
        if not finite:
            continue
        viol = 0.0
        for i in range(nb):
            gap = gb[i] - cand[i]
            if gap > viol:
                viol = gap
            resid = -q[i]
            for jcol in range(nb):
                resid += bmat[i, jcol] * cand[jcol]
            if -resid > viol:
                viol = -resid
        if not np.isfinite(viol):
            continue
        if viol <= 1e-12 * scale:
            for i in range(nb):
                out[i] = cand[i]
            return True
        if viol < best_viol:
            best_viol = viol
            for i in range(nb):
                out[i] = cand[i]
    return best_viol < np.inf


@njit(cache=True, nogil=True)
def psor_sweeps(mat, rhs, obstacle, v, omega, tol, k_max, roles):
    """Run projected SOR sweeps in place on ``v``.

    Rows flagged in ``roles`` are handled as exact left-paired blocks.  Stops
    once the sup-norm update is below ``tol`` and the complementarity residual
    min(mat@v - rhs, v - obstacle) satisfies both the absolute bound 10*tol
    and the componentwise bound tol*(1 + |rhs_i|).

    Returns (sweeps, residual, converged flag).
    """
    n = v.shape[0]
    bq = np.empty(MAX_BLOCK)
    bg = np.empty(MAX_BLOCK)
    bx = np.empty(MAX_BLOCK)
    bm = np.empty((MAX_BLOCK, MAX_BLOCK))
    for sweep in range(k_max):
        delta = 0.0
        i = 0
        while i < n:
            if roles[i] == _BLOCK_START:
                j = i + 1
                while j < n and roles[j] == _BLOCK_MEMBER:
                    j += 1
                nb = j - i
                if nb > MAX_BLOCK:
                    return sweep, np.inf, False
                for r in range(nb):
                    acc = 0.0
                    for l in range(n):
                        if l < i or l >= j:
                            acc += mat[i + r, l] * v[l]
                    bq[r] = rhs[i + r] - acc
                    bg[r] = obstacle[i + r]
                    for c in range(nb):
                        bm[r, c] = mat[i + r, i + c]
                if not _block_lcp(bm[:nb, :nb], bq[:nb], bg[:nb], bx[:nb]):
                    return sweep, np.inf, False
                for r in range(nb):
                    step = bx[r] - v[i + r]
                    if step < 0.0:
                        step = -step
                    if step > delta:
                        delta = step
                    v[i + r] = bx[r]
                i = j
                continue
            acc = 0.0
            for l in range(n):
                if l != i:
                    acc += mat[i, l] * v[l]
            w = (rhs[i] - acc) / mat[i, i]
            vi = v[i] + omega * (w - v[i])
            if not np.isfinite(vi):
                return sweep + 1, np.inf, False
            if vi < obstacle[i]:
                vi = obstacle[i]
            step = vi - v[i]
            if step < 0.0:
                step = -step
            if step > delta:
                delta = step
            v[i] = vi
            i += 1
        if not np.isfinite(delta):
            return sweep + 1, np.inf, False
        if delta <= tol:
            residual = 0.0
            scaled_ok = True
            for i in range(n):
                acc = 0.0
                for l in range(n):
                    acc += mat[i, l] * v[l]
                ri = acc - rhs[i]
                si = v[i] - obstacle[i]
                mi = ri if ri < si else si
                if mi < 0.0:
                    mi = -mi
                if mi > residual:
                    residual = mi
                bound = rhs[i] if rhs[i] >= 0.0 else -rhs[i]
                if mi > tol * (1.0 + bound):
                    scaled_ok = False
            if residual <= 10.0 * tol and scaled_ok:
                return sweep + 1, residual, True
    # report the actual residual of the final iterate on failure
    residual = 0.0
    for i in range(n):
        acc = 0.0
        for l in range(n):
            acc += mat[i, l] * v[l]
        ri = acc - rhs[i]
        si = v[i] - obstacle[i]
        mi = ri if ri < si else si
        if mi < 0.0:
            mi = -mi
        if mi > residual:
            residual = mi
    return k_max, residual, False
