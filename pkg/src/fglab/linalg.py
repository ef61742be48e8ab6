"""Exact linear algebra over Z/p^m.

A linear system over Z/p^m is solved by an affine lattice, not an affine
subspace: an equation like 2x = 2 over Z/4 pins x only modulo 2.  The
series solvers and the cohomology ranks both need those solution sets in
full, with deterministic canonical representatives, so this module keeps
the lattice explicit: a set is stored as x0 + <columns of K>, and K is
held in a p-adic column echelon form.

Everything is plain int64 numpy arrays; moduli here are tiny (p^m at
most a few dozen), so values stay far from overflow.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

__all__ = [
    "fp_rref",
    "fp_solve",
    "lattice_echelon",
    "reduce_coset",
    "affine_solve",
    "lattice_contains",
]


def _as_int_matrix(M):
    M = np.asarray(M, dtype=np.int64)
    if M.ndim != 2:
        raise ConfigError("expected a matrix")
    return M


def fp_rref(M, p):
    """Reduced row echelon form over F_p.

    Returns (R, pivots); deterministic (first nonzero row wins, columns
    scanned left to right).
    """
    R = _as_int_matrix(M) % p
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.flatnonzero(R[r:, c])
        if nz.size == 0:
            continue
        i = r + int(nz[0])
        if i != r:
            R[[r, i]] = R[[i, r]]
        R[r] = (R[r] * pow(int(R[r, c]), p - 2, p)) % p
        other = np.flatnonzero(R[:, c])
        other = other[other != r]
        if other.size:
            R[other] = (R[other] - np.outer(R[other, c], R[r])) % p
        pivots.append(c)
        r += 1
    return R, pivots


def fp_solve(M, b, p):
    """Solve M x = b over F_p.

    Returns (x, K): the particular solution with free coordinates zero,
    and a kernel basis as columns (canonical: one column per free
    coordinate, ascending).  x is None when the system is inconsistent;
    K is returned either way.
    """
    M = _as_int_matrix(M) % p
    b = np.asarray(b, dtype=np.int64).reshape(-1) % p
    rows, cols = M.shape
    if b.shape[0] != rows:
        raise ConfigError("right-hand side length mismatch")
    R, pivots = fp_rref(np.concatenate([M, b.reshape(-1, 1)], axis=1), p)
    piv_m = [c for c in pivots if c < cols]
    piv_set = set(piv_m)
    free = [c for c in range(cols) if c not in piv_set]
    K = np.zeros((cols, len(free)), dtype=np.int64)
    for j, fc in enumerate(free):
        K[fc, j] = 1
        for r_i, c_i in enumerate(piv_m):
            K[c_i, j] = (-R[r_i, fc]) % p
    if cols in pivots:
        return None, K
    x = np.zeros(cols, dtype=np.int64)
    for r_i, c_i in enumerate(piv_m):
        x[c_i] = R[r_i, cols]
    return x, K


def _val(e, p, m):
    """p-adic valuation of e mod p^m, with m meaning zero."""
    e = int(e) % p**m
    if e == 0:
        return m
    v = 0
    while e % p == 0:
        e //= p
        v += 1
    return v


def lattice_echelon(K, p, m):
    """Canonical generators of the lattice spanned by K's columns in
    (Z/p^m)^n, together with the implicit p^m Z^n.

    Returns (mat, piv): mat's columns have strictly increasing pivot rows
    with pivot entries exactly p^v, zeros above every pivot, and at most
    n columns; piv lists (row, v) per column.  On each division by p the
    p^(m-v)-multiple of the pivot column is kept as a candidate
    generator, which is what makes the span exact and the form stable
    under refinement.
    """
    K = _as_int_matrix(K)
    q = p**m
    n = K.shape[0]
    cols = [c % q for c in K.T if np.any(c % q)]
    out_rows, out_vals, out_cols = [], [], []
    for i in range(n):
        if not cols:
            break
        vals = [_val(c[i], p, m) for c in cols]
        v = min(vals)
        if v >= m:
            continue
        c = cols.pop(vals.index(v))
        c = (c * pow(int(c[i]) // p**v, -1, q)) % q
        rest = []
        for d in cols:
            mu = int(d[i]) // p**v
            d2 = (d - mu * c) % q
            if np.any(d2):
                rest.append(d2)
        tail = (c * p ** (m - v)) % q
        if np.any(tail):
            rest.append(tail)
        cols = rest
        out_rows.append(i)
        out_vals.append(v)
        out_cols.append(c)
    if not out_cols:
        return np.zeros((n, 0), dtype=np.int64), []
    return np.stack(out_cols, axis=1), list(zip(out_rows, out_vals))


def reduce_coset(x, mat, piv, p, m):
    """The representative of x modulo the lattice (mat, piv) with every
    pivot coordinate reduced into [0, p^v)."""
    q = p**m
    x = np.asarray(x, dtype=np.int64) % q
    for j, (i, v) in enumerate(piv):
        mu = int(x[i]) // p**v
        if mu:
            x = (x - mu * mat[:, j]) % q
    return x


def lattice_contains(x, mat, piv, p, m):
    """Whether x lies in the lattice spanned by (mat, piv) and p^m Z^n."""
    return not np.any(reduce_coset(x, mat, piv, p, m))


def affine_solve(M, b, p, m, *, K=None, x0=None, row_caps=None, canonical=True):
    """Intersect the affine lattice x0 + <K> with {x : M x = b mod p^m}.

    When row_caps is given, row i is only enforced mod p^row_caps[i]
    (rows capped at 0 are ignored).  Constraints are imposed one p-digit
    at a time: at digit s the directions K still satisfy M K = 0 mod p^s,
    so the digit system is exactly F_p-linear, and the kernel plus the
    p-scaled generators span what survives to the next digit.

    Returns (x0, mat, piv) describing the full solution set, or None when
    inconsistent.  With canonical=True the returned x0 is the canonical
    coset representative; with canonical=False it is the input x0 plus the
    particular digit corrections only, so a point that already satisfies
    the system comes back untouched.  Deterministic throughout.
    """
    q = p**m
    M = _as_int_matrix(M) % q
    b = np.asarray(b, dtype=np.int64).reshape(-1) % q
    rows, n = M.shape
    if b.shape[0] != rows:
        raise ConfigError("right-hand side length mismatch")
    x0 = np.zeros(n, dtype=np.int64) if x0 is None else np.asarray(x0, dtype=np.int64) % q
    K = np.eye(n, dtype=np.int64) if K is None else _as_int_matrix(K) % q
    caps = (
        np.full(rows, m, dtype=np.int64)
        if row_caps is None
        else np.asarray(row_caps, dtype=np.int64)
    )
    for s in range(m):
        act = np.flatnonzero(caps > s)
        if act.size == 0:
            break
        resid = (b[act] - M[act] @ x0) % q
        rho = (resid // p**s) % p
        W = ((M[act] @ K) % q // p**s) % p
        t, T = fp_solve(W, rho, p)
        if t is None:
            return None
        if np.any(t):
            x0 = (x0 + K @ t) % q
        if s + 1 == m:
            K = np.concatenate([(K @ T) % q, (p * K) % q], axis=1) if K.size else K
            break
        K = np.concatenate([(K @ T) % q, (p * K) % q], axis=1)
        K, _ = lattice_echelon(K, p, m)
    mat, piv = lattice_echelon(K, p, m)
    if canonical:
        x0 = reduce_coset(x0, mat, piv, p, m)
    return x0, mat, piv
