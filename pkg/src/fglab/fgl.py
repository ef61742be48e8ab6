"""Formal group laws and their homomorphisms.

Everything here is built from explicit p-typical logarithms over exact
rationals (`RationalizedRing` scalars, or truncated polynomials over them
when deformation parameters are present) and then reduced to the modular
coefficient ring.  The rational model is kept on the constructed object:
m-series come out of it by solving log(g) = m * log(X) by successive
substitution, which avoids ever composing large two-variable series.

The two-variable series of an FGL is built lazily for the same reason:
several consumers (p-series checks in particular) never need it at large
degree bounds.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import ConfigError, FglabError, PrecisionError, RingMismatchError
from .rings import (
    RationalizedRing,
    RingMap,
    check_same_ring,
    finite_field,
    identity_map,
    prime_field,
    prime_leaf_embed_map,
    witt_ring,
)
from .series import (
    TruncatedPolyRing,
    TruncatedSeries,
    outer_mul,
    pair_substitute,
    series_grid,
    truncpoly_reduce_map,
)

__all__ = [
    "FormalGroupLaw",
    "FglHom",
    "AxiomReport",
    "check_fgl_axioms",
    "formal_sum",
    "m_series",
    "formal_inverse",
    "fgl_log",
    "fgl_exp",
    "honda_fgl",
    "universal_deformation",
    "hom_compose",
    "identity_hom",
    "base_change",
    "compose_pair",
]


class _LogModel:
    """Rational-side data of a p-typical FGL: log = X + sum m_k X^{p^k}."""

    def __init__(self, p, ring, coeffs_by_k, reduce_map):
        self.p = p
        self.ring = ring                  # rational-side coefficient ring
        self.coeffs_by_k = coeffs_by_k    # {k >= 1: element of ring}
        self.reduce = reduce_map          # callable: rational coeff array -> modular

    def log_series(self, bound):
        s = TruncatedSeries.zero(self.ring, ("T",), bound)
        s.set_coefficient((1,), self.ring.one())
        for k, mk in self.coeffs_by_k.items():
            if self.p**k <= bound:
                s.set_coefficient((self.p**k,), mk)
        return s

    def apply_log(self, g):
        """log(g) for a series g with zero constant term (any variables)."""
        out = g.copy()
        exps = [self.p**k for k in sorted(self.coeffs_by_k) if self.p**k <= g.bound]
        powers = _power_chain(g, exps)
        for k in sorted(self.coeffs_by_k):
            pk = self.p**k
            if pk <= g.bound:
                out = out.add(powers[pk].scalar_mul(np.asarray(self.coeffs_by_k[k])))
        return out

    def solve_from_log(self, target):
        """The series g with log(g) = target (zero constant term)."""
        g = target.copy()
        for _ in range(target.bound + 2):
            acc = target.copy()
            powers = _power_chain(g, [self.p**k for k in sorted(self.coeffs_by_k)
                                      if self.p**k <= g.bound])
            for k in sorted(self.coeffs_by_k):
                pk = self.p**k
                if pk > g.bound:
                    continue
                acc = acc.sub(powers[pk].scalar_mul(np.asarray(self.coeffs_by_k[k])))
            if acc.eq(g):
                return g
            g = acc
        raise FglabError("log-equation iteration did not stabilize")


def _power_chain(g, exponents):
    """{e: g^e} for the requested exponents, sharing the squaring chain."""
    out = {}
    if not exponents:
        return out
    emax = max(exponents)
    sq = [g]
    while 2 ** len(sq) <= emax:
        sq.append(sq[-1].mul(sq[-1]))
    for e in exponents:
        acc = None
        t, ee = 0, e
        while ee:
            if ee & 1:
                acc = sq[t] if acc is None else acc.mul(sq[t])
            ee >>= 1
            t += 1
        out[e] = acc
    return out


class FormalGroupLaw:
    """A one-dimensional commutative FGL, exact mod degree bound+1.

    The two-variable series is materialized on first use.  ``log_model``
    (when present) is the exact rational construction the FGL came from.
    """

    def __init__(self, ring, bound, *, series=None, builder=None, kind="derived",
                 p=None, n=None, params=(), witt_precision=None, log_model=None):
        if series is None and builder is None:
            raise ConfigError("an FGL needs a series or a builder")
        self.ring = ring
        self.bound = bound
        self.kind = kind
        self.p = p
        self.n = n
        self.params = tuple(params)
        self.witt_precision = witt_precision
        self.log_model = log_model
        self._series = series
        self._builder = builder
        self._grid = None
        self._powers = None

    @property
    def series(self):
        if self._series is None:
            self._series = self._builder()
            self._builder = None
        return self._series

    def coefficient(self, i, j):
        return self.series.coefficient((i, j))

    def grid(self):
        """Coefficients as an array g[i, j] (zero beyond i+j <= bound)."""
        if self._grid is None:
            self._grid = series_grid(self.series)
        return self._grid

    def powers_stack(self):
        """Stacked coefficient arrays of F^0 .. F^bound in the 2-var ring."""
        if self._powers is None:
            s = self.series
            N = self.bound
            stack = [TruncatedSeries.constant(self.ring, s.vars, N, self.ring.one())]
            for _ in range(N):
                stack.append(stack[-1].mul(s))
            self._powers = np.stack([t.coeffs for t in stack])
        return self._powers

    def header(self):
        h = {"p": self.p, "n": self.n, "kind": self.kind, "degree_bound": self.bound}
        if self.params:
            h["params"] = list(self.params)
        return h

    def __repr__(self):
        return f"FormalGroupLaw({self.kind}, deg<={self.bound}, over {self.ring!r})"


# ---------------------------------------------------------------------------
# axioms
# ---------------------------------------------------------------------------

class AxiomReport:
    def __init__(self, residuals):
        self.residuals = residuals

    @property
    def failures(self):
        return [name for name, r in self.residuals.items() if not r.is_zero()]

    @property
    def passed(self):
        return not self.failures

    def __repr__(self):
        state = "pass" if self.passed else f"fail({','.join(self.failures)})"
        return f"AxiomReport({state})"


def check_fgl_axioms(F):
    """Unit, commutativity, and associativity residuals mod degree bound+1."""
    s = F.series
    ring, N = F.ring, F.bound
    x = TruncatedSeries.variable(ring, ("X", "Y"), N, "X")
    y = TruncatedSeries.variable(ring, ("X", "Y"), N, "Y")
    zero = TruncatedSeries.zero(ring, ("X", "Y"), N)
    left_unit = s.compose({"X": x, "Y": zero}).sub(x)
    right_unit = s.compose({"X": zero, "Y": y}).sub(y)
    comm = s.sub(s.compose({"X": y, "Y": x}))
    v3 = ("X", "Y", "Z")
    s3 = s.extend_vars(v3)
    x3 = TruncatedSeries.variable(ring, v3, N, "X")
    z3 = TruncatedSeries.variable(ring, v3, N, "Z")
    inner_xy = s3
    inner_yz = s.rename_vars(("Y", "Z")).extend_vars(v3)
    assoc = s.compose({"X": inner_xy, "Y": z3}).sub(
        s.compose({"X": x3, "Y": inner_yz})
    )
    return AxiomReport(
        {
            "left_unit": left_unit,
            "right_unit": right_unit,
            "commutativity": comm,
            "associativity": assoc,
        }
    )


# ---------------------------------------------------------------------------
# formal sums and m-series
# ---------------------------------------------------------------------------

def formal_sum(F, a, b):
    """a +_F b for series with zero constant term over F's ring."""
    for t in (a, b):
        if not F.ring.is_zero(t.constant_term()):
            raise ConfigError("formal_sum needs zero constant terms")
    a._check_compatible(b)
    return F.series.compose({"X": a, "Y": b})


def formal_sum_many(F, terms):
    """Right-nested iterated formal sum of a list of series."""
    if not terms:
        raise ConfigError("formal_sum_many needs at least one term")
    acc = terms[-1]
    for t in reversed(terms[:-1]):
        acc = formal_sum(F, t, acc)
    return acc


def formal_inverse(F):
    """The [-1]-series: F(X, inv(X)) = 0 mod degree bound+1."""
    ring, N = F.ring, F.bound
    x = TruncatedSeries.variable(ring, ("X",), N, "X")
    inv = x.neg()
    for _ in range(N + 2):
        err = F.series.compose({"X": x, "Y": inv})
        if err.is_zero():
            return inv
        inv = inv.sub(err)
    raise FglabError("formal inverse iteration did not stabilize")


def m_series(F, m):
    """[m]-series of F: [0] = 0, [m+1] = F(X, [m]), negatives via [-1]."""
    ring, N = F.ring, F.bound
    x = TruncatedSeries.variable(ring, ("X",), N, "X")
    if F.log_model is not None:
        model = F.log_model
        target = model.log_series(N).rename_vars(("X",)).int_mul(m)
        g = model.solve_from_log(target)
        return TruncatedSeries(ring, ("X",), N, model.reduce(g.coeffs))
    if m == 0:
        return TruncatedSeries.zero(ring, ("X",), N)
    if m < 0:
        inv = formal_inverse(F)
        pos = m_series(F, -m)
        return inv.compose({"X": pos})
    acc = x
    for _ in range(m - 1):
        acc = F.series.compose({"X": x, "Y": acc})
    return acc


# ---------------------------------------------------------------------------
# logarithms
# ---------------------------------------------------------------------------

def _is_rational_side(ring):
    return isinstance(ring, RationalizedRing) or (
        isinstance(ring, TruncatedPolyRing) and isinstance(ring.base, RationalizedRing)
    )


def fgl_log(F):
    """log_F over a rationalized coefficient ring, via log'(X) = 1/F_Y(X,0)."""
    ring, N = F.ring, F.bound
    if F.log_model is not None and F.log_model.ring == ring:
        return F.log_model.log_series(N).rename_vars(("X",))
    if not _is_rational_side(ring):
        raise ConfigError("fgl_log needs a rationalized coefficient ring")
    s = F.series
    dy = s.derivative("Y")
    x1 = TruncatedSeries.variable(ring, ("X",), N, "X")
    zero1 = TruncatedSeries.zero(ring, ("X",), N)
    u = dy.compose({"X": x1, "Y": zero1})
    w = _mult_inverse(u)
    log = TruncatedSeries.zero(ring, ("X",), N)
    for d in range(1, N + 1):
        c = w.coefficient((d - 1,))
        log.coeffs[d] = c * Fraction(1, d)
    return log


def fgl_exp(F):
    """exp_F = compositional inverse of log_F."""
    return fgl_log(F).reverse()


def _mult_inverse(s):
    """Multiplicative inverse of a series with unit constant term."""
    ring = s.ring
    c0 = s.constant_term()
    y = TruncatedSeries.constant(ring, s.vars, s.bound, ring.inv(c0))
    steps = max(1, s.bound).bit_length() + 1
    two = TruncatedSeries.constant(ring, s.vars, s.bound, ring.from_int(2))
    for _ in range(steps):
        y = y.mul(two.sub(s.mul(y)))
    one = TruncatedSeries.constant(ring, s.vars, s.bound, ring.one())
    if not s.mul(y).eq(one):
        raise FglabError("series has no multiplicative inverse")
    return y


# ---------------------------------------------------------------------------
# the Honda FGL and the universal deformation
# ---------------------------------------------------------------------------

def _build_series_from_log(model, bound):
    """Two-variable F with log(F) = log(X) + log(Y), by substitution."""
    ring = model.ring
    S = TruncatedSeries.zero(ring, ("X", "Y"), bound)
    t2 = S.table
    S.coeffs[t2.index[(1, 0)]] = ring.one()
    S.coeffs[t2.index[(0, 1)]] = ring.one()
    for k, mk in model.coeffs_by_k.items():
        pk = model.p**k
        if pk <= bound:
            S.coeffs[t2.index[(pk, 0)]] = mk
            S.coeffs[t2.index[(0, pk)]] = mk
    return model.solve_from_log(S)


_HONDA_CACHE = {}


def honda_fgl(p, n, N, field=None):
    """The height-n Honda FGL over F_p (optionally pushed into an extension),
    from the logarithm sum_j X^{p^{nj}} / p^j."""
    key = (p, n, N, None if field is None else field._key)
    if key in _HONDA_CACHE:
        return _HONDA_CACHE[key]
    J = 0
    while p ** (n * (J + 1)) <= N:
        J += 1
    cap = J + 2
    Qr = RationalizedRing(p, cap)
    coeffs_by_k = {
        n * j: np.array(Fraction(1, p**j), dtype=object) for j in range(1, J + 1)
    }
    pf = prime_field(p)
    tgt = pf
    embed = None
    if field is not None:
        embed = prime_leaf_embed_map(pf, field)
        tgt = field

    def reduce_fn(arr):
        out = Qr.reduce_array(arr, pf)
        return embed.apply(out) if embed is not None else out

    model = _LogModel(p, Qr, coeffs_by_k, reduce_fn)

    def build():
        FQ = _build_series_from_log(model, N)
        return TruncatedSeries(tgt, ("X", "Y"), N, reduce_fn(FQ.coeffs))

    F = FormalGroupLaw(
        tgt, N, builder=build, kind="honda", p=p, n=n, log_model=model
    )
    _HONDA_CACHE[key] = F
    return F


_UNIVDEF_CACHE = {}


def universal_deformation(p, n, N, m, *, param_bound=None, varstem="w"):
    """The Lubin-Tate universal deformation of the height-n Honda FGL.

    Coefficients live over W[w_1..w_{n-1}] truncated at weighted parameter
    degree ``param_bound`` (default N-1), where w_i carries weight p^i - 1.
    That truncation is exact: the coefficient of X^aY^b is weighted-
    homogeneous of degree a+b-1, as is every intermediate of the log
    recursion, so nothing a degree-N series can see is ever dropped.

    The logarithm satisfies the recursion
        m_0 = 1,   m_k = (sum_{j=1}^{min(n,k)} m_{k-j} w_j^{p^{k-j}}) / (p - p^{p^k}),
    obtained by applying log to the prescribed p-series; the p-series is
    verified against the iterated formal sum independently in the tests.
    """
    if param_bound is None:
        param_bound = max(N - 1, 1)
    key = (p, n, N, m, param_bound, varstem)
    if key in _UNIVDEF_CACHE:
        return _UNIVDEF_CACHE[key]
    K = 0
    while p ** (K + 1) <= N:
        K += 1
    cap = max(K + 2, N // max(p - 1, 1) + 2)
    Qr = RationalizedRing(p, cap)
    nparams = n - 1
    varnames = tuple(f"{varstem}{i}" for i in range(1, nparams + 1))
    weights = tuple(p**i - 1 for i in range(1, nparams + 1))
    if varnames:
        qring = TruncatedPolyRing(Qr, varnames, param_bound, weights=weights)
        wring = TruncatedPolyRing(witt_ring(p, 1, m), varnames, param_bound, weights=weights)
        reduce_map = truncpoly_reduce_map(qring, wring)
        reduce_fn = reduce_map.apply
    else:
        qring = Qr
        wring = witt_ring(p, 1, m)
        reduce_fn = lambda arr: Qr.reduce_array(arr, wring)

    def w_image(j):
        # the p-series coefficient of X^{p^j}: variable, or 1 at the top
        if j < 1 or j > n:
            return None
        if j == n:
            return qring.one()
        return qring.gen(f"{varstem}{j}")

    mlist = [qring.one()]
    for k in range(1, K + 1):
        acc = qring.zeros()
        for j in range(1, min(n, k) + 1):
            wj = w_image(j)
            term = qring.mul(mlist[k - j], qring.pow(wj, p ** (k - j)))
            acc = qring.add(acc, term)
        denom = Fraction(p - p ** (p**k))
        mk = acc * (1 / denom)
        _check_caps_any(qring, Qr, mk)
        mlist.append(mk)
    coeffs_by_k = {k: mlist[k] for k in range(1, K + 1)}
    model = _LogModel(p, qring, coeffs_by_k, reduce_fn)

    def build():
        FQ = _build_series_from_log(model, N)
        return TruncatedSeries(wring, ("X", "Y"), N, reduce_fn(FQ.coeffs))

    F = FormalGroupLaw(
        wring,
        N,
        builder=build,
        kind="universal-deformation",
        p=p,
        n=n,
        params=varnames,
        witt_precision=m,
        log_model=model,
    )
    _UNIVDEF_CACHE[key] = F
    return F


def _check_caps_any(ring, Qr, elt):
    arr = np.asarray(elt, dtype=object).reshape(-1)
    for fr in arr:
        if Qr.vp_denominator(fr) > Qr.cap:
            raise PrecisionError(f"denominator cap exceeded at {fr}")


# ---------------------------------------------------------------------------
# homomorphisms
# ---------------------------------------------------------------------------

class FglHom:
    """A pair (f, alpha): source -> target.

    ``alpha`` is a RingMap from the target's coefficient ring to the
    source's, and f is a one-variable series over the source ring with
    f(0) = 0 satisfying f(F_src(X,Y)) = (alpha^* F_tgt)(f(X), f(Y)).
    """

    def __init__(self, source, target, f, alpha):
        self.source = source
        self.target = target
        self.f = f
        self.alpha = alpha
        if alpha.src != target.ring or alpha.tgt != source.ring:
            raise RingMismatchError("alpha must map the target ring to the source ring")
        if f.ring != source.ring:
            raise RingMismatchError("f must live over the source ring")
        if not source.ring.is_zero(f.constant_term()):
            raise ConfigError("homomorphism series need f(0) = 0")

    def residual(self):
        """f(F_src(X,Y)) - (alpha^* F_tgt)(fX, fY), zero iff the pair is a hom."""
        ring = self.source.ring
        PS = self.source.powers_stack()
        fc = self.f.coeffs
        lead = fc[(slice(None),) + (None,) * (PS.ndim - fc.ndim)]
        lhs_coeffs = ring.sum(ring.mul(lead, PS), axis=0)
        lhs = TruncatedSeries(ring, ("X", "Y"), self.source.bound, lhs_coeffs)
        G = base_change(self.target, self.alpha)
        rhs = compose_pair(G, self.f, self.f)
        return lhs.sub(rhs)

    def holds(self):
        return self.residual().is_zero()

    @property
    def is_isomorphism(self):
        c1 = self.f.coefficient((1,))
        return self.source.ring.try_inv(c1) is not None

    def __repr__(self):
        return f"FglHom({self.source.kind} -> {self.target.kind})"


def identity_hom(F):
    x = TruncatedSeries.variable(F.ring, ("X",), F.bound, "X")
    return FglHom(F, F, x, identity_map(F.ring))


def hom_compose(h1, h2):
    """Composite of h1: F1 -> F2 and h2: F2 -> F3, i.e. (alpha1^* f2 ∘ f1, alpha1 ∘ alpha2)."""
    if h1.target is not h2.source and h1.target.ring != h2.source.ring:
        raise RingMismatchError("hom endpoints do not match")
    g_pulled = h2.f.map_coefficients(h1.alpha)
    f = g_pulled.compose({g_pulled.vars[0]: h1.f.rename_vars(g_pulled.vars)})
    alpha = h2.alpha.then(h1.alpha)
    return FglHom(h1.source, h2.target, f.rename_vars(("X",)), alpha)


def base_change(F, ring_map, *, kind=None):
    """alpha^* F: apply a coefficient ring map to the series."""
    if ring_map.src != F.ring:
        raise RingMismatchError("base_change map must start at the FGL's ring")
    if ring_map.src == ring_map.tgt and getattr(ring_map, "name", "") == "id":
        return F
    s = F.series.map_coefficients(ring_map)
    return FormalGroupLaw(
        ring_map.tgt,
        F.bound,
        series=s,
        kind=kind or "derived",
        p=F.p,
        n=F.n,
        witt_precision=F.witt_precision,
    )


def compose_pair(G, u, v):
    """G(u(X), v(Y)) for one-variable u, v over G's ring.

    Delegates to pair_substitute with the law's cached coefficient grid.
    """
    return pair_substitute(G.series, u, v, grid=G.grid())
