"""Truncated multivariate power series, and truncated polynomial rings.

A `TruncatedSeries` is a dense vector of coefficients indexed by the
monomials of total degree <= bound in a fixed variable tuple, over any
ring from `fglab.rings`.  Deformation parameters and other auxiliary
quantities never appear as series variables; they live inside the
coefficient ring, usually a `TruncatedPolyRing`.

All products are exact modulo total degree bound+1.  Substitution is
only offered for images with zero constant term, which is what makes
truncation commute with composition.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, FglabError, PrecisionError, RingMismatchError
from .rings import Ring, RingMap, check_same_ring

__all__ = ["TruncatedPolyRing", "TruncatedSeries", "series_zero", "series_variable"]


# ---------------------------------------------------------------------------
# monomial tables (shared by series and truncated polynomial rings)
# ---------------------------------------------------------------------------

class _SimplexTable:
    """Graded-lex enumeration of monomials of (weighted) degree <= bound.

    With weights, the grading key is sum(w_i * e_i); plain total degree is
    kept alongside because ideal filtrations grade by it.
    """

    def __init__(self, nvars, bound, weights=None):
        self.nvars = nvars
        self.bound = bound
        self.weights = tuple(weights) if weights is not None else (1,) * nvars
        if len(self.weights) != nvars or any(w < 1 for w in self.weights):
            raise ConfigError("weights must be positive, one per variable")
        exps = []
        for d in range(bound + 1):
            exps.extend(_monomials_of_wdegree(self.weights, d))
        self.exps = np.array(exps, dtype=np.int64).reshape(len(exps), nvars)
        self.wdegs = self.exps @ np.array(self.weights, dtype=np.int64)
        self.degs = self.exps.sum(axis=1)
        self.size = len(exps)
        self.index = {tuple(e): i for i, e in enumerate(exps)}
        self._pairs = None
        self._groups = None

    def pairs(self):
        """(I, J, starts, out_slots): all products staying under the bound,
        sorted by output slot for np.add.reduceat."""
        if self._pairs is None:
            I, J, out = [], [], []
            for i in range(self.size):
                ei = self.exps[i]
                for j in range(self.size):
                    slot = self.index.get(tuple(ei + self.exps[j]))
                    if slot is None:
                        continue
                    I.append(i)
                    J.append(j)
                    out.append(slot)
            order = np.argsort(np.array(out), kind="stable")
            I = np.array(I, dtype=np.int64)[order]
            J = np.array(J, dtype=np.int64)[order]
            out = np.array(out, dtype=np.int64)[order]
            out_slots, starts = np.unique(out, return_index=True)
            self._pairs = (I, J, starts, out_slots)
        return self._pairs

    def first_var_groups(self):
        """For each exponent e of the first variable, the parent slots of
        monomials (e, rest) in the graded-lex order of the remaining vars."""
        if self._groups is None:
            groups = []
            w1 = self.weights[0]
            for e in range(self.bound // w1 + 1):
                sub = _table(self.nvars - 1, self.bound - e * w1, self.weights[1:])
                idx = np.array(
                    [self.index[(e,) + tuple(rest)] for rest in sub.exps],
                    dtype=np.int64,
                )
                groups.append(idx)
            self._groups = groups
        return self._groups

    def shift(self, exps):
        """(src_slots, dst_slots) for multiplication by the monomial exps."""
        key = tuple(exps)
        cache = getattr(self, "_shifts", None)
        if cache is None:
            cache = self._shifts = {}
        if key not in cache:
            d = sum(key)
            src, dst = [], []
            for i in range(self.size):
                if self.degs[i] + d > self.bound:
                    break
                src.append(i)
                dst.append(self.index[tuple(self.exps[i] + np.array(key))])
            cache[key] = (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64))
        return cache[key]


def _monomials_of_wdegree(weights, d):
    """Monomials with sum(w_i * e_i) == d, leading exponent descending."""
    if len(weights) == 0:
        return [()] if d == 0 else []
    if len(weights) == 1:
        w = weights[0]
        return [(d // w,)] if d % w == 0 else []
    out = []
    w1 = weights[0]
    for e in range(d // w1, -1, -1):
        for rest in _monomials_of_wdegree(weights[1:], d - e * w1):
            out.append((e,) + rest)
    return out


_TABLE_CACHE = {}


def _table(nvars, bound, weights=None):
    key = (nvars, bound, tuple(weights) if weights is not None else None)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = _SimplexTable(nvars, bound, weights)
    return _TABLE_CACHE[key]


# ---------------------------------------------------------------------------
# truncated polynomial rings R[v...]/(degree > bound)
# ---------------------------------------------------------------------------

class TruncatedPolyRing(Ring):
    """base[v_1,...,v_r] truncated beyond total degree ``bound``.

    This is the standard coefficient ring for deformations: the maximal
    ideal is (p, v_1, ..., v_r) and the induced grading (p-exponent plus
    variable degree) drives the successive-approximation solvers.

    Optional ``weights`` truncate by sum(w_i * e_i) instead of total degree.
    Deformation parameters of a height-h law are naturally weighted by
    p^i - 1, which keeps the slot count small at higher heights; the ideal
    filtration still grades by plain degree.
    """

    def __init__(self, base, varnames, bound, weights=None):
        if len(varnames) < 1:
            raise ConfigError("TruncatedPolyRing needs at least one variable")
        self.base = base
        self.varnames = tuple(varnames)
        self.bound = bound
        self.weights = tuple(weights) if weights is not None else None
        self.table = _table(len(varnames), bound, weights)
        self.p = base.p
        self.leaf_modulus = base.leaf_modulus
        self.shape = (self.table.size,) + base.shape
        self._nb = len(base.shape)
        if self.leaf_modulus is not None:
            self._finish_init()
        else:
            import json

            self._key = json.dumps(self.descriptor(), sort_keys=True)

    def _b(self):
        return (slice(None),) * self._nb

    def const_index(self):
        return (0,) + self.base.const_index()

    def gen(self, name, lead=()):
        exps = tuple(1 if v == name else 0 for v in self.varnames)
        if sum(exps) != 1:
            raise ConfigError(f"{name} is not a variable of {self!r}")
        return self.monomial(exps, lead=lead)

    def monomial(self, exps, lead=()):
        slot = self.table.index.get(tuple(exps))
        if slot is None:
            raise ConfigError(f"exponents {exps} outside degree bound {self.bound}")
        z = self.zeros(lead)
        one = self.base.one()
        z[(Ellipsis, slot) + self._b()] = one
        return z

    def from_base(self, c):
        c = np.asarray(c)
        lead = c.shape[: c.ndim - self._nb]
        z = self.zeros(lead)
        z[(Ellipsis, 0) + self._b()] = c
        return z

    def component(self, a, slot):
        return np.asarray(a)[(Ellipsis, slot) + self._b()]

    def zeros(self, lead=()):
        if self.leaf_modulus is None:
            from fractions import Fraction

            return np.full(tuple(lead) + self.shape, Fraction(0), dtype=object)
        return super().zeros(lead)

    def from_int(self, c, lead=()):
        return self.from_base(self.base.from_int(c, lead=lead))

    def mul(self, a, b):
        nb = self._nb
        a = np.asarray(a)
        b = np.asarray(b)
        I, J, starts, out_slots = self.table.pairs()
        ax = -(nb + 1)
        A = np.take(a, I, axis=ax)
        B = np.take(b, J, axis=ax)
        prod = self.base.mul(A, B)
        sums = np.add.reduceat(prod, starts, axis=prod.ndim + ax)
        sums = self.base.normalize(sums) if self.leaf_modulus is not None else sums
        lead = prod.shape[: prod.ndim + ax]
        out = self.zeros(lead)
        out[(Ellipsis, out_slots) + self._b()] = sums
        return out

    # additive ops fall back to the leaf-modulus defaults; for a rational
    # base (object dtype) they still work because normalize is overridden.
    def normalize(self, a):
        if self.leaf_modulus is None:
            return a
        return super().normalize(a)

    def add(self, a, b):
        if self.leaf_modulus is None:
            return a + b
        return super().add(a, b)

    def sub(self, a, b):
        if self.leaf_modulus is None:
            return a - b
        return super().sub(a, b)

    def neg(self, a):
        if self.leaf_modulus is None:
            return -a
        return super().neg(a)

    def scalar_mul(self, c, a):
        if self.leaf_modulus is None:
            from fractions import Fraction

            return a * Fraction(c)
        return super().scalar_mul(c, a)

    def sum(self, arr, axis):
        if self.leaf_modulus is None:
            return np.sum(arr, axis=axis)
        return super().sum(arr, axis=axis)

    def try_inv(self, a):
        c = self.component(a, 0)
        c_inv = self.base.try_inv(c)
        if c_inv is None:
            return None
        y = self.from_base(c_inv)
        steps = max(1, (self.bound + self._nilpotency_margin()).bit_length()) + 1
        two = self.from_int(2)
        for _ in range(steps):
            y = self.mul(y, self.sub(two, self.mul(a, y)))
        if not self.eq(self.mul(a, y), self.one()):
            return None
        return y

    def _nilpotency_margin(self):
        mod, p, m = self.leaf_modulus, self.p, 1
        if mod is None:
            return 1
        while p**m < mod:
            m += 1
        return m

    def pivot_score(self, a):
        for slot in range(self.table.size):
            c = self.component(a, slot)
            if np.any(c):
                return int(self.table.degs[slot])
        return 10**9

    def residue_ring(self):
        rb = self.base.residue_ring()
        if rb == self.base:
            return self
        return TruncatedPolyRing(rb, self.varnames, self.bound, weights=self.weights)

    def to_residue(self, a):
        return self.base.to_residue(a)

    def lift_residue(self, abar):
        return self.base.lift_residue(abar)

    # -- local-ring structure ------------------------------------------------

    def local_residue_field(self):
        """Residue field of the local ring (kill p and all variables)."""
        return self.base.residue_ring()

    def to_local_residue(self, a):
        return self.base.to_residue(self.component(a, 0))

    def filtration_stages(self, m_precision):
        """Graded basis of the local filtration: stage s lists (c, slot)
        with c + wdeg(slot) = s, 0 <= c < m_precision.

        Weighted degree (= total degree for unweighted rings) keeps the
        filtration multiplicative while matching the bound cut used by the
        capped stage rings, so stage-s slots always exist in the stage ring.
        """
        stages = []
        s = 1
        while True:
            basis = []
            for slot in range(self.table.size):
                d = int(self.table.wdegs[slot])
                c = s - d
                if 0 <= c < m_precision:
                    basis.append((c, slot))
            if not basis:
                break
            stages.append((s, basis))
            s += 1
        return stages

    def extract_graded(self, a, c, slot):
        """Residue-field component of a along p^c * monomial(slot)."""
        comp = self.component(np.asarray(a), slot)
        return (comp // self.p**c) % self.p

    def embed_graded(self, kappa_elt, c, slot):
        """Integer lift of a residue-field element into p^c * monomial(slot)."""
        z = self.zeros()
        z[(slot,) + self._b()] = (np.asarray(kappa_elt) * self.p**c) % self.leaf_modulus
        return z

    def descriptor(self):
        d = {
            "ring": "truncpoly",
            "vars": list(self.varnames),
            "bound": self.bound,
            "base": self.base.descriptor(),
        }
        if self.weights is not None:
            d["weights"] = list(self.weights)
        return d

    def __repr__(self):
        vs = ",".join(self.varnames)
        return f"{self.base!r}[{vs}]<=deg{self.bound}"

    def format_element(self, a):
        a = np.asarray(a)
        terms = []
        for slot in range(self.table.size):
            c = a[(slot,) + self._b()]
            if not np.any(c):
                continue
            mono = _format_monomial(self.varnames, self.table.exps[slot])
            cs = self.base.format_element(c)
            terms.append(f"({cs})" if not mono else f"({cs})*{mono}")
        return " + ".join(terms) if terms else "0"


def _format_monomial(varnames, exps):
    parts = []
    for v, e in zip(varnames, exps):
        if e == 0:
            continue
        parts.append(v if e == 1 else f"{v}^{e}")
    return "*".join(parts)


# ---------------------------------------------------------------------------
# truncated series
# ---------------------------------------------------------------------------

class TruncatedSeries:
    """Power series in ``vars`` over ``ring``, exact mod degree bound+1."""

    __slots__ = ("ring", "vars", "bound", "table", "coeffs")

    def __init__(self, ring, vars, bound, coeffs):
        self.ring = ring
        self.vars = tuple(vars)
        self.bound = bound
        self.table = _table(len(self.vars), bound)
        self.coeffs = coeffs

    # -- constructors ---------------------------------------------------------

    @classmethod
    def zero(cls, ring, vars, bound):
        t = _table(len(vars), bound)
        return cls(ring, vars, bound, ring.zeros(lead=(t.size,)))

    @classmethod
    def variable(cls, ring, vars, bound, name):
        s = cls.zero(ring, vars, bound)
        exps = tuple(1 if v == name else 0 for v in vars)
        if sum(exps) != 1:
            raise ConfigError(f"{name} not among series variables {vars}")
        s.coeffs[s.table.index[exps]] = ring.one()
        return s

    @classmethod
    def constant(cls, ring, vars, bound, element):
        s = cls.zero(ring, vars, bound)
        s.coeffs[0] = element
        return s

    @classmethod
    def monomial(cls, ring, vars, bound, exps, element):
        s = cls.zero(ring, vars, bound)
        slot = s.table.index.get(tuple(exps))
        if slot is None:
            raise ConfigError(f"exponents {exps} outside degree bound {bound}")
        s.coeffs[slot] = element
        return s

    def copy(self):
        return TruncatedSeries(self.ring, self.vars, self.bound, self.coeffs.copy())

    def _like(self, coeffs):
        return TruncatedSeries(self.ring, self.vars, self.bound, coeffs)

    def _check_compatible(self, other):
        if self.ring != other.ring:
            raise RingMismatchError("series coefficient rings differ")
        if self.vars != other.vars or self.bound != other.bound:
            raise RingMismatchError(
                f"series signatures differ: {self.vars}<= {self.bound} vs "
                f"{other.vars}<= {other.bound}"
            )

    # -- arithmetic -------------------------------------------------------------

    def add(self, other):
        self._check_compatible(other)
        return self._like(self.ring.add(self.coeffs, other.coeffs))

    def sub(self, other):
        self._check_compatible(other)
        return self._like(self.ring.sub(self.coeffs, other.coeffs))

    def neg(self):
        return self._like(self.ring.neg(self.coeffs))

    def nonzero_slots(self):
        trailing = tuple(range(1, self.coeffs.ndim))
        if trailing:
            mask = np.any(self.coeffs != 0, axis=trailing)
        else:
            mask = self.coeffs != 0
        return np.nonzero(mask)[0]

    def mul(self, other):
        self._check_compatible(other)
        ring = self.ring
        nz_self = self.nonzero_slots()
        if len(nz_self) <= 6:
            return _sparse_mul(self, other, nz_self)
        nz_other = other.nonzero_slots()
        if len(nz_other) <= 6:
            return _sparse_mul(other, self, nz_other)
        I, J, starts, out_slots = self.table.pairs()
        A = self.coeffs[I]
        B = other.coeffs[J]
        prod = ring.mul(A, B)
        sums = ring.normalize(np.add.reduceat(prod, starts, axis=0))
        out = ring.zeros(lead=(self.table.size,))
        out[out_slots] = sums
        return self._like(out)

    def mul_term(self, exps, coeff):
        """Multiply by coeff * monomial(exps)."""
        src, dst = self.table.shift(exps)
        out = self.ring.zeros(lead=(self.table.size,))
        if len(src):
            out[dst] = self.ring.mul(np.asarray(coeff), self.coeffs[src])
        return self._like(out)

    def scalar_mul(self, element):
        """Multiply every coefficient by a fixed ring element."""
        return self._like(self.ring.mul(np.asarray(element), self.coeffs))

    def int_mul(self, c):
        return self._like(self.ring.scalar_mul(c, self.coeffs))

    def pow(self, e):
        if e < 0:
            raise ConfigError("negative series powers are not defined here")
        result = TruncatedSeries.constant(self.ring, self.vars, self.bound, self.ring.one())
        base = self
        while e:
            if e & 1:
                result = result.mul(base)
            if e > 1:
                base = base.mul(base)
            e >>= 1
        return result

    # -- coefficient access -----------------------------------------------------

    def coefficient(self, exps):
        slot = self.table.index.get(tuple(exps))
        if slot is None:
            raise ConfigError(f"exponents {exps} outside degree bound {self.bound}")
        return self.coeffs[slot]

    def set_coefficient(self, exps, element):
        slot = self.table.index.get(tuple(exps))
        if slot is None:
            raise ConfigError(f"exponents {exps} outside degree bound {self.bound}")
        self.coeffs[slot] = element

    def constant_term(self):
        return self.coeffs[0]

    def is_zero(self):
        return self.ring.is_zero(self.coeffs)

    def eq(self, other):
        self._check_compatible(other)
        return self.ring.eq(self.coeffs, other.coeffs)

    def min_degree(self):
        """Lowest total degree with a nonzero coefficient, or None."""
        for slot in range(self.table.size):
            if not self.ring.is_zero(self.coeffs[slot]):
                return int(self.table.degs[slot])
        return None

    def degree_slice(self, dmax):
        """Zero out all coefficients of total degree > dmax."""
        out = self.coeffs.copy()
        out[self.table.degs > dmax] = 0
        return self._like(out)

    def truncate(self, new_bound):
        """Forget coefficients above a smaller bound."""
        if new_bound > self.bound:
            raise ConfigError("truncate cannot raise the degree bound")
        t = _table(len(self.vars), new_bound)
        out = self.ring.zeros(lead=(t.size,))
        out[: t.size] = self.coeffs[: t.size]
        return TruncatedSeries(self.ring, self.vars, new_bound, out)

    # -- structural maps ---------------------------------------------------------

    def map_coefficients(self, ring_map):
        """Apply a RingMap to every coefficient."""
        if ring_map.src != self.ring:
            raise RingMismatchError("coefficient map domain mismatch")
        return TruncatedSeries(
            ring_map.tgt, self.vars, self.bound, ring_map.apply(self.coeffs)
        )

    def rename_vars(self, new_vars):
        if len(new_vars) != len(self.vars):
            raise ConfigError("rename_vars must preserve the variable count")
        return TruncatedSeries(self.ring, tuple(new_vars), self.bound, self.coeffs)

    def extend_vars(self, new_vars, new_bound=None):
        """View this series inside a larger variable tuple (old vars must
        appear in order as a subset)."""
        new_bound = self.bound if new_bound is None else new_bound
        if new_bound < self.bound:
            raise ConfigError("extend_vars cannot shrink the bound")
        positions = []
        j = 0
        for i, v in enumerate(new_vars):
            if j < len(self.vars) and v == self.vars[j]:
                positions.append(i)
                j += 1
        if j != len(self.vars):
            raise ConfigError(f"{self.vars} is not an ordered subset of {new_vars}")
        out = TruncatedSeries.zero(self.ring, tuple(new_vars), new_bound)
        for slot in range(self.table.size):
            c = self.coeffs[slot]
            if self.ring.is_zero(c):
                continue
            exps = [0] * len(new_vars)
            for pos, e in zip(positions, self.table.exps[slot]):
                exps[pos] = int(e)
            out.coeffs[out.table.index[tuple(exps)]] = c
        return out

    # -- composition ---------------------------------------------------------------

    def compose(self, images):
        """Substitute ``images[var]`` for each variable.

        Every image must share one target signature (ring, vars, bound) and
        have zero constant term; that makes truncation exact.
        """
        if set(images) != set(self.vars):
            raise ConfigError(f"need exactly one image per variable {self.vars}")
        imgs = [images[v] for v in self.vars]
        tgt = imgs[0]
        for img in imgs:
            if img.ring != self.ring:
                raise RingMismatchError("image coefficients live in a different ring")
            img._check_compatible(tgt)
            if not img.ring.is_zero(img.constant_term()):
                raise PrecisionError(
                    "substitution image has a nonzero constant term; "
                    "truncation would be unsound"
                )
        return _compose_rec(self.ring, self.table, self.coeffs, imgs, tgt)

    def derivative(self, var):
        """Formal partial derivative."""
        vi = self.vars.index(var)
        ring = self.ring
        out = TruncatedSeries.zero(ring, self.vars, self.bound)
        for slot in range(self.table.size):
            e = int(self.table.exps[slot][vi])
            if e == 0:
                continue
            c = self.coeffs[slot]
            if ring.is_zero(c):
                continue
            nexps = self.table.exps[slot].copy()
            nexps[vi] -= 1
            out.coeffs[self.table.index[tuple(nexps)]] = ring.scalar_mul(e, c)
        return out

    def hasse_derivative(self, var, k):
        """Divided k-th partial: binom(e, k) coefficients, so it stays
        integral in every characteristic."""
        vi = self.vars.index(var)
        ring = self.ring
        out = TruncatedSeries.zero(ring, self.vars, self.bound)
        for slot in range(self.table.size):
            e = int(self.table.exps[slot][vi])
            if e < k:
                continue
            c = self.coeffs[slot]
            if ring.is_zero(c):
                continue
            nexps = self.table.exps[slot].copy()
            nexps[vi] -= k
            out.coeffs[self.table.index[tuple(nexps)]] = ring.scalar_mul(
                math.comb(e, k), c
            )
        return out

    def reverse(self):
        """Compositional inverse of a one-variable series c1*X + ...,
        with c1 a unit and zero constant term."""
        if len(self.vars) != 1:
            raise ConfigError("reverse is defined for one-variable series")
        ring = self.ring
        if not ring.is_zero(self.constant_term()):
            raise ConfigError("reverse needs a zero constant term")
        c1 = self.coefficient((1,))
        c1_inv = ring.inv(c1)
        x = TruncatedSeries.variable(ring, self.vars, self.bound, self.vars[0])
        g = x.scalar_mul(c1_inv)
        for _ in range(self.bound - 1):
            err = x.sub(self.compose({self.vars[0]: g}))
            g = g.add(err.scalar_mul(c1_inv))
        if not self.compose({self.vars[0]: g}).eq(x):
            raise FglabError("series reversion did not converge")
        return g

    # -- output ---------------------------------------------------------------------

    def terms(self):
        """(exps tuple, coefficient) pairs for nonzero slots, graded-lex."""
        out = []
        for slot in range(self.table.size):
            c = self.coeffs[slot]
            if not self.ring.is_zero(c):
                out.append((tuple(int(e) for e in self.table.exps[slot]), c))
        return out

    def format(self):
        parts = []
        for exps, c in self.terms():
            mono = _format_monomial(self.vars, exps)
            cs = self.ring.format_element(c)
            parts.append(f"({cs})" if not mono else f"({cs})*{mono}")
        return " + ".join(parts) if parts else "0"

    def __repr__(self):
        return f"TruncatedSeries({self.vars}, deg<={self.bound}, over {self.ring!r})"


def _sparse_mul(sparse, dense, nz_slots):
    ring = sparse.ring
    out = ring.zeros(lead=(sparse.table.size,))
    for slot in nz_slots:
        exps = tuple(int(e) for e in sparse.table.exps[slot])
        src, dst = sparse.table.shift(exps)
        if not len(src):
            continue
        term = ring.mul(np.asarray(sparse.coeffs[slot]), dense.coeffs[src])
        out[dst] = ring.add(out[dst], term)
    return sparse._like(out)


def _compose_rec(ring, table, coeffs, imgs, tgt):
    """Grouped Horner evaluation of a coefficient block along imgs."""
    if table.nvars == 1:
        acc = TruncatedSeries.zero(tgt.ring, tgt.vars, tgt.bound)
        img = imgs[0]
        for e in range(table.bound, -1, -1):
            acc = acc.mul(img)
            c = coeffs[e]
            if not ring.is_zero(c):
                acc.coeffs[0] = ring.add(acc.coeffs[0], c)
        return acc
    groups = table.first_var_groups()
    acc = TruncatedSeries.zero(tgt.ring, tgt.vars, tgt.bound)
    img = imgs[0]
    for e in range(table.bound, -1, -1):
        acc = acc.mul(img)
        idx = groups[e]
        sub_coeffs = coeffs[idx]
        if np.any(sub_coeffs):
            sub = _compose_rec(
                ring, _table(table.nvars - 1, table.bound - e), sub_coeffs, imgs[1:], tgt
            )
            acc = acc.add(sub)
    return acc


def series_zero(ring, vars, bound):
    return TruncatedSeries.zero(ring, vars, bound)


def series_variable(ring, vars, bound, name):
    return TruncatedSeries.variable(ring, vars, bound, name)


# ---------------------------------------------------------------------------
# fast outer product of one-variable series
# ---------------------------------------------------------------------------

_OUTER_CACHE = {}


def outer_mul(sx, sy, out_vars):
    """sx(u) * sy(v) as a series in out_vars = (u_name, v_name).

    Both inputs are one-variable with the same bound; the result is exact
    mod total degree bound+1 because every cross term is a single product.
    """
    if len(sx.vars) != 1 or len(sy.vars) != 1:
        raise ConfigError("outer_mul expects one-variable series")
    if sx.bound != sy.bound:
        raise ConfigError("outer_mul needs matching bounds")
    check_same_ring(sx.ring, sy.ring, "outer_mul")
    bound = sx.bound
    key = bound
    if key not in _OUTER_CACHE:
        t2 = _table(2, bound)
        I, J, out = [], [], []
        for a in range(bound + 1):
            for b in range(bound + 1 - a):
                I.append(a)
                J.append(b)
                out.append(t2.index[(a, b)])
        _OUTER_CACHE[key] = (
            np.array(I, dtype=np.int64),
            np.array(J, dtype=np.int64),
            np.array(out, dtype=np.int64),
        )
    I, J, out_slots = _OUTER_CACHE[key]
    ring = sx.ring
    prod = ring.mul(sx.coeffs[I], sy.coeffs[J])
    out = ring.zeros(lead=(_table(2, bound).size,))
    out[out_slots] = prod
    return TruncatedSeries(ring, tuple(out_vars), bound, out)


def series_grid(S):
    """Coefficients of a two-variable series as a dense (b+1, b+1) grid.

    grid[i, j] is the coefficient of X^i Y^j (using S's own variable names);
    entries with i + j > bound stay zero.
    """
    if len(S.vars) != 2:
        raise ConfigError("series_grid expects a two-variable series")
    ring, bound = S.ring, S.bound
    g = ring.zeros(lead=(bound + 1, bound + 1))
    for slot in range(S.table.size):
        e = S.table.exps[slot]
        g[e[0], e[1]] = S.coeffs[slot]
    return g


def pair_substitute(S, u, v, grid=None):
    """S(u(X), v(Y)) for a two-variable S and one-variable u, v.

    Exploits that u-powers only involve X and v-powers only Y, so each
    cross term is a single outer product instead of a 2-variable product.
    Callers that reuse the same S can pass a precomputed series_grid(S).
    """
    ring, N = S.ring, S.bound
    if u.bound != N or v.bound != N:
        raise ConfigError("pair_substitute needs matching degree bounds")
    for t in (u, v):
        if not ring.is_zero(t.constant_term()):
            raise ConfigError("pair_substitute images need zero constant term")
    if grid is None:
        grid = series_grid(S)
    ux = u.rename_vars(("X",))
    vy = v.rename_vars(("Y",))
    U = [TruncatedSeries.constant(ring, ("X",), N, ring.one())]
    V = [TruncatedSeries.constant(ring, ("Y",), N, ring.one())]
    for _ in range(N):
        U.append(U[-1].mul(ux))
        V.append(V[-1].mul(vy))
    VC = np.stack([t.coeffs for t in V])          # (N+1, slots, *rs)
    gi = grid[:, :, None]
    H = ring.sum(ring.mul(gi, VC[None]), axis=1)  # (N+1, slots, *rs)
    out = TruncatedSeries.zero(ring, ("X", "Y"), N)
    for i in range(N + 1):
        hi = TruncatedSeries(ring, ("Y",), N, H[i])
        if hi.is_zero():
            continue
        out = out.add(outer_mul(U[i], hi, ("X", "Y")))
    return out


# ---------------------------------------------------------------------------
# ring maps between truncated polynomial rings
# ---------------------------------------------------------------------------

def truncpoly_hom(src, tgt, images, leaf_map=None):
    """RingMap src -> tgt sending variable i to images[i].

    ``images`` are elements of ``tgt``; coefficients go through ``leaf_map``
    (a function src.base element -> tgt element), defaulting to tgt.from_base
    when the bases agree.
    """
    if not isinstance(src, TruncatedPolyRing):
        raise ConfigError("truncpoly_hom domain must be a TruncatedPolyRing")
    if len(images) != len(src.varnames):
        raise ConfigError("one image per variable required")
    if leaf_map is None:
        if src.base != getattr(tgt, "base", None) and src.base != tgt:
            raise ConfigError("no default coefficient map between these rings")
        if src.base == tgt:
            leaf_map = lambda c: c
        else:
            leaf_map = tgt.from_base

    def fn(a):
        a = np.asarray(a)
        nb = src._nb
        lead = a.shape[: a.ndim - nb - 1]
        return _eval_rec(src.table, a, list(images), leaf_map, tgt, lead)

    return RingMap(src, tgt, fn, name=f"eval{src.varnames}")


def _eval_rec(table, coeffs, images, leaf_map, tgt, lead):
    # coeffs: (*lead, table.size, *src.base.shape); Horner along first var.
    # 1-var tables list exponents 0,1,2,... in slot order even when weighted.
    if table.nvars == 1:
        acc = tgt.zeros(lead)
        emax = table.size - 1
        for e in range(emax, -1, -1):
            acc = tgt.mul(acc, images[0]) if e < emax else acc
            c = coeffs[(Ellipsis, e) + (slice(None),) * (coeffs.ndim - len(lead) - 1)]
            acc = tgt.add(acc, leaf_map(c))
        return acc
    groups = table.first_var_groups()
    w1 = table.weights[0]
    emax = len(groups) - 1
    acc = tgt.zeros(lead)
    for e in range(emax, -1, -1):
        if e < emax:
            acc = tgt.mul(acc, images[0])
        idx = groups[e]
        sub = np.take(coeffs, idx, axis=len(lead))
        subtab = _table(table.nvars - 1, table.bound - e * w1, table.weights[1:])
        acc = tgt.add(acc, _eval_rec(subtab, sub, images[1:], leaf_map, tgt, lead))
    return acc


def truncpoly_reduce_map(src, tgt):
    """Reduce a rational-based TruncatedPolyRing into a modular one
    (same variables and bound; coefficients must be p-integral)."""
    if src.varnames != tgt.varnames or src.bound != tgt.bound or src.weights != tgt.weights:
        raise ConfigError("reduce map needs identical variables and bound")

    def fn(a):
        a = np.asarray(a)
        lead = a.shape[: a.ndim - 1]
        out = tgt.zeros(lead)
        ci = (Ellipsis,) + tgt.base.const_index()
        mod = tgt.leaf_modulus
        flat = np.zeros(a.shape, dtype=np.int64)
        from fractions import Fraction

        for idx, fr in np.ndenumerate(a):
            fr = Fraction(fr)
            if src.base.vp_denominator(fr) != 0:
                raise PrecisionError(f"{fr} is not p-integral; cannot reduce")
            flat[idx] = (fr.numerator * pow(fr.denominator, -1, mod)) % mod
        out[ci] = flat
        return out

    return RingMap(src, tgt, fn, name="reduce")


def truncpoly_cap_map(src, tgt):
    """Project onto a coarser precision: smaller parameter bound and/or
    smaller leaf modulus (a quotient map, always exact)."""
    if src.varnames != tgt.varnames or tgt.bound > src.bound or src.weights != tgt.weights:
        raise ConfigError("cap map cannot raise the parameter bound")
    if src.leaf_modulus % tgt.leaf_modulus != 0:
        raise ConfigError("target modulus must divide the source modulus")
    size = tgt.table.size

    def fn(a):
        a = np.asarray(a)
        sl = (Ellipsis, slice(0, size)) + (slice(None),) * src._nb
        return a[sl] % tgt.leaf_modulus

    return RingMap(src, tgt, fn, name="cap")
