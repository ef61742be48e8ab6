"""Deformations of formal group laws and their classification.

A deformation is an FGL over a complete local-style coefficient ring A
(a truncated W[w_1..w_{n-1}], a power-series window F[[u]], or a plain
Witt leaf) together with its reduction modulo the maximal ideal.
Everything here reduces to one solver: find a series f, and possibly the
images of some coefficient-ring generators, with

    f(F(X, Y)) = G(f(X), f(Y))

to the working degree and precision, where the residues of F, G, and f
are prescribed.  Star isomorphisms, classification against the universal
law, and lifting of residue isomorphisms are thin wrappers.

The solver works degree by degree on flattened Z/p^m coordinates.  At a
fixed linearization point the defect is linear in the corrections, and
the degree-d rows involve only corrections of degree at most d, so the
linear system is block triangular.  Over Z/p^m a solved block pins its
unknowns to an affine lattice, not an affine subspace (an equation like
p*x = p*c determines x only mod p^{m-1}), so the sweep threads an
explicit lattice through the blocks: each block intersects the lattice
with its own solutions, a block with none is an obstruction at that
degree, and whatever freedom survives the whole sweep is zero-padded
canonically and reported as the precision to which each coefficient is
pinned.  The right-hand side is quadratic in the unknowns through the
composition G(fX, fY), so sweeps are repeated, relinearizing at the
corrected point, until the defect vanishes exactly; every sweep pushes
the defect strictly deeper into the (p, generators)-adic filtration, and
the iteration fails loudly rather than return an unverified series.
"""

from __future__ import annotations

import os

import numpy as np

_TRACE = bool(os.environ.get("FGLAB_SOLVER_TRACE"))

from .errors import (
    ConfigError,
    ObstructionError,
    RingMismatchError,
    VerificationError,
)
from .fgl import FglHom, FormalGroupLaw, base_change, compose_pair, universal_deformation
from .linalg import affine_solve
from .rings import (
    LaurentRing,
    RingMap,
    hom_from_images,
    identity_map,
    prime_leaf_embed_map,
    witt_ring,
)
from .series import (
    TruncatedPolyRing,
    TruncatedSeries,
    pair_substitute,
    truncpoly_hom,
)

__all__ = [
    "Deformation",
    "StarIso",
    "ClassifyResult",
    "ParamUnknown",
    "HomSolver",
    "HomSolution",
    "local_residue_ring",
    "local_reduction_map",
    "star_isomorphism",
    "classify_deformation",
    "lift_isomorphism",
    "universal_deformation_over",
]


# ---------------------------------------------------------------------------
# local-ring structure adapters
#
# The solver needs, for each supported coefficient ring: the residue field
# and reduction map, residue lifts, the flat-coordinate grading of the
# maximal-adic filtration, the coordinates that carry the residue, and
# (when the ring has substitution generators) the generator-image
# machinery with its partial derivatives.  Three shapes cover everything
# used here.
# ---------------------------------------------------------------------------

def _leaf_precision(A):
    """m with leaf_modulus = p^m."""
    m = 0
    mod = A.leaf_modulus
    while mod > 1:
        mod //= A.p
        m += 1
    return m


class _TruncPolyLocal:
    """(p, variables)-adic structure of a truncated polynomial ring."""

    def __init__(self, A):
        self.A = A
        self.kappa = A.local_residue_field()
        self.reduce = RingMap(A, self.kappa, A.to_local_residue, name="mod m")
        self.precision = _leaf_precision(A)
        self._partials = {}

    def lift_residue(self, kbar):
        return self.A.from_base(self.A.base.lift_residue(kbar))

    def substitution(self, names, images):
        if tuple(names) != self.A.varnames:
            raise ConfigError("generator images must cover every variable")
        return truncpoly_hom(self.A, self.A, list(images), leaf_map=self.A.from_base)

    def param_partial(self, name):
        cached = self._partials.get(name)
        if cached is not None:
            return cached
        A = self.A
        if name not in A.varnames:
            raise ConfigError(f"{name} is not a generator of {A!r}")
        vi = A.varnames.index(name)
        exps = A.table.exps
        moves = []
        for slot in range(A.table.size):
            e = int(exps[slot][vi])
            if e == 0:
                continue
            down = tuple(exps[slot])
            down = down[:vi] + (down[vi] - 1,) + down[vi + 1 :]
            moves.append((slot, A.table.index[down], e))
        b = A._b()
        mod = A.leaf_modulus

        def fn(arr):
            arr = np.asarray(arr)
            out = np.zeros_like(arr % mod)
            for s_i, d_i, k in moves:
                out[(Ellipsis, d_i) + b] = (k * arr[(Ellipsis, s_i) + b]) % mod
            return out

        fmap = RingMap(A, A, fn, name=f"d/d{name}")
        self._partials[name] = fmap
        return fmap

    def flat_levels(self):
        A = self.A
        lv = np.asarray(A.table.wdegs, dtype=np.int64)
        return np.broadcast_to(
            lv.reshape((A.table.size,) + (1,) * A._nb), A.shape
        ).copy()

    def residue_mask(self):
        mask = np.zeros(self.A.shape, dtype=bool)
        mask[0] = True
        return mask

    def default_initial(self, side, name):
        return self.A.zeros() if side == "source" else self.A.gen(name)


class _WittLocal:
    """p-adic structure of a plain leaf ring (Witt vectors or a field)."""

    def __init__(self, A):
        self.A = A
        self.kappa = A.residue_ring()
        self.reduce = RingMap(A, self.kappa, A.to_residue, name="mod p")
        self.precision = _leaf_precision(A)

    def lift_residue(self, kbar):
        return np.asarray(self.A.lift_residue(kbar))

    def substitution(self, names, images):
        raise ConfigError("a plain coefficient ring has no substitution generators")

    def param_partial(self, name):
        raise ConfigError("a plain coefficient ring has no substitution generators")

    def flat_levels(self):
        return np.zeros(self.A.shape, dtype=np.int64)

    def residue_mask(self):
        return np.ones(self.A.shape, dtype=bool)

    def default_initial(self, side, name):
        raise ConfigError("a plain coefficient ring has no substitution generators")


class _LaurentLocal:
    """(variable)-adic structure of a power-series window F[[u]] (lo = 0)."""

    def __init__(self, A):
        if A.lo != 0:
            raise ConfigError("local solving needs a [0, hi) series window")
        if A.base.leaf_modulus != A.p:
            raise ConfigError("local solving over a series window needs a field base")
        self.A = A
        self.kappa = A.base
        self.reduce = RingMap(
            A, self.kappa, lambda arr: A.coeff(arr, 0), name=f"mod {A.var}"
        )
        self.precision = A.hi

    def lift_residue(self, kbar):
        return self.A.from_base(kbar)

    def substitution(self, names, images):
        if tuple(names) != (self.A.var,):
            raise ConfigError("generator images must target the series variable")
        leaf = RingMap(self.A.base, self.A, self.A.from_base, name="const")
        return hom_from_images(self.A, self.A, leaf, [images[0]])

    def param_partial(self, name):
        A = self.A
        if name != A.var:
            raise ConfigError("generator images must target the series variable")
        W = A.width
        b = (slice(None),) * A._nb
        mult = np.arange(1, W, dtype=np.int64).reshape((W - 1,) + (1,) * A._nb)
        mod = A.leaf_modulus

        def fn(arr):
            arr = np.asarray(arr)
            out = np.zeros_like(arr % mod)
            out[(Ellipsis, slice(0, W - 1)) + b] = (
                mult * arr[(Ellipsis, slice(1, W)) + b]
            ) % mod
            return out

        return RingMap(A, A, fn, name=f"d/d{A.var}")

    def flat_levels(self):
        A = self.A
        lv = np.arange(A.width, dtype=np.int64)
        return np.broadcast_to(
            lv.reshape((A.width,) + (1,) * A._nb), A.shape
        ).copy()

    def residue_mask(self):
        mask = np.zeros(self.A.shape, dtype=bool)
        mask[0] = True
        return mask

    def default_initial(self, side, name):
        if side == "source":
            return self.A.zeros()
        return self.A.gen()


def _local_adapter(A):
    if isinstance(A, TruncatedPolyRing):
        return _TruncPolyLocal(A)
    if isinstance(A, LaurentRing):
        return _LaurentLocal(A)
    return _WittLocal(A)


def local_residue_ring(A):
    return _local_adapter(A).kappa


def local_reduction_map(A):
    return _local_adapter(A).reduce


def _leaf_ring(A):
    return A.base if isinstance(A, TruncatedPolyRing) else A


_UNIVOVER_CACHE = {}


def universal_deformation_over(p, n, N, m, *, field_degree=None, varstem="w"):
    """The universal deformation with coefficients over W(F_{p^k})[params].

    ``universal_deformation`` builds over the prime Witt vectors; the desk
    setting needs the same law with its leaf enlarged to W(F_{p^n}) (or any
    ``field_degree``), which is just a base change along the constant-
    coordinate embedding.  Cached, so the classification solver attached to
    the returned instance is shared across calls.
    """
    k = n if field_degree is None else field_degree
    key = (p, n, N, m, k, varstem)
    if key in _UNIVOVER_CACHE:
        return _UNIVOVER_CACHE[key]
    U = universal_deformation(p, n, N, m, varstem=varstem)
    big = witt_ring(p, k, m)
    A0 = U.ring
    if isinstance(A0, TruncatedPolyRing):
        if A0.base == big:
            out = U
        else:
            A1 = TruncatedPolyRing(big, A0.varnames, A0.bound, weights=A0.weights)
            leaf = prime_leaf_embed_map(A0.base, big)
            emb = RingMap(A0, A1, leaf.apply, name="leaf embed")
            out = base_change(U, emb, kind=U.kind)
            out.params = U.params
    elif A0 == big:
        out = U
    else:
        out = base_change(U, prime_leaf_embed_map(A0, big), kind=U.kind)
        out.params = U.params
    _UNIVOVER_CACHE[key] = out
    return out


# ---------------------------------------------------------------------------
# deformation and star-isomorphism records
# ---------------------------------------------------------------------------

class Deformation:
    """An FGL over a local coefficient ring with its checked residue law."""

    def __init__(self, law, residue_law=None):
        self.law = law
        self.ring = law.ring
        self.reduction = local_reduction_map(self.ring)
        derived = law.series.map_coefficients(self.reduction)
        if residue_law is None:
            residue_law = FormalGroupLaw(
                self.reduction.tgt, law.bound, series=derived,
                kind="derived", p=law.p, n=law.n,
            )
        elif not derived.eq(residue_law.series):
            raise VerificationError(
                "law does not reduce to the claimed residue law"
            )
        self.residue_law = residue_law

    def __repr__(self):
        return f"Deformation({self.law!r})"


class StarIso:
    """An isomorphism congruent to the identity modulo the maximal ideal."""

    def __init__(self, source, target, f):
        if source.ring != target.ring or source.bound != target.bound:
            raise RingMismatchError("star isomorphism needs one shared ring")
        ring = source.ring
        if not ring.is_zero(f.coeffs[0]):
            raise ConfigError("star isomorphism must fix the origin")
        red = local_reduction_map(ring)
        kappa = red.tgt
        resid = f.map_coefficients(red)
        x = TruncatedSeries.variable(kappa, f.vars, f.bound, f.vars[0])
        if not resid.eq(x):
            raise ConfigError("star isomorphism must reduce to the identity")
        self.source = source
        self.target = target
        self.f = f
        self.ring = ring
        self.unpinned = ()
        self.pinned_levels = {}

    def as_hom(self):
        return FglHom(self.source, self.target, self.f, identity_map(self.ring))

    def holds(self):
        return self.as_hom().holds()

    def inverse(self):
        return StarIso(self.target, self.source, self.f.reverse())

    def is_identity(self):
        x = TruncatedSeries.variable(self.ring, self.f.vars, self.f.bound, self.f.vars[0])
        return self.f.eq(x)

    def __repr__(self):
        return f"StarIso(deg<={self.f.bound} over {self.ring!r})"


class ClassifyResult:
    """Output of classify_deformation: G = star-twist of universal|params."""

    def __init__(self, universal, target, param_images, star, verified_precision,
                 unpinned=(), pinned_levels=None):
        self.universal = universal
        self.target = target
        self.param_images = tuple(param_images)
        self.star = star
        self.verified_degree = universal.bound
        self.verified_precision = verified_precision
        self.unpinned = tuple(unpinned)
        self.pinned_levels = dict(pinned_levels or {})

    def alpha_map(self):
        """The classifying substitution A -> A sending each parameter to
        its image (the identity on the Witt leaf)."""
        A = self.universal.ring
        if not isinstance(A, TruncatedPolyRing):
            return identity_map(A)
        return truncpoly_hom(A, A, list(self.param_images), leaf_map=A.from_base)

    def specialized_law(self):
        return base_change(self.universal, self.alpha_map(), kind="derived")

    def __repr__(self):
        return f"ClassifyResult(params={len(self.param_images)}, {self.star!r})"


# ---------------------------------------------------------------------------
# the hom-equation engine
# ---------------------------------------------------------------------------

class ParamUnknown:
    """One generator-image unknown of a hom solve.

    side "source": the image substitutes into the source law before f is
    applied (classification against a universal template).  side "target":
    it substitutes into the target law (lifting along a coefficient
    automorphism whose effect on a distinguished element is the unknown,
    as in the stabilizer action on a deformation).

    ``initial`` is the zeroth approximation of the image (defaults: zero
    for source side, the generator itself for target side); corrections
    live in the maximal ideal.
    """

    __slots__ = ("name", "side", "initial")

    def __init__(self, name, side, initial=None):
        if side not in ("source", "target"):
            raise ConfigError("parameter side must be source or target")
        self.name = name
        self.side = side
        self.initial = initial

    def __repr__(self):
        return f"ParamUnknown({self.name!r}, {self.side})"


class HomSolution:
    """A solved hom: the series, generator images, and the pinning report.

    ``pinned`` maps an unknown label ("deg", d) or ("param", name) to the
    maximal-adic filtration level below which the solve determines it;
    labels pinned to full working precision are absent.  The zero-padded
    canonical representative is returned, so equal inputs give equal
    outputs byte for byte.
    """

    __slots__ = ("f", "images", "pinned")

    def __init__(self, f, images, pinned):
        self.f = f
        self.images = images
        self.pinned = pinned


class HomSolver:
    """Constant data of the hom equation f(F(X,Y)) = G(fX, fY) over A.

    ``source`` fixes F.  With ``target=None`` the solver runs in residue-
    matched mode: fbar is the identity, and each solve() call receives its
    own target law with the same residue reduction as the source (star
    isomorphisms, classification).  With a fixed ``target``, fbar may be
    any prescribed residue isomorphism and solve() takes no argument.

    ``params`` lists generator-image unknowns (ParamUnknown).  Source-side
    ones substitute into F, target-side ones into G.
    """

    def __init__(self, source, target=None, *, fbar=None, params=()):
        A = source.ring
        N = source.bound
        if target is not None and (target.ring != A or target.bound != N):
            raise RingMismatchError("source and target must share one ring and bound")
        if target is None and fbar is not None:
            raise ConfigError("a prescribed residue map needs a fixed target")
        self.source = source
        self.target = target
        self.A = A
        self.N = N
        self.adapter = _local_adapter(A)
        self.kappa = self.adapter.kappa
        self.reduce = self.adapter.reduce
        self.precision = self.adapter.precision
        self.params = tuple(params)
        self._initials = []
        for spec in self.params:
            if spec.side == "target" and target is None:
                raise ConfigError("target-side parameters need a fixed target")
            init = spec.initial
            if init is None:
                init = self.adapter.default_initial(spec.side, spec.name)
            self._initials.append(init)
        self._src_names = tuple(s.name for s in self.params if s.side == "source")
        self._tgt_names = tuple(s.name for s in self.params if s.side == "target")
        self._src_idx = [i for i, s in enumerate(self.params) if s.side == "source"]
        self._tgt_idx = [i for i, s in enumerate(self.params) if s.side == "target"]

        kappa = self.kappa
        self.residue_series = source.series.map_coefficients(self.reduce)
        self.residue_law = FormalGroupLaw(
            kappa, N, series=self.residue_series, kind="derived",
            p=source.p, n=source.n,
        )
        if target is None:
            self.target_residue = self.residue_series
        else:
            self.target_residue = target.series.map_coefficients(self.reduce)
        if fbar is None:
            fbar = TruncatedSeries.variable(kappa, ("X",), N, "X")
        else:
            if fbar.ring != kappa or fbar.bound != N or len(fbar.vars) != 1:
                raise RingMismatchError("fbar must be a one-variable residue series")
            if not kappa.is_zero(fbar.coeffs[0]):
                raise ConfigError("fbar must fix the origin")
            fbar = fbar.rename_vars(("X",))
        self.fbar = fbar
        self._check_residue_identity()

        # flat coordinate geometry
        self.p = A.p
        self.prec = _leaf_precision(A)
        if A.leaf_modulus != self.p**self.prec:
            raise ConfigError("coefficient ring leaf is not Z/p^m shaped")
        self.rho = int(np.prod(A.shape))
        self.labels = tuple(("deg", d) for d in range(1, N + 1)) + tuple(
            ("param", s.name) for s in self.params
        )
        self.C = len(self.labels)
        self.nflat = self.C * self.rho
        self.coord_levels = self.adapter.flat_levels().reshape(-1)
        self.res_coords = np.flatnonzero(self.adapter.residue_mask().reshape(-1))
        self.max_level = int(self.coord_levels.max()) + self.prec - 1
        table = self.residue_series.table
        self._blocks = [np.flatnonzero(np.asarray(table.degs) == d) for d in range(N + 1)]
        self._row_degs = np.repeat(np.asarray(table.degs), self.rho)
        self._basis = np.eye(self.rho, dtype=np.int64).reshape((self.rho,) + A.shape)

    # -- constant residue data ----------------------------------------------

    def _fbar_pair(self):
        return self.fbar, self.fbar.rename_vars(("Y",))

    def _check_residue_identity(self):
        """fbar(Fbar) = Gbar(fbar X, fbar Y) must already hold over kappa."""
        kappa, N = self.kappa, self.N
        PS = self.residue_law.powers_stack()
        fc = self.fbar.coeffs
        fc = fc.reshape(fc.shape[:1] + (1,) + fc.shape[1:])
        lhs = kappa.sum(kappa.mul(fc, PS), axis=0)
        fx, fy = self._fbar_pair()
        rhs = pair_substitute(self.target_residue, fx, fy)
        diff = TruncatedSeries(kappa, ("X", "Y"), N, lhs).sub(rhs)
        if not diff.is_zero():
            raise ObstructionError(
                "residue identity fails: the prescribed data is not a residue hom",
                degree=diff.min_degree(),
                stage=0,
            )

    # -- linearization --------------------------------------------------------

    def _substituted(self, series, names, images):
        if not names:
            return series
        sub = self.adapter.substitution(names, list(images))
        return series.map_coefficients(sub)

    def _spow(self, ring, S):
        """Stacked coefficients of S^0 .. S^N."""
        stack = [TruncatedSeries.constant(ring, ("X", "Y"), self.N, ring.one())]
        for _ in range(self.N):
            stack.append(stack[-1].mul(S))
        return np.stack([t.coeffs for t in stack])  # (N+1, T, *shape)

    def _residual(self, ring, Spow, G_law, f):
        """f(S(X,Y)) - G(fX, fY) over ``ring``, S given by its power stack."""
        fc = f.coeffs  # (N+1, *shape)
        fc = fc.reshape(fc.shape[:1] + (1,) + fc.shape[1:])
        lhs = ring.sum(ring.mul(fc, Spow), axis=0)
        rhs = compose_pair(G_law, f, f.rename_vars(("Y",)))
        return TruncatedSeries(ring, ("X", "Y"), self.N, lhs).sub(rhs)

    def _initial_f(self):
        A, N = self.A, self.N
        f = TruncatedSeries.zero(A, ("X",), N)
        for d in range(1, N + 1):
            cbar = self.fbar.coeffs[d]
            if np.any(cbar):
                f.coeffs[d] = self.adapter.lift_residue(cbar)
        return f

    def _point(self, x):
        """The (f, images) pair encoded by the flat correction vector."""
        A, N, rho = self.A, self.N, self.rho
        f = self._initial_f()
        for d in range(1, N + 1):
            delta = x[(d - 1) * rho : d * rho].reshape(A.shape)
            if np.any(delta):
                f.coeffs[d] = A.add(f.coeffs[d], delta)
        images = []
        for i in range(len(self.params)):
            c = N + i
            delta = x[c * rho : (c + 1) * rho].reshape(A.shape)
            images.append(A.add(self._initials[i], delta))
        return f, images

    def _encode(self, seed):
        """The flat correction vector for a (series, images) starting point."""
        A, N, rho = self.A, self.N, self.rho
        f_seed, imgs = seed
        if f_seed.ring != A or len(imgs) != len(self.params):
            raise ConfigError("seed does not match the solver's unknowns")
        x = np.zeros(self.nflat, dtype=np.int64)
        f0 = self._initial_f()
        for d in range(1, N + 1):
            delta = A.sub(f_seed.coeffs[d], f0.coeffs[d])
            x[(d - 1) * rho : d * rho] = np.asarray(delta).reshape(-1)
        for i in range(len(self.params)):
            delta = A.sub(imgs[i], self._initials[i])
            c = N + i
            x[c * rho : (c + 1) * rho] = np.asarray(delta).reshape(-1)
        cons = (
            np.arange(self.C, dtype=np.int64)[:, None] * rho + self.res_coords
        ).reshape(-1)
        if np.any(x[cons] % self.p):
            raise ConfigError("seed does not reduce to the solver's residue data")
        return x % A.leaf_modulus

    def _linearize(self, G, f, images):
        """Exact defect at (f, images) and the defect's derivative in each
        unknown, as coefficient series over A."""
        A, N = self.A, self.N
        src = self._substituted(
            self.source.series, self._src_names, [images[i] for i in self._src_idx]
        )
        tgt = self._substituted(
            G.series, self._tgt_names, [images[i] for i in self._tgt_idx]
        )
        Spow = self._spow(A, src)
        G_sub = FormalGroupLaw(A, N, series=tgt, kind="derived", p=G.p, n=G.n)
        E = self._residual(A, Spow, G_sub, f)
        fx = f
        fy = f.rename_vars(("Y",))
        gx = pair_substitute(tgt.derivative("X"), fx, fy)
        gy = pair_substitute(tgt.derivative("Y"), fx, fy)
        one = A.one()
        cols = []
        for d in range(1, N + 1):
            cols.append(
                A.sub(
                    Spow[d],
                    A.add(
                        gx.mul_term((d, 0), one).coeffs,
                        gy.mul_term((0, d), one).coeffs,
                    ),
                )
            )
        if self.params:
            fprime = f.derivative("X")
            fc = fprime.coeffs.reshape(fprime.coeffs.shape[:1] + (1,) + A.shape)
            chain = TruncatedSeries(A, ("X", "Y"), N, A.sum(A.mul(fc, Spow), axis=0))
            for i, spec in enumerate(self.params):
                partial = self.adapter.param_partial(spec.name)
                if spec.side == "source":
                    dS = self.source.series.map_coefficients(partial)
                    dS = self._substituted(
                        dS, self._src_names, [images[j] for j in self._src_idx]
                    )
                    cols.append(chain.mul(dS).coeffs)
                else:
                    dG = G.series.map_coefficients(partial)
                    dG = self._substituted(
                        dG, self._tgt_names, [images[j] for j in self._tgt_idx]
                    )
                    cols.append(A.neg(pair_substitute(dG, fx, fy).coeffs))
        return E, cols

    # -- the sweep -------------------------------------------------------------

    def _sweep(self, x, Eflat, cols, it, certify):
        """One block-triangular pass of the linearized system.

        Returns (x, piv, free, hit_labels, fail) with x moved by the
        smallest digit corrections that solve the linear model through the
        solved blocks (a block the point already satisfies leaves it
        untouched), piv the pivots of the surviving lattice, free marking
        the coordinates no block has touched, and fail the first
        inconsistent degree (None when every block solved).

        An inconsistent block at a point the sweep has already moved only
        means the linear model drifted from the quadratic truth there, so
        the sweep stops for a relinearization.  At an unmoved point on the
        first pass the degree-d rows of the model are the exact defect at
        the canonical start and the lattice holds every admissible linear
        correction of the earlier blocks, so an inconsistency there is an
        obstruction and raises.  At an unmoved point on a later pass the
        state reflects earlier digit choices, so non-existence cannot be
        certified and the failure surfaces as a VerificationError instead.
        """
        A, p, m, q = self.A, self.p, self.prec, self.A.leaf_modulus
        rho, C, n = self.rho, self.C, self.nflat
        free = np.ones(n, dtype=bool)
        hit_labels = set()

        # residue constraints: the total correction of every unknown stays
        # in the maximal ideal, i.e. its residue-carrying coordinates are
        # divisible by p.
        cons = (np.arange(C, dtype=np.int64)[:, None] * rho + self.res_coords).reshape(-1)
        assert not np.any(x[cons] % p)
        free[cons] = False
        if m > 1:
            Kx = np.zeros((n, cons.size), dtype=np.int64)
            Kx[cons, np.arange(cons.size)] = p
            piv = [(int(j), 1) for j in cons]
        else:
            Kx = np.zeros((n, 0), dtype=np.int64)
            piv = []

        x_start = x
        x = x.copy()
        moved = False
        fail = None
        arange_rho = np.arange(rho)
        for d in range(1, self.N + 1):
            rows = self._blocks[d]
            R = rows.size * rho
            Md = np.zeros((R, n), dtype=np.int64)
            for c in range(C):
                sub = np.asarray(cols[c])[rows]
                if not np.any(sub):
                    continue
                prod = A.mul(sub.reshape((rows.size, 1) + A.shape), self._basis)
                blk = prod.reshape(rows.size, rho, rho).transpose(0, 2, 1)
                Md[:, c * rho : (c + 1) * rho] = blk.reshape(R, rho)
                hit_labels.add(c)
            ridx = (rows[:, None] * rho + arange_rho).reshape(-1)
            # E and the columns were taken at the sweep-entry point, so the
            # degree-d rows of the model read J_d X = J_d x_start - E_d.
            bd = (Md @ x_start - Eflat[ridx]) % q
            if not Md.any():
                if bd.any():
                    if not moved:
                        self._stuck(d, it, certify, "no unknown reaches the defect")
                    fail = d
                    break
                continue
            newhit = np.flatnonzero(np.any(Md, axis=0) & free)
            if newhit.size:
                add = np.zeros((n, newhit.size), dtype=np.int64)
                add[newhit, np.arange(newhit.size)] = 1
                K_call = np.concatenate([add, Kx], axis=1)
                free[newhit] = False
            else:
                K_call = Kx
            got = affine_solve(Md, bd, p, m, K=K_call, x0=x, canonical=False)
            if got is None:
                if not moved:
                    self._stuck(d, it, certify, "no solution")
                fail = d
                break
            x_new, Kx, piv = got
            if not moved and np.any((x_new - x) % q):
                moved = True
            x = x_new
        return x, piv, free, hit_labels, fail

    def _stuck(self, d, it, certify, what):
        """An inconsistent block at a point this sweep has not moved."""
        if certify:
            raise ObstructionError(f"{what} at degree {d}", degree=d, stage=it)
        raise VerificationError(
            f"{what} at degree {d}: the defect is unreachable from the "
            "solver's path and cannot be adjudicated at this precision"
        )

    def _defect_level(self, Eflat, below=None):
        """Filtration level of the defect, optionally restricted to rows of
        degree below a bound; None when that part vanishes."""
        if below is not None:
            Eflat = np.where(self._row_degs < below, Eflat, 0)
        nz = np.flatnonzero(Eflat)
        if nz.size == 0:
            return None
        vals = np.zeros(nz.size, dtype=np.int64)
        entries = Eflat[nz]
        for k in range(1, self.prec):
            vals += (entries % self.p**k == 0).astype(np.int64)
        coord = self.coord_levels[nz % self.rho]
        return int((coord + vals).min())

    def _report(self, piv, free):
        best = {}
        lv, rho = self.coord_levels, self.rho
        for j, v in piv:
            c = j // rho
            level = int(lv[j % rho]) + v
            if level < best.get(c, 10**9):
                best[c] = level
        for j in np.flatnonzero(free):
            c = j // rho
            level = int(lv[j % rho])
            if level < best.get(c, 10**9):
                best[c] = level
        return {self.labels[c]: lvl for c, lvl in sorted(best.items())}

    # -- solving ----------------------------------------------------------------

    def solve(self, G=None, *, verify=True, seed=None):
        """Solve for (f, generator images); returns a HomSolution.

        Residue-matched mode takes the target G here; fixed-target mode
        takes none.  Raises ObstructionError with the smallest failing
        total degree when the laws are not isomorphic under the prescribed
        residue data.

        ``seed``, when given, is a (series, images) pair to start the
        iteration from instead of the canonical start; it must reduce to
        the same residue data.  A seed that already solves the equations
        exactly is returned unchanged apart from the pinning report.
        Obstructions are only certified from the canonical start, so a
        seeded solve converts an unreachable defect into a
        VerificationError.
        """
        A, N = self.A, self.N
        if self.target is not None:
            if G is not None:
                raise ConfigError("this solver has a fixed target")
            G = self.target
        else:
            if G is None:
                raise ConfigError("this solver needs a target per solve")
            if G.ring != A or G.bound != N:
                raise RingMismatchError("target law lives over a different ring")
            G_res = G.series.map_coefficients(self.reduce)
            if not G_res.eq(self.residue_series):
                diff = G_res.sub(self.residue_series)
                raise ObstructionError(
                    "target reduces to a different residue law",
                    degree=diff.min_degree(),
                    stage=0,
                )

        q = A.leaf_modulus
        x = np.zeros(self.nflat, dtype=np.int64)
        if seed is not None:
            x = self._encode(seed)
        piv = free = None
        complete = False
        hit_all = set()
        limit = max(8, self.N + self.max_level + 4)
        for it in range(1, limit + 1):
            f_cur, images_cur = self._point(x)
            E, cols = self._linearize(G, f_cur, images_cur)
            Eflat = E.coeffs.reshape(-1) % q
            if not Eflat.any() and complete:
                break
            certify = it == 1 and seed is None
            x, piv, free, hit, fail = self._sweep(x, Eflat, cols, it, certify)
            hit_all |= hit
            complete = fail is None
            if _TRACE:
                print(
                    f"[solve] sweep {it}: defect level {self._defect_level(Eflat)}"
                    f" reach {fail if fail is not None else 'end'}"
                    f" |x|={int(np.count_nonzero(x))}"
                )
        else:
            raise VerificationError("solver did not converge within its budget")

        for c, (kind, name) in enumerate(self.labels):
            if kind == "param" and c not in hit_all:
                raise VerificationError(
                    f"parameter {name} is invisible at this truncation: "
                    "the solve is not well posed"
                )
        f, images = self._point(x)
        pinned = self._report(piv, free)
        if verify:
            if not f.map_coefficients(self.reduce).eq(self.fbar):
                raise VerificationError("solved series escapes its residue class")
        return HomSolution(f, images, pinned)


def graded_level(A, elt):
    """The maximal-adic filtration level of an element of a solver-supported
    coefficient ring (None for zero): p-exponent plus generator degree."""
    adapter = _local_adapter(A)
    lv = adapter.flat_levels().reshape(-1)
    m = _leaf_precision(A)
    flat = np.asarray(elt).reshape(-1) % A.leaf_modulus
    nz = np.flatnonzero(flat)
    if nz.size == 0:
        return None
    vals = np.zeros(nz.size, dtype=np.int64)
    for k in range(1, m):
        vals += (flat[nz] % A.p**k == 0).astype(np.int64)
    return int((lv[nz] + vals).min())


def _classify_params(universal):
    A = universal.ring
    if not isinstance(A, TruncatedPolyRing):
        return ()
    return tuple(ParamUnknown(name, "source") for name in A.varnames)


def _solver_for(template, with_params):
    attr = "_classify_solver" if with_params else "_star_solver"
    solver = getattr(template, attr, None)
    if solver is None:
        params = _classify_params(template) if with_params else ()
        solver = HomSolver(template, params=params)
        setattr(template, attr, solver)
    return solver


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _as_law(G):
    return G.law if isinstance(G, Deformation) else G


def star_isomorphism(G1, G2, *, verify=True):
    """The star isomorphism f: G1 -> G2, if one exists.

    Returns (StarIso, None) on success and (None, obstruction_degree) when
    the laws are not star-isomorphic; the degree is the smallest total
    degree at which the matching fails.  Coordinates the degree window
    cannot pin are zero-padded canonically and listed on the result with
    the filtration level from which they are free.
    """
    G1, G2 = _as_law(G1), _as_law(G2)
    solver = _solver_for(G1, with_params=False)
    try:
        sol = solver.solve(G2, verify=verify)
    except ObstructionError as obs:
        return None, obs.degree
    star = StarIso(G1, G2, sol.f)
    star.pinned_levels = dict(sol.pinned)
    star.unpinned = tuple(sorted(sol.pinned))
    return star, None


def classify_deformation(G, universal, *, verify=True, seed=None):
    """Identify G with a specialization of the universal deformation.

    ``universal`` must live over the same coefficient ring A, with A's
    variables as its deformation parameters.  Returns a ClassifyResult
    with parameter images in the maximal ideal and the star isomorphism
    f: universal|images -> G.  ``seed`` optionally starts the solve from
    a known (series, images) pair.
    """
    G = _as_law(G)
    solver = _solver_for(universal, with_params=True)
    sol = solver.solve(G, verify=verify, seed=seed)
    images = sol.images
    A = universal.ring
    red = solver.reduce
    for a in images:
        if not solver.kappa.is_zero(red.apply(a)):
            raise VerificationError("parameter image escapes the maximal ideal")
    if isinstance(A, TruncatedPolyRing):
        sub = truncpoly_hom(A, A, list(images), leaf_map=A.from_base)
        specialized = base_change(universal, sub, kind="derived")
    else:
        specialized = universal
    star = StarIso(specialized, G, sol.f)
    star.pinned_levels = dict(sol.pinned)
    star.unpinned = tuple(sorted(sol.pinned))
    return ClassifyResult(
        universal, G, images, star, solver.precision,
        unpinned=tuple(sorted(sol.pinned)), pinned_levels=sol.pinned,
    )


def lift_isomorphism(fbar_alphabar, F_univ, G_univ, alpha, *, lift=None, verify=True):
    """Lift a residue isomorphism to the universal deformations.

    ``fbar_alphabar`` is an isomorphism between the residue laws over the
    residue field kappa; ``alpha`` is a ring automorphism of the Witt leaf
    lifting its alpha part.  F_univ and G_univ are universal laws over
    A_u = W[u_i] and A_w = W[w_i].  The output is the isomorphism
    (f, alpha_A): F_univ -> G_univ reducing to the input, built the way
    the uniqueness argument runs: pick any coefficient lift f0 of fbar
    (the Teichmuller digit lift, unless ``lift`` says otherwise),
    conjugate F_univ by it, classify the conjugate against the
    alpha-twisted G_univ, and compose.

    The composite depends on the lift only through coordinates below the
    solver's pinning levels, so the answer is produced by one canonical
    solve whose inputs are the residue data alone: the residue map is
    prescribed as fbar and the substitution images are target-side
    unknowns.  The classification of the conjugate is then run seeded at
    the point the canonical solution predicts for it by composition; the
    solver checks that point against the exact equations and the two
    routes are compared image by image.
    """
    A_u = F_univ.ring
    A_w = G_univ.ring
    N = F_univ.bound
    if G_univ.bound != N:
        raise RingMismatchError("universal laws must share one degree bound")
    W = _leaf_ring(A_u)
    if alpha.src != _leaf_ring(A_w) or alpha.tgt != W:
        raise RingMismatchError("alpha must map the target leaf to the source leaf")
    fbar = fbar_alphabar.f
    if not fbar_alphabar.holds():
        raise VerificationError("residue isomorphism does not satisfy its identity")

    # step 1: an arbitrary coefficient lift of fbar
    if lift is None:
        ad_u = _local_adapter(A_u)
        f0 = TruncatedSeries.zero(A_u, ("X",), N)
        for d in range(1, N + 1):
            cbar = fbar.coeffs[d]
            if np.any(cbar):
                f0.coeffs[d] = ad_u.lift_residue(cbar)
    else:
        f0 = lift
        red = local_reduction_map(A_u)
        if not f0.map_coefficients(red).eq(fbar):
            raise ConfigError("supplied lift does not reduce to the residue iso")

    # step 2: conjugate F_univ through the lift
    f0_inv = f0.reverse()
    conj = compose_pair(F_univ, f0_inv, f0_inv.rename_vars(("Y",)))
    Fp_series = f0.compose({"X": conj})
    F_prime = FormalGroupLaw(A_u, N, series=Fp_series, kind="derived", p=F_univ.p, n=F_univ.n)

    # step 3: the alpha-twist of G_univ, written in A_u's variables
    if isinstance(A_w, TruncatedPolyRing):
        twist = truncpoly_hom(
            A_w, A_u,
            [A_u.gen(v) for v in A_u.varnames],
            leaf_map=lambda c: A_u.from_base(alpha.apply(c)),
        )
        params = A_u.varnames
    else:
        twist = RingMap(A_w, A_u, alpha.apply, name="twist")
        params = ()
    G_twisted = FormalGroupLaw(
        A_u, N, series=G_univ.series.map_coefficients(twist),
        kind="universal-deformation", p=G_univ.p, n=G_univ.n, params=params,
    )

    # step 4: one canonical solve, a function of the residue data alone
    if isinstance(A_w, TruncatedPolyRing):
        params4 = tuple(ParamUnknown(v, "target") for v in A_u.varnames)
    else:
        params4 = ()
    resolver = HomSolver(F_univ, G_twisted, fbar=fbar, params=params4)
    sol = resolver.solve(verify=verify)
    f_final = sol.f

    # step 5: classify the conjugate (exercises the arbitrary lift), seeded
    # at the composite the canonical solution predicts: the classifying map
    # G_twisted|images -> F_prime is f0 o (canonical solution inverted)
    seed_series = f0.compose({"X": f_final.reverse()})
    result = classify_deformation(
        F_prime, G_twisted, verify=verify, seed=(seed_series, list(sol.images))
    )

    if isinstance(A_w, TruncatedPolyRing):
        alpha_A = truncpoly_hom(
            A_w, A_u,
            list(sol.images),
            leaf_map=lambda c: A_u.from_base(alpha.apply(c)),
        )
        if verify:
            # the lift-dependent classification and the canonical solve must
            # agree wherever the truncation pins the images
            for i, name in enumerate(A_u.varnames):
                diff = A_u.sub(result.param_images[i], sol.images[i])
                bound = sol.pinned.get(("param", name))
                lvl = graded_level(A_u, diff)
                if bound is None:
                    if lvl is not None:
                        raise VerificationError(
                            f"lift-dependent image of {name} at pinned precision"
                        )
                elif lvl is not None and lvl < bound:
                    raise VerificationError(
                        f"images of {name} disagree below the pinning level"
                    )
    else:
        alpha_A = RingMap(A_w, A_u, alpha.apply, name="lifted alpha")

    out = FglHom(F_univ, G_univ, f_final, alpha_A)
    out.unpinned = tuple(sorted(sol.pinned))
    out.pinned_levels = dict(sol.pinned)
    if verify and not out.holds():
        raise VerificationError("lifted isomorphism fails the homomorphism identity")
    return out
