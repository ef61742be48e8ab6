"""Formal group laws: axioms, formal sums, m-series, logarithms, the Honda
laws and their universal deformations, and homomorphisms between them."""

from fractions import Fraction

import numpy as np
import pytest

from fglab.errors import ConfigError
from fglab.fgl import (
    FglHom,
    FormalGroupLaw,
    base_change,
    check_fgl_axioms,
    compose_pair,
    fgl_exp,
    fgl_log,
    formal_inverse,
    formal_sum,
    formal_sum_many,
    hom_compose,
    honda_fgl,
    identity_hom,
    m_series,
    universal_deformation,
)
from fglab.rings import (
    RationalizedRing,
    RingMap,
    finite_field,
    identity_map,
    prime_field,
    witt_ring,
)
from fglab.series import TruncatedPolyRing, TruncatedSeries, truncpoly_hom


def _additive(ring, N):
    s = TruncatedSeries.variable(ring, ("X", "Y"), N, "X").add(
        TruncatedSeries.variable(ring, ("X", "Y"), N, "Y")
    )
    return FormalGroupLaw(ring, N, series=s, kind="derived", p=ring.p)


def _multiplicative(ring, N):
    x = TruncatedSeries.variable(ring, ("X", "Y"), N, "X")
    y = TruncatedSeries.variable(ring, ("X", "Y"), N, "Y")
    return FormalGroupLaw(
        ring, N, series=x.add(y).add(x.mul(y)), kind="derived", p=ring.p
    )


def _xvar(ring, N, name="X"):
    return TruncatedSeries.variable(ring, (name,), N, name)


def _xmono(ring, N, d, coeff=None, name="X"):
    lead = coeff if coeff is not None else ring.one()
    return TruncatedSeries.monomial(ring, (name,), N, (d,), lead)


# -- axioms --------------------------------------------------------------------


def test_additive_and_multiplicative_pass_axioms():
    F5 = prime_field(5)
    assert check_fgl_axioms(_additive(F5, 6)).passed
    assert check_fgl_axioms(_multiplicative(F5, 6)).passed


def test_broken_law_fails_with_unit_residual():
    F5 = prime_field(5)
    x = TruncatedSeries.variable(F5, ("X", "Y"), 4, "X")
    y = TruncatedSeries.variable(F5, ("X", "Y"), 4, "Y")
    bad = FormalGroupLaw(
        F5, 4, series=x.add(y).add(x.mul(x)), kind="derived", p=5
    )
    report = check_fgl_axioms(bad)
    assert "left_unit" in report.failures
    resid = report.residuals["left_unit"]
    # F(X, 0) - X = X^2
    assert F5.eq(resid.coefficient((2, 0)), F5.one())
    assert resid.degree_slice(1).is_zero()


# -- formal sums ----------------------------------------------------------------


def test_formal_sum_additive_is_plain_sum():
    F5 = prime_field(5)
    F = _additive(F5, 6)
    a = _xmono(F5, 6, 2)
    b = _xmono(F5, 6, 3, F5.from_int(4))
    assert formal_sum(F, a, b).eq(a.add(b))


def test_formal_sum_with_zero_is_identity():
    F5 = prime_field(5)
    F = _multiplicative(F5, 6)
    a = _xvar(F5, 6).add(_xmono(F5, 6, 4))
    zero = TruncatedSeries.zero(F5, ("X",), 6)
    assert formal_sum(F, a, zero).eq(a)
    assert formal_sum(F, zero, a).eq(a)


def test_formal_sum_multiplicative_x_plus_x():
    F5 = prime_field(5)
    F = _multiplicative(F5, 6)
    x = _xvar(F5, 6)
    out = formal_sum(F, x, x)
    expect = x.int_mul(2).add(_xmono(F5, 6, 2))
    assert out.eq(expect)


def test_formal_sum_rejects_constant_term():
    F5 = prime_field(5)
    F = _additive(F5, 4)
    bad = TruncatedSeries.constant(F5, ("X",), 4, F5.one())
    with pytest.raises(ConfigError):
        formal_sum(F, bad, _xvar(F5, 4))


def test_formal_inverse_multiplicative():
    # 1/(1+X) - 1 = -X + X^2 - X^3 + ...
    F7 = prime_field(7)
    F = _multiplicative(F7, 5)
    inv = formal_inverse(F)
    for d in range(1, 6):
        expect = F7.from_int((-1) ** d)
        assert F7.eq(inv.coefficient((d,)), expect)


# -- m-series -------------------------------------------------------------------


def test_m_series_multiplicative_doubling():
    F5 = prime_field(5)
    F = _multiplicative(F5, 6)
    two = m_series(F, 2)
    expect = _xvar(F5, 6).int_mul(2).add(_xmono(F5, 6, 2))
    assert two.eq(expect)
    assert m_series(F, 1).eq(_xvar(F5, 6))
    assert m_series(F, 0).is_zero()


@pytest.mark.parametrize("m1,m2", [(2, 3), (-1, 2), (3, -2), (-2, -2), (5, 4)])
def test_m_series_multiplicativity(m1, m2):
    F5 = prime_field(5)
    F = _multiplicative(F5, 6)
    lhs = m_series(F, m1).compose({"X": m_series(F, m2)})
    assert lhs.eq(m_series(F, m1 * m2))


def test_m_series_multiplicativity_honda():
    H = honda_fgl(2, 1, 6)
    for m1, m2 in [(2, 2), (3, -1), (-2, 3)]:
        lhs = m_series(H, m1).compose({"X": m_series(H, m2)})
        assert lhs.eq(m_series(H, m1 * m2))


# -- Honda laws -----------------------------------------------------------------


def test_honda_2_1_axioms_and_p_series():
    H = honda_fgl(2, 1, 8)
    assert check_fgl_axioms(H).passed
    ps = m_series(H, 2)
    assert ps.eq(_xmono(H.ring, 8, 2))


def test_honda_3_1_p_series():
    H = honda_fgl(3, 1, 9)
    assert check_fgl_axioms(H).passed
    assert m_series(H, 3).eq(_xmono(H.ring, 9, 3))


def test_honda_2_2_axioms_and_p_series():
    H = honda_fgl(2, 2, 12)
    assert check_fgl_axioms(H).passed
    assert m_series(H, 2).eq(_xmono(H.ring, 12, 4))


def test_honda_3_2_large_p_series_without_series_build():
    # the [p]-series comes out of the log model; X^9 needs no 2-var work
    H = honda_fgl(3, 2, 81)
    assert m_series(H, 3).eq(_xmono(H.ring, 81, 9))
    assert H._series is None  # nothing forced the two-variable series


def test_honda_two_precision_agreement():
    low = honda_fgl(2, 1, 4)
    high = honda_fgl(2, 1, 8)
    assert high.series.truncate(4).eq(low.series)


def test_honda_over_extension_field():
    F4 = finite_field(2, 2)
    H = honda_fgl(2, 2, 6, field=F4)
    assert H.ring == F4
    assert check_fgl_axioms(H).passed


# -- logarithms -----------------------------------------------------------------


def _oracle_log(F):
    """Degree-by-degree solve of log(F(X,Y)) = log(X) + log(Y), l_1 = 1.

    Independent of the derivative formula used by fgl_log: at each total
    degree D, the coefficient of X Y^{D-1} in sum_d l_d F^d fixes l_D.
    """
    ring, N = F.ring, F.bound
    powers = [None, F.series]
    for d in range(2, N + 1):
        powers.append(powers[-1].mul(F.series))
    l = [None, Fraction(1)]
    t2 = F.series.table
    for D in range(2, N + 1):
        acc = Fraction(0)
        for d in range(1, D):
            acc += Fraction(l[d]) * Fraction(powers[d].coefficient((1, D - 1)))
        # [F^D]_{X Y^{D-1}} = binom(D,1) = D, so l_D * D + acc = 0
        l.append(-acc / D)
    log = TruncatedSeries.zero(ring, ("X",), N)
    log.coeffs[1] = ring.one()
    for D in range(2, N + 1):
        log.coeffs[D] = np.array(l[D], dtype=object).reshape(())
    return log


def test_fgl_log_multiplicative_alternating_harmonic():
    Q = RationalizedRing(3, 8)
    F = _multiplicative_rational(Q, 6)
    log = fgl_log(F)
    for d in range(1, 7):
        assert log.coefficient((d,)) == Fraction((-1) ** (d + 1), d)


def _multiplicative_rational(Q, N):
    x = TruncatedSeries.variable(Q, ("X", "Y"), N, "X")
    y = TruncatedSeries.variable(Q, ("X", "Y"), N, "Y")
    return FormalGroupLaw(Q, N, series=x.add(y).add(x.mul(y)), kind="derived", p=Q.p)


def test_fgl_log_matches_independent_oracle():
    Q = RationalizedRing(2, 10)
    F = _multiplicative_rational(Q, 7)
    assert fgl_log(F).eq(_oracle_log(F))


def test_fgl_log_of_honda_model_matches_oracle():
    # the rational model of the height-1 Honda law: log = X + X^2/2 + X^4/4...
    H = honda_fgl(2, 1, 8)
    model = H.log_model
    FQ = FormalGroupLaw(
        model.ring, 8, series=_rational_series_of(H), kind="derived", p=2
    )
    assert fgl_log(FQ).eq(_oracle_log(FQ))
    log = fgl_log(FQ)
    assert log.coefficient((2,)) == Fraction(1, 2)
    assert log.coefficient((4,)) == Fraction(1, 4)
    assert log.coefficient((8,)) == Fraction(1, 8)
    assert log.coefficient((3,)) == Fraction(0)


def _rational_series_of(H):
    from fglab.fgl import _build_series_from_log

    return _build_series_from_log(H.log_model, H.bound)


def test_fgl_exp_inverts_log():
    Q = RationalizedRing(5, 8)
    F = _multiplicative_rational(Q, 6)
    log = fgl_log(F)
    exp = fgl_exp(F)
    x = TruncatedSeries.variable(Q, ("X",), 6, "X")
    assert log.compose({"X": exp}).eq(x)
    assert exp.compose({"X": log}).eq(x)


def test_fgl_log_requires_rational_coefficients():
    F5 = prime_field(5)
    with pytest.raises(ConfigError):
        fgl_log(_multiplicative(F5, 4))


def test_fgl_log_linearizes_the_law():
    # log(F(X,Y)) = log(X) + log(Y): the defining property, checked directly
    Q = RationalizedRing(2, 10)
    F = _multiplicative_rational(Q, 6)
    log = fgl_log(F)
    lhs = log.compose({"X": F.series})
    x2 = log.rename_vars(("X",)).extend_vars(("X", "Y"))
    y2 = log.rename_vars(("Y",)).extend_vars(("X", "Y"))
    assert lhs.eq(x2.add(y2))


# -- universal deformations ------------------------------------------------------


def test_universal_deformation_2_1_p_series_is_formal_sum():
    U = universal_deformation(2, 1, 4, 3)
    R = U.ring
    ps = m_series(U, 2)
    oracle = formal_sum(U, _xvar(R, 4).int_mul(2), _xmono(R, 4, 2))
    assert ps.eq(oracle)


def test_universal_deformation_2_2_p_series_is_formal_sum():
    U = universal_deformation(2, 2, 12, 2)
    R = U.ring
    ps = m_series(U, 2)
    w1 = R.gen("w1")
    oracle = formal_sum_many(
        U,
        [
            _xvar(R, 12).int_mul(2),
            _xmono(R, 12, 2, w1),
            _xmono(R, 12, 4),
        ],
    )
    assert ps.eq(oracle)


def test_universal_deformation_reduces_to_honda():
    U = universal_deformation(2, 2, 12, 2)
    R = U.ring
    F2 = prime_field(2)
    W = R.base
    drop = truncpoly_hom(R, F2, [F2.zeros()], leaf_map=W.to_residue)
    reduced = base_change(U, RingMap(R, F2, drop.apply, name="mod (p,w)"))
    H = honda_fgl(2, 2, 12)
    assert reduced.series.eq(H.series)


def test_universal_deformation_3_2_xp_coefficient():
    U = universal_deformation(3, 2, 9, 2)
    ps = m_series(U, 3)
    c = ps.coefficient((3,))  # element of W/9[w1]
    R = U.ring
    assert int(R.component(c, 0)[0]) % 3 == 0
    assert int(R.component(c, 1)[0]) % 3 == 1


def test_universal_deformation_height1_is_parameterless():
    U = universal_deformation(3, 1, 9, 2)
    assert U.params == ()
    ps = m_series(U, 3)
    oracle = formal_sum(U, _xvar(U.ring, 9).int_mul(3), _xmono(U.ring, 9, 3))
    assert ps.eq(oracle)


def test_universal_deformation_axioms():
    assert check_fgl_axioms(universal_deformation(2, 2, 6, 2)).passed
    assert check_fgl_axioms(universal_deformation(3, 2, 6, 2)).passed


# -- homomorphisms ----------------------------------------------------------------


def test_identity_hom_holds():
    H = honda_fgl(2, 2, 8)
    hom = identity_hom(H)
    assert hom.holds()
    assert hom.is_isomorphism


def test_teichmuller_homs_compose():
    F4 = finite_field(2, 2)
    H = honda_fgl(2, 2, 8, field=F4)
    w = F4.gen()
    w2 = F4.mul(w, w)
    h1 = FglHom(H, H, _xvar(F4, 8).scalar_mul(w), identity_map(F4))
    h2 = FglHom(H, H, _xvar(F4, 8).scalar_mul(w2), identity_map(F4))
    assert h1.holds() and h2.holds()
    comp = hom_compose(h1, h2)
    assert comp.holds()
    # w * w^2 = 1: the composite is the identity
    assert comp.f.eq(_xvar(F4, 8))


def test_hom_residual_detects_failure():
    F4 = finite_field(2, 2)
    H = honda_fgl(2, 1, 6, field=F4)
    # multiplication by the F4 generator is not an endomorphism of the
    # height-1 law: its digits must lie in F_2
    bad = FglHom(H, H, _xvar(F4, 6).scalar_mul(F4.gen()), identity_map(F4))
    assert not bad.holds()


def test_is_isomorphism_requires_unit_linear_coefficient():
    F5 = prime_field(5)
    F = _multiplicative(F5, 5)
    squared = FglHom(F, F, _xmono(F5, 5, 2), identity_map(F5))
    assert not squared.is_isomorphism


def test_base_change_functorial():
    W = witt_ring(2, 1, 3)
    U = universal_deformation(2, 2, 6, 3)
    R = U.ring
    # substitute w1 -> 2, then reduce the Witt leaf mod 4, in either order
    W2 = witt_ring(2, 1, 2)
    ev = truncpoly_hom(R, W, [W.from_int(2)])
    capm = RingMap(W, W2, lambda a: a % 4, name="mod 4")
    one_shot = base_change(U, RingMap(R, W2, lambda a: capm.apply(ev.apply(a))))
    two_step = base_change(base_change(U, ev), capm)
    assert one_shot.series.eq(two_step.series)
    assert check_fgl_axioms(one_shot).passed


def test_compose_pair_matches_direct_composition():
    F4 = finite_field(2, 2)
    H = honda_fgl(2, 2, 8, field=F4)
    rng = np.random.default_rng(17)
    u = TruncatedSeries.zero(F4, ("X",), 8)
    v = TruncatedSeries.zero(F4, ("Y",), 8)
    u.coeffs[1:] = F4.random(rng, lead=(8,))
    v.coeffs[1:] = F4.random(rng, lead=(8,))
    fast = compose_pair(H, u, v)
    slow = H.series.compose(
        {"X": u.extend_vars(("X", "Y")), "Y": v.extend_vars(("X", "Y"))}
    )
    assert fast.eq(slow)
