"""Ring tower basics: finite fields, Witt vectors, Laurent windows,
quotient extensions, and the unit-pivot linear algebra on top of them."""

import numpy as np
import pytest

from fglab.errors import ConfigError, PrecisionError, RingMismatchError
from fglab.rings import (
    RationalizedRing,
    RingGauss,
    adjoin_root,
    ext_embed_map,
    finite_field,
    hom_from_images,
    identity_map,
    laurent_ring,
    mat_vec,
    newton_root,
    poly_eval,
    prime_field,
    rewindow_map,
    ring_kernel,
    ring_rref,
    subfield_generator,
    teichmuller_lift_map,
    witt_ring,
)

from fractions import Fraction


def test_prime_field_inverse():
    F5 = prime_field(5)
    three = F5.from_int(3)
    assert F5.eq(F5.mul(three, F5.inv(three)), F5.one())
    assert F5.try_inv(F5.zeros()) is None


def test_f4_generator_has_order_three():
    F4 = finite_field(2, 2)
    w = F4.gen()
    w2 = F4.mul(w, w)
    assert not F4.eq(w2, w)
    assert F4.eq(F4.add(w2, F4.add(w, F4.one())), F4.zeros())  # w^2 + w + 1 = 0
    assert F4.eq(F4.mul(w2, w), F4.one())


def test_f4_frobenius_squares():
    F4 = finite_field(2, 2)
    rng = np.random.default_rng(0)
    a = F4.random(rng, lead=(8,))
    assert F4.eq(F4.frobenius(a), F4.mul(a, a))


def test_f9_frobenius_is_field_automorphism():
    F9 = finite_field(3, 2)
    rng = np.random.default_rng(1)
    a = F9.random(rng, lead=(6,))
    b = F9.random(rng, lead=(6,))
    lhs = F9.frobenius(F9.mul(a, b))
    rhs = F9.mul(F9.frobenius(a), F9.frobenius(b))
    assert F9.eq(lhs, rhs)
    assert F9.eq(F9.frobenius(F9.frobenius(a)), a)


def test_witt_ring_is_z_mod_p_m_when_unramified_trivial():
    W = witt_ring(2, 1, 3)
    assert W.leaf_modulus == 8
    a = W.from_int(5)
    assert W.eq(W.mul(a, W.from_int(3)), W.from_int(15 % 8))
    assert W.eq(W.inv(a), W.from_int(5))  # 5*5 = 25 = 1 mod 8


def test_witt_teichmuller_is_multiplicative():
    W = witt_ring(3, 2, 3)
    F9 = W.residue_ring()
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = F9.random(rng)
        y = F9.random(rng)
        txy = W.teichmuller(F9.mul(x, y))
        assert W.eq(txy, W.mul(W.teichmuller(x), W.teichmuller(y)))


def test_witt_teichmuller_reduces_to_input():
    W = witt_ring(2, 2, 4)
    F4 = W.residue_ring()
    w = F4.gen()
    assert F4.eq(W.to_residue(W.teichmuller(w)), w)
    # the Teichmuller lift of a cube root of unity is a cube root of unity
    t = W.teichmuller(w)
    assert W.eq(W.pow(t, 3), W.one())


def test_witt_frobenius_lifts_p_power_map():
    W = witt_ring(3, 2, 2)
    F9 = W.residue_ring()
    rng = np.random.default_rng(3)
    a = W.random(rng, lead=(10,))
    red = W.to_residue(W.frobenius(a))
    assert F9.eq(red, F9.frobenius(W.to_residue(a)))


def test_witt_frobenius_is_ring_hom():
    W = witt_ring(2, 2, 3)
    rng = np.random.default_rng(4)
    a = W.random(rng, lead=(6,))
    b = W.random(rng, lead=(6,))
    assert W.eq(W.frobenius(W.mul(a, b)), W.mul(W.frobenius(a), W.frobenius(b)))
    assert W.eq(W.frobenius(W.add(a, b)), W.add(W.frobenius(a), W.frobenius(b)))


def test_newton_root_recovers_teichmuller():
    # x^3 = 1 has the Teichmuller lift of the F4 generator as a root
    W = witt_ring(2, 2, 4)
    F4 = W.residue_ring()
    coeffs = np.stack([W.neg(W.one()), W.zeros(), W.zeros(), W.one()])
    x0 = W.lift_residue(F4.gen())
    root = newton_root(W, coeffs, x0, steps=5)
    assert W.eq(root, W.teichmuller(F4.gen()))


# -- Laurent windows ---------------------------------------------------------


def test_laurent_mul_matches_polynomial_convolution():
    F5 = prime_field(5)
    L = laurent_ring(F5, "t", 0, 6)
    a = L.zeros()
    b = L.zeros()
    a[0], a[1] = 1, 2  # 1 + 2t
    b[1], b[2] = 3, 1  # 3t + t^2
    prod = L.mul(a, b)
    expect = L.zeros()
    expect[1], expect[2], expect[3] = 3, 2, 2  # 3t + 7t^2 + 2t^3 mod 5
    assert L.eq(prod, expect)


def test_laurent_negative_exponents_and_valuation():
    F4 = finite_field(2, 2)
    L = laurent_ring(F4, "u", -4, 4)
    u = L.gen()
    uinv = L.inv(u)
    assert L.eq(L.mul(u, uinv), L.one())
    assert L.valuation(uinv) == -1
    assert L.valuation(L.zeros()) is None


def test_laurent_inverse_of_unit_series():
    F9 = finite_field(3, 2)
    L = laurent_ring(F9, "u", -6, 6)
    a = L.from_base(F9.one())
    a = L.add(a, L.shift(L.one(), 2))  # 1 + u^2
    inv = L.inv(a)
    assert L.eq(L.mul(a, inv), L.one())
    # geometric series: 1 - u^2 + u^4 - ...
    assert F9.eq(L.coeff(inv, 2), F9.neg(F9.one()))
    assert F9.eq(L.coeff(inv, 4), F9.one())


def test_laurent_shifted_unit_inverse():
    # v(a) = 1 forces v(1/a) = -1, which must stay inside the window
    F5 = prime_field(5)
    L = laurent_ring(F5, "u", -3, 3)
    u = L.gen()
    a = L.mul(u, L.add(L.one(), u))
    inv = L.try_inv(a)
    assert inv is not None
    assert L.eq(L.mul(a, inv), L.one())
    assert L.valuation(inv) == -1


def test_rewindow_roundtrip():
    F5 = prime_field(5)
    L1 = laurent_ring(F5, "u", -2, 3)
    L2 = laurent_ring(F5, "u", -4, 6)
    up = rewindow_map(L1, L2)
    a = L1.zeros()
    a[0], a[3] = 2, 4  # 2u^-2 + 4u
    b = up.apply(a)
    assert F5.eq(L2.coeff(b, -2), F5.from_int(2))
    assert F5.eq(L2.coeff(b, 1), F5.from_int(4))
    down = rewindow_map(L2, L1)
    assert L1.eq(down.apply(b), a)


# -- quotient extensions -----------------------------------------------------


def _phi0_extension():
    """F_9((u)) with a square root of u adjoined."""
    F9 = finite_field(3, 2)
    L = laurent_ring(F9, "u", -4, 4)
    u = L.gen()
    polyvec = np.stack([L.neg(u), L.zeros()])  # low coefficients of Z^2 - u
    return L, adjoin_root(L, polyvec, "s")


def test_extension_generator_satisfies_relation():
    L, E = _phi0_extension()
    s = E.gen()
    assert E.eq(E.mul(s, s), E.from_base(L.gen()))


def test_extension_inverse():
    L, E = _phi0_extension()
    s = E.gen()
    a = E.add(s, E.one())
    inv = E.inv(a)
    assert E.eq(E.mul(a, inv), E.one())
    # s itself is invertible: s * (s / u) = 1
    sinv = E.inv(s)
    assert E.eq(E.mul(s, sinv), E.one())


def _small_support_elements(L, E, rng, count):
    """Random extension elements whose Laurent support stays near 0, so
    pairwise products cannot escape the window."""
    F = L.base
    out = []
    for _ in range(count):
        a = E.zeros()
        for i in range(E.d):
            for e in (-1, 0, 1):
                c = F.random(rng)
                cur = E.from_base(L.shift(L.from_base(c), e))
                for _ in range(i):
                    cur = E.mul_by_gen(cur)
                a = E.add(a, cur)
        out.append(a)
    return out


def test_extension_hom_from_images():
    # Z^2 - u has two roots: s and -s; sending s to -s is a ring map
    L, E = _phi0_extension()
    s = E.gen()
    leaf = ext_embed_map(E)  # L -> E, constant on the base
    sigma = hom_from_images(E, E, leaf, [E.neg(s)])
    rng = np.random.default_rng(5)
    a, b = _small_support_elements(L, E, rng, 2)
    assert E.eq(sigma.apply(E.mul(a, b)), E.mul(sigma.apply(a), sigma.apply(b)))
    assert E.eq(sigma.apply(E.add(a, b)), E.add(sigma.apply(a), sigma.apply(b)))
    assert E.eq(sigma.apply(sigma.apply(a)), a)


def test_char0_extension_newton_inverse():
    # W(F_3)/27 with a root of Z^2 - 2 adjoined (2 is not a square mod 3)
    W = witt_ring(3, 1, 3)
    polyvec = np.stack([W.from_int(-2), W.zeros()])
    E = adjoin_root(W, polyvec, "r")
    r = E.gen()
    a = E.add(E.from_int(2), r)
    inv = E.inv(a)
    assert E.eq(E.mul(a, inv), E.one())


def test_subfield_generator_embeds():
    F4 = finite_field(2, 2)
    g = subfield_generator(F4, 2)
    # a generator of F_4 over F_2 satisfies the pinned degree-2 polynomial
    assert not F4.eq(g, F4.zeros())
    assert F4.eq(F4.pow(g, 3), F4.one())
    assert np.array_equal(subfield_generator(F4, 1), F4.one())
    F16 = finite_field(2, 4)
    g2 = subfield_generator(F16, 2)
    assert F16.eq(F16.pow(g2, 3), F16.one())
    assert not F16.eq(g2, F16.one())


# -- rationalized coefficients ------------------------------------------------


def test_rationalized_reduce_handles_denominators():
    Q = RationalizedRing(2, 4)
    W = witt_ring(2, 1, 3)
    fr = Fraction(1, 3)  # 3^{-1} = 3 mod 8
    assert W.eq(Q.reduce_element(fr, W), W.from_int(3))
    with pytest.raises(PrecisionError):
        Q.reduce_element(Fraction(1, 2), W)


def test_rationalized_cap_guard():
    Q = RationalizedRing(2, 2)
    arr = np.array(Fraction(1, 8), dtype=object).reshape(())
    with pytest.raises(PrecisionError):
        Q.check_caps(arr.reshape(1))


# -- linear algebra ----------------------------------------------------------


def test_ring_rref_over_field():
    F5 = prime_field(5)
    M = np.zeros((2, 3, 1), dtype=np.int64)
    M[0, 0], M[0, 1], M[0, 2] = 1, 2, 3
    M[1, 0], M[1, 1], M[1, 2] = 2, 4, 2
    R, E, pivots, rank = ring_rref(F5, M)
    assert rank == 2
    assert pivots == [0, 2]


def test_ring_gauss_solves_and_flags_inconsistency():
    F5 = prime_field(5)
    M = np.zeros((3, 2, 1), dtype=np.int64)
    M[0, 0], M[1, 1], M[2, 0], M[2, 1] = 1, 1, 1, 1
    G = RingGauss(F5, M)
    assert G.unique
    B = np.zeros((3, 1, 1), dtype=np.int64)
    B[0, 0], B[1, 0], B[2, 0] = 2, 3, 1  # inconsistent: 2 + 3 = 0 != 1 mod 5
    X, ok = G.solve(B)
    assert not ok
    B[2, 0] = 0  # now row 3 agrees with rows 1 + 2
    X, ok = G.solve(B)
    assert ok
    assert F5.eq(mat_vec(F5, M, X[:, 0]), B[:, 0])


def test_ring_gauss_over_witt_needs_unit_pivots():
    # over Z/8, the matrix [[2]] has no unit pivot; [[3]] does
    W = witt_ring(2, 1, 3)
    M = np.zeros((1, 1, 1), dtype=np.int64)
    M[0, 0] = 2
    G = RingGauss(W, M)
    assert G.rank == 0
    M[0, 0] = 3
    G = RingGauss(W, M)
    assert G.rank == 1
    B = np.zeros((1, 1, 1), dtype=np.int64)
    B[0, 0] = 1
    X, ok = G.solve(B)
    assert ok and W.eq(X[0, 0], W.from_int(3))  # 3 * 3 = 9 = 1 mod 8


def test_ring_kernel_dimension():
    F4 = finite_field(2, 2)
    M = np.zeros((1, 3) + F4.shape, dtype=np.int64)
    M[0, 0] = F4.one()
    M[0, 1] = F4.gen()
    basis = ring_kernel(F4, M)
    assert basis.shape[0] == 2
    for v in basis:
        assert F4.is_zero(mat_vec(F4, M, v))


def test_poly_eval_horner():
    F7 = prime_field(7)
    coeffs = np.stack([F7.from_int(1), F7.from_int(2), F7.from_int(3)])
    x = F7.from_int(2)
    # 1 + 2*2 + 3*4 = 17 = 3 mod 7
    assert F7.eq(poly_eval(F7, coeffs, x), F7.from_int(3))


def test_ring_map_chain_checks_compatibility():
    F4 = finite_field(2, 2)
    F9 = finite_field(3, 2)
    with pytest.raises(RingMismatchError):
        identity_map(F4).then(identity_map(F9))
