import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barylab.barycenters import Arithmetic, CanonicalNPC, Karcher
from barylab.condexp import (
    associativity_probe,
    beta_conditional_expectation,
    beta_expectation,
    beta_expectation_restricted,
    disintegrate,
    separation_test,
    sturm_conditional_expectation,
)
from barylab.errors import CapacityError, DomainError, InputError
from barylab.geometry import Space, dist, powm, sqrtm
from barylab.measures import lp_distance_rv
from barylab.probability import FiniteProbabilitySpace, PartitionAlgebra, RandomVariable
from barylab.sampling import random_points, random_weights, trial_rng
from oracles import pencil_geodesic

E2 = Space.euclidean(2)
TR2 = Space.spd_trace(2)
seeds = st.integers(min_value=0, max_value=2**32 - 1)
B23 = PartitionAlgebra((0, 1, 1))


def _rv(space, rng, n, weights=None):
    prob = FiniteProbabilitySpace(random_weights(rng, n) if weights is None else weights)
    return RandomVariable(prob, space, random_points(space, rng, n))


def test_disintegration_examples():
    prob = FiniteProbabilitySpace([0.2, 0.3, 0.5])
    d = disintegrate(prob, PartitionAlgebra.trivial(3))
    assert all(c == prob for c in d.conditionals)
    d = disintegrate(prob, PartitionAlgebra.discrete(3))
    assert [c.weights.tolist() for c in d.conditionals] == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    d = disintegrate(prob, B23)
    np.testing.assert_allclose(d[1].weights, [0, 0.3 / 0.8, 0.5 / 0.8])
    assert d[1] == d[2]
    d = disintegrate(FiniteProbabilitySpace([0.0, 0.0, 1.0]), PartitionAlgebra((0, 0, 1)))
    assert d.null_blocks == (0,)
    with pytest.raises(InputError):
        disintegrate(prob, PartitionAlgebra.trivial(4))


def test_beta_expectation_examples():
    rng = trial_rng(1)
    x = random_points(TR2, rng, 1)[0]
    const = RandomVariable.constant(FiniteProbabilitySpace([0.1, 0.9]), TR2, x)
    assert np.array_equal(beta_expectation(Karcher(), const), x)
    pts = random_points(E2, rng, 4)
    phi = RandomVariable(FiniteProbabilitySpace.uniform(4), E2, pts)
    np.testing.assert_allclose(beta_expectation(Arithmetic(), phi), np.mean(pts, axis=0), atol=1e-15)
    a, b = random_points(TR2, rng, 2)
    phi = RandomVariable(FiniteProbabilitySpace([0.25, 0.75]), TR2, [a, b])
    assert dist(TR2, beta_expectation(Karcher(), phi), pencil_geodesic(a, b, 0.75)) <= 1e-9


def test_restricted_examples():
    rng = trial_rng(2)
    phi = _rv(TR2, rng, 3)
    assert np.array_equal(beta_expectation_restricted(Karcher(), phi, [0, 1, 2]), beta_expectation(Karcher(), phi))
    assert np.array_equal(beta_expectation_restricted(Karcher(), phi, [1]), phi[1])
    p = phi.prob.weights
    val = beta_expectation_restricted(Karcher(), phi, [1, 2])
    assert dist(TR2, val, pencil_geodesic(phi[1], phi[2], p[2] / (p[1] + p[2]))) <= 1e-10
    null = RandomVariable(FiniteProbabilitySpace([0.0, 1.0]), E2, [[0, 0], [1, 1]])
    with pytest.raises(DomainError):
        beta_expectation_restricted(Arithmetic(), null, [0])


def test_conditional_expectation_examples():
    rng = trial_rng(3)
    phi = _rv(TR2, rng, 5)
    e = beta_conditional_expectation(Karcher(), phi, PartitionAlgebra.discrete(5))
    assert all(np.array_equal(e[i], phi[i]) for i in range(5))
    e = beta_conditional_expectation(Karcher(), phi, PartitionAlgebra.trivial(5))
    g = beta_expectation(Karcher(), phi)
    assert all(np.array_equal(e[i], g) for i in range(5))
    phi = _rv(TR2, rng, 3)
    p = phi.prob.weights
    e = beta_conditional_expectation(Karcher(), phi, B23)
    assert np.array_equal(e[0], phi[0])
    ref = pencil_geodesic(phi[1], phi[2], p[2] / (p[1] + p[2]))
    assert dist(TR2, e[1], ref) <= 1e-10 and np.array_equal(e[1], e[2])


def test_associativity_probe_examples():
    rng = trial_rng(4)
    phi = _rv(E2, rng, 6)
    fine = PartitionAlgebra((0, 0, 1, 1, 2, 2))
    coarse = PartitionAlgebra((0, 0, 0, 0, 1, 1))
    assert associativity_probe(Arithmetic(), phi, coarse, fine).gap <= 1e-15
    spd = _rv(TR2, rng, 6)
    assert associativity_probe(Karcher(), spd, fine, fine).gap == 0.0
    with pytest.raises(InputError):
        associativity_probe(Karcher(), spd, fine, coarse)


def test_non_associativity_reduces_to_matrix_inequality():
    # uniform P, A3 = I: the tower law would force A1 #_{2/3} A2^{1/2} = A1^{1/2} #_{1/3} A2
    a1, a2 = np.array([[2.0, 1.0], [1.0, 1.0]]), np.diag([1.0, 3.0])
    lhs = pencil_geodesic(a1, sqrtm(a2), 2 / 3)
    rhs = pencil_geodesic(sqrtm(a1), a2, 1 / 3)
    assert dist(TR2, lhs, rhs) > 1e-3
    phi = RandomVariable(FiniteProbabilitySpace.uniform(3), TR2, [a1, a2, np.eye(2)])
    probe = associativity_probe(Karcher(), phi, PartitionAlgebra.trivial(3), B23)
    assert probe.gap > 1e-3
    # commuting matrices satisfy the tower law
    phi = RandomVariable(FiniteProbabilitySpace.uniform(3), TR2, [np.diag([2.0, 5.0]), np.diag([1.0, 3.0]), np.eye(2)])
    assert associativity_probe(Karcher(), phi, PartitionAlgebra.trivial(3), B23).gap <= 1e-12
    assert dist(TR2, powm(np.diag([6.0, 15.0]), 1 / 3), probe.rhs[0]) > 0


@settings(max_examples=40, deadline=None)
@given(seed=seeds, n=st.integers(2, 8))
def test_sturm_matches_disintegration(seed, n):
    rng = trial_rng(seed)
    part = PartitionAlgebra(tuple(int(x) for x in rng.integers(0, 3, n)))
    for space in (E2, TR2):
        phi = _rv(space, rng, n)
        a = beta_conditional_expectation(CanonicalNPC(), phi, part)
        b = sturm_conditional_expectation(phi, part)
        assert max(dist(space, a[i], b[i]) for i in range(n)) <= 1e-8


def test_sturm_examples():
    rng = trial_rng(5)
    phi = _rv(E2, rng, 6)
    part = PartitionAlgebra((0, 1, 0, 1, 2, 2))
    s = sturm_conditional_expectation(phi, part)
    w = phi.prob.weights
    for block in part.blocks:
        mean = sum(w[i] * phi[i] for i in block) / sum(w[i] for i in block)
        for i in block:
            np.testing.assert_allclose(s[i], mean, atol=1e-14)
    spd = _rv(TR2, rng, 4)
    triv = sturm_conditional_expectation(spd, PartitionAlgebra.trivial(4))
    assert dist(TR2, triv[0], CanonicalNPC()(spd.law())) <= 1e-10
    disc = sturm_conditional_expectation(spd, PartitionAlgebra.discrete(4))
    assert all(np.array_equal(disc[i], spd[i]) for i in range(4))


@settings(max_examples=30, deadline=None)
@given(seed=seeds, p=st.sampled_from([1.0, 2.0]))
def test_conditional_expectation_is_contractive(seed, p):
    rng = trial_rng(seed)
    n = int(rng.integers(2, 7))
    part = PartitionAlgebra(tuple(int(x) for x in rng.integers(0, 3, n)))
    prob = FiniteProbabilitySpace(random_weights(rng, n))
    phi = RandomVariable(prob, TR2, random_points(TR2, rng, n))
    psi = RandomVariable(prob, TR2, random_points(TR2, rng, n))
    e1 = beta_conditional_expectation(Karcher(), phi, part)
    e2 = beta_conditional_expectation(Karcher(), psi, part)
    assert lp_distance_rv(p, e1, e2) <= lp_distance_rv(p, phi, psi) + 1e-10


def test_separation_examples():
    rng = trial_rng(6)
    phi = _rv(TR2, rng, 4)
    assert separation_test(Karcher(), phi, phi).equal
    psi = RandomVariable(phi.prob, TR2, [phi[0], phi[1], random_points(TR2, rng, 1)[0], phi[3]])
    res = separation_test(Karcher(), phi, psi)
    assert not res.equal and res.witness == [2]
    prob = FiniteProbabilitySpace.uniform(2)
    a, b = random_points(E2, rng, 2)
    res = separation_test(Arithmetic(), RandomVariable(prob, E2, [a, b]), RandomVariable(prob, E2, [b, a]))
    assert not res.equal and res.witness == [0]
    # a null atom never separates
    null = FiniteProbabilitySpace([0.0, 1.0])
    res = separation_test(Arithmetic(), RandomVariable(null, E2, [a, b]), RandomVariable(null, E2, [[9, 9], b]))
    assert res.equal
    big = RandomVariable(FiniteProbabilitySpace.uniform(21), E2, [[0.0, float(i)] for i in range(21)])
    with pytest.raises(CapacityError):
        separation_test(Arithmetic(), big, big)
    assert math.isfinite(res.gap)
