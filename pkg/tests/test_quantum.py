import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from covbell import (
    CHSH,
    COV3322,
    COVCHSH,
    COVCHSH_PRIME,
    RCHSH,
    chsh,
    covchsh,
    covchsh_prime,
    pr_box,
    correlators,
    i3322,
    rchsh,
)
from covbell.correlations import Correlators
from covbell.quantum import (
    Observable,
    QuantumError,
    QuantumStrategy,
    TwoQubitState,
    _Objective,
    activation_curve,
    arcsin_check,
    gamma_matrix,
    mixed_covchsh_reference,
    mixed_reference_strategy,
    optimize_measurements,
    phi_plus,
    phi_theta,
    product_state,
    psi_theta,
    pure_covchsh_reference,
    pure_reference_strategy,
    quantum_correlators,
    random_state,
    random_strategy,
    rho_theta,
    tsirelson_check_cov,
    tsirelson_check_pearson,
)

SQRT8 = 2 * math.sqrt(2)


def chsh_optimal():
    return QuantumStrategy(
        phi_plus(),
        (Observable.from_pauli(z=1), Observable.from_pauli(x=1)),
        (Observable.from_pauli(z=1, x=1), Observable.from_pauli(z=1, x=-1)),
    )


def test_tsirelson_strategy():
    c = quantum_correlators(chsh_optimal())
    for f in (chsh, covchsh, rchsh):
        assert f(c) == pytest.approx(SQRT8, abs=1e-12)


def test_product_state_has_no_covariance():
    rng = np.random.default_rng(0)
    for _ in range(20):
        strat = QuantumStrategy(product_state(), [Observable(tuple(0.9 * v / np.linalg.norm(v))) for v in rng.normal(size=(2, 3))], [Observable((0.6, 0, 0.8))] * 2)
        assert np.allclose(np.asarray(quantum_correlators(strat).covariances(), float), 0, atol=1e-15)
    assert optimize_measurements(product_state(), COVCHSH, restarts=5).value == pytest.approx(0, abs=1e-9)


@pytest.mark.parametrize("theta", [0.3, 0.7, 1.2, math.pi / 2])
def test_reference_strategies(theta):
    assert covchsh(quantum_correlators(pure_reference_strategy(theta))) == pytest.approx(pure_covchsh_reference(theta), abs=1e-12)
    assert covchsh(quantum_correlators(mixed_reference_strategy(theta))) == pytest.approx(mixed_covchsh_reference(theta), abs=1e-12)


def test_state_constructors():
    assert np.allclose(phi_theta(math.pi / 2).rho, phi_plus().rho)
    assert np.allclose(psi_theta(math.pi / 2).rho, phi_plus().rho)
    r = rho_theta(math.pi / 2)
    assert np.allclose(r.rho, phi_plus().rho) and r.rank == 1
    # theta = pi/3: an equal mixture of two non-orthogonal states (overlap sin theta),
    # so the spectrum is (1 +- sin theta)/2 and the eigenvectors span both states
    theta = math.pi / 3
    r = rho_theta(theta)
    w, v = np.linalg.eigh(r.rho)
    assert np.allclose(sorted(w)[-2:], [(1 - math.sin(theta)) / 2, (1 + math.sin(theta)) / 2], atol=1e-12)
    assert r.rank == 2
    assert abs(np.vdot(phi_theta(theta).vector, psi_theta(theta).vector)) == pytest.approx(math.sin(theta))
    rebuilt = sum(0.5 * np.outer(s.vector, s.vector.conj()) for s in (phi_theta(theta), psi_theta(theta)))
    assert np.allclose(rebuilt, r.rho, atol=1e-15)
    span = v[:, w > 1e-9]
    for s in (phi_theta(math.pi / 3), psi_theta(math.pi / 3)):
        proj = span @ (span.conj().T @ s.vector)
        assert np.allclose(proj, s.vector, atol=1e-12)
    with pytest.raises(QuantumError):
        phi_theta(0)
    with pytest.raises(QuantumError):
        psi_theta(2)


def test_state_validation():
    with pytest.raises(QuantumError, match="unit norm"):
        TwoQubitState.pure([1, 1, 0, 0])
    with pytest.raises(QuantumError, match="trace"):
        TwoQubitState.mixed(np.eye(4))
    with pytest.raises(QuantumError, match="semidefinite"):
        TwoQubitState.mixed(np.diag([1.5, -0.5, 0, 0]))
    with pytest.raises(QuantumError, match="Hermitian"):
        TwoQubitState.mixed(np.array([[0.5, 1, 0, 0], [0, 0.5, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]))
    with pytest.raises(QuantumError):
        TwoQubitState.mixed(np.eye(3) / 3)


def test_observable_validation():
    assert Observable.from_pauli(3, 0, 4).bloch == pytest.approx((0.6, 0, 0.8))
    assert Observable.from_angles(math.pi / 2, 0).bloch == pytest.approx((1, 0, 0))
    assert Observable().is_projective and not Observable((0.5, 0, 0)).is_projective
    with pytest.raises(QuantumError):
        Observable((1, 1, 0))
    with pytest.raises(QuantumError):
        Observable((0.8, 0, 0), bias=0.5)
    with pytest.raises(QuantumError):
        Observable(matrix=np.diag([2.0, 0.0]))
    with pytest.raises(QuantumError, match="dimension"):
        QuantumStrategy(phi_plus(), [Observable(matrix=np.eye(3))], [Observable()])
    with pytest.raises(QuantumError):
        QuantumStrategy(phi_plus(), [], [Observable()])
    w, _ = np.linalg.eigh(Observable((0.3, 0.4, 0), bias=0.2).operator)
    assert w == pytest.approx([-0.3, 0.7])


def test_gamma_matrix_is_psd_and_carries_covariances():
    rng = np.random.default_rng(1)
    for _ in range(300):
        strat = random_strategy(rng)
        G = gamma_matrix(strat)
        assert np.allclose(G, G.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(G).min() >= -1e-9
        c = quantum_correlators(strat)
        assert np.allclose(G[:2, 2:].real, np.asarray(c.covariances(), float), atol=1e-12)
        assert np.allclose(np.diag(G).real, np.concatenate([c.std_a() ** 2, c.std_b() ** 2]), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 2 * math.pi))
def test_rotating_bob_traces_the_circle(phi):
    # rotate Bob's settings about the y axis
    def rot(v):
        x, y, z = v
        return (math.cos(phi) * x + math.sin(phi) * z, y, -math.sin(phi) * x + math.cos(phi) * z)

    base = chsh_optimal()
    strat = QuantumStrategy(base.state, base.a_obs, [Observable(rot(o.bloch)) for o in base.b_obs])
    c = quantum_correlators(strat)
    assert covchsh(c) ** 2 + covchsh_prime(c) ** 2 == pytest.approx(8, abs=1e-9)


def test_arcsin_examples():
    s = 1 / math.sqrt(2)
    tp = Correlators.from_moments([[s, s], [s, -s]], [0, 0], [0, 0])
    chk = tsirelson_check_cov(tp)
    assert chk.passed and chk.margin == pytest.approx(0, abs=1e-12)
    assert tsirelson_check_pearson(tp).passed
    pr = tsirelson_check_cov(correlators(pr_box()))
    assert not pr and pr.margin == pytest.approx(-math.pi)
    with pytest.raises(ValueError):
        arcsin_check([[1.1, 0], [0, 0]])
    with pytest.raises(ValueError):
        arcsin_check(np.zeros((3, 3)))


def test_arcsin_holds_in_other_dimensions():
    # the condition is dimension independent; sample qutrit x qubit strategies with matrix observables
    rng = np.random.default_rng(3)
    for _ in range(200):
        state = random_state(rng, rank=int(rng.integers(1, 4)), dims=(3, 2))
        a = []
        for _ in range(2):
            u = unitary_group.rvs(3, random_state=rng)
            a.append(Observable(matrix=u @ np.diag(rng.choice([-1.0, 1.0], 3)) @ u.conj().T))
        b = [Observable(tuple(v / np.linalg.norm(v))) for v in rng.normal(size=(2, 3))]
        c = quantum_correlators(QuantumStrategy(state, a, b))
        assert tsirelson_check_cov(c, tol=1e-9).passed
        assert tsirelson_check_pearson(c, tol=1e-9).passed
        assert covchsh(c) <= SQRT8 + 1e-9


def test_bloch_path_matches_operators():
    rng = np.random.default_rng(4)
    for expr in (COVCHSH, RCHSH, CHSH, COV3322):
        for povm in (False, True):
            state = random_state(rng, rank=2)
            obj = _Objective(state, expr, povm)
            for _ in range(10):
                p = rng.normal(size=obj.size)
                direct = float(expr(quantum_correlators(obj.strategy(p, state))))
                assert obj(p) == pytest.approx(direct, abs=1e-12)
                if not povm:
                    val, grad = obj.value_and_grad(p)
                    h = 1e-6
                    num = np.array([(obj(p + h * e) - obj(p - h * e)) / (2 * h) for e in np.eye(obj.size)])
                    assert val == pytest.approx(direct, abs=1e-12)
                    assert np.allclose(grad, num, atol=1e-5)


def test_optimizer_mixed_closed_form():
    theta = 0.8
    res = optimize_measurements(rho_theta(theta), COVCHSH, restarts=10, seed=0)
    assert res.value == pytest.approx(mixed_covchsh_reference(theta), abs=1e-6)
    assert covchsh(quantum_correlators(res.strategy)) == pytest.approx(res.value, abs=1e-12)
    value, strat = res
    assert strat is res.strategy


def test_cov3322_closed_forms():
    # explicit settings: 5 sin(theta) on phi_theta, 4 + sin^2(theta) on rho_theta
    def ang(a):
        return Observable((math.cos(a), math.sin(a), 0))

    for theta in (0.5, 1.0, math.pi / 2):
        s = QuantumStrategy(phi_theta(theta), [ang(0), ang(math.pi / 3), ang(2 * math.pi / 3)],
                            [ang(2 * math.pi / 3 + math.pi), ang(0), ang(math.pi / 3)])
        assert COV3322(quantum_correlators(s)) == pytest.approx(5 * math.sin(theta), abs=1e-12)
        c, t = math.sqrt(1 - math.sin(theta) ** 2 / 4), math.sin(theta) / 2
        obs = [Observable((t, 0, c)), Observable((-t, 0, c)), Observable((1, 0, 0))]
        m = QuantumStrategy(rho_theta(theta), obs, obs)
        assert COV3322(quantum_correlators(m)) == pytest.approx(4 + math.sin(theta) ** 2, abs=1e-12)


def test_cov3322_on_phi_plus():
    res = optimize_measurements(phi_plus(), COV3322, restarts=20, seed=42)
    assert res.value == pytest.approx(5, abs=1e-6)
    c = quantum_correlators(res.strategy)
    # marginals vanish on a maximally entangled state, so I3322 coincides
    assert i3322(c) == pytest.approx(5, abs=1e-6)


def test_povm_mode_does_not_beat_projective():
    theta = 0.9
    proj = optimize_measurements(rho_theta(theta), COVCHSH, restarts=5, seed=0).value
    povm = optimize_measurements(rho_theta(theta), COVCHSH, restarts=5, seed=0, povm=True)
    assert povm.value <= proj + 1e-6
    assert povm.value == pytest.approx(proj, abs=1e-4)


def test_jobs_give_identical_optimum():
    a = optimize_measurements(rho_theta(1.0), COVCHSH_PRIME, restarts=6, seed=3, jobs=1)
    b = optimize_measurements(rho_theta(1.0), COVCHSH_PRIME, restarts=6, seed=3, jobs=2)
    assert a.value == b.value


def test_activation_window_points():
    (p,) = activation_curve([0.7], restarts=10, seed=0)
    assert p.pure_opt < 16 / 7 < p.mixed_opt
    assert p.pure_opt == pytest.approx(p.pure_ref, abs=1e-5)
    (q,) = activation_curve([math.pi / 2], restarts=10, seed=0)
    assert q.pure_opt == pytest.approx(SQRT8, abs=1e-6) and q.mixed_opt == pytest.approx(SQRT8, abs=1e-6)
    assert math.asin(math.sqrt((8 / 7) ** 2 - 1)) == pytest.approx(0.59, abs=1e-2)


def test_rank_three_mixtures_do_not_help():
    # sampled, not a theorem: three equally entangled states versus their pairs
    rng = np.random.default_rng(0)

    def mix(vs):
        return TwoQubitState.mixed(sum(np.outer(v, v.conj()) for v in vs) / len(vs))

    for _ in range(3):
        theta = rng.uniform(0.4, 1.4)
        u = np.kron(unitary_group.rvs(2, random_state=rng), unitary_group.rvs(2, random_state=rng))
        vecs = [phi_theta(theta).vector, psi_theta(theta).vector, u @ phi_theta(theta).vector]
        r3 = optimize_measurements(mix(vecs), COVCHSH, restarts=10, seed=1)
        assert r3.strategy.state.rank == 3
        r2 = max(
            optimize_measurements(mix([vecs[i], vecs[j]]), COVCHSH, restarts=10, seed=1).value
            for i, j in ((0, 1), (0, 2), (1, 2))
        )
        assert r3.value <= r2 + 1e-6
