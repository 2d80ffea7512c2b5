import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svilab import monotone
from svilab.errors import InputError
from conftest import catalog

HALF_LINE = monotone.IndicatorBox([0.0], [None])
UNIT = monotone.IndicatorBox([0.0], [1.0])
HALF_SQUARE = monotone.Quadratic([[1.0]])


# -- examples -------------------------------------------------------------


def test_evaluate_examples():
    assert monotone.evaluate(monotone.Zero(2), [3.0, -1.0]) == 0.0
    assert monotone.evaluate(HALF_LINE, [-0.1]) == np.inf
    assert monotone.evaluate(monotone.ScaledL1(2.0, 2), [1.0, -3.0]) == 8.0


def test_evaluate_dimension_mismatch():
    with pytest.raises(InputError):
        monotone.evaluate(monotone.Zero(2), [1.0, 2.0, 3.0])


def test_resolvent_examples():
    assert monotone.resolvent(HALF_LINE, 1.0, [-2.0])[0] == 0.0
    assert monotone.resolvent(HALF_SQUARE, 1.0, [4.0])[0] == pytest.approx(2.0, abs=1e-14)


def test_l1_prox_against_grid_minimisation():
    z = np.arange(-10000, 10001) * 1e-4
    oracle = z[np.argmin(0.5 * (z - 0.2) ** 2 + 0.5 * np.abs(z))]
    assert oracle == 0.0
    assert monotone.resolvent(monotone.ScaledL1(1.0, 1), 0.5, [0.2])[0] == oracle


def test_yosida_examples():
    assert monotone.yosida(HALF_LINE, 0.5, [-1.0])[0] == -2.0
    assert monotone.yosida(HALF_SQUARE, 0.25, [1.0])[0] == pytest.approx(0.8, abs=1e-14)
    assert monotone.yosida(monotone.ScaledL1(1.0, 1), 0.5, [0.2])[0] == pytest.approx(0.4, abs=1e-15)


def test_minimal_section_examples():
    assert monotone.minimal_section(monotone.ScaledL1(1.0, 1), [0.0])[0] == 0.0
    assert monotone.minimal_section(UNIT, [0.5])[0] == 0.0
    assert monotone.minimal_section(UNIT, [0.0])[0] == 0.0
    assert monotone.minimal_section(UNIT, [1.5]) is None


def test_sample_graph_examples():
    alpha, beta = monotone.sample_graph(monotone.Zero(2), 20, 0)
    assert np.all(beta == 0)
    alpha, beta = monotone.sample_graph(HALF_LINE, 200, 1)
    assert np.all(alpha >= 0)
    inner = alpha[:, 0] > 0
    assert np.all(beta[inner] == 0) and np.all(beta[~inner] <= 0)
    assert 0.2 < np.mean(~inner) < 0.4 and np.any(beta[~inner] < 0)
    alpha, beta = monotone.sample_graph(HALF_SQUARE, 20, 2)
    assert np.array_equal(alpha, beta)


def test_interior_certificate_examples():
    c = monotone.interior_certificate(HALF_LINE)
    assert (c.a[0], c.c1, c.c2) == (1.0, 0.5, 0.0)
    c = monotone.interior_certificate(monotone.Zero(1))
    assert (c.a[0], c.c1, c.c2) == (0.0, 1.0, 0.0)
    c = monotone.interior_certificate(monotone.ScaledL1(1.0, 1))
    assert (c.a[0], c.c1, c.c2) == (0.0, 1.0, 1.0)


@pytest.mark.parametrize("kind", list(catalog()))
def test_certificate_ball_inside_domain(kind):
    spec = catalog()[kind]
    cert = monotone.interior_certificate(spec)
    assert monotone.certificate_holds(spec, cert)
    # c2 bounds the minimal section on the ball
    rng = np.random.default_rng(3)
    u = rng.standard_normal((200, spec.dim))
    u *= cert.c1 * rng.uniform(size=(200, 1)) / np.linalg.norm(u, axis=1, keepdims=True)
    for x in cert.a + u:
        assert np.linalg.norm(monotone.minimal_section(spec, x)) <= cert.c2 + 1e-9


# -- invariants -----------------------------------------------------------


@pytest.mark.parametrize("kind", list(catalog()))
def test_graph_pairs_are_monotone_and_exact(kind):
    spec = catalog()[kind]
    alpha, beta = monotone.sample_graph(spec, 300, 5)
    assert np.all(spec.in_domain(alpha))
    gram = np.einsum("pi,qi->pq", beta, alpha)
    pairing = np.diag(gram)[:, None] + np.diag(gram)[None, :] - gram - gram.T
    assert pairing.min() >= -1e-9 * (1 + np.abs(pairing).max())
    # beta in A(alpha) iff alpha = J_lam(alpha + lam beta)
    for lam in (0.3, 2.0):
        back = monotone.resolvent(spec, lam, alpha + lam * beta)
        assert np.abs(back - alpha).max() <= 1e-7 * (1 + np.abs(alpha).max())


@pytest.mark.parametrize("kind", list(catalog()))
def test_resolvent_fixed_point_limit(kind):
    spec = catalog()[kind]
    alpha, _ = monotone.sample_graph(spec, 10, 8)
    gaps = [np.linalg.norm(monotone.resolvent(spec, 2.0**-k, alpha) - alpha, axis=1) for k in range(9)]
    gaps = np.array(gaps)
    assert np.all(np.diff(gaps, axis=0) <= 1e-9)
    assert gaps[-1].max() <= 2.0**-8 * 20


@pytest.mark.parametrize("kind", ["IndicatorBox", "IndicatorBall"])
def test_blow_up_outside_domain(kind):
    spec = catalog()[kind]
    rng = np.random.default_rng(4)
    x = 4.0 * rng.standard_normal((40, spec.dim))
    x = x[~spec.in_domain(x)][:20]
    proj = spec.project_domain(x)
    norms = []
    for k in range(1, 11):
        n = 2**k
        xn = x + (proj - x) / n
        a = np.linalg.norm(monotone.yosida(spec, 1.0 / n, xn), axis=1)
        assert np.all(a >= n * monotone.distance_to_domain(spec, xn) * (1 - 1e-6))
        norms.append(a)
    assert np.all(np.array(norms[1:]) >= 1.8 * np.array(norms[:-1]))


def test_halfspace_projection_matches_qp():
    from scipy.optimize import minimize

    spec = catalog()["IndicatorHalfspaces"]
    rng = np.random.default_rng(6)
    for x in 3.0 * rng.standard_normal((20, 2)):
        ours = monotone.resolvent(spec, 1.0, x)
        cons = [{"type": "ineq", "fun": lambda z, a=a, b=b: b - a @ z} for a, b in zip(spec.normals, spec.offsets)]
        ref = minimize(lambda z: 0.5 * np.sum((z - x) ** 2), np.zeros(2), constraints=cons, method="SLSQP",
                       options={"ftol": 1e-14}).x
        assert np.abs(ours - ref).max() < 1e-6


def test_sum_prox_optimality():
    spec = catalog()["Sum"]
    rng = np.random.default_rng(7)
    for x in 3.0 * rng.standard_normal((20, 2)):
        z = monotone.resolvent(spec, 0.7, x)
        # x - z - lam grad q(z) must lie in the normal cone of the ball at z
        r = x - z - 0.7 * (spec.smooth.Q @ z + spec.smooth.c)
        if np.linalg.norm(z) < 1 - 1e-9:
            assert np.linalg.norm(r) < 1e-8
        else:
            assert np.linalg.norm(r - (r @ z) * z) < 1e-8 and r @ z >= -1e-8


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(list(catalog())),
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.floats(1e-3, 10),
)
def test_laws_hypothesis(kind, x, y, lam):
    spec = catalog()[kind]
    x, y = np.array(x[: spec.dim]), np.array(y[: spec.dim])
    jx, jy = monotone.resolvent(spec, lam, x), monotone.resolvent(spec, lam, y)
    ax, ay = monotone.yosida(spec, lam, x), monotone.yosida(spec, lam, y)
    gap = np.linalg.norm(x - y)
    assert np.linalg.norm(jx - jy) <= gap + 1e-9
    assert np.linalg.norm(ax - ay) <= gap / lam + 1e-9 * (1 + 1 / lam)
    assert (ax - ay) @ (x - y) >= -1e-9 * (1 + 1 / lam)


# -- serialization and errors ----------------------------------------------


@pytest.mark.parametrize("kind", list(catalog()))
def test_spec_roundtrip(kind):
    spec = catalog()[kind]
    data = json.loads(json.dumps(spec.to_dict()))
    assert monotone.spec_from_dict(data) == spec


def test_spec_errors_name_field():
    with pytest.raises(InputError) as e:
        monotone.spec_from_dict({"kind": "Nope"})
    assert e.value.field == "kind"
    with pytest.raises(InputError) as e:
        monotone.spec_from_dict({"kind": "IndicatorBall", "params": {"center": [0.0]}})
    assert e.value.field == "radius"
    with pytest.raises(InputError):
        monotone.resolvent(HALF_LINE, 0.0, [1.0])


def test_iterative_prox_reports_residual(monkeypatch):
    monkeypatch.setattr(monotone, "MAX_SWEEPS", 2)
    spec = monotone.Sum(monotone.Quadratic(np.diag([1.0, 100.0])), monotone.IndicatorBall([0.0, 0.0], 1.0))
    from svilab.errors import NumericalError

    with pytest.raises(NumericalError) as e:
        monotone.resolvent(spec, 1.0, [5.0, 3.0])
    assert e.value.residual > 0
