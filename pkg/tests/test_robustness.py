import numpy as np
import pytest

from builders import binary_model, grid
from gpcert.bnb import BnbConfig
from gpcert.bounds import Region
from gpcert.kernels import SquaredExponential
from gpcert.model import GpModel, fit_laplace_binary, fit_regression
from gpcert.robustness import (
    Status,
    adversarial_gap_curve,
    certify_classification,
    certify_regression,
    delta_metric,
    gpfgs_attack,
    interpretability_delta,
    predicted_class,
    safety_curve,
)

SE1 = SquaredExponential(1.0, [1.0])


def linear_regime_model():
    """Separable 1-D data; the decision boundary sits near 0."""
    X = np.linspace(-2, 2, 12)[:, None]
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    return fit_laplace_binary(X, y, SquaredExponential(2.0, [1.0]), "probit")


def test_point_and_small_ball_certified():
    m = linear_regime_model()
    x = np.array([1.5])
    assert certify_classification(m, x, 0.0).status is Status.CERTIFIED
    assert certify_classification(m, x, 0.1).status is Status.CERTIFIED


def test_ball_across_boundary_falsified():
    m = linear_regime_model()
    v = certify_classification(m, [0.2], 0.5)
    assert v.status is Status.FALSIFIED
    assert predicted_class(m, v.witness) != predicted_class(m, [0.2])
    assert abs(v.witness[0] - 0.2) <= 0.5 + 1e-12


def test_non_max_norm_is_noted():
    v = certify_classification(linear_regime_model(), [1.5], 0.1, norm="2")
    assert "bounding box" in v.note
    d = v.to_dict()
    assert d["status"] == "certified" and d["norm"] == "2"


def test_safety_curve_non_increasing():
    m = linear_regime_model()
    rows = safety_curve(m, [1.0], [0.4, 0.05, 0.1, 0.2], BnbConfig(eps=1e-3))
    assert [r[0] for r in rows] == [0.05, 0.1, 0.2, 0.4]
    lows = [r[1] for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(lows, lows[1:]))
    for g, lo, hi in rows:
        p = m.class_prob(np.linspace(1 - g, 1 + g, 2001)[:, None])[:, 1].min()
        assert lo <= p + 1e-9 and lo <= hi


def test_regression_zero_targets_certified():
    m = fit_regression([[0.0], [1.0]], [0.0, 0.0], SE1, 0.1)
    assert certify_regression(m, [0.5], 1.0, 0.01).status is Status.CERTIFIED


def test_regression_zero_tolerance_falsified():
    m = fit_regression([[0.0], [1.0]], [1.0, -1.0], SE1, 0.1)
    v = certify_regression(m, [0.5], 0.2, 0.0)
    assert v.status is Status.FALSIFIED
    mw = m.mean(v.witness[None, :])[0]
    assert abs(mw - m.mean(np.array([[0.5]]))[0]) > 0


def test_delta_metric():
    rng = np.random.default_rng(0)
    m = binary_model(rng, d=1)
    x = np.array([0.1])
    cfg = BnbConfig(eps=1e-3)
    vals = []
    for g in (0.05, 0.2, 0.5):
        dl = delta_metric(m, x, g, cfg)
        p = m.class_prob(grid(Region.ball(x, g)))[:, 1]
        assert 0.0 <= dl <= 1.0
        assert dl >= p.max() - p.min() - 1e-9
        assert dl <= p.max() - p.min() + 2e-3 + 1e-9
        vals.append(dl)
    assert vals[0] <= vals[1] + 2e-3 and vals[1] <= vals[2] + 2e-3
    with pytest.raises(ValueError):
        delta_metric(fit_regression([[0.0]], [1.0], SE1, 0.1), x, 0.1)


def test_interpretability_symmetric_dimension_is_flat():
    # kernel depends on dim 0 only, and the data are symmetric in dim 1
    k = SquaredExponential(1.0, [2.0, 1e-6])
    X = np.array([[-1.0, 0.0], [1.0, 0.0]])
    m = fit_laplace_binary(X, [-1.0, 1.0], k, "probit")
    eps = 1e-3
    rep = interpretability_delta(m, [0.2, 0.0], 0.2, config=BnbConfig(eps=eps))
    assert abs(rep.values[1]) <= 2 * eps
    assert rep.values[0] > 0
    assert np.all(rep.lower <= rep.values + 1e-12) and np.all(rep.values <= rep.upper + 1e-12)
    assert np.all(np.abs(rep.lower) <= 2) and np.all(np.abs(rep.upper) <= 2)


def test_interpretability_matches_finite_difference():
    m = linear_regime_model()
    x, g = np.array([0.3]), 0.01
    rep = interpretability_delta(m, x, g, config=BnbConfig(eps=1e-6))
    p = lambda z: m.class_prob(np.array([[z]]))[0, 1]
    # p increases here: the max terms give p(x+g) - p(x), the min terms p(x) - p(x-g)
    fd = p(x[0] + g) - p(x[0] - g)
    assert rep.values[0] == pytest.approx(fd, rel=0.1)
    assert rep.values[0] == pytest.approx(fd, abs=4e-6)


def test_gpfgs_zero_budget():
    m = linear_regime_model()
    x, ok = gpfgs_attack(m, [0.3], 0.0)
    assert not ok and x.tolist() == [0.3]


def test_gpfgs_flips_in_linear_regime():
    m = linear_regime_model()
    x, ok = gpfgs_attack(m, [0.3], 0.6)
    assert ok and x[0] < 0.3 and predicted_class(m, x) == 0


def test_attack_never_beats_a_certificate():
    rng = np.random.default_rng(1)
    for _ in range(10):
        m = binary_model(rng, d=2)
        x = rng.uniform(-1, 1, 2)
        g = rng.uniform(0.05, 0.5)
        v = certify_classification(m, x, g, BnbConfig(eps=1e-3))
        _, ok = gpfgs_attack(m, x, g)
        if v.status is Status.CERTIFIED:
            assert not ok


def test_adversarial_gap_curve():
    m = linear_regime_model()
    x = np.array([1.0])
    rows = adversarial_gap_curve(m, x, [0], 0.3, config=BnbConfig(eps=1e-3))
    p = m.class_prob(x[None, :])[0]
    assert rows[0][0] == 0 and rows[0][1] == pytest.approx(p[1] - p[0])
    assert rows[1][1] <= rows[0][1] + 1e-12
    big = adversarial_gap_curve(m, x, [0], 5.0, config=BnbConfig(eps=1e-3))
    assert big[-1][1] <= 0


def test_multiclass_gap_curve_rows():
    ks = [SquaredExponential(1.0, [1.0]) for _ in range(3)]
    X = np.array([[-1.0], [0.0], [1.0]])
    t = np.array([[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]])
    m = GpModel(ks, X, np.zeros((9, 9)), t, "multiclass", "softmax")
    rows = adversarial_gap_curve(m, np.array([0.0]), [0], 0.1, config=BnbConfig(eps=0.05, max_iter=20))
    lows = [r[1] for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(lows, lows[1:]))
    assert all(r[1] <= r[2] for r in rows)
