import pytest

from app.services.database import load_database
from app.services.distillation import DistillationEstimator, fit_slope
from app.services.errors import DistillationError

PS = [0.002, 0.005, 0.01]


@pytest.fixture(scope="module")
def estimator():
    return DistillationEstimator(load_database(), seed=0, trials=10000)


@pytest.mark.parametrize("kind", ["A", "Y"])
def test_noiseless_distiller_always_accepts(estimator, kind):
    estimate = estimator.distillation_infidelity(kind, 0.0)
    assert estimate.acceptance == pytest.approx(1.0, abs=1e-12)
    assert estimate.infidelity == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("kind", ["A", "Y"])
def test_output_error_is_cubic(estimator, kind):
    values, slope = estimator.sweep(kind, PS)
    assert all(v < p for v, p in zip(values, PS))
    assert slope == pytest.approx(3.0, abs=0.3)


def test_acceptance_drops_with_noise(estimator):
    low = estimator.distillation_infidelity("Y", 0.002).acceptance
    high = estimator.distillation_infidelity("Y", 0.01).acceptance
    assert 0 < high < low < 1


def test_duplicated_distillers_fail_together_rarely(estimator):
    values, slope = estimator.sweep("Y", PS, copies=2)
    assert slope == pytest.approx(2.0, abs=0.3)
    single = estimator.duplicate_failure_probability("Y", 0.01, 1)
    assert values[-1] == pytest.approx(single ** 2)


def test_estimates_are_deterministic_for_a_seed():
    first = DistillationEstimator(load_database(), seed=5, trials=2000).distillation_infidelity("A", 0.01)
    second = DistillationEstimator(load_database(), seed=5, trials=2000).distillation_infidelity("A", 0.01)
    assert first == second


def test_fit_slope():
    assert fit_slope([0.1, 0.2, 0.4], [0.001, 0.008, 0.064]) == pytest.approx(3.0)
    with pytest.raises(DistillationError):
        fit_slope([0.1, 0.2], [0.0, 0.1])


@pytest.mark.parametrize("kind, p, trials", [
    ("Y", 0.06, 10000),
    ("Y", -0.01, 10000),
    ("Y", 0.01, 999),
    ("B", 0.01, 10000),
])
def test_bad_parameters(estimator, kind, p, trials):
    with pytest.raises(DistillationError):
        estimator.distillation_infidelity(kind, p, trials)
