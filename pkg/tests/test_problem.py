import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fwlearn import benchmark
from fwlearn.problem import (
    Dataset,
    DomainError,
    EmpiricalRisk,
    GaussianBump,
    MichaelisMenten,
    QuadraticObjective,
    fd_jacobian,
    grad_objective,
    grad_target_phi,
    hess_objective,
    objective,
    predict,
    target_phi,
)

from oracles import RATE_DATA, least_squares_optimum

MM = MichaelisMenten()
OPT, OPT_MSE = least_squares_optimum()


@pytest.fixture(scope="module")
def risk():
    return EmpiricalRisk(MM, Dataset.rate_data())


def fd_grad(fun, theta):
    return fd_jacobian(lambda t: np.asarray(fun(t))[..., None], theta)[..., 0, :]


def test_rate_data_matches_reference_values():
    data = Dataset.rate_data()
    np.testing.assert_array_equal(np.column_stack([data.x, data.y]), RATE_DATA)
    assert np.all(data.x > 0)


def test_predict_examples():
    assert predict(MM, [3.9109, 0.0179], np.array([0.3330]))[0] == pytest.approx(3.9109 * 0.3330 / 0.3509)
    assert predict(MM, [3.9109, 0.0179], np.array([0.3330]))[0] == pytest.approx(3.7114, abs=1e-4)
    assert predict(MM, [0.0, 0.5], np.array([0.1, 2.0])).tolist() == [0.0, 0.0]
    assert predict(MM, [3.9, 0.02], np.array([0.0]))[0] == 0.0


def test_predict_guard_band():
    with pytest.raises(DomainError):
        MM.predict([1.0, -0.0052], RATE_DATA[:, 0])
    with pytest.raises(DomainError):
        MM.predict([1.0, 0.0], np.array([0.0]))


def test_objective_examples(risk):
    assert objective(QuadraticObjective([0, 0]), [1.0, 0.0]) == 0.5
    assert objective(risk, OPT) == pytest.approx(OPT_MSE, rel=1e-12)
    assert objective(risk, [0.0, 1.0]) == pytest.approx(np.mean(RATE_DATA[:, 1] ** 2), rel=1e-14)


def test_gradient_examples(risk):
    np.testing.assert_array_equal(grad_objective(QuadraticObjective([0, 0]), [1.0, 2.0]), [1.0, 2.0])
    assert np.linalg.norm(grad_objective(risk, OPT)) <= 1e-8
    theta = np.array([3.9, 0.02])
    g = grad_objective(risk, theta)
    assert np.linalg.norm(g - fd_grad(risk.value, theta)) <= 1e-5 * np.linalg.norm(g)


def test_hessian_examples(risk):
    np.testing.assert_allclose(hess_objective(QuadraticObjective([0.3, -1]), [2.0, 5.0]), np.eye(2), atol=1e-9)
    H = hess_objective(risk, OPT)
    assert np.all(np.linalg.eigvalsh(0.5 * (H + H.T)) > 0)
    rng = np.random.default_rng(0)
    pts = OPT + rng.normal(scale=[0.05, 0.001], size=(10, 2))
    for H in hess_objective(risk, pts):
        assert np.abs(H - H.T).max() <= 1e-6 * (1 + np.abs(H).max())


def test_target_phi_examples(risk):
    test = Dataset.rate_data("test")
    assert target_phi(test, MM, OPT) == objective(risk, OPT)
    assert target_phi(test, MM, benchmark.THETA_STAR) <= 2e-2
    theta = np.array([2.5, 0.04])
    perfect = test.with_outputs(MM.predict(theta, test.x))
    assert target_phi(perfect, MM, theta) == 0.0
    np.testing.assert_array_equal(grad_target_phi(perfect, MM, theta), [0.0, 0.0])
    assert np.linalg.norm(grad_target_phi(test, MM, OPT)) <= 1e-8
    theta = np.array([4.4, 0.03])
    g = grad_target_phi(test, MM, theta)
    fd = fd_grad(lambda t: target_phi(test, MM, t), theta)
    assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(g)


def test_regularization_coercivity():
    reg = EmpiricalRisk(MM, Dataset.rate_data(), reg_weight=0.01)
    ray = np.array([0.6, 0.8])
    prev = 0.0
    for r in (1e2, 1e4, 1e6):
        J = reg.value(r * ray)
        assert J >= 0.01 * r**2
        assert J / r > prev
        prev = J / r
    g = reg.grad(ray)
    assert np.linalg.norm(g - fd_grad(reg.value, ray)) <= 1e-5 * np.linalg.norm(g)


def test_batched_evaluation_matches_rowwise(risk):
    pts = np.array([[3.0, 0.1], [4.0, 0.02], [3.9, 0.0179]])
    np.testing.assert_array_equal(risk.value(pts), [risk.value(p) for p in pts])
    np.testing.assert_allclose(risk.grad(pts), [risk.grad(p) for p in pts], rtol=1e-15)


def test_dataset_csv_roundtrip(tmp_path):
    data = Dataset.rate_data()
    data.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.x, data.x)
    np.testing.assert_array_equal(back.y, data.y)


@pytest.mark.parametrize("text", ["a,b\n1,2\n", "x,y\n1,zz\n", "x,y\n", "x,y\n1,nan\n"])
def test_dataset_csv_rejects_malformed(tmp_path, text):
    (tmp_path / "d.csv").write_text(text)
    with pytest.raises(ValueError):
        Dataset.from_csv(tmp_path / "d.csv")


def test_bump_radius():
    bump = GaussianBump([0.0, 0.0], 0.5)
    R = bump.radius(0.3)
    assert bump.value([R, 0.0]) == pytest.approx(0.3)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 6.0), st.floats(0.002, 0.2))
def test_nonnegative(a, b):
    risk = EmpiricalRisk(MM, Dataset.rate_data())
    assert risk.value([a, b]) >= 0
