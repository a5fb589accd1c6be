import __future__
import importlib
import pkgutil

import numpy as np
import pytest

import elliptical_moments
from elliptical_moments import (
    CustomRadial,
    DomainError,
    EllipticalSpec,
    Gaussian,
    SampleMatrix,
    StudentT,
    sample,
    sample_radial,
    sample_sphere,
    synthetic_covariance,
    theoretical_theta,
)
from elliptical_moments.model import (
    check_covariance,
    excess_kurtosis,
    psd_square_root,
    radial_reconstruction,
    read_covariance_csv,
    write_covariance_csv,
)
from elliptical_moments.radial import family_from_name

banded = synthetic_covariance("banded", 6, a=0.5)
spec = EllipticalSpec(np.arange(6.0), banded, StudentT(12))


def test_theoretical_theta():
    assert theoretical_theta(Gaussian(), 10, 1) == 1.0
    assert theoretical_theta(StudentT(4.5), 10, 1) == 1.0
    # (p + 2) / p for the Gaussian
    assert theoretical_theta(Gaussian(), 10, 2) == pytest.approx(1.2)
    assert theoretical_theta(StudentT(4.5), 10, 2) == pytest.approx(1.2 * 5)
    assert spec.theta(2) == pytest.approx(theoretical_theta(StudentT(12), 6, 2))
    assert excess_kurtosis(theoretical_theta(Gaussian(), 50, 2), 50) == pytest.approx(0.0)


def test_family_from_name():
    assert family_from_name("gaussian") == Gaussian()
    assert family_from_name("student_t(4.5)") == StudentT(4.5)
    assert family_from_name("t12") == StudentT(12)
    assert str(StudentT(4.5)) == "student_t(4.5)"
    with pytest.raises(DomainError):
        family_from_name("cauchy")
    with pytest.raises(DomainError):
        StudentT(2)


def test_synthetic_covariance():
    assert banded[0, 3] == pytest.approx(0.125)
    block = synthetic_covariance("block_diag", 5, block_size=2, rho=0.8)
    assert block[0, 1] == 0.8
    assert block[1, 2] == 0.0
    assert block[4, 4] == 1.0
    assert np.all(synthetic_covariance("zero", 3) == 0)
    with pytest.raises(DomainError):
        synthetic_covariance("banded", 4, a=1.5)
    with pytest.raises(DomainError):
        synthetic_covariance("circulant", 4)


def test_covariance_checks():
    with pytest.raises(DomainError):
        check_covariance([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(DomainError):
        check_covariance([[1.0, 2.0], [2.0, 1.0]])
    # rank deficient is allowed
    singular = np.ones((3, 3))
    root = psd_square_root(singular)
    assert root @ root == pytest.approx(singular)
    assert EllipticalSpec(None, singular).sigma_sqrt.shape == (3, 3)


def test_spec_is_read_only():
    with pytest.raises(ValueError, match="read-only"):
        spec.sigma[0, 0] = 2.0
    assert spec.omega @ banded == pytest.approx(np.eye(6))
    with pytest.raises(DomainError):
        EllipticalSpec(np.zeros(3), banded)


def test_sphere_and_radial_draws():
    rng = np.random.default_rng(1)
    directions = sample_sphere(4, rng, size=1000)
    assert np.linalg.norm(directions, axis=1) == pytest.approx(np.ones(1000))
    assert sample_sphere(4, rng).shape == (4,)
    # E xi^2 = p
    draws = sample_radial(StudentT(12), 20, rng, size=20000)
    assert np.mean(draws**2) == pytest.approx(20, rel=0.05)
    assert isinstance(sample_radial(Gaussian(), 3, rng), float)


def test_sample_reconstructs_radial_variable():
    samples = sample(spec, 50, np.random.default_rng(7))
    assert samples.n == 50
    assert samples.p == 6
    # with the true parameters the quadratic form is exactly xi^2
    xi_sq = radial_reconstruction(samples, spec.mu, spec.omega)
    assert xi_sq == pytest.approx(samples.radial_sq, rel=1e-9)


def test_sample_is_seeded():
    first = sample(spec, 10, np.random.default_rng(5))
    second = sample(spec, 10, np.random.default_rng(5))
    assert np.array_equal(first.data, second.data)


def test_custom_radial():
    constant = CustomRadial(lambda p, size, rng: np.full(size, float(p)), max_order=10)
    samples = sample(EllipticalSpec(None, np.eye(3), constant), 4, np.random.default_rng(0))
    assert np.linalg.norm(samples.data, axis=1) == pytest.approx(np.full(4, np.sqrt(3)))
    with pytest.raises(DomainError):
        theoretical_theta(constant, 3, 2)


def test_csv_round_trip(tmp_path):
    samples = sample(spec, 5, np.random.default_rng(2))
    path = tmp_path / "sample.csv"
    samples.to_csv(path)
    back = SampleMatrix.read_csv(path)
    assert np.array_equal(back.data, samples.data)
    assert back.columns == ["y1", "y2", "y3", "y4", "y5", "y6"]

    write_covariance_csv(banded, tmp_path / "sigma.csv")
    assert np.array_equal(read_covariance_csv(tmp_path / "sigma.csv"), banded)
    sigma = synthetic_covariance("from_file", 6, path=tmp_path / "sigma.csv")
    assert np.array_equal(sigma, banded)


def test_sample_matrix_rejects_missing_values(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y1,y2\n1.0,\n2.0,3.0\n")
    with pytest.raises(DomainError):
        SampleMatrix.read_csv(path)
    with pytest.raises(DomainError):
        SampleMatrix([[1.0, np.inf]])


def test_modules_postpone_annotations():
    for info in pkgutil.walk_packages(elliptical_moments.__path__, "elliptical_moments."):
        if info.ispkg:
            continue
        module = importlib.import_module(info.name)
        assert getattr(module, "annotations", None) is __future__.annotations, info.name
