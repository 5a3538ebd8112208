import math

import numpy as np
import pytest

from src.lagranflow.errors import InvalidArgumentError
from src.lagranflow.spectral_core import (
    TWO_PI,
    FourierField,
    Mode,
    VectorTrigExpansion,
    enumerate_modes,
    eval_field,
    eval_field_jet,
    evaluate_on_grid,
    grid_points,
    leray_project,
    leray_project_grid,
    mode_table,
    nonlinear_term,
    sobolev_norm,
    translate_field,
)


def _random_field(cutoff: int, seed: int) -> FourierField:
    rng = np.random.default_rng(seed)
    return FourierField(cutoff, rng.standard_normal(mode_table(cutoff).size))


def _grid_inner(first: np.ndarray, second: np.ndarray) -> float:
    size = first.shape[-1]
    return float(np.sum(first * second) * (TWO_PI / size) ** 2)


def test_enumerate_modes_cutoff_one() -> None:
    """Тест: при N=1 ровно 8 мод в каноническом порядке."""
    expected_count = 8

    modes = enumerate_modes(1)

    assert len(modes) == expected_count
    assert modes[0] == Mode(-1, 0)
    assert [mode.l1 for mode in modes] == sorted(mode.l1 for mode in modes)
    assert enumerate_modes(1) == modes


def test_enumerate_modes_l1_filter() -> None:
    """Тест: при N=2 мод с |j|₁ ≤ 2 ровно 12."""
    expected_count = 12

    modes = [mode for mode in enumerate_modes(2) if mode.l1 <= 2]  # noqa: PLR2004

    assert len(modes) == expected_count


@pytest.mark.parametrize('cutoff', [0, -3])
def test_enumerate_modes_invalid_cutoff(cutoff: int) -> None:
    """Тест: отсечка меньше 1 отклоняется."""
    with pytest.raises(InvalidArgumentError):
        enumerate_modes(cutoff)


def test_field_rejects_wrong_length() -> None:
    """Тест: длина вектора коэффициентов должна совпадать с числом мод."""
    with pytest.raises(InvalidArgumentError, match='Ожидалось 8 коэффициентов'):
        FourierField(1, np.zeros(5))


def test_field_coefficients_are_read_only() -> None:
    """Тест: коэффициенты поля нельзя изменить на месте."""
    u = FourierField.zeros(2)

    with pytest.raises(ValueError):
        u.coeffs[0] = 1.0


def test_coefficient_outside_cutoff_is_zero() -> None:
    """Тест: коэффициент вне отсечки ровно 0."""
    u = FourierField.from_modes(2, {(1, 0): 3.0, (5, 5): 7.0})

    assert u.coefficient((1, 0)) == 3.0  # noqa: PLR2004
    assert u.coefficient((5, 5)) == 0.0
    assert u.with_cutoff(4).coefficient((1, 0)) == 3.0  # noqa: PLR2004


def test_field_arithmetic_requires_same_cutoff() -> None:
    """Тест: складывать можно только поля с одной отсечкой."""
    with pytest.raises(InvalidArgumentError, match='Отсечки полей не совпадают'):
        _ = FourierField.zeros(1) + FourierField.zeros(2)


def test_eval_single_mode_at_origin() -> None:
    """Тест: e_(1,0)(0) = (0, 1/(√2π))."""
    u = FourierField.from_modes(2, {(1, 0): 1.0})

    velocity, gradient = eval_field(u, np.zeros(2))

    np.testing.assert_allclose(velocity, [0.0, 1.0 / (math.sqrt(2.0) * math.pi)], atol=1e-15)
    np.testing.assert_allclose(velocity[1], 0.22508, atol=1e-5)
    np.testing.assert_allclose(gradient, np.zeros((2, 2)), atol=1e-15)


def test_eval_zero_field() -> None:
    """Тест: нулевое поле дает нулевые скорость и якобиан."""
    velocity, gradient = eval_field(FourierField.zeros(3), np.array([0.4, 2.2]))

    assert np.all(velocity == 0.0)
    assert np.all(gradient == 0.0)


def test_gradient_matches_finite_differences() -> None:
    """Тест: якобиан совпадает с центральными разностями скорости."""
    u = _random_field(3, seed=1)
    x = np.array([0.7, 4.1])
    step = 1e-6

    _, gradient = eval_field(u, x)
    for axis in range(2):
        shift = np.zeros(2)
        shift[axis] = step
        forward, _ = eval_field(u, x + shift)
        backward, _ = eval_field(u, x - shift)
        np.testing.assert_allclose(gradient[:, axis], (forward - backward) / (2 * step), rtol=1e-7, atol=1e-8)


def test_hessian_matches_finite_differences() -> None:
    """Тест: гессиан совпадает с разностями якобиана."""
    u = _random_field(2, seed=2)
    x = np.array([1.3, 5.0])
    step = 1e-6

    _, _, hessian = eval_field_jet(u, x)
    for axis in range(2):
        shift = np.zeros(2)
        shift[axis] = step
        _, forward = eval_field(u, x + shift)
        _, backward = eval_field(u, x - shift)
        np.testing.assert_allclose(hessian[:, :, axis], (forward - backward) / (2 * step), rtol=1e-6, atol=1e-7)


def test_basis_orthonormality() -> None:
    """Тест: квадратура на сетке 64² дает δ_jk для |j|_∞, |k|_∞ ≤ 4."""
    cutoff = 4
    size = 64
    count = mode_table(cutoff).size
    samples = [evaluate_on_grid(FourierField(cutoff, np.eye(count)[index]), size) for index in range(count)]

    gram = np.array([[_grid_inner(first, second) for second in samples] for first in samples])

    np.testing.assert_allclose(gram, np.eye(count), atol=1e-12)


def test_sobolev_norm_single_modes() -> None:
    """Тест: ‖e_j‖_0 = 1 и ‖e_(2,1)‖_1 = √5."""
    u = FourierField.from_modes(3, {(2, 1): 1.0})

    assert sobolev_norm(u, 0) == pytest.approx(1.0, abs=1e-15)
    assert sobolev_norm(u, 1) == pytest.approx(math.sqrt(5.0), abs=1e-12)
    assert sobolev_norm(FourierField.zeros(3), 2) == 0.0


def test_sobolev_norm_negative_order() -> None:
    """Тест: отрицательный порядок нормы отклоняется."""
    with pytest.raises(InvalidArgumentError):
        sobolev_norm(FourierField.zeros(1), -1)


@pytest.mark.parametrize('order', [0, 1, 2, 3])
def test_sobolev_norm_matches_quadrature(order: int) -> None:
    """Тест: ‖u‖_s² совпадает с квадратурой (u, (−Δ)^s u)."""
    cutoff = 3
    size = 16
    u = _random_field(cutoff, seed=order)
    powered = FourierField(cutoff, u.coeffs * mode_table(cutoff).norms_sq**order)

    quadrature = _grid_inner(evaluate_on_grid(u, size), evaluate_on_grid(powered, size))

    assert sobolev_norm(u, order) ** 2 == pytest.approx(quadrature, rel=1e-8)


def test_leray_identity_on_divergence_free() -> None:
    """Тест: проектор не меняет поле, собранное из e_j."""
    u = _random_field(3, seed=3)

    projected = leray_project(VectorTrigExpansion.from_field(u), cutoff=3)

    np.testing.assert_allclose(projected.coeffs, u.coeffs, atol=1e-13)


def test_leray_annihilates_gradients() -> None:
    """Тест: градиент скалярного многочлена проектируется в ноль."""
    gradient = VectorTrigExpansion.gradient_of_scalar((2, -1), 0.7, -1.3) + VectorTrigExpansion.gradient_of_scalar(
        (1, 1), 2.0, 0.5
    )

    projected = leray_project(gradient, cutoff=2)

    np.testing.assert_allclose(projected.coeffs, 0.0, atol=1e-15)


def test_leray_random_expansion_is_divergence_free_and_idempotent() -> None:
    """Тест: образ проектора бездивергентен, повторная проекция ничего не меняет."""
    rng = np.random.default_rng(4)
    terms = {(mode.j1, mode.j2): rng.standard_normal((2, 2)) for mode in enumerate_modes(2) if mode.is_cosine}
    f = VectorTrigExpansion.from_terms(terms, constant=np.array([1.0, -2.0]))

    projected = leray_project(f, cutoff=2)
    again = leray_project(VectorTrigExpansion.from_field(projected), cutoff=2)

    for key, block in VectorTrigExpansion.from_field(projected).terms.items():
        np.testing.assert_allclose(block @ np.asarray(key, dtype=np.float64), 0.0, atol=1e-14)
    np.testing.assert_allclose(again.coeffs, projected.coeffs, atol=1e-14)


def test_leray_project_grid_recovers_field() -> None:
    """Тест: сеточный проектор восстанавливает коэффициенты поля."""
    cutoff = 3
    u = _random_field(cutoff, seed=5)

    coeffs = leray_project_grid(evaluate_on_grid(u, 2 * cutoff + 2), cutoff)

    np.testing.assert_allclose(coeffs, u.coeffs, atol=1e-12)


def test_leray_project_grid_too_coarse() -> None:
    """Тест: сетка, не различающая моды, отклоняется."""
    with pytest.raises(InvalidArgumentError, match='не различает'):
        leray_project_grid(np.zeros((2, 4, 4)), 2)


def test_nonlinear_single_shear_mode_vanishes() -> None:
    """Тест: одиночная сдвиговая мода не переносит саму себя."""
    u = FourierField.from_modes(3, {(1, 0): 2.5})

    np.testing.assert_allclose(nonlinear_term(u).coeffs, 0.0, atol=1e-15)


def test_nonlinear_matches_grid_oracle() -> None:
    """Тест: свертка по парам совпадает с сеточной адвекцией без алиасинга."""
    cutoff = 2
    size = 4 * cutoff + 2
    u = FourierField.from_modes(cutoff, {(1, 0): 1.0, (1, 1): 0.5})
    points = grid_points(size)

    advection = np.zeros((2, size, size))
    for first in range(size):
        for second in range(size):
            velocity, gradient = eval_field(u, points[first, second])
            advection[:, first, second] = gradient @ velocity

    oracle = leray_project_grid(advection, cutoff)

    np.testing.assert_allclose(nonlinear_term(u).coeffs, oracle, atol=1e-12)
    assert np.abs(oracle).max() > 1e-3  # noqa: PLR2004


def test_nonlinear_energy_flux_vanishes() -> None:
    """Тест: (B_N(u), u) = 0 для случайных полей."""
    for seed in range(100):
        u = _random_field(3, seed=seed)

        assert float(nonlinear_term(u).coeffs @ u.coeffs) == pytest.approx(0.0, abs=1e-11)


def test_translate_field() -> None:
    """Тест: сдвинутое поле в точке x равно исходному в x − c."""
    u = _random_field(2, seed=6)
    shift = np.array([0.9, -2.4])
    x = np.array([3.1, 0.2])

    translated, _ = eval_field(translate_field(u, shift), x)
    original, _ = eval_field(u, x - shift)

    np.testing.assert_allclose(translated, original, atol=1e-13)
