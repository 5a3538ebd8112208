"""Спектральное ядро: бездивергентные поля на торе T² = [0, 2π)².

Поле хранится вещественными коэффициентами в L²-нормированном тригонометрическом
базисе e_j(x) = E_j⁻¹ j⊥ cos⟨j, x⟩ (если j₁ > 0 или j₁ = 0, j₂ > 0) либо
E_j⁻¹ j⊥ sin⟨j, x⟩ (иначе), где j⊥ = (−j₂, j₁), E_j = √2·π·|j|.

Внутри модуля используется комплексное представление: коэффициент при e^{i⟨k,x⟩}
равен s_k·k⊥, причем s_{−k} = −conj(s_k). Нелинейность считается точной сверткой
по парам мод без алиасинга.

Классы:
    Mode: Волновой вектор j ∈ Z² без нуля.
    ModeTable: Кэшируемые массивы мод и таблицы свертки для заданной отсечки.
    FourierField: Поле скоростей с квадратной отсечкой |j|_∞ ≤ N.
    VectorTrigExpansion: Произвольное (не обязательно бездивергентное) векторное разложение.

Функции:
    enumerate_modes: Канонический список мод.
    eval_field / eval_field_jet: Значение поля, якобиан и гессиан в точке.
    evaluation_operators: Те же значения как линейные операторы на коэффициентах.
    sobolev_norm: Норма ‖u‖_s.
    leray_project / leray_project_grid: Проектор Лерэ.
    nonlinear_term / bilinear_term: B_N(u) и B_N(u, v).
    translate_field: Сдвиг поля на вектор тора.

Пример использования:
    >>> u = FourierField.from_modes(4, {Mode(1, 0): 1.0, Mode(1, 1): 0.5})
    >>> velocity, gradient = eval_field(u, np.array([0.3, 1.2]))
    >>> sobolev_norm(u, 1)
"""

import functools
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy import sparse

from src.lagranflow.errors import InvalidArgumentError

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import NDArray


TWO_PI = 2.0 * math.pi
BASIS_SCALE = math.sqrt(2.0) * math.pi


class Mode(NamedTuple):
    """Волновой вектор j = (j₁, j₂) ≠ 0."""

    j1: int
    j2: int

    @property
    def l1(self) -> int:
        """Норма |j|₁."""
        return abs(self.j1) + abs(self.j2)

    @property
    def linf(self) -> int:
        """Норма |j|_∞."""
        return max(abs(self.j1), abs(self.j2))

    @property
    def norm(self) -> float:
        """Евклидова норма |j|."""
        return math.hypot(self.j1, self.j2)

    @property
    def perp(self) -> tuple[int, int]:
        """Вектор j⊥ = (−j₂, j₁)."""
        return -self.j2, self.j1

    @property
    def is_cosine(self) -> bool:
        """Использует ли базисная функция косинус."""
        return self.j1 > 0 or (self.j1 == 0 and self.j2 > 0)

    def canonical_key(self) -> tuple[int, int, int]:
        """Ключ канонического порядка (|j|₁, j₁, j₂)."""
        return self.l1, self.j1, self.j2


def enumerate_modes(cutoff: int) -> tuple[Mode, ...]:
    """Возвращает все j ∈ Z² без нуля с |j|_∞ ≤ N в каноническом порядке.

    Args:
        cutoff: Отсечка N ≥ 1.

    Returns:
        tuple[Mode, ...]: Моды, упорядоченные по (|j|₁, j₁, j₂).

    Raises:
        InvalidArgumentError: Если N < 1.
    """
    if not isinstance(cutoff, int) or cutoff < 1:
        raise InvalidArgumentError(f'Отсечка должна быть целым числом ≥ 1: {cutoff}')
    return _enumerate_modes(cutoff)


@functools.cache
def _enumerate_modes(cutoff: int) -> tuple[Mode, ...]:
    modes = [
        Mode(j1, j2)
        for j1 in range(-cutoff, cutoff + 1)
        for j2 in range(-cutoff, cutoff + 1)
        if (j1, j2) != (0, 0)
    ]
    return tuple(sorted(modes, key=Mode.canonical_key))


@dataclass(frozen=True, eq=False)
class ModeTable:
    """Массивы мод для отсечки N и таблица свертки нелинейности.

    Attributes:
        cutoff: Отсечка N.
        vectors: Целые волновые векторы, форма (M, 2).
        perps: Векторы j⊥, форма (M, 2).
        norms_sq: |j|², форма (M,).
        scales: E_j = √2·π·|j|.
        cosine: Маска косинусных мод.
        positive: Индексы мод положительной полуплоскости (они же косинусные).
        partner: Индекс моды −j для каждой моды.
        pair_left, pair_right: Индексы пар (p, q) с p + q в положительной полуплоскости.
        scatter: Разреженная матрица (K, P), суммирующая вклады пар по целевым модам.
    """

    cutoff: int
    vectors: 'NDArray[np.int64]'
    perps: 'NDArray[np.int64]'
    norms_sq: 'NDArray[np.float64]'
    scales: 'NDArray[np.float64]'
    cosine: 'NDArray[np.bool_]'
    positive: 'NDArray[np.int64]'
    partner: 'NDArray[np.int64]'
    pair_left: 'NDArray[np.int64]'
    pair_right: 'NDArray[np.int64]'
    scatter: 'sparse.csr_matrix'
    index: 'Mapping[Mode, int]' = field(repr=False)

    @property
    def size(self) -> int:
        """Число мод M."""
        return int(self.vectors.shape[0])


@functools.cache
def mode_table(cutoff: int) -> ModeTable:
    """Строит (и кэширует) таблицу мод и свертки для отсечки N."""
    modes = enumerate_modes(cutoff)
    vectors = np.array(modes, dtype=np.int64)
    perps = np.stack([-vectors[:, 1], vectors[:, 0]], axis=1)
    norms_sq = (vectors**2).sum(axis=1).astype(np.float64)
    scales = BASIS_SCALE * np.sqrt(norms_sq)
    cosine = np.array([mode.is_cosine for mode in modes], dtype=np.bool_)
    index = {mode: position for position, mode in enumerate(modes)}
    partner = np.array([index[Mode(-mode.j1, -mode.j2)] for mode in modes], dtype=np.int64)
    positive = np.flatnonzero(cosine)

    # Позиция целевой моды в строках scatter, -1 вне положительной полуплоскости.
    width = 4 * cutoff + 1
    target_row = np.full((width, width), -1, dtype=np.int64)
    for row, position in enumerate(positive):
        k1, k2 = vectors[position]
        target_row[k1 + 2 * cutoff, k2 + 2 * cutoff] = row

    left, right = np.meshgrid(np.arange(len(modes)), np.arange(len(modes)), indexing='ij')
    left = left.ravel()
    right = right.ravel()
    p = vectors[left]
    q = vectors[right]
    k = p + q
    rows = target_row[k[:, 0] + 2 * cutoff, k[:, 1] + 2 * cutoff]
    cross = p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]
    alignment = (q * k).sum(axis=1)
    weights = np.zeros(len(rows), dtype=np.float64)
    valid = rows >= 0
    weights[valid] = cross[valid] * alignment[valid] / (k[valid] ** 2).sum(axis=1)
    keep = valid & (weights != 0.0)

    scatter = sparse.csr_matrix(
        (weights[keep], (rows[keep], np.arange(int(keep.sum())))),
        shape=(len(positive), int(keep.sum())),
    )

    return ModeTable(
        cutoff=cutoff,
        vectors=vectors,
        perps=perps,
        norms_sq=norms_sq,
        scales=scales,
        cosine=cosine,
        positive=positive,
        partner=partner,
        pair_left=left[keep],
        pair_right=right[keep],
        scatter=scatter,
        index=index,
    )


@functools.cache
def embedding(source: int, target: int) -> tuple['NDArray[np.int64]', 'NDArray[np.int64]']:
    """Пары позиций (в источнике, в приемнике) для мод, общих двум отсечкам."""
    target_index = mode_table(target).index
    pairs = [
        (position, target_index[mode])
        for position, mode in enumerate(enumerate_modes(source))
        if mode in target_index
    ]
    source_positions = np.array([pair[0] for pair in pairs], dtype=np.int64)
    target_positions = np.array([pair[1] for pair in pairs], dtype=np.int64)
    return source_positions, target_positions


@dataclass(frozen=True, eq=False)
class FourierField:
    """Бездивергентное поле со средним ноль и квадратной отсечкой |j|_∞ ≤ N."""

    cutoff: int
    coeffs: 'NDArray[np.float64]'

    def __post_init__(self) -> None:
        """Проверяет согласованность отсечки и длины вектора коэффициентов."""
        table = mode_table(self.cutoff)
        values = np.array(self.coeffs, dtype=np.float64).reshape(-1)
        if values.shape[0] != table.size:
            raise InvalidArgumentError(
                f'Ожидалось {table.size} коэффициентов для отсечки {self.cutoff}, получено {values.shape[0]}'
            )
        values.setflags(write=False)
        object.__setattr__(self, 'coeffs', values)

    @classmethod
    def zeros(cls, cutoff: int) -> 'FourierField':
        """Нулевое поле."""
        return cls(cutoff, np.zeros(mode_table(cutoff).size))

    @classmethod
    def from_modes(cls, cutoff: int, values: 'Mapping[Mode | tuple[int, int], float]') -> 'FourierField':
        """Собирает поле из словаря {мода: коэффициент}; моды вне отсечки отбрасываются."""
        table = mode_table(cutoff)
        coeffs = np.zeros(table.size)
        for key, value in values.items():
            position = table.index.get(Mode(*key))
            if position is not None:
                coeffs[position] = value
        return cls(cutoff, coeffs)

    @property
    def modes(self) -> tuple[Mode, ...]:
        """Моды в каноническом порядке."""
        return enumerate_modes(self.cutoff)

    def coefficient(self, mode: 'Mode | tuple[int, int]') -> float:
        """Коэффициент u_j; вне отсечки ровно 0."""
        position = mode_table(self.cutoff).index.get(Mode(*mode))
        return 0.0 if position is None else float(self.coeffs[position])

    def with_cutoff(self, cutoff: int) -> 'FourierField':
        """Переносит коэффициенты на другую отсечку (обрезая или дополняя нулями)."""
        if cutoff == self.cutoff:
            return self
        return FourierField.from_modes(cutoff, dict(zip(self.modes, self.coeffs.tolist(), strict=True)))

    def __add__(self, other: 'FourierField') -> 'FourierField':
        """Сумма полей с одинаковой отсечкой."""
        _require_same_cutoff(self, other)
        return FourierField(self.cutoff, self.coeffs + other.coeffs)

    def __sub__(self, other: 'FourierField') -> 'FourierField':
        """Разность полей с одинаковой отсечкой."""
        _require_same_cutoff(self, other)
        return FourierField(self.cutoff, self.coeffs - other.coeffs)

    def __mul__(self, factor: float) -> 'FourierField':
        """Умножение на число."""
        return FourierField(self.cutoff, self.coeffs * factor)

    __rmul__ = __mul__

    def __neg__(self) -> 'FourierField':
        """Противоположное поле."""
        return FourierField(self.cutoff, -self.coeffs)


def _require_same_cutoff(first: FourierField, second: FourierField) -> None:
    if first.cutoff != second.cutoff:
        raise InvalidArgumentError(f'Отсечки полей не совпадают: {first.cutoff} и {second.cutoff}')


def _expand(vector: 'NDArray[np.float64]', like: 'NDArray[np.generic]') -> 'NDArray[np.float64]':
    """Добавляет оси справа, чтобы вектор по модам транслировался на столбцы."""
    return vector.reshape(vector.shape + (1,) * (like.ndim - 1))


def to_helical(table: ModeTable, coeffs: 'NDArray[np.float64]') -> 'NDArray[np.complex128]':
    """Переводит вещественные коэффициенты (M, ...) в комплексные s_k (M, ...)."""
    positive = table.positive
    negative = table.partner[positive]
    helical = np.empty(coeffs.shape, dtype=np.complex128)
    scale = _expand(2.0 * table.scales[positive], coeffs)
    helical[positive] = (coeffs[positive] - 1j * coeffs[negative]) / scale
    helical[negative] = -np.conj(helical[positive])
    return helical


def from_helical(table: ModeTable, projected: 'NDArray[np.complex128]') -> 'NDArray[np.float64]':
    """Переводит скаляры t_k положительной полуплоскости (K, ...) в вещественные коэффициенты."""
    positive = table.positive
    negative = table.partner[positive]
    coeffs = np.empty((table.size,) + projected.shape[1:], dtype=np.float64)
    scale = _expand(2.0 * table.scales[positive], projected)
    coeffs[positive] = scale * projected.real
    coeffs[negative] = -scale * projected.imag
    return coeffs


def bilinear_coeffs(
    table: ModeTable, left: 'NDArray[np.float64]', right: 'NDArray[np.float64]'
) -> 'NDArray[np.float64]':
    """Коэффициенты P_N Π(⟨u,∇⟩v) для массивов коэффициентов формы (M,) или (M, C)."""
    helical_left = to_helical(table, left)
    helical_right = to_helical(table, right)
    a = helical_left[table.pair_left]
    b = helical_right[table.pair_right]
    if a.ndim < b.ndim:
        a = a.reshape(a.shape + (1,) * (b.ndim - a.ndim))
    elif b.ndim < a.ndim:
        b = b.reshape(b.shape + (1,) * (a.ndim - b.ndim))
    projected = 1j * (table.scatter @ (a * b))
    return from_helical(table, np.asarray(projected))


def bilinear_term(u: FourierField, v: FourierField) -> FourierField:
    """Возвращает B_N(u, v) = P_N Π(⟨u,∇⟩v).

    Args:
        u: Переносящее поле.
        v: Переносимое поле (та же отсечка).

    Returns:
        FourierField: Бездивергентная часть адвекции, обрезанная до |j|_∞ ≤ N.
    """
    _require_same_cutoff(u, v)
    table = mode_table(u.cutoff)
    return FourierField(u.cutoff, bilinear_coeffs(table, u.coeffs, v.coeffs))


def nonlinear_term(u: FourierField) -> FourierField:
    """Возвращает B_N(u) = P_N Π(⟨u,∇⟩u) точной сверткой по парам мод."""
    return bilinear_term(u, u)


def _phases(
    table: ModeTable, points: 'NDArray[np.float64]'
) -> tuple['NDArray[np.float64]', 'NDArray[np.float64]', 'NDArray[np.float64]']:
    """Базисная фаза и две ее производные по аргументу ⟨j,x⟩ для точек (..., 2)."""
    angle = points @ table.vectors.T.astype(np.float64)
    cos_angle = np.cos(angle)
    sin_angle = np.sin(angle)
    phase = np.where(table.cosine, cos_angle, sin_angle)
    first = np.where(table.cosine, -sin_angle, cos_angle)
    return phase, first, -phase


def eval_field(u: FourierField, x: 'NDArray[np.float64]') -> tuple['NDArray[np.float64]', 'NDArray[np.float64]']:
    """Значение поля и его пространственный якобиан в точке.

    Args:
        u: Поле.
        x: Точка тора (берется по модулю 2π).

    Returns:
        tuple: Скорость (2,) и матрица G[i, k] = ∂v_i/∂x_k (2, 2).
    """
    velocity, gradient, _ = eval_field_jet(u, x)
    return velocity, gradient


def eval_field_jet(
    u: FourierField, x: 'NDArray[np.float64]'
) -> tuple['NDArray[np.float64]', 'NDArray[np.float64]', 'NDArray[np.float64]']:
    """Скорость, якобиан и гессиан H[i, k, l] = ∂_k ∂_l v_i в точке."""
    table = mode_table(u.cutoff)
    point = np.mod(np.asarray(x, dtype=np.float64), TWO_PI)
    phase, first, second = _phases(table, point)
    amplitude = u.coeffs / table.scales
    perps = table.perps.astype(np.float64)
    vectors = table.vectors.astype(np.float64)
    velocity = (amplitude * phase) @ perps
    gradient = np.einsum('m,mi,mk->ik', amplitude * first, perps, vectors)
    hessian = np.einsum('m,mi,mk,ml->ikl', amplitude * second, perps, vectors, vectors)
    return velocity, gradient, hessian


def evaluation_operators(
    cutoff: int, x: 'NDArray[np.float64]'
) -> tuple['NDArray[np.float64]', 'NDArray[np.float64]']:
    """Линейные операторы u ↦ u(x) и u ↦ D_x u(x) на коэффициентах.

    Returns:
        tuple: Матрица значения (2, M) и тензор якобиана (2, 2, M).
    """
    table = mode_table(cutoff)
    phase, first, _ = _phases(table, np.mod(np.asarray(x, dtype=np.float64), TWO_PI))
    perps = table.perps.astype(np.float64)
    vectors = table.vectors.astype(np.float64)
    value = (perps * (phase / table.scales)[:, None]).T
    gradient = np.einsum('m,mi,mk->ikm', first / table.scales, perps, vectors)
    return value, gradient


def velocity_at(u: FourierField, points: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
    """Скорости в наборе точек формы (P, 2)."""
    table = mode_table(u.cutoff)
    phase, _, _ = _phases(table, np.mod(np.asarray(points, dtype=np.float64), TWO_PI))
    return (phase * (u.coeffs / table.scales)) @ table.perps.astype(np.float64)


def grid_points(size: int) -> 'NDArray[np.float64]':
    """Узлы равномерной сетки n×n на торе, форма (n, n, 2), первая ось по x₁."""
    axis = TWO_PI * np.arange(size) / size
    first, second = np.meshgrid(axis, axis, indexing='ij')
    return np.stack([first, second], axis=-1)


def evaluate_on_grid(u: FourierField, size: int) -> 'NDArray[np.float64]':
    """Значения поля на сетке n×n, форма (2, n, n)."""
    points = grid_points(size)
    return np.moveaxis(velocity_at(u, points.reshape(-1, 2)).reshape(size, size, 2), -1, 0)


def sobolev_norm(u: FourierField, s: int) -> float:
    """Возвращает ‖u‖_s = (Σ_j u_j² |j|^{2s})^{1/2}."""
    if s < 0:
        raise InvalidArgumentError(f'Порядок нормы должен быть неотрицательным: {s}')
    table = mode_table(u.cutoff)
    return float(np.sqrt(np.sum(u.coeffs**2 * table.norms_sq**s)))


def leray_project_grid(samples: 'NDArray[np.float64]', cutoff: int) -> 'NDArray[np.float64]':
    """Проектор Лерэ для значений векторного поля на сетке.

    Точен для тригонометрических многочленов, которые сетка различает.

    Args:
        samples: Значения формы (..., 2, n, n), первая пространственная ось по x₁.
        cutoff: Отсечка результата; требуется n ≥ 2N + 2.

    Returns:
        NDArray: Коэффициенты формы (..., M).
    """
    size = samples.shape[-1]
    if samples.shape[-2] != size or samples.shape[-3] != 2:  # noqa: PLR2004
        raise InvalidArgumentError(f'Ожидалась форма (..., 2, n, n), получено {samples.shape}')
    if size < 2 * cutoff + 2:
        raise InvalidArgumentError(f'Сетка {size} не различает моды с |j|_∞ ≤ {cutoff}')
    table = mode_table(cutoff)
    spectrum = np.fft.fft2(samples, axes=(-2, -1)) / size**2
    positive = table.vectors[table.positive]
    picked = spectrum[..., :, positive[:, 0] % size, positive[:, 1] % size]
    perps = table.perps[table.positive].astype(np.float64)
    projected = np.einsum('...ck,kc->...k', picked, perps) / table.norms_sq[table.positive]
    coeffs = from_helical(table, np.moveaxis(projected, -1, 0))
    return np.moveaxis(coeffs, 0, -1)


def translate_field(u: FourierField, shift: 'NDArray[np.float64]') -> FourierField:
    """Возвращает поле x ↦ u(x − c)."""
    table = mode_table(u.cutoff)
    helical = to_helical(table, u.coeffs)[table.positive]
    angle = table.vectors[table.positive].astype(np.float64) @ np.asarray(shift, dtype=np.float64)
    return FourierField(u.cutoff, from_helical(table, helical * np.exp(-1j * angle)))


@dataclass(frozen=True, eq=False)
class VectorTrigExpansion:
    """Векторное тригонометрическое разложение c + Σ_k (a_k cos⟨k,x⟩ + b_k sin⟨k,x⟩).

    Ключи `terms` лежат в положительной полуплоскости; значение имеет форму (2, 2):
    строка 0 содержит a_k при косинусе, строка 1 содержит b_k при синусе.
    """

    constant: 'NDArray[np.float64]' = field(default_factory=lambda: np.zeros(2))
    terms: 'Mapping[tuple[int, int], NDArray[np.float64]]' = field(default_factory=dict)

    @classmethod
    def from_terms(
        cls,
        terms: 'Mapping[tuple[int, int], NDArray[np.float64]]',
        constant: 'NDArray[np.float64] | None' = None,
    ) -> 'VectorTrigExpansion':
        """Нормализует ключи в положительную полуплоскость и складывает совпадающие."""
        merged: dict[tuple[int, int], NDArray[np.float64]] = {}
        for key, value in terms.items():
            block = np.array(value, dtype=np.float64).reshape(2, 2)
            mode = Mode(*key)
            if mode == (0, 0):
                raise InvalidArgumentError('Нулевая гармоника задается через constant')
            if not mode.is_cosine:
                mode = Mode(-mode.j1, -mode.j2)
                block = block * np.array([[1.0], [-1.0]])
            merged[mode] = merged.get(mode, np.zeros((2, 2))) + block
        base = np.zeros(2) if constant is None else np.asarray(constant, dtype=np.float64)
        return cls(constant=base, terms=merged)

    @classmethod
    def from_field(cls, u: FourierField) -> 'VectorTrigExpansion':
        """Переписывает поле базиса e_j как векторное разложение."""
        table = mode_table(u.cutoff)
        terms: dict[tuple[int, int], NDArray[np.float64]] = {}
        for position in table.positive:
            mode = Mode(*table.vectors[position].tolist())
            direction = table.perps[position] / table.scales[position]
            cos_part = u.coeffs[position] * direction
            sin_part = u.coeffs[table.partner[position]] * direction
            terms[mode] = np.stack([cos_part, sin_part])
        return cls(constant=np.zeros(2), terms=terms)

    @classmethod
    def gradient_of_scalar(cls, mode: tuple[int, int], cos_amp: float, sin_amp: float) -> 'VectorTrigExpansion':
        """Градиент скалярного многочлена A·cos⟨k,x⟩ + B·sin⟨k,x⟩."""
        k = np.asarray(mode, dtype=np.float64)
        return cls.from_terms({mode: np.stack([sin_amp * k, -cos_amp * k])})

    @classmethod
    def from_grid(cls, samples: 'NDArray[np.float64]', max_wavenumber: int) -> 'VectorTrigExpansion':
        """Разложение по значениям (2, n, n) на сетке; учитываются |k|_∞ ≤ max_wavenumber."""
        size = samples.shape[-1]
        if size < 2 * max_wavenumber + 2:
            raise InvalidArgumentError(f'Сетка {size} не различает гармоники до {max_wavenumber}')
        spectrum = np.fft.fft2(samples, axes=(-2, -1)) / size**2
        terms: dict[tuple[int, int], NDArray[np.float64]] = {}
        for mode in enumerate_modes(max_wavenumber):
            if not mode.is_cosine:
                continue
            hat = spectrum[:, mode.j1 % size, mode.j2 % size]
            terms[(mode.j1, mode.j2)] = np.stack([2.0 * hat.real, -2.0 * hat.imag])
        return cls(constant=spectrum[:, 0, 0].real.copy(), terms=terms)

    def __add__(self, other: 'VectorTrigExpansion') -> 'VectorTrigExpansion':
        """Точная сумма разложений."""
        merged = {key: value.copy() for key, value in self.terms.items()}
        for key, value in other.terms.items():
            merged[key] = merged.get(key, np.zeros((2, 2))) + value
        return VectorTrigExpansion(constant=self.constant + other.constant, terms=merged)

    def scale(self, factor: float) -> 'VectorTrigExpansion':
        """Точное умножение на число."""
        return VectorTrigExpansion(
            constant=self.constant * factor,
            terms={key: value * factor for key, value in self.terms.items()},
        )

    def evaluate(self, x: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
        """Значение разложения в точке."""
        value = self.constant.astype(np.float64).copy()
        for key, block in self.terms.items():
            angle = key[0] * x[0] + key[1] * x[1]
            value += block[0] * math.cos(angle) + block[1] * math.sin(angle)
        return value


def leray_project(f: VectorTrigExpansion, cutoff: int | None = None) -> FourierField:
    """Ортогональная проекция на бездивергентные поля со средним ноль.

    Для каждого k 2-вектор коэффициента проектируется на span(k⊥) и записывается в
    базисе e_k, e_{−k}; постоянная часть отбрасывается.

    Args:
        f: Разложение с конечным носителем.
        cutoff: Отсечка результата; по умолчанию максимальная гармоника носителя.

    Returns:
        FourierField: Π f, обрезанное до |j|_∞ ≤ N.
    """
    if cutoff is None:
        cutoff = max((Mode(*key).linf for key in f.terms), default=1)
    table = mode_table(cutoff)
    coeffs = np.zeros(table.size)
    for key, block in f.terms.items():
        position = table.index.get(Mode(*key))
        if position is None:
            continue
        perp = table.perps[position].astype(np.float64)
        factor = table.scales[position] / table.norms_sq[position]
        coeffs[position] = factor * float(block[0] @ perp)
        coeffs[table.partner[position]] = factor * float(block[1] @ perp)
    return FourierField(cutoff, coeffs)
