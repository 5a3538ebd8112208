"""Шум толчков: временной базис, расписания коэффициентов, выборка и носитель.

Толчок на интервале [0, 1] имеет вид
    η(t, x) = Σ_{l ≤ L} Σ_{|j|_∞ ≤ N} b_j c_l ξ_{lj} ψ_l(t) e_j(x),
где ξ_{lj} независимы и имеют гладкую финитную плотность ρ(r) ∝ exp(−1/(1 − r²)).

Классы:
    NoiseSpec: Параметры шума (b_j = a·e^{−κ|j|} на |j|₁ ≤ 2, иначе e^{−κ|j|}; c_l = c₀ l^{−β}).
    BumpDistribution: Плотность-«шапочка» на (−1, 1) и выборка отбором.
    KickRealization: Одна реализация толчка.
    MarginReport: Запасы попадания сигнала во внутренность носителя K₀.
    PoincareFit: Оценка скорости убывания хвостов ‖Q_N g‖.

Функции:
    time_basis / time_basis_matrix: ψ_l(t).
    project_time_samples: Коэффициенты по ψ_l из равномерных отсчетов.
    stream_for: Независимый поток ГСЧ по (seed, ключи).
    sample_kick: Выборка толчка.
    kick_inner_product / support_margins: Проверка принадлежности K₀.
    poincare_decay: Наклон log‖Q_N g‖ по log N.
    tail_norm / tail_bound / kick_norm_bound: Оценки норм толчков.
"""

import functools
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Protocol

import numpy as np
from scipy import integrate, stats

from src.lagranflow.errors import InvalidArgumentError
from src.lagranflow.logger import get_logger
from src.lagranflow.spectral_core import Mode, embedding, enumerate_modes, mode_table

if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import NDArray


logger = get_logger()

DEFAULT_SPATIAL_CUTOFF = 4
DEFAULT_TIME_MODES = 16
DEFAULT_KAPPA = 0.5
DEFAULT_BETA = 1.0
DEFAULT_C0 = 1.0
DEFAULT_DELTA = 0.5
DEFAULT_AMPLIFICATION = 1.0
DEFAULT_SOBOLEV_S = 3
AMPLIFIED_L1_RADIUS = 2
DEFAULT_POINCARE_SIZES = (4, 8, 16, 32, 64)
POINCARE_SLACK = 0.25
ZERO_TAIL = 1e-13


@dataclass(frozen=True)
class NoiseSpec:
    """Параметры шума толчков.

    Attributes:
        spatial_cutoff: Отсечка N по |j|_∞.
        time_modes: Число временных мод L.
        kappa: Показатель убывания b_j = e^{−κ|j|}.
        beta: Показатель β > 1/2 в c_l = c₀ l^{−β}.
        c0: Масштаб c₀.
        delta: Радиус положительности плотности δ ∈ (0, 1].
        amplification: Усиление a ≥ 1 для мод с |j|₁ ≤ 2.
        sobolev_s: Порядок s нормировки d_j = |j|^{−s}.
    """

    spatial_cutoff: int = DEFAULT_SPATIAL_CUTOFF
    time_modes: int = DEFAULT_TIME_MODES
    kappa: float = DEFAULT_KAPPA
    beta: float = DEFAULT_BETA
    c0: float = DEFAULT_C0
    delta: float = DEFAULT_DELTA
    amplification: float = DEFAULT_AMPLIFICATION
    sobolev_s: int = DEFAULT_SOBOLEV_S

    def __post_init__(self) -> None:
        """Проверяет допустимые диапазоны параметров."""
        checks = (
            (isinstance(self.spatial_cutoff, int) and self.spatial_cutoff >= 1, 'spatial_cutoff', 'целым ≥ 1'),
            (isinstance(self.time_modes, int) and self.time_modes >= 1, 'time_modes', 'целым ≥ 1'),
            (self.kappa > 0, 'kappa', 'положительным'),
            (self.beta > 0.5, 'beta', 'больше 1/2'),  # noqa: PLR2004
            (self.c0 >= 0, 'c0', 'неотрицательным'),
            (0 < self.delta <= 1, 'delta', 'из интервала (0, 1]'),
            (self.amplification >= 1, 'amplification', 'не меньше 1'),
            (isinstance(self.sobolev_s, int) and self.sobolev_s >= 0, 'sobolev_s', 'целым ≥ 0'),
        )
        for ok, name, requirement in checks:
            if not ok:
                raise InvalidArgumentError(f'noise.{name} должен быть {requirement}: {getattr(self, name)}')

    @property
    def modes(self) -> tuple[Mode, ...]:
        """Пространственные моды шума."""
        return enumerate_modes(self.spatial_cutoff)

    @functools.cached_property
    def spatial_weights(self) -> 'NDArray[np.float64]':
        """b_j с усилением a на |j|₁ ≤ 2."""
        table = mode_table(self.spatial_cutoff)
        weights = np.exp(-self.kappa * np.sqrt(table.norms_sq))
        amplified = np.abs(table.vectors).sum(axis=1) <= AMPLIFIED_L1_RADIUS
        return np.where(amplified, self.amplification * weights, weights)

    @functools.cached_property
    def time_weights(self) -> 'NDArray[np.float64]':
        """c_l = c₀ l^{−β}, l = 1..L."""
        return self.c0 * np.arange(1, self.time_modes + 1, dtype=np.float64) ** (-self.beta)

    @functools.cached_property
    def normalizers(self) -> 'NDArray[np.float64]':
        """d_j = ‖e_j‖_s^{−1} = |j|^{−s}."""
        return mode_table(self.spatial_cutoff).norms_sq ** (-0.5 * self.sobolev_s)

    @functools.cached_property
    def positivity_radii(self) -> 'NDArray[np.float64]':
        """δ_{lj} = a·b_j·d_j·c_l·δ, форма (M, L)."""
        return np.outer(self.spatial_weights * self.normalizers, self.time_weights) * self.delta

    def amplified(self, amplification: float) -> 'NoiseSpec':
        """Копия с другим усилением a (семейство η^a)."""
        return replace(self, amplification=amplification)


def time_basis(l: int, t: 'float | NDArray[np.float64]') -> 'float | NDArray[np.float64]':  # noqa: E741
    """ψ₁ = 1, ψ_{2m} = √2 cos 2πmt, ψ_{2m+1} = √2 sin 2πmt.

    Args:
        l: Номер функции l ≥ 1.
        t: Время из [0, 1] (скаляр или массив).

    Returns:
        float | NDArray: Значение ψ_l(t).
    """
    if l < 1:
        raise InvalidArgumentError(f'Номер временной функции должен быть ≥ 1: {l}')
    if l == 1:
        return np.ones_like(t, dtype=np.float64) if isinstance(t, np.ndarray) else 1.0
    frequency = 2.0 * math.pi * (l // 2)
    trig = np.cos if l % 2 == 0 else np.sin
    return math.sqrt(2.0) * trig(frequency * np.asarray(t, dtype=np.float64))


def time_basis_matrix(time_modes: int, times: 'NDArray[np.float64] | float') -> 'NDArray[np.float64]':
    """Матрица ψ_l(t_n) формы (T, L) (или (L,) для скалярного t)."""
    t = np.asarray(times, dtype=np.float64)
    index = np.arange(1, time_modes + 1)
    angle = 2.0 * math.pi * np.multiply.outer(t, index // 2)
    values = math.sqrt(2.0) * np.where(index % 2 == 0, np.cos(angle), np.sin(angle))
    values[..., 0] = 1.0
    return values


def project_time_samples(samples: 'NDArray[np.float64]', time_modes: int) -> 'NDArray[np.float64]':
    """Коэффициенты по ψ_1..ψ_L из отсчетов в точках t_n = n/T.

    Args:
        samples: Отсчеты формы (T, ...).
        time_modes: Число коэффициентов L; требуется L//2 < T/2.

    Returns:
        NDArray: Коэффициенты формы (L, ...).
    """
    count = samples.shape[0]
    if 2 * (time_modes // 2) >= count:
        raise InvalidArgumentError(f'{count} отсчетов не хватает для {time_modes} временных мод')
    spectrum = np.fft.rfft(samples, axis=0) / count
    coeffs = np.empty((time_modes,) + samples.shape[1:], dtype=np.float64)
    coeffs[0] = spectrum[0].real
    frequencies = np.arange(1, time_modes // 2 + 1)
    coeffs[1::2][: len(frequencies)] = math.sqrt(2.0) * spectrum[frequencies].real
    sine_slots = coeffs[2::2]
    sine_slots[:] = -math.sqrt(2.0) * spectrum[frequencies[: sine_slots.shape[0]]].imag
    return coeffs


def stream_for(seed: int, *keys: int) -> np.random.Generator:
    """Независимый поток ГСЧ по мастер-зерну и счетчикам (этап, траектория, ...).

    Потоки выводятся через `SeedSequence.spawn_key`, поэтому результат не зависит от
    числа рабочих процессов и порядка их запуска.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(keys)))


class BumpDistribution:
    """Плотность ρ(r) = exp(−1/(1 − r²))/Z на (−1, 1)."""

    @functools.cached_property
    def normalization(self) -> float:
        """Постоянная Z."""
        value, _ = integrate.quad(self.unnormalized, -1.0, 1.0, epsabs=1e-14)
        return float(value)

    @staticmethod
    def unnormalized(r: 'float | NDArray[np.float64]') -> 'NDArray[np.float64]':
        """exp(−1/(1 − r²)) на (−1, 1) и 0 вне."""
        r = np.asarray(r, dtype=np.float64)
        inside = np.abs(r) < 1.0
        safe = np.where(inside, r, 0.0)
        return np.where(inside, np.exp(-1.0 / (1.0 - safe**2)), 0.0)

    def pdf(self, r: 'float | NDArray[np.float64]') -> 'NDArray[np.float64]':
        """Нормированная плотность."""
        return self.unnormalized(r) / self.normalization

    @staticmethod
    def rvs(size: int, rng: np.random.Generator) -> 'NDArray[np.float64]':
        """Выборка отбором: предложение U(−1, 1), принятие с вероятностью e·ρ̃(r)."""
        accepted: list[NDArray[np.float64]] = []
        remaining = size
        while remaining > 0:
            batch = max(2 * remaining, 64)
            proposal = rng.uniform(-1.0, 1.0, size=batch)
            threshold = np.exp(1.0) * BumpDistribution.unnormalized(proposal)
            kept = proposal[rng.uniform(size=batch) < threshold][:remaining]
            accepted.append(kept)
            remaining -= kept.shape[0]
        return np.concatenate(accepted) if accepted else np.empty(0)


BUMP = BumpDistribution()


class TensorSignal(Protocol):
    """Сигнал, разложенный по ψ_l(t) e_j(x): моды носителя и коэффициенты (|Λ|, L)."""

    @property
    def support(self) -> tuple[Mode, ...]:
        """Моды носителя."""
        ...

    @property
    def coeffs(self) -> 'NDArray[np.float64]':
        """Коэффициенты α_{jl}."""
        ...


@dataclass(frozen=True, eq=False)
class KickRealization:
    """Реализация толчка: таблица ξ_{lj} формы (L, M) и ее спецификация."""

    spec: NoiseSpec
    xi: 'NDArray[np.float64]'

    def __post_init__(self) -> None:
        """Проверяет форму таблицы и границы |ξ| ≤ 1."""
        expected = (self.spec.time_modes, len(self.spec.modes))
        table = np.array(self.xi, dtype=np.float64)
        if table.shape != expected:
            raise InvalidArgumentError(f'Таблица ξ должна иметь форму {expected}, получено {table.shape}')
        if np.any(np.abs(table) > 1.0):
            raise InvalidArgumentError('Коэффициенты ξ должны лежать в [−1, 1]')
        table.setflags(write=False)
        object.__setattr__(self, 'xi', table)

    @classmethod
    def zeros(cls, spec: NoiseSpec) -> 'KickRealization':
        """Нулевой толчок."""
        return cls(spec, np.zeros((spec.time_modes, len(spec.modes))))

    @property
    def support(self) -> tuple[Mode, ...]:
        """Моды шума."""
        return self.spec.modes

    @functools.cached_property
    def coeffs(self) -> 'NDArray[np.float64]':
        """α_{jl} = b_j c_l ξ_{lj}, форма (M, L)."""
        return self.spec.spatial_weights[:, None] * self.spec.time_weights[None, :] * self.xi.T

    def coefficients_at(self, t: float, cutoff: int) -> 'NDArray[np.float64]':
        """Коэффициенты поля η(t) на отсечке поля скоростей."""
        values = self.coeffs @ time_basis_matrix(self.spec.time_modes, t)
        source, target = embedding(self.spec.spatial_cutoff, cutoff)
        result = np.zeros(mode_table(cutoff).size)
        result[target] = values[source]
        return result

    def shifted(self, delta_xi: 'NDArray[np.float64]') -> 'KickRealization | None':
        """Толчок с ξ + Δξ либо None, если сдвиг выводит из [−1, 1]."""
        moved = self.xi + delta_xi
        if np.any(np.abs(moved) > 1.0):
            return None
        return KickRealization(self.spec, moved)


def sample_kick(spec: NoiseSpec, rng: np.random.Generator) -> KickRealization:
    """Выбирает толчок: все ξ_{lj} независимы с плотностью-шапочкой.

    Args:
        spec: Спецификация шума.
        rng: Поток ГСЧ; результат детерминирован при фиксированном состоянии потока.

    Returns:
        KickRealization: Реализация толчка.
    """
    shape = (spec.time_modes, len(spec.modes))
    xi = BUMP.rvs(shape[0] * shape[1], rng).reshape(shape)
    return KickRealization(spec, xi)


def kick_inner_product(
    spec: NoiseSpec, signal: TensorSignal, l: int, j: 'Mode | tuple[int, int]'  # noqa: E741
) -> float:
    """⟨signal, φ_{lj}⟩ в L²(0,1; V^s), φ_{lj} = d_j ψ_l e_j нормирован в V^s.

    Равно α_{jl}·|j|^s; вне носителя сигнала ноль.
    """
    mode = Mode(*j)
    if l < 1:
        raise InvalidArgumentError(f'Номер временной функции должен быть ≥ 1: {l}')
    try:
        row = signal.support.index(mode)
    except ValueError:
        return 0.0
    if l > signal.coeffs.shape[1]:
        return 0.0
    return float(signal.coeffs[row, l - 1] * mode.norm**spec.sobolev_s)


@dataclass(frozen=True)
class MarginReport:
    """Запасы δ_{lj} − |⟨signal, φ_{lj}⟩| на индексах шума.

    Attributes:
        margins: Запасы формы (M, L).
        membership: Все запасы положительны.
        min_margin: Наименьший запас.
        remainder_norm: Норма части сигнала вне индексов шума (не отбрасывается молча).
        required_amplification: Оценка наименьшего a, при котором запасы станут положительными.
    """

    margins: 'NDArray[np.float64]' = field(repr=False)
    membership: bool
    min_margin: float
    remainder_norm: float
    required_amplification: float


def _pairings(spec: NoiseSpec, signal: TensorSignal) -> tuple['NDArray[np.float64]', float]:
    """Матрица ⟨signal, φ_{lj}⟩ на индексах шума и норма остатка."""
    modes = spec.modes
    index = mode_table(spec.spatial_cutoff).index
    inner = np.zeros((len(modes), spec.time_modes))
    remainder_sq = 0.0
    coeffs = np.asarray(signal.coeffs, dtype=np.float64)
    for row, mode in enumerate(signal.support):
        weighted = coeffs[row] * mode.norm**spec.sobolev_s
        position = index.get(mode)
        if position is None:
            remainder_sq += float(weighted @ weighted)
            continue
        inside = min(spec.time_modes, weighted.shape[0])
        inner[position, :inside] = weighted[:inside]
        remainder_sq += float(weighted[inside:] @ weighted[inside:])
    return inner, math.sqrt(remainder_sq)


def support_margins(spec: NoiseSpec, signal: TensorSignal) -> MarginReport:
    """Проверяет принадлежность сигнала K₀ через запасы δ_{lj} − |⟨signal, φ_{lj}⟩|.

    Args:
        spec: Спецификация шума (задает δ_{lj}).
        signal: Управление или толчок.

    Returns:
        MarginReport: Запасы, вердикт и оценка требуемого усиления.
    """
    inner, remainder = _pairings(spec, signal)
    radii = spec.positivity_radii
    margins = radii - np.abs(inner)
    membership = bool(np.all(margins > 0.0))

    amplified = (np.abs(mode_table(spec.spatial_cutoff).vectors).sum(axis=1) <= AMPLIFIED_L1_RADIUS)[:, None]
    ratio = np.abs(inner) / radii
    if np.any(~amplified & (ratio >= 1.0)):
        required = math.inf
    else:
        worst = float(np.max(np.where(amplified, ratio, 0.0), initial=0.0))
        required = spec.amplification * worst

    if remainder > 0:
        logger.info('Часть сигнала вне индексов шума', remainder_norm=remainder)

    return MarginReport(
        margins=margins,
        membership=membership,
        min_margin=float(margins.min()),
        remainder_norm=remainder,
        required_amplification=required,
    )


@dataclass(frozen=True)
class PoincareFit:
    """Результат оценки убывания ‖Q_N g‖.

    Attributes:
        slope: Наклон в координатах log–log (−inf при конечном разложении).
        tail_norms: Нормы хвостов по N.
        periodic: Периодическое продолжение g гладко стыкуется.
        super_fast: Хвосты обнулились (конечное разложение).
        satisfied: slope ≤ −r + 0.25.
    """

    slope: float
    tail_norms: dict[int, float]
    periodic: bool
    super_fast: bool
    satisfied: bool


def poincare_decay(
    g: 'Callable[[NDArray[np.float64]], NDArray[np.float64]]',
    r: int,
    sizes: tuple[int, ...] = DEFAULT_POINCARE_SIZES,
    samples: int = 4096,
) -> PoincareFit:
    """Оценивает показатель убывания ‖Q_N g‖_{L²} по N.

    Args:
        g: Векторизованная функция на [0, 1].
        r: Число непрерывных производных g.
        sizes: Значения N (двоичная шкала).
        samples: Число равномерных отсчетов для коэффициентов.

    Returns:
        PoincareFit: Наклон, нормы хвостов и флаги.
    """
    times = np.arange(samples) / samples
    values = np.asarray(g(times), dtype=np.float64)
    coeffs = project_time_samples(values, samples - 1)
    squares = coeffs**2
    total = math.sqrt(float(squares.sum()))
    tails = {size: math.sqrt(float(squares[size:].sum())) for size in sizes}

    edge = np.asarray(g(np.array([0.0, 1.0])), dtype=np.float64)
    periodic = bool(abs(edge[1] - edge[0]) <= 1e-8 * (1.0 + abs(edge[0])))
    if not periodic:
        logger.warning('Функция не периодична: убывание ограничено скачком на границе', jump=float(edge[1] - edge[0]))

    visible = [(size, norm) for size, norm in tails.items() if norm > ZERO_TAIL * max(total, 1.0)]
    if len(visible) < 2:  # noqa: PLR2004
        return PoincareFit(slope=-math.inf, tail_norms=tails, periodic=periodic, super_fast=True, satisfied=True)

    fit = stats.linregress(np.log([size for size, _ in visible]), np.log([norm for _, norm in visible]))
    slope = float(fit.slope)
    return PoincareFit(
        slope=slope,
        tail_norms=tails,
        periodic=periodic,
        super_fast=False,
        satisfied=slope <= -r + POINCARE_SLACK,
    )


def tail_norm(kick: KickRealization, radius: int) -> float:
    """Норма в L²(0,1; V^s) части толчка с |j|_∞ > radius."""
    table = mode_table(kick.spec.spatial_cutoff)
    outside = np.abs(table.vectors).max(axis=1) > radius
    weighted = kick.coeffs[outside] * (table.norms_sq[outside] ** (0.5 * kick.spec.sobolev_s))[:, None]
    return float(np.sqrt(np.sum(weighted**2)))


def tail_bound(spec: NoiseSpec, radius: int) -> float:
    """Замкнутая оценка Σ_{|j|_∞ > radius} b_j c₁ √L |j|^s хвоста любого толчка."""
    table = mode_table(spec.spatial_cutoff)
    outside = np.abs(table.vectors).max(axis=1) > radius
    weights = spec.spatial_weights[outside] * table.norms_sq[outside] ** (0.5 * spec.sobolev_s)
    return float(weights.sum() * spec.time_weights[0] * math.sqrt(spec.time_modes))


def kick_norm_bound(spec: NoiseSpec, s: int = 0) -> float:
    """Оценка sup_t ‖η(t)‖_s ≤ √2 Σ_j b_j |j|^s Σ_l c_l для любого толчка."""
    table = mode_table(spec.spatial_cutoff)
    spatial = float(np.sum(spec.spatial_weights * table.norms_sq ** (0.5 * s)))
    return math.sqrt(2.0) * spatial * float(spec.time_weights.sum())
