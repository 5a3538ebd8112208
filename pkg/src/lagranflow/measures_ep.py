"""Ансамбли частиц, оценки плотностей переходов, производство энтропии и диагностика стационарности.

Плотности берутся относительно нормированной меры Лебега на T^{2t}: равномерному закону
соответствует плотность 1.

Классы:
    ParticleSamples: n путей частицы (y₁, …, y_t) и их происхождение.
    DensityEstimate: Гистограммная или ядерная оценка плотности с доверительными полосами.
    ExtremaReport: Оценки (m̂, M̂) по сетке состояний.
    EpBound: Проверка |σ_t/t| ≤ log(M̂/m̂).
    EmpiricalMeasure: Эмпирическая мера окон длины r.
    StationarityReport: Хи-квадрат равномерности и суррогат независимости.
    ConvergenceReport: Убывание расхождения плотностей окон.

Функции:
    run_ensemble: Независимые пути частицы из одного состояния.
    estimate_density: Оценка плотности (histogram | kde).
    density_extrema: (m̂, M̂) с полосами Клоппера–Пирсона.
    entropy_production / ep_bound_check: σ_t и ее равномерная граница.
    stationarity_report / convergence_report: Диагностика по длинным цепям.

Пример использования:
    >>> samples = run_ensemble(SystemState.at_rest(4, [1.0, 2.0]), NoiseSpec(), 1, 1000, seed=7)
    >>> estimate = estimate_density(samples, DensityMethod.histogram, bins=8)
"""

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import stats

from src.lagranflow.dynamics import (
    DEFAULT_NU,
    DEFAULT_SUBSTEPS,
    SystemState,
    Trajectory,
    enstrophy,
    field_energy,
    run_chain,
)
from src.lagranflow.errors import InvalidArgumentError, UndefinedEntropyProductionError
from src.lagranflow.logger import get_logger
from src.lagranflow.spectral_core import TWO_PI, enumerate_modes

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    from src.lagranflow.noise import NoiseSpec


logger = get_logger()

DEFAULT_BINS = 8
DEFAULT_BURN_IN = 50
MIN_EXPECTED_COUNT = 5.0
MAX_KDE_STEPS = 3
MAX_HISTOGRAM_BINS = 16
KERNEL_IMAGES = (-1, 0, 1)
MAX_BANDWIDTH = 1.0
CONFIDENCE = 0.95
HARMONIC_RADIUS = 3
UNIFORMITY_LEVEL = 0.01


class DensityMethod(StrEnum):
    """Метод оценки плотности."""

    histogram = 'histogram'
    kde = 'kde'


def spec_digest(spec: 'NoiseSpec') -> str:
    """Короткий sha256 параметров шума."""
    payload = json.dumps(asdict(spec), sort_keys=True).encode('utf-8')
    return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class ParticleSamples:
    """Пути частицы формы (n, t, 2), координаты в [0, 2π).

    Attributes:
        paths: Положения y₁..y_t по путям.
        provenance: Начальное состояние, хэш шума, зерно.
    """

    paths: 'NDArray[np.float64]'
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Сворачивает координаты на тор и проверяет форму."""
        paths = np.mod(np.array(self.paths, dtype=np.float64), TWO_PI)
        if paths.ndim != 3 or paths.shape[2] != 2 or paths.shape[0] < 1 or paths.shape[1] < 1:  # noqa: PLR2004
            raise InvalidArgumentError(f'Пути должны иметь форму (n ≥ 1, t ≥ 1, 2): {paths.shape}')
        paths.setflags(write=False)
        object.__setattr__(self, 'paths', paths)

    @property
    def count(self) -> int:
        """Число путей n."""
        return int(self.paths.shape[0])

    @property
    def steps(self) -> int:
        """Длина пути t."""
        return int(self.paths.shape[1])

    @property
    def flat(self) -> 'NDArray[np.float64]':
        """Точки T^{2t} формы (n, 2t)."""
        return self.paths.reshape(self.count, 2 * self.steps)


def run_ensemble(  # noqa: PLR0913
    initial: SystemState,
    spec: 'NoiseSpec',
    steps: int,
    count: int,
    seed: int,
    *,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
    offset: int = 0,
    workers: int = 1,
) -> ParticleSamples:
    """n независимых t-шаговых путей частицы из Υ.

    Путь номер i берется из траектории `offset + i` цепи, поэтому результат не зависит
    от числа рабочих потоков.

    Args:
        initial: Начальное состояние Υ.
        spec: Шум.
        steps: Длина пути t ≥ 1.
        count: Число путей n ≥ 1.
        seed: Мастер-зерно.
        nu: Вязкость.
        substeps: Подшаги.
        offset: Номер первой траектории.
        workers: Число рабочих потоков.

    Returns:
        ParticleSamples: Пути и происхождение.
    """
    if steps < 1 or count < 1:
        raise InvalidArgumentError(f'Нужны t ≥ 1 и n ≥ 1: t={steps}, n={count}')

    def one(index: int) -> 'NDArray[np.float64]':
        trajectory = run_chain(initial, spec, seed, steps, nu=nu, substeps=substeps, trajectory=offset + index)
        return trajectory.positions[1:]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        paths = list(pool.map(one, range(count)))
    provenance = {
        'initial_position': [float(value) for value in initial.y],
        'initial_energy': field_energy(initial.u),
        'spec': spec_digest(spec),
        'seed': seed,
        'offset': offset,
    }
    logger.debug('Ансамбль построен', steps=steps, count=count)
    return ParticleSamples(np.stack(paths), provenance)


def default_bandwidth(count: int, steps: int) -> float:
    """h = n^{−1/(2t+4)}."""
    return float(count ** (-1.0 / (2 * steps + 4)))


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    """Оценка плотности на равномерной сетке ячеек T^{2t}.

    Attributes:
        method: Метод оценки.
        values: Значения формы (G,)*2t в центрах ячеек.
        lower: Нижняя доверительная полоса.
        upper: Верхняя доверительная полоса.
        count: Объем выборки n.
        steps: Длина пути t.
        bandwidth: Ширина ядра (только kde).
        under_resolved: Ожидаемое число точек в ячейке меньше 5.
        samples: Точки выборки (n, 2t) для точного вычисления ядерной оценки.
    """

    method: DensityMethod
    values: 'NDArray[np.float64]' = field(repr=False)
    lower: 'NDArray[np.float64]' = field(repr=False)
    upper: 'NDArray[np.float64]' = field(repr=False)
    count: int
    steps: int
    bandwidth: float | None = None
    under_resolved: bool = False
    samples: 'NDArray[np.float64] | None' = field(default=None, repr=False)

    @property
    def resolution(self) -> int:
        """Число ячеек G по каждой координате."""
        return int(self.values.shape[0])

    @property
    def centers(self) -> 'NDArray[np.float64]':
        """Центры ячеек по одной координате."""
        return (np.arange(self.resolution) + 0.5) * TWO_PI / self.resolution

    def integral(self) -> float:
        """Интеграл по нормированной мере Лебега (среднее по ячейкам)."""
        return float(self.values.mean())

    def evaluate(self, point: 'NDArray[np.float64]') -> float:
        """Плотность в точке T^{2t} (путь формы (t, 2) или (2t,))."""
        flat = np.mod(np.asarray(point, dtype=np.float64).reshape(-1), TWO_PI)
        if flat.size != 2 * self.steps:
            raise InvalidArgumentError(f'Точка должна иметь {2 * self.steps} координат')
        if self.method is DensityMethod.kde and self.samples is not None and self.bandwidth is not None:
            kernels = _wrapped_kernel(flat[:, None] - self.samples.T, self.bandwidth)
            return float(np.prod(kernels, axis=0).mean())
        cell = np.minimum((flat * self.resolution / TWO_PI).astype(np.int64), self.resolution - 1)
        return float(self.values[tuple(cell)])

    def metadata(self) -> dict[str, Any]:
        """Описание метода для JSON-сопровождения."""
        return {
            'method': str(self.method),
            'resolution': self.resolution,
            'steps': self.steps,
            'count': self.count,
            'bandwidth': self.bandwidth,
            'under_resolved': self.under_resolved,
            'integral': self.integral(),
            'confidence': CONFIDENCE,
        }


def _wrapped_kernel(difference: 'NDArray[np.float64]', bandwidth: float) -> 'NDArray[np.float64]':
    """Периодическое гауссово ядро по образам ±1, плотность относительно dx/2π."""
    total = np.zeros_like(difference, dtype=np.float64)
    for image in KERNEL_IMAGES:
        total += stats.norm.pdf(difference + image * TWO_PI, scale=bandwidth)
    return TWO_PI * total


def clopper_pearson(
    counts: 'NDArray[np.float64]', total: int, confidence: float = CONFIDENCE
) -> tuple['NDArray[np.float64]', 'NDArray[np.float64]']:
    """Точные биномиальные границы вероятности ячейки."""
    tail = 0.5 * (1.0 - confidence)
    with np.errstate(invalid='ignore'):
        lower = np.where(counts > 0, stats.beta.ppf(tail, counts, total - counts + 1), 0.0)
        upper = np.where(counts < total, stats.beta.ppf(1.0 - tail, counts + 1, total - counts), 1.0)
    return np.nan_to_num(lower), np.nan_to_num(upper, nan=1.0)


def _histogram(samples: ParticleSamples, bins: int) -> DensityEstimate:
    dims = 2 * samples.steps
    counts, _ = np.histogramdd(samples.flat, bins=bins, range=[(0.0, TWO_PI)] * dims)
    cells = float(bins) ** dims
    lower, upper = clopper_pearson(counts, samples.count)
    return DensityEstimate(
        method=DensityMethod.histogram,
        values=counts * cells / samples.count,
        lower=lower * cells,
        upper=upper * cells,
        count=samples.count,
        steps=samples.steps,
        under_resolved=samples.count / cells < MIN_EXPECTED_COUNT,
    )


def _kde(samples: ParticleSamples, bins: int, bandwidth: float) -> DensityEstimate:
    dims = 2 * samples.steps
    resolution = max(bins, math.ceil(TWO_PI / bandwidth))
    centers = (np.arange(resolution) + 0.5) * TWO_PI / resolution
    kernels = [_wrapped_kernel(centers[:, None] - samples.flat[None, :, axis], bandwidth) for axis in range(dims)]
    letters = 'abcdefgh'[:dims]
    subscripts = ','.join(f'{letter}s' for letter in letters) + '->' + letters
    values = np.einsum(subscripts, *kernels, optimize=True) / samples.count
    second = np.einsum(subscripts, *(kernel**2 for kernel in kernels), optimize=True) / samples.count
    spread = np.sqrt(np.maximum(second - values**2, 0.0) / samples.count)
    quantile = float(stats.norm.ppf(0.5 + 0.5 * CONFIDENCE))
    return DensityEstimate(
        method=DensityMethod.kde,
        values=values,
        lower=np.maximum(values - quantile * spread, 0.0),
        upper=values + quantile * spread,
        count=samples.count,
        steps=samples.steps,
        bandwidth=bandwidth,
        under_resolved=samples.count / float(bins) ** dims < MIN_EXPECTED_COUNT,
        samples=samples.flat.copy(),
    )


def estimate_density(
    samples: ParticleSamples,
    method: DensityMethod = DensityMethod.histogram,
    bins: int = DEFAULT_BINS,
    bandwidth: float | None = None,
) -> DensityEstimate:
    """Нормированная оценка плотности путей на T^{2t}.

    Args:
        samples: Выборка путей.
        method: histogram (K×K на каждый множитель) или kde (периодическое гауссово ядро).
        bins: K для гистограммы; наименьшее разрешение сетки для kde.
        bandwidth: Ширина ядра; по умолчанию n^{−1/(2t+4)}.

    Returns:
        DensityEstimate: Оценка; при недостатке точек выставлен флаг `under_resolved`.
    """
    if not 1 <= bins <= MAX_HISTOGRAM_BINS:
        raise InvalidArgumentError(f'Число ячеек должно лежать в [1, {MAX_HISTOGRAM_BINS}]: {bins}')
    if method is DensityMethod.histogram:
        estimate = _histogram(samples, bins)
    else:
        if samples.steps > MAX_KDE_STEPS:
            raise InvalidArgumentError(f'Ядерная оценка доступна для t ≤ {MAX_KDE_STEPS}: {samples.steps}')
        width = bandwidth or default_bandwidth(samples.count, samples.steps)
        if not 0 < width <= MAX_BANDWIDTH:
            raise InvalidArgumentError(f'Ширина ядра должна лежать в (0, {MAX_BANDWIDTH}]: {width}')
        estimate = _kde(samples, bins, width)
    if estimate.under_resolved:
        logger.warning('Оценка плотности недоразрешена', method=str(method), count=samples.count, bins=bins)
    return estimate


@dataclass(frozen=True)
class ExtremaReport:
    """Оценки m̂ = min ρ₁ и M̂ = max ρ₁ по сетке состояний и ячеек.

    Attributes:
        minimum: m̂.
        maximum: M̂.
        minimum_lower: Нижняя граница для m̂.
        maximum_upper: Верхняя граница для M̂.
        positive: m̂ > 0 с положительной нижней границей.
        under_resolved: Хотя бы одна оценка недоразрешена (полосы шире).
        per_state: Минимум и максимум по каждому состоянию.
    """

    minimum: float
    maximum: float
    minimum_lower: float
    maximum_upper: float
    positive: bool
    under_resolved: bool
    per_state: tuple[tuple[float, float], ...]


def density_extrema(  # noqa: PLR0913
    spec: 'NoiseSpec',
    states: 'Sequence[SystemState]',
    count: int,
    seed: int,
    *,
    bins: int = DEFAULT_BINS,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
    workers: int = 1,
) -> ExtremaReport:
    """Минимум и максимум оценок ρ₁^Υ(y) по сетке состояний и сетке y bins × bins."""
    if not states:
        raise InvalidArgumentError('Сетка состояний пуста')
    estimates = [
        estimate_density(
            run_ensemble(
                state, spec, 1, count, seed, nu=nu, substeps=substeps, offset=index * count, workers=workers
            ),
            DensityMethod.histogram,
            bins,
        )
        for index, state in enumerate(states)
    ]
    minimum = min(float(estimate.values.min()) for estimate in estimates)
    maximum = max(float(estimate.values.max()) for estimate in estimates)
    minimum_lower = min(float(estimate.lower.min()) for estimate in estimates)
    maximum_upper = max(float(estimate.upper.max()) for estimate in estimates)
    report = ExtremaReport(
        minimum=minimum,
        maximum=maximum,
        minimum_lower=minimum_lower,
        maximum_upper=maximum_upper,
        positive=minimum > 0 and minimum_lower > 0,
        under_resolved=any(estimate.under_resolved for estimate in estimates),
        per_state=tuple((float(e.values.min()), float(e.values.max())) for e in estimates),
    )
    logger.info('Экстремумы плотности оценены', minimum=minimum, maximum=maximum, positive=report.positive)
    return report


def entropy_production(estimate: DensityEstimate, path: 'NDArray[np.float64]') -> float:
    """σ_t = log ρ_t(y₁..y_t) − log ρ_t(y_t..y₁).

    Raises:
        UndefinedEntropyProductionError: Если плотность в одном из порядков нулевая.
    """
    forward = np.asarray(path, dtype=np.float64).reshape(estimate.steps, 2)
    backward = forward[::-1]
    ahead = estimate.evaluate(forward)
    behind = estimate.evaluate(backward)
    if ahead <= 0:
        raise UndefinedEntropyProductionError('forward')
    if behind <= 0:
        raise UndefinedEntropyProductionError('backward')
    return math.log(ahead) - math.log(behind)


@dataclass(frozen=True)
class EpBound:
    """Граница log(M̂/m̂) и доля путей, для которых |σ_t/t| ее не превышает."""

    bound: float
    fraction_within: float
    worst: float


def ep_bound_check(
    minimum: float, maximum: float, steps: int, productions: 'Sequence[float]', slack: float = 0.0
) -> EpBound:
    """Проверяет |σ_t/t| ≤ log(M̂/m̂) + slack по набору значений σ_t."""
    if minimum <= 0 or maximum < minimum:
        raise InvalidArgumentError(f'Нужно 0 < m̂ ≤ M̂: m̂={minimum}, M̂={maximum}')
    bound = math.log(maximum / minimum)
    rates = np.abs(np.asarray(productions, dtype=np.float64)) / steps
    within = float(np.mean(rates <= bound + slack)) if rates.size else 1.0
    return EpBound(bound=bound, fraction_within=within, worst=float(rates.max(initial=0.0)))


def stationary_windows(trajectory: Trajectory, steps: int, burn_in: int = DEFAULT_BURN_IN) -> ParticleSamples:
    """Окна (y_{n+1}, …, y_{n+t}) длинной траектории после разгона."""
    positions = trajectory.positions[burn_in + 1 :]
    if positions.shape[0] < steps:
        raise InvalidArgumentError('Траектория короче одного окна после разгона')
    windows = np.lib.stride_tricks.sliding_window_view(positions, (steps, 2))[:, 0]
    return ParticleSamples(windows, {'burn_in': burn_in, 'steps': steps})


def stationary_paths(samples: ParticleSamples, estimate: DensityEstimate) -> 'NDArray[np.float64]':
    """σ_t по всем путям выборки; пути с нулевой плотностью дают nan."""
    values = np.empty(samples.count)
    for index, path in enumerate(samples.paths):
        try:
            values[index] = entropy_production(estimate, path)
        except UndefinedEntropyProductionError:
            values[index] = math.nan
    return values


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Равновзвешенная мера на окнах: признаки поля (энергия, энстрофия) и положения частицы.

    Attributes:
        points: Формы (n, r, 4): energy, enstrophy, y1, y2.
        weights: Веса, в сумме 1.
    """

    points: 'NDArray[np.float64]'
    weights: 'NDArray[np.float64]'

    def mean(self, function: 'Callable[[NDArray[np.float64]], float]') -> float:
        """⟨f, ν⟩ для функции окна f(points[i])."""
        return float(sum(weight * function(point) for weight, point in zip(self.weights, self.points, strict=True)))


def empirical_measure(trajectory: Trajectory, length: int) -> EmpiricalMeasure:
    """ν_t = (1/t) Σ_k δ_{окно длины r с начала k}."""
    features = np.array(
        [[field_energy(state.u), enstrophy(state.u), *state.y] for state in trajectory.states], dtype=np.float64
    )
    if features.shape[0] < length:
        raise InvalidArgumentError('Траектория короче окна')
    windows = np.lib.stride_tricks.sliding_window_view(features, (length, 4))[:, 0]
    count = windows.shape[0]
    return EmpiricalMeasure(np.array(windows), np.full(count, 1.0 / count))


def harmonic_modes(radius: int = HARMONIC_RADIUS) -> list[tuple[int, int]]:
    """Частоты m с 1 ≤ |m|_∞ ≤ radius из полуплоскости (одна из пары ±m)."""
    return [(mode.j1, mode.j2) for mode in enumerate_modes(radius) if mode.is_cosine]


def harmonic_means(positions: 'NDArray[np.float64]', radius: int = HARMONIC_RADIUS) -> dict[tuple[int, int], complex]:
    """⟨e^{i⟨m,y⟩}⟩ по точкам формы (n, 2)."""
    points = np.asarray(positions, dtype=np.float64)
    return {m: complex(np.exp(1j * (points @ np.array(m, dtype=np.float64))).mean()) for m in harmonic_modes(radius)}


def uniformity_statistics(positions: 'NDArray[np.float64]', bins: int = DEFAULT_BINS) -> tuple[float, float]:
    """Статистика хи-квадрат и p-значение равномерности на сетке bins × bins."""
    points = np.mod(np.asarray(positions, dtype=np.float64), TWO_PI)
    edges = np.linspace(0.0, TWO_PI, bins + 1)
    counts, _, _ = np.histogram2d(points[:, 0], points[:, 1], bins=(edges, edges))
    result = stats.chisquare(counts.ravel())
    return float(result.statistic), float(result.pvalue)


def binned_total_variation(
    first: 'NDArray[np.float64]', second: 'NDArray[np.float64]', bins: int = DEFAULT_BINS
) -> float:
    """Полная вариация между гистограммами положений частиц на сетке bins × bins."""
    edges = np.linspace(0.0, TWO_PI, bins + 1)
    left, _, _ = np.histogram2d(*np.mod(first, TWO_PI).T, bins=(edges, edges))
    right, _, _ = np.histogram2d(*np.mod(second, TWO_PI).T, bins=(edges, edges))
    return 0.5 * float(np.abs(left / left.sum() - right / right.sum()).sum())


@dataclass(frozen=True)
class StationarityReport:
    """Равномерность маргинала частицы и суррогат независимости поля и частицы.

    Attributes:
        statistic: Хи-квадрат.
        p_value: p-значение.
        uniform: Равномерность не отвергнута на уровне 1%.
        count: Число точек после разгона.
        harmonic_max: max |⟨e^{i⟨m,y⟩}⟩| по 1 ≤ |m|_∞ ≤ 3.
        harmonic_bound: 4/√n.
        correlation_max: Наибольшая корреляция энергии с гармониками частицы.
        correlation_bound: 3/√n.
    """

    statistic: float
    p_value: float
    uniform: bool
    count: int
    harmonic_max: float
    harmonic_bound: float
    correlation_max: float
    correlation_bound: float


def stationarity_report(  # noqa: PLR0913
    spec: 'NoiseSpec',
    initial: SystemState,
    seed: int,
    burn_in: int,
    horizon: int,
    *,
    bins: int = DEFAULT_BINS,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
) -> StationarityReport:
    """Хи-квадрат равномерности y_k и корреляции ‖u_k‖² с гармониками y_k после разгона."""
    if horizon <= burn_in:
        raise InvalidArgumentError(f'Горизонт {horizon} должен превышать разгон {burn_in}')
    trajectory = run_chain(initial, spec, seed, horizon, nu=nu, substeps=substeps)
    return stationarity_from_trajectory(trajectory, burn_in, bins)


def stationarity_from_trajectory(trajectory: Trajectory, burn_in: int, bins: int = DEFAULT_BINS) -> StationarityReport:
    """Чистая часть `stationarity_report` по готовой траектории."""
    positions = trajectory.positions[burn_in + 1 :]
    energies = np.array([field_energy(state.u) for state in trajectory.states[burn_in + 1 :]])
    count = positions.shape[0]
    statistic, p_value = uniformity_statistics(positions, bins)
    means = harmonic_means(positions)
    correlations = [0.0]
    if count > 2 and np.std(energies) > 0:  # noqa: PLR2004
        for m in harmonic_modes():
            phase = positions @ np.array(m, dtype=np.float64)
            correlations.extend(abs(float(np.corrcoef(energies, wave(phase))[0, 1])) for wave in (np.cos, np.sin))
    report = StationarityReport(
        statistic=statistic,
        p_value=p_value,
        uniform=p_value >= UNIFORMITY_LEVEL,
        count=count,
        harmonic_max=max(abs(value) for value in means.values()),
        harmonic_bound=4.0 / math.sqrt(count),
        correlation_max=float(np.nanmax(correlations)),
        correlation_bound=3.0 / math.sqrt(count),
    )
    logger.info('Стационарность проверена', p_value=p_value, uniform=report.uniform, count=count)
    return report


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    """Расхождение sup|ρ_n − ρ_∞| по началам окон и подогнанная скорость.

    Attributes:
        starts: Начала окон n.
        discrepancy: Наибольшее по начальным состояниям расхождение.
        noise_floor: Порог Монте-Карло.
        rate: Скорость убывания (nan при неопределенности).
        lower: Нижняя доверительная граница.
        upper: Верхняя доверительная граница.
        conclusive: Достаточно ли точек выше порога и положителен ли наклон.
    """

    starts: tuple[int, ...]
    discrepancy: 'NDArray[np.float64]'
    noise_floor: float
    rate: float
    lower: float
    upper: float
    conclusive: bool


def fit_exponential_decay(
    abscissa: 'NDArray[np.float64]', values: 'NDArray[np.float64]', floor: 'float | NDArray[np.float64]'
) -> tuple[float, float, float, bool]:
    """Наклон −log values по abscissa выше порога: (rate, lower, upper, conclusive)."""
    visible = values > floor
    if int(visible.sum()) < 3:  # noqa: PLR2004
        return math.nan, math.nan, math.nan, False
    fit = stats.linregress(abscissa[visible], np.log(values[visible]))
    if fit.slope >= 0:
        return math.nan, math.nan, math.nan, False
    half_width = float(stats.t.ppf(0.5 + 0.5 * CONFIDENCE, int(visible.sum()) - 2)) * fit.stderr
    rate = float(-fit.slope)
    return rate, rate - half_width, rate + half_width, True


def convergence_report(  # noqa: PLR0913
    spec: 'NoiseSpec',
    states: 'Sequence[SystemState]',
    steps: int,
    starts: 'Sequence[int]',
    count: int,
    seed: int,
    *,
    bins: int = DEFAULT_BINS,
    reference_start: int | None = None,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
) -> ConvergenceReport:
    """Оценивает ρ окон [n+1, n+t] и их расхождение с долгосрочной оценкой.

    Args:
        spec: Шум.
        states: Начальные состояния.
        steps: Длина окна t ≤ 2.
        starts: Начала окон n.
        count: Траекторий на состояние.
        seed: Мастер-зерно.
        bins: K гистограммы.
        reference_start: Начало окна долгосрочной оценки (по умолчанию 2·max n + 8).
        nu: Вязкость.
        substeps: Подшаги.

    Returns:
        ConvergenceReport: Кривая расхождений и подгонка.
    """
    if not 1 <= steps <= 2:  # noqa: PLR2004
        raise InvalidArgumentError(f'Длина окна должна быть 1 или 2: {steps}')
    if not states or not starts:
        raise InvalidArgumentError('Нужны начальные состояния и начала окон')
    ordered = tuple(sorted(set(starts)))
    reference = reference_start if reference_start is not None else 2 * ordered[-1] + 8
    horizon = max(reference, ordered[-1]) + steps

    windows: dict[int, list[NDArray[np.float64]]] = {start: [] for start in (*ordered, reference)}
    for group, initial in enumerate(states):
        samples = run_ensemble(initial, spec, horizon, count, seed, nu=nu, substeps=substeps, offset=group * count)
        for start in windows:
            windows[start].append(samples.paths[:, start : start + steps])

    target = estimate_density(ParticleSamples(np.concatenate(windows[reference])), bins=bins)
    discrepancy = np.zeros(len(ordered))
    for position, start in enumerate(ordered):
        for block in windows[start]:
            estimate = estimate_density(ParticleSamples(block), bins=bins)
            discrepancy[position] = max(discrepancy[position], float(np.abs(estimate.values - target.values).max()))

    cells = float(bins) ** (2 * steps)
    floor = 3.0 * math.sqrt(2.0 * cells * float(target.values.max()) / count)
    rate, lower, upper, conclusive = fit_exponential_decay(np.array(ordered, dtype=np.float64), discrepancy, floor)
    if not conclusive:
        logger.warning('Сходимость не видна выше шумового порога', floor=floor)
    return ConvergenceReport(ordered, discrepancy, floor, rate, lower, upper, conclusive)
