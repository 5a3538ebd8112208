"""Точные формулы больших уклонений для конечных цепей Маркова.

Конечная цепь заменяет компактное фазовое пространство: давление, тройки Фейнмана–Каца,
функции скорости уровней 2 и 3, равновесные состояния и флуктуационные соотношения
вычисляются здесь точно и служат оракулом.

Классы:
    FiniteChain: Стохастическая матрица и ее свойства.
    EigenTriple: (λ_V, h_V, μ_V).
    MarkovMeasure: Сдвиг-инвариантная марковская мера порядка r.
    Level2Rate / Level3Rate: Значения функций скорости двумя способами.
    EquilibriumState: Равновесное состояние и невязки тождеств.
    GallavottiCohenReport: Проверка симметрии и соотношения уровня 3.
    RateFunctionReport: Таблица значений уровня 2 для CLI.

Функции:
    tilted_pressure: Q(V) = log ρ(P·e^V).
    fk_eigentriple: Собственная тройка наклоненного ядра.
    dv_rate_level2 / dv_rate_level3: Функции скорости Донскера–Варадана.
    equilibrium_state: σ_V = h_V μ_V.
    gc_symmetry_check: Симметрия Галлавотти–Коэна и соотношение уровня 3.

Пример использования:
    >>> chain = FiniteChain(np.array([[0.5, 0.5], [0.5, 0.5]]))
    >>> tilted_pressure(chain, np.array([0.0, np.log(3.0)]))
"""

import csv
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import optimize, sparse
from scipy.sparse import csgraph

from src.lagranflow.dynamics import StreamStage
from src.lagranflow.errors import (
    InvalidArgumentError,
    NumericalError,
    PositivityRequiredError,
    ReducibleChainError,
)
from src.lagranflow.logger import get_logger
from src.lagranflow.noise import stream_for

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from numpy.typing import NDArray


logger = get_logger()

ROW_TOLERANCE = 1e-12
POWER_TOLERANCE = 1e-15
POWER_MAX_ITERATIONS = 200_000
RESTARTS = 20
AGREEMENT = 1e-6
SHIFT_INVARIANCE = 1e-10
GC_SLOPE_BOUND = 30.0
GC_STEP = 1e-5
CERTIFICATE_TOLERANCE = 1e-10
CERTIFICATE_STEPS = 2000


@dataclass(frozen=True, eq=False)
class FiniteChain:
    """Цепь на {0, …, d−1} со стохастической по строкам матрицей."""

    matrix: 'NDArray[np.float64]'

    def __post_init__(self) -> None:
        """Проверяет неотрицательность и суммы строк."""
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:  # noqa: PLR2004
            raise InvalidArgumentError(f'Матрица переходов должна быть квадратной: {matrix.shape}')
        if np.any(matrix < 0):
            raise InvalidArgumentError('Матрица переходов содержит отрицательные элементы')
        deviation = float(np.abs(matrix.sum(axis=1) - 1.0).max())
        if deviation > ROW_TOLERANCE:
            raise InvalidArgumentError(f'Суммы строк отличаются от 1 на {deviation:.3g}')
        matrix.setflags(write=False)
        object.__setattr__(self, 'matrix', matrix)

    @classmethod
    def reversible(cls, weights: 'NDArray[np.float64]') -> 'FiniteChain':
        """Обратимая цепь D⁻¹W по симметричной матрице весов W."""
        symmetric = np.asarray(weights, dtype=np.float64)
        if not np.allclose(symmetric, symmetric.T, rtol=0.0, atol=1e-15):
            raise InvalidArgumentError('Матрица весов должна быть симметричной')
        return cls(symmetric / symmetric.sum(axis=1, keepdims=True))

    @classmethod
    def cycle(cls, size: int, forward: float, backward: float) -> 'FiniteChain':
        """Цепь на цикле: шаг вперед с вероятностью forward, назад с backward, иначе на месте."""
        stay = 1.0 - forward - backward
        if size < 3 or stay < 0 or forward < 0 or backward < 0:  # noqa: PLR2004
            raise InvalidArgumentError('Нужны size ≥ 3 и неотрицательные вероятности с суммой ≤ 1')
        matrix = stay * np.eye(size)
        matrix += forward * np.roll(np.eye(size), 1, axis=1)
        matrix += backward * np.roll(np.eye(size), -1, axis=1)
        return cls(matrix)

    @property
    def size(self) -> int:
        """Число состояний d."""
        return int(self.matrix.shape[0])

    @property
    def positive(self) -> bool:
        """Все переходы положительны."""
        return bool(np.all(self.matrix > 0))

    def unreachable_pair(self) -> tuple[int, int] | None:
        """Пара (x, y), где y недостижимо из x; None для неприводимой цепи."""
        graph = sparse.csr_matrix(self.matrix > 0)
        count, _ = csgraph.connected_components(graph, directed=True, connection='strong')
        if count == 1:
            return None
        distances = csgraph.shortest_path(graph, unweighted=True)
        source, target = np.argwhere(np.isinf(distances))[0]
        return int(source), int(target)

    @property
    def irreducible(self) -> bool:
        """Неприводимость по достижимости."""
        return self.unreachable_pair() is None

    def require_irreducible(self) -> None:
        """Бросает ReducibleChainError с недостижимой парой."""
        pair = self.unreachable_pair()
        if pair is not None:
            raise ReducibleChainError(*pair)

    def require_positive(self) -> None:
        """Бросает PositivityRequiredError при нулевом переходе."""
        if not self.positive:
            raise PositivityRequiredError('Нужна матрица переходов со всеми положительными элементами')

    def stationary_distribution(self) -> 'NDArray[np.float64]':
        """π = πP, Σπ = 1."""
        self.require_irreducible()
        _, vector = _perron(self.matrix.T)
        return vector

    def entropy_production(self) -> 'NDArray[np.float64]':
        """σ(x, y) = log P(x, y)/P(y, x); требует положительности."""
        self.require_positive()
        return np.log(self.matrix) - np.log(self.matrix.T)

    def to_csv(self, path: 'Path') -> None:
        """Пишет d, затем строки матрицы."""
        with path.open('w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle)
            writer.writerow([self.size])
            writer.writerows([[repr(float(value)) for value in row] for row in self.matrix])

    @classmethod
    def from_csv(cls, path: 'Path') -> 'FiniteChain':
        """Читает цепь в формате `to_csv`."""
        with path.open(encoding='utf-8', newline='') as handle:
            rows = [row for row in csv.reader(handle) if row]
        if not rows:
            raise InvalidArgumentError(f'Файл цепи пуст: {path}')
        size = int(rows[0][0])
        entries = [[float(value) for value in row] for row in rows[1:]]
        if len(entries) != size or any(len(row) != size for row in entries):
            raise InvalidArgumentError(f'Ожидалась матрица {size}×{size} в файле {path}')
        return cls(np.array(entries))


def _perron(matrix: 'NDArray[np.float64]') -> tuple[float, 'NDArray[np.float64]']:
    """Корень Перрона и положительный вектор (сумма 1) степенным методом по I + A."""
    size = matrix.shape[0]
    shifted = matrix + np.eye(size)
    vector = np.full(size, 1.0 / size)
    for _ in range(POWER_MAX_ITERATIONS):
        image = shifted @ vector
        value = float(image.sum())
        image /= value
        if float(np.abs(image - vector).max()) <= POWER_TOLERANCE:
            return value - 1.0, image
        vector = image
    residual = float(np.abs(matrix @ vector - (value - 1.0) * vector).max())
    if residual > 1e-10:  # noqa: PLR2004
        raise NumericalError(f'Степенной метод не сошелся, невязка {residual:.3g}')
    return value - 1.0, vector


def tilted_matrix(chain: FiniteChain, potential: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
    """Элементы P(x, y)·e^{V(y)}."""
    values = np.asarray(potential, dtype=np.float64)
    if values.shape != (chain.size,):
        raise InvalidArgumentError(f'Потенциал должен иметь форму ({chain.size},)')
    return chain.matrix * np.exp(values)[None, :]


def tilted_pressure(chain: FiniteChain, potential: 'NDArray[np.float64]') -> float:
    """Q(V) = log ρ(P e^V); Q(V + c) = Q(V) + c.

    Raises:
        ReducibleChainError: Если цепь приводима.
    """
    chain.require_irreducible()
    values = np.asarray(potential, dtype=np.float64)
    top = float(values.max())
    radius, _ = _perron(tilted_matrix(chain, values - top))
    return math.log(radius) + top


@dataclass(frozen=True, eq=False)
class EigenTriple:
    """λ_V, правый вектор h_V и левая вероятностная мера μ_V, ⟨h, μ⟩ = 1."""

    eigenvalue: float
    right: 'NDArray[np.float64]'
    left: 'NDArray[np.float64]'


def fk_eigentriple(chain: FiniteChain, potential: 'NDArray[np.float64]') -> EigenTriple:
    """Собственная тройка ядра 𝔓_V f(x) = Σ_y P(x, y) e^{V(y)} f(y).

    Raises:
        PositivityRequiredError: Если в цепи есть нулевой переход.
    """
    chain.require_positive()
    matrix = tilted_matrix(chain, potential)
    eigenvalue, right = _perron(matrix)
    _, left = _perron(matrix.T)
    right = right / float(left @ right)
    return EigenTriple(eigenvalue, right, left)


def fk_certificate(
    chain: FiniteChain, potential: 'NDArray[np.float64]', triple: EigenTriple, trials: int = 5, seed: int = 0
) -> float:
    """sup-норма λ^{−k}𝔓_k f − ⟨f, μ⟩h для случайных f при k, когда она перестает убывать."""
    matrix = tilted_matrix(chain, potential) / triple.eigenvalue
    rng = stream_for(seed, StreamStage.oracle, 0)
    worst = 0.0
    for _ in range(trials):
        function = rng.uniform(-1.0, 1.0, chain.size)
        limit = float(triple.left @ function) * triple.right
        image = function
        gap = math.inf
        for _ in range(CERTIFICATE_STEPS):
            image = matrix @ image
            gap = float(np.abs(image - limit).max())
            if gap <= CERTIFICATE_TOLERANCE:
                break
        worst = max(worst, gap)
    return worst


def twisted_kernel(chain: FiniteChain, potential: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
    """𝔔(x, y) = P(x, y) e^{V(y)} h_V(y) / (λ_V h_V(x)); строки в сумме дают 1."""
    triple = fk_eigentriple(chain, potential)
    matrix = tilted_matrix(chain, potential) * triple.right[None, :]
    return matrix / (triple.eigenvalue * triple.right[:, None])


def _equilibrium(chain: FiniteChain, potential: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
    """∇Q(V) = h_V μ_V / ⟨h_V, μ_V⟩ (для неприводимой цепи)."""
    values = np.asarray(potential, dtype=np.float64)
    matrix = tilted_matrix(chain, values - float(values.max()))
    _, right = _perron(matrix)
    _, left = _perron(matrix.T)
    product = right * left
    return product / product.sum()


def _validate_measure(measure: 'NDArray[np.float64]', size: int) -> 'NDArray[np.float64]':
    values = np.asarray(measure, dtype=np.float64)
    if values.shape != (size,) or np.any(values < 0) or abs(float(values.sum()) - 1.0) > ROW_TOLERANCE:
        raise InvalidArgumentError(f'Ожидалась вероятностная мера на {size} состояниях')
    return values


@dataclass(frozen=True)
class Level2Rate:
    """I(ν) двумя способами.

    Attributes:
        variational: Способ A, sup_g Σ ν log(g/Pg).
        legendre: Способ B, sup_V ⟨V, ν⟩ − Q(V).
        discrepancy: |A − B|.
        agreed: discrepancy ≤ 1e−6.
    """

    variational: float
    legendre: float
    discrepancy: float
    agreed: bool

    @property
    def value(self) -> float:
        """Большее из двух (оба являются нижними оценками супремума)."""
        return max(self.variational, self.legendre)


def _variational_objective(
    matrix: 'NDArray[np.float64]', measure: 'NDArray[np.float64]', w: 'NDArray[np.float64]'
) -> tuple[float, 'NDArray[np.float64]']:
    """−Σ ν (w − log Pe^w) и его градиент."""
    shift = float(w.max())
    weights = np.exp(w - shift)
    image = matrix @ weights
    value = -float(measure @ (w - shift - np.log(image)))
    gradient = -(measure - weights * (matrix.T @ (measure / image)))
    return value, gradient


def _legendre_objective(
    chain: FiniteChain, measure: 'NDArray[np.float64]', potential: 'NDArray[np.float64]'
) -> tuple[float, 'NDArray[np.float64]']:
    """−(⟨V, ν⟩ − Q(V)) и его градиент."""
    value = -(float(potential @ measure) - tilted_pressure(chain, potential))
    return value, -(measure - _equilibrium(chain, potential))


def dv_rate_level2(
    chain: FiniteChain,
    measure: 'NDArray[np.float64]',
    *,
    seed: int = 0,
    warm_start: 'NDArray[np.float64] | None' = None,
) -> Level2Rate:
    """Функция скорости Донскера–Варадана уровня 2 двумя независимыми способами.

    Args:
        chain: Неприводимая цепь.
        measure: Вероятностная мера ν.
        seed: Зерно случайных стартов.
        warm_start: Начальный потенциал для обоих способов (вместе со случайными стартами).

    Returns:
        Level2Rate: Значения, расхождение и признак согласия.
    """
    chain.require_irreducible()
    nu = _validate_measure(measure, chain.size)
    rng = stream_for(seed, StreamStage.oracle, 1)
    starts = [np.zeros(chain.size)]
    if warm_start is not None:
        starts.append(np.asarray(warm_start, dtype=np.float64))
    starts.extend(rng.normal(0.0, 1.0, chain.size) for _ in range(RESTARTS - len(starts)))

    options = {'gtol': 1e-12, 'maxiter': 10_000}
    variational = -math.inf
    for start in starts:
        result = optimize.minimize(
            lambda w: _variational_objective(chain.matrix, nu, w), start, jac=True, method='BFGS', options=options
        )
        variational = max(variational, -float(result.fun))

    legendre = -math.inf
    for start in starts[:2]:
        result = optimize.minimize(
            lambda v: _legendre_objective(chain, nu, v), start, jac=True, method='BFGS', options=options
        )
        legendre = max(legendre, -float(result.fun))

    discrepancy = abs(variational - legendre)
    agreed = discrepancy <= AGREEMENT
    if not agreed:
        logger.warning('Способы уровня 2 разошлись', discrepancy=discrepancy)
    return Level2Rate(variational, legendre, discrepancy, agreed)


@dataclass(frozen=True, eq=False)
class MarkovMeasure:
    """Марковская мера порядка r на X^ℤ.

    Attributes:
        marginal: Распределение слов длины r, форма (d^r,), порядок C.
        kernel: Условный закон следующего состояния по слову, форма (d^r, d).
        order: r ≥ 1.
    """

    marginal: 'NDArray[np.float64]'
    kernel: 'NDArray[np.float64]'
    order: int = 1

    def __post_init__(self) -> None:
        """Проверяет формы и стохастичность."""
        marginal = np.array(self.marginal, dtype=np.float64)
        kernel = np.array(self.kernel, dtype=np.float64)
        if self.order < 1 or kernel.ndim != 2 or marginal.shape != (kernel.shape[0],):  # noqa: PLR2004
            raise InvalidArgumentError('Несогласованные формы марковской меры')
        if kernel.shape[0] != kernel.shape[1] ** self.order:
            raise InvalidArgumentError('Число слов должно равняться d^r')
        _validate_measure(marginal, marginal.size)
        if np.any(kernel < 0) or float(np.abs(kernel.sum(axis=1) - 1.0).max()) > ROW_TOLERANCE:
            raise InvalidArgumentError('Ядро марковской меры не стохастично')
        object.__setattr__(self, 'marginal', marginal)
        object.__setattr__(self, 'kernel', kernel)

    @classmethod
    def from_chain(cls, chain: FiniteChain) -> 'MarkovMeasure':
        """Собственная стационарная мера путей цепи."""
        return cls(chain.stationary_distribution(), chain.matrix.copy())

    @classmethod
    def product(cls, measure: 'NDArray[np.float64]') -> 'MarkovMeasure':
        """Произведение ν^⊗."""
        nu = np.asarray(measure, dtype=np.float64)
        return cls(nu, np.tile(nu, (nu.size, 1)))

    @classmethod
    def from_pair(cls, pair: 'NDArray[np.float64]') -> 'MarkovMeasure':
        """Мера порядка 1 по двумерному маргиналу λ(x₀, x₁) с равными проекциями."""
        joint = np.asarray(pair, dtype=np.float64)
        marginal = joint.sum(axis=1)
        if np.any(marginal <= 0):
            raise InvalidArgumentError('Маргинал пары должен быть положительным')
        return cls(marginal, joint / marginal[:, None])

    @property
    def states(self) -> int:
        """Число состояний d."""
        return int(self.kernel.shape[1])

    def block_marginal(self) -> 'NDArray[np.float64]':
        """Распределение слов длины r + 1, форма (d^{r+1},)."""
        return (self.marginal[:, None] * self.kernel).reshape(-1)

    def shift_residual(self) -> float:
        """sup |λ_r(x₂..x_{r+1}) − λ_r(x₁..x_r)|: невязка сдвиг-инвариантности."""
        blocks = self.block_marginal().reshape(self.states, -1)
        return float(np.abs(blocks.sum(axis=0) - self.marginal).max())

    def reversed(self) -> 'MarkovMeasure':
        """λ∘θ для меры порядка 1."""
        if self.order != 1:
            raise InvalidArgumentError('Обращение времени реализовано для порядка 1')
        return MarkovMeasure.from_pair(self.block_marginal().reshape(self.states, self.states).T)


def word_chain(chain: FiniteChain, order: int) -> FiniteChain:
    """Цепь слов на X^{r+1}: (x₀..x_r) → (x₁..x_{r+1}) с вероятностью P(x_r, x_{r+1})."""
    if order < 1:
        raise InvalidArgumentError(f'Порядок должен быть ≥ 1: {order}')
    size = chain.size
    words = size ** (order + 1)
    matrix = np.zeros((words, words))
    for word in range(words):
        tail = word % size ** order
        last = word % size
        matrix[word, tail * size : tail * size + size] = chain.matrix[last]
    return FiniteChain(matrix)


@dataclass(frozen=True)
class Level3Rate:
    """I(λ) по формуле энтропии и через цепь слов.

    Attributes:
        entropy: Σ_w λ(w) KL(λ(·|w) ‖ P(w_last, ·)); inf вне сдвиг-инвариантных мер.
        dual: Уровень 2 цепи слов в (r+1)-маргинале λ (Лежандр давления).
        discrepancy: |entropy − dual| (nan при бесконечном значении).
        shift_residual: Невязка сдвиг-инвариантности.
        shift_invariant: Невязка не превышает 1e−10.
    """

    entropy: float
    dual: float
    discrepancy: float
    shift_residual: float
    shift_invariant: bool


def _relative_entropy_rows(kernel: 'NDArray[np.float64]', reference: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
    """KL(kernel[w] ‖ reference[w]) построчно; inf при нарушении абсолютной непрерывности."""
    with np.errstate(divide='ignore', invalid='ignore'):
        terms = np.where(kernel > 0, kernel * (np.log(kernel) - np.log(reference)), 0.0)
    return terms.sum(axis=1)


def level3_entropy(chain: FiniteChain, measure: MarkovMeasure) -> float:
    """Формула энтропии Донскера–Варадана для марковской меры порядка r."""
    if measure.states != chain.size:
        raise InvalidArgumentError('Мера и цепь заданы на разных пространствах')
    if measure.shift_residual() > SHIFT_INVARIANCE:
        return math.inf
    last = np.arange(measure.kernel.shape[0]) % chain.size
    rows = _relative_entropy_rows(measure.kernel, chain.matrix[last])
    weights = measure.marginal > 0
    return float(measure.marginal[weights] @ rows[weights])


def dv_rate_level3(chain: FiniteChain, measure: MarkovMeasure, *, dual: bool = True) -> Level3Rate:
    """Функция скорости уровня 3 на марковской мере порядка r.

    Args:
        chain: Неприводимая цепь.
        measure: Мера λ.
        dual: Вычислять ли перекрестную проверку через цепь слов.

    Returns:
        Level3Rate: Значения и невязки; несдвиг-инвариантная мера дает inf.
    """
    residual = measure.shift_residual()
    invariant = residual <= SHIFT_INVARIANCE
    entropy = level3_entropy(chain, measure)
    if not invariant:
        logger.info('Мера не сдвиг-инвариантна, функция скорости бесконечна', residual=residual)
        return Level3Rate(math.inf, math.inf, math.nan, residual, shift_invariant=False)
    dual_value = math.nan
    if dual:
        dual_value = dv_rate_level2(word_chain(chain, measure.order), measure.block_marginal()).legendre
    discrepancy = abs(entropy - dual_value) if dual else math.nan
    return Level3Rate(entropy, dual_value, discrepancy, residual, shift_invariant=True)


def mean_entropy_production(chain: FiniteChain, measure: MarkovMeasure | None = None) -> float:
    """⟨σ, λ⟩ = Σ λ(x, y) σ(x, y); по умолчанию λ есть стационарная мера цепи."""
    if measure is None:
        measure = MarkovMeasure.from_chain(chain)
    if measure.order != 1:
        raise InvalidArgumentError('Производство энтропии определено для меры порядка 1')
    pair = measure.block_marginal().reshape(chain.size, chain.size)
    return float((pair * chain.entropy_production()).sum())


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    """σ_V и проверки тождества равновесия.

    Attributes:
        distribution: σ_V.
        identity_residual: |⟨V, σ⟩ − I(σ) − Q(V)|.
        zero_value: I_V(σ_V).
        others_minimum: min I_V по случайным другим мерам.
    """

    distribution: 'NDArray[np.float64]'
    identity_residual: float
    zero_value: float
    others_minimum: float = field(default=math.nan)


def equilibrium_state(
    chain: FiniteChain, potential: 'NDArray[np.float64]', *, trials: int = 50, seed: int = 0
) -> EquilibriumState:
    """σ_V = h_V μ_V и проверка ⟨V, σ⟩ − I(σ) = Q(V), I_V(σ_V) = 0, I_V > 0 на других мерах."""
    values = np.asarray(potential, dtype=np.float64)
    triple = fk_eigentriple(chain, values)
    distribution = triple.right * triple.left
    distribution = distribution / distribution.sum()
    pressure = tilted_pressure(chain, values)

    def shifted_rate(measure: 'NDArray[np.float64]', warm: 'NDArray[np.float64] | None') -> float:
        return dv_rate_level2(chain, measure, seed=seed, warm_start=warm).value - float(values @ measure) + pressure

    zero_value = shifted_rate(distribution, values)
    residual = abs(zero_value)
    rng = stream_for(seed, StreamStage.oracle, 2)
    others = [shifted_rate(rng.dirichlet(np.ones(chain.size)), None) for _ in range(trials)]
    return EquilibriumState(
        distribution=distribution,
        identity_residual=residual,
        zero_value=zero_value,
        others_minimum=min(others, default=math.nan),
    )


def _ep_pressure(chain: FiniteChain, slope: float) -> float:
    """e(s) = log ρ(P(x, y) e^{s σ(x, y)})."""
    matrix = chain.matrix ** (1.0 + slope) * chain.matrix.T ** (-slope)
    radius, _ = _perron(matrix)
    return math.log(radius)


def ep_rate_function(chain: FiniteChain, value: float) -> tuple[float, bool]:
    """I(r) = sup_s (s r − e(s)) и признак того, что супремум внутренний."""
    result = optimize.minimize_scalar(
        lambda s: _ep_pressure(chain, s) - s * value,
        bounds=(-GC_SLOPE_BOUND, GC_SLOPE_BOUND),
        method='bounded',
        options={'xatol': 1e-12},
    )
    interior = abs(float(result.x)) < GC_SLOPE_BOUND - 1.0
    return -float(result.fun), interior


@dataclass(frozen=True, eq=False)
class GallavottiCohenReport:
    """Проверка флуктуационных соотношений.

    Attributes:
        grid: Значения r, на которых обе точки ±r внутренние.
        residuals: I(−r) − I(r) − r.
        max_residual: Наибольший модуль невязки.
        mean_ep: Σ π P σ.
        derivative_at_zero: e'(0) центральной разностью.
        level3_max_residual: max |I(λ∘θ) − I(λ) − ⟨σ, λ⟩| по случайным λ.
    """

    grid: 'NDArray[np.float64]'
    residuals: 'NDArray[np.float64]'
    max_residual: float
    mean_ep: float
    derivative_at_zero: float
    level3_max_residual: float

    def rows(self) -> list[dict[str, float]]:
        """Строки r, I(r), I(−r), residual."""
        return [
            {'r': float(r), 'residual': float(residual)} for r, residual in zip(self.grid, self.residuals, strict=True)
        ]


def random_markov_measure(size: int, rng: np.random.Generator) -> MarkovMeasure:
    """Случайная положительная сдвиг-инвариантная мера порядка 1."""
    kernel = rng.dirichlet(np.ones(size), size=size)
    stationary = FiniteChain(kernel).stationary_distribution()
    return MarkovMeasure(stationary, kernel)


def gc_symmetry_check(
    chain: FiniteChain, grid: 'Sequence[float]', *, measures: int = 20, seed: int = 0
) -> GallavottiCohenReport:
    """Проверяет I(−r) = I(r) + r, e'(0) = ⟨σ, π⊗P⟩ ≥ 0 и I(λ∘θ) − I(λ) = ⟨σ, λ⟩.

    Точки r, для которых супремум уходит на границу интервала наклонов, отбрасываются.

    Raises:
        PositivityRequiredError: Если в цепи есть нулевой переход.
    """
    chain.require_positive()
    kept = []
    residuals = []
    for value in np.asarray(grid, dtype=np.float64):
        forward, inside_forward = ep_rate_function(chain, float(value))
        backward, inside_backward = ep_rate_function(chain, float(-value))
        if inside_forward and inside_backward:
            kept.append(float(value))
            residuals.append(backward - forward - float(value))
    mean_ep = mean_entropy_production(chain)
    derivative = (_ep_pressure(chain, GC_STEP) - _ep_pressure(chain, -GC_STEP)) / (2.0 * GC_STEP)

    rng = stream_for(seed, StreamStage.oracle, 3)
    level3 = 0.0
    for _ in range(measures):
        measure = random_markov_measure(chain.size, rng)
        gap = level3_entropy(chain, measure.reversed()) - level3_entropy(chain, measure)
        level3 = max(level3, abs(gap - mean_entropy_production(chain, measure)))

    values = np.array(residuals)
    report = GallavottiCohenReport(
        grid=np.array(kept),
        residuals=values,
        max_residual=float(np.abs(values).max(initial=0.0)),
        mean_ep=mean_ep,
        derivative_at_zero=derivative,
        level3_max_residual=level3,
    )
    logger.info('Симметрия Галлавотти–Коэна проверена', points=len(kept), max_residual=report.max_residual)
    return report


@dataclass(frozen=True, eq=False)
class RateFunctionReport:
    """Значения уровня 2 в точках и наибольшее расхождение способов."""

    points: 'NDArray[np.float64]'
    variational: 'NDArray[np.float64]'
    legendre: 'NDArray[np.float64]'
    max_discrepancy: float

    def rows(self) -> list[dict[str, float]]:
        """Строки схемы oracle: point, nu_0..nu_{d−1}, I_A, I_B."""
        return [
            {
                'point': index,
                **{f'nu_{state}': float(value) for state, value in enumerate(point)},
                'rate_variational': float(self.variational[index]),
                'rate_legendre': float(self.legendre[index]),
            }
            for index, point in enumerate(self.points)
        ]


def rate_function_report(chain: FiniteChain, points: int, seed: int = 0) -> RateFunctionReport:
    """Уровень 2 в стационарной мере и в `points` случайных мерах Дирихле."""
    rng = stream_for(seed, StreamStage.oracle, 4)
    measures = [chain.stationary_distribution()]
    measures.extend(rng.dirichlet(np.ones(chain.size)) for _ in range(points))
    rates = [dv_rate_level2(chain, measure, seed=seed) for measure in measures]
    return RateFunctionReport(
        points=np.array(measures),
        variational=np.array([rate.variational for rate in rates]),
        legendre=np.array([rate.legendre for rate in rates]),
        max_discrepancy=max(rate.discrepancy for rate in rates),
    )

