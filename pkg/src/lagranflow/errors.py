"""Иерархия исключений lagranflow.

Две ветви:
- ошибки аргументов и конфигурации (наследуют `ValueError`);
- численные отказы (наследуют `ArithmeticError`).

`run_experiment` переводит первую ветвь в код выхода 2 (конфигурация) или 1,
вторую в код выхода 1.
"""


class LagranflowError(Exception):
    """Базовое исключение пакета."""


class InvalidArgumentError(LagranflowError, ValueError):
    """Аргумент операции вне допустимой области."""


class ConfigurationError(LagranflowError, ValueError):
    """Ошибка файла конфигурации эксперимента."""


class LocalityRadiusError(InvalidArgumentError):
    """Пара состояний лежит дальше радиуса локальности."""

    def __init__(self, distance: float, radius: float) -> None:
        """Сохраняет расстояние и радиус для отчета."""
        super().__init__(f'Расстояние {distance:.6g} превышает радиус локальности {radius:.6g}')
        self.distance = distance
        self.radius = radius


class NumericalError(LagranflowError, ArithmeticError):
    """Базовый численный отказ."""


class IntegrationDivergedError(NumericalError):
    """Интегрирование дало NaN или переполнение."""

    def __init__(self, interval: int, step: int) -> None:
        """Сохраняет номер интервала и подшага."""
        super().__init__(f'Интегрирование разошлось: интервал {interval}, подшаг {step}')
        self.interval = interval
        self.step = step


class FixedPointDivergedError(NumericalError):
    """Итерация Пикара перестала сжимать невязку."""


class PositivityRequiredError(NumericalError):
    """Операция требует строго положительной матрицы переходов."""


class ReducibleChainError(NumericalError):
    """Цепь приводима: найдена недостижимая пара состояний."""

    def __init__(self, source: int, target: int) -> None:
        """Сохраняет недостижимую пару."""
        super().__init__(f'Состояние {target} недостижимо из состояния {source}')
        self.pair = (source, target)


class UndefinedEntropyProductionError(NumericalError):
    """Плотность обращается в ноль на одном из порядков пути."""

    def __init__(self, ordering: str) -> None:
        """Сохраняет порядок пути, на котором плотность нулевая."""
        super().__init__(f'Производство энтропии не определено: нулевая плотность на порядке {ordering}')
        self.ordering = ordering
