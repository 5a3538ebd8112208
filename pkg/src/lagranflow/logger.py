"""Журнал lagranflow: structlog поверх модуля logging, одна JSON-строка на событие.

Stdout и каталог результатов отданы данным экспериментов, поэтому журнал пишется в stderr;
файл журнала (`--log-file`) только дублирует этот поток.
"""

import functools
import json
import logging
import sys
from enum import Enum, unique
from typing import TYPE_CHECKING, Any

import structlog

if TYPE_CHECKING:
    from pathlib import Path
    from types import TracebackType


APP_NAME = 'lagranflow'
DEFAULT_LOG_LEVEL = 'info'


@unique
class LogLevel(Enum):
    """Порог журнала, выбираемый флагом --log-level."""

    debug = 'debug'
    info = 'info'
    warning = 'warning'
    error = 'error'

    @property
    def numeric(self) -> int:
        """Уровень модуля logging."""
        return int(logging.getLevelName(self.value.upper()))


def _to_json(event: Any) -> str:
    return json.dumps(event, ensure_ascii=False)


def log_uncaught(
    exc_type: 'type[BaseException]', exc_value: BaseException, exc_traceback: 'TracebackType | None'
) -> None:
    """sys.excepthook: исключение, дошедшее до интерпретатора, попадает в журнал с трассировкой.

    Ctrl+C остается стандартному обработчику.
    """
    if issubclass(exc_type, KeyboardInterrupt):
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
        return
    get_logger().error('Необработанное исключение', exc_info=(exc_type, exc_value, exc_traceback))


def build_handlers(log_file: 'Path | None' = None) -> list[logging.Handler]:
    """Обработчики корневого логгера: stderr и, если задан, файл (каталог создается)."""
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    return handlers


def configure_logging(log_file: 'Path | None' = None, level: LogLevel = LogLevel.info) -> None:
    """Подключает structlog к корневому логгеру и перехватывает необработанные исключения.

    Args:
        log_file: Файл-копия журнала.
        level: Записи ниже этого уровня отбрасываются до рендеринга.
    """
    sys.excepthook = log_uncaught
    structlog.configure(
        processors=[
            structlog.processors.TimeStamper(fmt='iso', utc=True),
            structlog.processors.add_log_level,
            structlog.processors.format_exc_info,
            structlog.processors.JSONRenderer(serializer=_to_json),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.make_filtering_bound_logger(level.numeric),
        cache_logger_on_first_use=True,
    )
    root = logging.getLogger()
    root.handlers[:] = build_handlers(log_file)
    root.setLevel(level.numeric)


@functools.cache
def get_logger() -> structlog.BoundLogger:
    """Общий логгер процесса с полем app."""
    return structlog.get_logger(APP_NAME).bind(app=APP_NAME)
