"""Двумерное уравнение Навье–Стокса со случайными толчками и лагранжевой частицей."""

__version__ = '0.1.0'
