"""Входной модуль в тесты."""
