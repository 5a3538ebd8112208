"""Модуль."""
