"""Bundled example systems (the library's regression corpus)."""

from __future__ import annotations

from importlib import resources

from ..sysfile import SystemFile, loads_system

__all__ = ["names", "source", "load", "path"]

_NAMES = ("vtol", "academic", "robot")


def names():
    return _NAMES


def source(name: str) -> str:
    if name not in _NAMES:
        raise KeyError(f"unknown bundled system {name!r}; have {_NAMES}")
    return resources.files(__package__).joinpath(f"{name}.sys").read_text("utf-8")


def path(name: str) -> str:
    if name not in _NAMES:
        raise KeyError(f"unknown bundled system {name!r}; have {_NAMES}")
    return str(resources.files(__package__).joinpath(f"{name}.sys"))


def load(name: str) -> SystemFile:
    return loads_system(source(name), path=f"{name}.sys")
