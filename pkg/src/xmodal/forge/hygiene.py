"""Guards that keep held-out target labels away from training code.

Training stages run inside :func:`training_stage`; label reads are only
granted inside :func:`evaluation` and outside any training stage. Every
request is logged so tests can prove that training never asked.
"""

from __future__ import annotations

import contextlib
import contextvars
import threading
from dataclasses import dataclass

_STAGE: contextvars.ContextVar[str | None] = contextvars.ContextVar("training_stage", default=None)
_EVAL: contextvars.ContextVar[bool] = contextvars.ContextVar("evaluation", default=False)
_LOCK = threading.Lock()
_LOG: list["LabelAccess"] = []


class LabelAccessError(RuntimeError):
    pass


@dataclass(frozen=True)
class LabelAccess:
    split: str
    stage: str | None
    granted: bool


@contextlib.contextmanager
def training_stage(name: str):
    token = _STAGE.set(name)
    try:
        yield
    finally:
        _STAGE.reset(token)


@contextlib.contextmanager
def evaluation():
    token = _EVAL.set(True)
    try:
        yield
    finally:
        _EVAL.reset(token)


def current_stage() -> str | None:
    return _STAGE.get()


def request_labels(split: str) -> None:
    stage = _STAGE.get()
    granted = stage is None and _EVAL.get()
    with _LOCK:
        _LOG.append(LabelAccess(split, stage, granted))
    if stage is not None:
        raise LabelAccessError(f"held-out labels of '{split}' requested during training stage '{stage}'")
    if not granted:
        raise LabelAccessError(f"held-out labels of '{split}' requested outside an evaluation context")


def access_log() -> list[LabelAccess]:
    with _LOCK:
        return list(_LOG)


def training_accesses() -> list[LabelAccess]:
    return [a for a in access_log() if a.stage is not None]


def reset_log() -> None:
    with _LOCK:
        _LOG.clear()
