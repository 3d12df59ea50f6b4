"""Environment interface expected by the wrapper.

Anything with the modern five-tuple step API works:

    obs, info = env.reset(seed=..., options=...)
    obs, reward, terminated, truncated, info = env.step(action)

gymnasium environments satisfy this as-is; gymnasium itself is optional and
never imported at runtime. The ``truncated`` flag is stored as the service's
``timeout`` field.
"""

from __future__ import annotations

from typing import Any, Protocol, runtime_checkable


@runtime_checkable
class Env(Protocol):
    def reset(self, *, seed: int | None = None, options: dict | None = None) -> tuple[Any, dict]:
        ...

    def step(self, action: Any) -> tuple[Any, float, bool, bool, dict]:
        ...


def as_float_list(value: Any) -> list[float]:
    """Flatten an observation or action into the wire format (list of floats).

    Accepts scalars, sequences, and numpy arrays (via tolist).
    """
    if hasattr(value, "tolist"):
        value = value.tolist()
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        flat: list[float] = []
        for item in value:
            flat.extend(as_float_list(item))
        return flat
    raise TypeError(f"cannot convert {type(value).__name__} to a float list")
