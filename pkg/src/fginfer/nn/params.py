"""Named parameter storage with JSON checkpoints."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


class ParamStore:
    """Ordered mapping from parameter name to a leaf :class:`Tensor`."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.array(values, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def num_values(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (np.zeros_like(t.data) if t.grad is None else t.grad) for k, t in self._params.items()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            t = self._params[k]
            if np.shape(v) != t.shape:
                raise ValueError(f"shape mismatch for {k}: {np.shape(v)} vs {t.shape}")
            t.data = np.array(v, dtype=np.float64)

    def flat(self) -> np.ndarray:
        if not self._params:
            return np.zeros(0)
        return np.concatenate([t.data.ravel() for t in self._params.values()])

    def set_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for t in self._params.values():
            n = t.data.size
            t.data = np.array(vec[pos:pos + n], dtype=np.float64).reshape(t.shape)
            pos += n

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.grads().values()]) if self._params else np.zeros(0)

    def to_json(self, prefix: str = "") -> str:
        """JSON document ``{name: {shape, values}}`` with 17 significant digits."""
        parts = []
        for k, t in self._params.items():
            vals = ", ".join(_fmt(v) for v in t.data.ravel())
            parts.append(f'  {json.dumps(prefix + k)}: {{"shape": {json.dumps(list(t.shape))}, "values": [{vals}]}}')
        return "{\n" + ",\n".join(parts) + "\n}\n"

    def load_json(self, text: str, prefix: str = "") -> None:
        """Load values for every parameter of this store, validating shapes."""
        doc = json.loads(text)
        for k, t in self._params.items():
            key = prefix + k
            if key not in doc:
                raise ValueError(f"checkpoint is missing {key!r}")
            shape = tuple(doc[key]["shape"])
            if shape != t.shape:
                raise ValueError(f"checkpoint shape {shape} for {key!r} does not match {t.shape}")
            vals = np.asarray(doc[key]["values"], dtype=np.float64)
            if vals.size != int(np.prod(shape, dtype=np.int64)):
                raise ValueError(f"checkpoint entry {key!r} has {vals.size} values for shape {shape}")
            t.data = vals.reshape(shape)

    def save(self, path, prefix: str = "") -> None:
        Path(path).write_text(self.to_json(prefix))

    def load(self, path, prefix: str = "") -> None:
        self.load_json(Path(path).read_text(), prefix)
