"""Named trainable parameters, the Adam update and parameter checkpoints."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

CHECKPOINT_VERSION = "rawgnn-params/1"


class MissingGradientError(RuntimeError):
    pass


def xavier_uniform(shape, rng):
    fan_in, fan_out = shape[0], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def attention_uniform(shape, rng):
    bound = np.sqrt(3.0 / shape[0])
    return rng.uniform(-bound, bound, size=shape)


def zeros(shape, rng=None):
    return np.zeros(shape)


INITIALIZERS = {
    "xavier_uniform": xavier_uniform,
    "attention_uniform": attention_uniform,
    "zeros": zeros,
}


class ParamStore:
    """Ordered mapping ``name -> Tensor`` of trainable parameters."""

    def __init__(self):
        self._params = {}
        self.init_spec = {}

    def add(self, name, shape, init="xavier_uniform", rng=None) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        values = INITIALIZERS[init](tuple(shape), rng)
        t = Tensor(values, requires_grad=True, name=name)
        self._params[name] = t
        self.init_spec[name] = init
        return t

    def set(self, name, values) -> Tensor:
        """Add a parameter with explicit values."""
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(values, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        self.init_spec[name] = "explicit"
        return t

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    @property
    def n_values(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def snapshot(self) -> dict:
        return {k: t.values.copy() for k, t in self._params.items()}

    def restore(self, snap: dict) -> None:
        if set(snap) != set(self._params):
            raise KeyError("snapshot names do not match the parameter store")
        for k, t in self._params.items():
            if snap[k].shape != t.shape:
                raise ValueError(f"{k}: shape {snap[k].shape} != {t.shape}")
            t.values = snap[k].copy()


@dataclass
class AdamState:
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(ps: ParamStore, st: AdamState) -> None:
    """One Adam update with bias correction; L2 weight decay is added to the
    gradient before the moment updates. Clears all gradients."""
    missing = [k for k, t in ps.items() if t.grad is None]
    if missing:
        raise MissingGradientError(f"no gradient for {missing[:3]}{'...' if len(missing) > 3 else ''}")
    st.step += 1
    bc1 = 1.0 - st.beta1 ** st.step
    bc2 = 1.0 - st.beta2 ** st.step
    for k, t in ps.items():
        g = t.grad
        if st.weight_decay:
            g = g + st.weight_decay * t.values
        if k not in st.m:
            st.m[k] = np.zeros_like(t.values)
            st.v[k] = np.zeros_like(t.values)
        st.m[k] = st.beta1 * st.m[k] + (1.0 - st.beta1) * g
        st.v[k] = st.beta2 * st.v[k] + (1.0 - st.beta2) * (g * g)
        t.values = t.values - st.lr * (st.m[k] / bc1) / (np.sqrt(st.v[k] / bc2) + st.eps)
        t.grad = None


def save_params(path, ps: ParamStore, meta=None) -> None:
    """Write parameters (name, shape, row-major float64 values) to ``.npz``.

    ``meta`` must be JSON-serialisable; it is stored next to the arrays
    together with the format version.
    """
    header = {"version": CHECKPOINT_VERSION, "names": ps.names(), "init": ps.init_spec, "meta": meta or {}}
    arrays = {f"p{i}": np.ascontiguousarray(ps[k].values) for i, k in enumerate(ps.names())}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_params(path):
    """Inverse of :func:`save_params`; returns ``(ParamStore, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["__header__"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
        ps = ParamStore()
        for i, k in enumerate(header["names"]):
            ps.set(k, z[f"p{i}"])
            ps.init_spec[k] = header["init"].get(k, "explicit")
    return ps, header["meta"]
