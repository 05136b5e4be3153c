"""Parameter bookkeeping shared by every model, and the mixture type."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rephrasekit.numcore.tensor import Parameter, ShapeError, Tensor


class ParamStore:
    """Creates and remembers named parameters with seeded initialization."""

    def __init__(self, seed: int, dtype=np.float64):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Parameter] = {}

    def param(self, name: str, shape: tuple[int, ...], init: str = "glorot") -> Parameter:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already defined")
        if init == "glorot":
            fan_in = shape[-1] if len(shape) > 1 else shape[0]
            fan_out = shape[0]
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            data = self.rng.uniform(-bound, bound, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        elif init == "embedding":
            data = self.rng.normal(0.0, 0.1, size=shape)
        elif init == "forget_one":
            # LSTM bias layout [i | f | g | o]: start with open forget gates
            data = np.zeros(shape)
            h = shape[0] // 4
            data[h : 2 * h] = 1.0
        else:
            raise ValueError(f"unknown init {init!r}")
        p = Parameter(data.astype(self.dtype), name)
        self._params[name] = p
        return p

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if strict and (missing or unexpected):
            raise KeyError(
                f"state mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(unexpected)[:5]}"
            )
        for name, arr in state.items():
            if name not in self._params:
                continue
            p = self._params[name]
            if tuple(arr.shape) != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} vs model {p.shape}")
            p.data = arr.astype(self.dtype, copy=True)
            p.grad = None


class Model:
    """Base: training-mode flag, dropout RNG, parameter plumbing."""

    arch = "base"

    def __init__(self, seed: int, dtype=np.float64):
        self.store = ParamStore(seed, dtype)
        self.training = True
        self._dropout_seed = seed + 0x9E3779B9
        self.dropout_rng = np.random.default_rng(self._dropout_seed)

    @property
    def dtype(self):
        return self.store.dtype

    def parameters(self) -> list[Parameter]:
        return self.store.parameters()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True) -> "Model":
        self.training = mode
        return self

    def eval(self) -> "Model":
        return self.train(False)

    def reseed_dropout(self, seed: int | None = None) -> None:
        """Restart the dropout mask stream (grad checks need repeatability)."""
        self.dropout_rng = np.random.default_rng(
            self._dropout_seed if seed is None else seed
        )

    def state_dict(self) -> dict[str, np.ndarray]:
        return self.store.state_dict()

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        self.store.load_state_dict(state, strict=strict)

    def config_dict(self) -> dict:
        raise NotImplementedError


@dataclass
class MixtureDistribution:
    """Pointer-generator output for one or more decode steps.

    Distribution axes are last: ``p_vocab`` (..., vocab), ``p_copy``
    (..., src_len), ``alpha_mix`` (..., 1), ``p_output`` (..., vocab+oov).
    The output mixes generation and copying:
    p_output = (1-alpha)·p_vocab ⊕ alpha·(p_copy scattered onto the
    source tokens' extended ids), so it sums to 1 wherever the inputs do.
    """

    p_vocab: Tensor
    p_copy: Tensor
    alpha_mix: Tensor
    p_output: Tensor

    def validate(self, atol: float = 1e-9) -> None:
        for name, t in (("p_vocab", self.p_vocab), ("p_copy", self.p_copy),
                        ("p_output", self.p_output)):
            total = t.data.sum(axis=-1)
            if not np.allclose(total, 1.0, atol=atol):
                raise AssertionError(f"{name} sums deviate from 1 by {np.abs(total - 1).max()}")
        a = self.alpha_mix.data
        if not ((a >= 0.0) & (a <= 1.0)).all():
            raise AssertionError("alpha_mix left [0, 1]")
