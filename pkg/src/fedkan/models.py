"""KAN and MLP classifiers over named parameter sets.

Networks are stateless architecture descriptions. Their parameters live in a
:class:`ModelParameters` container so that clients, the server and the
checkpoint writer all exchange the same flat, ordered structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import SeededRng, Tensor
from .errors import ConfigError, DimensionError
from .spline import SplineGrid, basis_eval, make_grid


class ModelParameters:
    """Ordered mapping of parameter name to float64 array."""

    def __init__(self, items: Iterable[tuple[str, np.ndarray]] | Mapping[str, np.ndarray] = ()):
        if isinstance(items, Mapping):
            items = items.items()
        self._data: dict[str, np.ndarray] = {}
        for name, values in items:
            if name in self._data:
                raise ValueError(f"duplicate parameter name {name!r}")
            self._data[name] = np.array(values, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    def __contains__(self, name: object) -> bool:
        return name in self._data

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelParameters):
            return NotImplemented
        return self.names == other.names and all(np.array_equal(self[n], other[n]) for n in self)

    def __repr__(self) -> str:
        body = ", ".join(f"{n}{tuple(v.shape)}" for n, v in self._data.items())
        return f"ModelParameters({body})"

    @property
    def names(self) -> list[str]:
        return list(self._data)

    def items(self):
        return self._data.items()

    def shapes(self) -> list[tuple[int, ...]]:
        return [v.shape for v in self._data.values()]

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self._data.values()))

    def copy(self) -> ModelParameters:
        return ModelParameters((n, v.copy()) for n, v in self._data.items())

    def same_layout(self, other: ModelParameters) -> bool:
        return self.names == other.names and self.shapes() == other.shapes()

    def map(self, fn) -> ModelParameters:
        return ModelParameters((n, fn(v)) for n, v in self._data.items())


def flatten(params: ModelParameters) -> np.ndarray:
    if len(params) == 0:
        return np.zeros(0)
    return np.concatenate([v.ravel() for _, v in params.items()])


def unflatten(template: ModelParameters, flat) -> ModelParameters:
    flat = np.asarray(flat, dtype=np.float64)
    total = template.num_parameters()
    if flat.ndim != 1 or flat.size != total:
        raise DimensionError(f"flat vector must have {total} entries", flat.shape)
    out, pos = [], 0
    for name, v in template.items():
        out.append((name, flat[pos : pos + v.size].reshape(v.shape).copy()))
        pos += v.size
    return ModelParameters(out)


@dataclass(frozen=True)
class KanSpec:
    """Layer widths including input and output, plus the shared grid settings."""

    widths: tuple[int, ...] = (4, 20, 20, 20, 3)
    grid_size: int = 5
    spline_order: int = 3
    grid_range: tuple[float, float] = (-2.0, 2.0)

    def __post_init__(self):
        if len(self.widths) < 2 or any(int(w) != w or w < 1 for w in self.widths):
            raise ConfigError(f"KAN widths must be >= 2 positive integers, got {list(self.widths)}")


@dataclass(frozen=True)
class MlpSpec:
    input_size: int = 4
    hidden_sizes: tuple[int, ...] = (20, 20, 20)
    output_size: int = 3
    dropout: float = 0.5

    def __post_init__(self):
        sizes = self.sizes
        if any(int(s) != s or s < 1 for s in sizes):
            raise ConfigError(f"MLP layer sizes must be positive integers, got {list(sizes)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_size, *self.hidden_sizes, self.output_size)


def _as_tensors(params) -> Mapping[str, Tensor]:
    if isinstance(params, ModelParameters):
        return {n: Tensor(v) for n, v in params.items()}
    return params


def _check_input(x: Tensor, width: int) -> None:
    if x.ndim != 2 or x.shape[1] != width:
        raise DimensionError(f"expected input of shape (batch, {width})", x.shape)


@dataclass(frozen=True)
class KanLayer:
    n_in: int
    n_out: int
    grid: SplineGrid


def kan_layer_forward(
    layer: KanLayer, spline_coeffs, base_weight, spline_scale, x
) -> Tensor:
    """out[b, j] = sum_i base_weight[i, j] * silu(x[b, i]) + spline_scale[i, j] * spline_ij(x[b, i])."""
    x = dc._lift(x)
    _check_input(x, layer.n_in)
    basis = basis_eval(layer.grid, x)  # (batch, n_in, B)
    spline_part = dc.einsum("bim,ijm,ij->bj", basis, spline_coeffs, spline_scale)
    return dc.silu(x) @ dc._lift(base_weight) + spline_part


@dataclass(frozen=True)
class KanNetwork:
    spec: KanSpec = field(default_factory=KanSpec)
    kind = "kan"

    @property
    def layers(self) -> list[KanLayer]:
        lo, hi = self.spec.grid_range
        grid = make_grid(self.spec.grid_size, self.spec.spline_order, lo, hi)
        w = self.spec.widths
        return [KanLayer(w[i], w[i + 1], grid) for i in range(len(w) - 1)]

    @property
    def input_width(self) -> int:
        return self.spec.widths[0]

    @property
    def num_classes(self) -> int:
        return self.spec.widths[-1]

    def init_parameters(self, rng: SeededRng) -> ModelParameters:
        items = []
        for i, layer in enumerate(self.layers):
            B = layer.grid.num_basis
            bound = 1.0 / math.sqrt(layer.n_in)
            items.append((f"layers.{i}.spline_coeffs", rng.normal(0.0, 0.1, (layer.n_in, layer.n_out, B))))
            items.append((f"layers.{i}.base_weight", rng.uniform(-bound, bound, (layer.n_in, layer.n_out))))
            items.append((f"layers.{i}.spline_scale", np.ones((layer.n_in, layer.n_out))))
        return ModelParameters(items)

    def forward(self, params, x, training: bool = False, rng: SeededRng | None = None) -> Tensor:
        # No dropout site in the KAN; ``training`` and ``rng`` are accepted for interface parity.
        p = _as_tensors(params)
        h = dc._lift(x)
        _check_input(h, self.input_width)
        for i, layer in enumerate(self.layers):
            h = kan_layer_forward(
                layer,
                p[f"layers.{i}.spline_coeffs"],
                p[f"layers.{i}.base_weight"],
                p[f"layers.{i}.spline_scale"],
                h,
            )
        return h


def dropout(h: Tensor, p: float, rng: SeededRng) -> Tensor:
    """Inverted dropout: keep with probability ``1 - p`` and rescale survivors."""
    if p == 0.0:
        return h
    keep = (rng.random(h.shape) >= p).astype(np.float64) / (1.0 - p)
    return dc.mul(h, Tensor(keep))


@dataclass(frozen=True)
class MlpNetwork:
    spec: MlpSpec = field(default_factory=MlpSpec)
    kind = "mlp"

    @property
    def input_width(self) -> int:
        return self.spec.input_size

    @property
    def num_classes(self) -> int:
        return self.spec.output_size

    def init_parameters(self, rng: SeededRng) -> ModelParameters:
        sizes = self.spec.sizes
        items = []
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            bound = math.sqrt(6.0 / fan_in)
            items.append((f"layers.{i}.weight", rng.uniform(-bound, bound, (fan_in, fan_out))))
            items.append((f"layers.{i}.bias", np.zeros(fan_out)))
        return ModelParameters(items)

    def forward(self, params, x, training: bool = False, rng: SeededRng | None = None) -> Tensor:
        p = _as_tensors(params)
        h = dc._lift(x)
        _check_input(h, self.input_width)
        n_layers = len(self.spec.sizes) - 1
        use_dropout = training and self.spec.dropout > 0.0
        if use_dropout and rng is None:
            raise ValueError("training-mode dropout needs an rng")
        for i in range(n_layers):
            w, b = p[f"layers.{i}.weight"], p[f"layers.{i}.bias"]
            h = h @ w + dc.einsum("b,j->bj", Tensor(np.ones(h.shape[0])), b)
            if i < n_layers - 1:
                h = dc.relu(h)
                if use_dropout:
                    h = dropout(h, self.spec.dropout, rng)
        return h


Model = KanNetwork | MlpNetwork


def build_model(kind: str, spec=None) -> Model:
    if kind == "kan":
        return KanNetwork(spec or KanSpec())
    if kind == "mlp":
        return MlpNetwork(spec or MlpSpec())
    raise ConfigError(f"unknown model kind {kind!r}; expected 'kan' or 'mlp'")


def kan_parameter_count(widths: Sequence[int], grid_size: int, spline_order: int) -> int:
    B = grid_size + spline_order
    return int(sum(a * b * (B + 2) for a, b in zip(widths[:-1], widths[1:])))


def mlp_parameter_count(sizes: Sequence[int]) -> int:
    return int(sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:])))
