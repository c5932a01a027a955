"""Network configuration, dilation schedules and U-Net assembly.

A built model is a :class:`ModelGraph`: a flat, execution-ordered list of
:class:`Layer` descriptors plus named parameter tensors.  Every layer reads
the channel-wise concatenation of the layers named in ``inputs``, so skip
and dense connections are just longer input lists.
"""

from __future__ import annotations

import dataclasses
import logging
import re
from dataclasses import dataclass, field

import numpy as np

from wavesep import ops
from wavesep.tensor import DimensionError, Tensor, get_dtype

log = logging.getLogger(__name__)

ARCHS = ("wave_unet", "dilated", "dilated_dense")
STANDARD_SOURCES = ("vocals", "drums", "bass", "other")
_FIXED = re.compile(r"^fixed\((\d+)\)$")


class ConfigError(ValueError):
    """A model configuration is invalid."""


def parse_dilation_mode(mode: str) -> int | None:
    """Return the fixed rate for ``"fixed(n)"`` or ``None`` for ``"adaptive"``."""
    if mode == "adaptive":
        return None
    m = _FIXED.match(mode.replace(" ", ""))
    if not m or int(m.group(1)) < 1:
        raise ConfigError(f"dilation_mode must be 'adaptive' or 'fixed(n)' with n >= 1, got {mode!r}")
    return int(m.group(1))


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "dilated_dense"
    num_blocks: int = 6
    layers_per_block: int = 3
    base_filters: int = 15
    kernel_down: int = 15
    kernel_up: int = 5
    dilation_mode: str = "adaptive"
    leaky_slope: float = 0.2
    K: int = 4
    C: int = 2
    segment_length: int = 16384
    init_seed: int = 0
    bottleneck_layers: int = 3
    upstream_order: str = "reversed"
    wave_layers: int = 12

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        for name in ("num_blocks", "layers_per_block", "base_filters", "kernel_down",
                     "kernel_up", "C", "segment_length", "bottleneck_layers", "wave_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")
        if self.upstream_order not in ("reversed", "same"):
            raise ConfigError(f"upstream_order must be 'reversed' or 'same', got {self.upstream_order!r}")
        parse_dilation_mode(self.dilation_mode)

    @property
    def source_names(self) -> tuple[str, ...]:
        if self.K == len(STANDARD_SOURCES):
            return STANDARD_SOURCES
        return tuple(f"source_{k + 1}" for k in range(self.K))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def dilation_schedule(num_blocks: int, layers_per_block: int, mode: str = "adaptive") -> list[list[int]]:
    """Per-block dilation rates.

    Adaptive: rates double inside a block and each block starts at the rate
    its predecessor ended on, so (6, 3) spans 1 .. 4096.
    """
    fixed = parse_dilation_mode(mode)
    if fixed is not None:
        return [[fixed] * layers_per_block for _ in range(num_blocks)]
    blocks, start = [], 1
    for _ in range(num_blocks):
        block = [start * 2 ** j for j in range(layers_per_block)]
        blocks.append(block)
        start = block[-1]
    return blocks


def receptive_field(schedule: list[list[int]], k: int) -> int:
    """Samples seen by one output of a stack of stride-1 convs."""
    return 1 + (k - 1) * sum(sum(block) for block in schedule)


@dataclass(frozen=True)
class Layer:
    name: str
    kind: str  # conv | conv_t | decimate | upsample | head
    inputs: tuple[str, ...]
    in_channels: int
    out_channels: int
    kernel: int = 1
    dilation: int = 1
    activation: str | None = None
    role: str = ""

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv", "conv_t", "head")

    def weight_shape(self) -> tuple[int, int, int]:
        if self.kind == "conv_t":
            return (self.in_channels, self.out_channels, self.kernel)
        return (self.out_channels, self.in_channels, self.kernel)


@dataclass
class ModelGraph:
    config: ModelConfig
    layers: list[Layer]
    params: dict[str, Tensor] = field(default_factory=dict)

    @property
    def widths(self) -> dict[str, int]:
        w = {"mixture": self.config.C}
        w.update({layer.name: layer.out_channels for layer in self.layers})
        return w

    @property
    def head_names(self) -> list[str]:
        return [layer.name for layer in self.layers if layer.kind == "head"]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def parameter_names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def astype(self, dtype) -> "ModelGraph":
        """Cast all parameters in place (gradients are reset)."""
        for name, p in self.params.items():
            self.params[name] = Tensor(p.data.astype(dtype), requires_grad=True, name=name, dtype=dtype)
        return self


class _Builder:
    def __init__(self, config: ModelConfig):
        self.config = config
        self.layers: list[Layer] = []
        self.widths = {"mixture": config.C}

    def add(self, name, kind, inputs, out_channels, kernel=1, dilation=1,
            activation="leaky_relu", role="") -> str:
        inputs = tuple(inputs)
        in_ch = sum(self.widths[i] for i in inputs)
        if kind in ("decimate", "upsample"):
            out_channels, activation = in_ch, None
        self.layers.append(Layer(name, kind, inputs, in_ch, out_channels, kernel, dilation,
                                 activation, role))
        self.widths[name] = out_channels
        return name

    def block(self, prefix, kind, block_inputs, rates, width, kernel, dense, role) -> str:
        """L convolutions at ``rates``; dense blocks end with a transition."""
        outs: list[str] = []
        for j, d in enumerate(rates, start=1):
            if dense:
                inputs = list(block_inputs) + outs
            else:
                inputs = list(block_inputs) if not outs else [outs[-1]]
            outs.append(self.add(f"{prefix}.conv{j}", kind, inputs, width, kernel, d, role=role))
        if not dense:
            return outs[-1]
        return self.add(f"{prefix}.transition", "conv", list(block_inputs) + outs, width, 1, 1,
                        role="transition")

    def heads(self, prev: str) -> None:
        c = self.config
        for k in range(1, c.K):
            self.add(f"head{k}", "head", [prev], c.C, 1, 1, activation="tanh", role="head")

    def finish(self) -> ModelGraph:
        graph = ModelGraph(self.config, self.layers)
        init_parameters(graph)
        return graph


def _build_dilated(config: ModelConfig, dense: bool) -> ModelGraph:
    c = config
    f, B = c.base_filters, c.num_blocks
    schedule = dilation_schedule(B, c.layers_per_block, c.dilation_mode)
    rf = receptive_field(schedule, c.kernel_down)
    if rf < c.segment_length:
        log.warning("downstream receptive field %d is shorter than the segment (%d)",
                    rf, c.segment_length)
    b_ = _Builder(config)
    prev, skips = "mixture", []
    for b in range(1, B + 1):
        prev = b_.block(f"down{b}", "conv", [prev], schedule[b - 1], f * b, c.kernel_down,
                        dense, "down")
        skips.append(prev)
    prev = b_.block("bottleneck", "conv", [prev], [1] * c.bottleneck_layers, f * (B + 1),
                    c.kernel_down, dense, "bottleneck")
    for up in range(1, B + 1):
        pair = B + 1 - up
        rates = schedule[pair - 1]
        if c.upstream_order == "reversed":
            rates = rates[::-1]
        prev = b_.block(f"up{up}", "conv_t", [prev, skips[pair - 1]], rates, f * pair,
                        c.kernel_up, dense, "up")
    b_.heads(prev)
    return b_.finish()


def build_dilated_unet(config: ModelConfig) -> ModelGraph:
    """Plain Dilated U-Net: dilated conv blocks down, dilated transposed conv blocks up."""
    return _build_dilated(config, dense=False)


def build_dilated_dense_unet(config: ModelConfig, dense: bool = True) -> ModelGraph:
    """Dilated Dense U-Net; ``dense=False`` yields the plain dilated topology."""
    return _build_dilated(config, dense=dense)


def build_wave_unet_baseline(config: ModelConfig) -> ModelGraph:
    """Wave-U-Net: conv + decimation down, linear upsampling + conv up."""
    c = config
    D, f = c.wave_layers, c.base_filters
    if c.segment_length % (2 ** D):
        raise ConfigError(f"segment_length {c.segment_length} is not divisible by 2^{D}")
    b_ = _Builder(config)
    prev, skips = "mixture", []
    for i in range(1, D + 1):
        skips.append(b_.add(f"down{i}.conv", "conv", [prev], f * i, c.kernel_down, role="down"))
        prev = b_.add(f"down{i}.decimate", "decimate", [skips[-1]], 0, role="resample")
    prev = b_.add("bottleneck.conv", "conv", [prev], f * (D + 1), c.kernel_down, role="bottleneck")
    for i in range(D, 0, -1):
        up = b_.add(f"up{i}.upsample", "upsample", [prev], 0, role="resample")
        prev = b_.add(f"up{i}.conv", "conv", [up, skips[i - 1]], f * i, c.kernel_up, role="up")
    b_.heads(prev)
    return b_.finish()


def build_model(config: ModelConfig) -> ModelGraph:
    if config.arch == "wave_unet":
        return build_wave_unet_baseline(config)
    return _build_dilated(config, dense=config.arch == "dilated_dense")


def init_parameters(graph: ModelGraph) -> None:
    """Seeded Glorot-uniform weights, zero biases, in layer order."""
    rng = np.random.default_rng(graph.config.init_seed)
    dtype = get_dtype()
    graph.params = {}
    for layer in graph.layers:
        if not layer.has_params:
            continue
        shape = layer.weight_shape()
        fan = (layer.in_channels + layer.out_channels) * layer.kernel
        bound = np.sqrt(6.0 / fan)
        w = rng.uniform(-bound, bound, size=shape)
        graph.params[f"{layer.name}.weight"] = Tensor(w, requires_grad=True,
                                                      name=f"{layer.name}.weight", dtype=dtype)
        graph.params[f"{layer.name}.bias"] = Tensor(np.zeros(layer.out_channels), requires_grad=True,
                                                    name=f"{layer.name}.bias", dtype=dtype)


def _apply(graph: ModelGraph, layer: Layer, x: Tensor) -> Tensor:
    if layer.kind == "decimate":
        return ops.decimate2(x)
    if layer.kind == "upsample":
        return ops.upsample_linear2(x)
    w = graph.params[f"{layer.name}.weight"]
    b = graph.params[f"{layer.name}.bias"]
    if layer.kind == "conv_t":
        y = ops.conv1d_transpose(x, w, b, layer.dilation)
    else:
        y = ops.conv1d(x, w, b, layer.dilation)
    if layer.activation == "leaky_relu":
        return ops.leaky_relu(y, graph.config.leaky_slope)
    if layer.activation == "tanh":
        return ops.tanh(y)
    return y


def forward(graph: ModelGraph, mixture: Tensor) -> Tensor:
    """Separate ``[..., C, T]`` into ``[..., K, C, T]``.

    The first K-1 sources come from tanh heads; the last is the mixture
    minus their sum, so the estimates always add up to the mixture.
    """
    c = graph.config
    if mixture.ndim < 2 or mixture.shape[-2] != c.C:
        raise DimensionError(f"mixture must be [..., {c.C}, T], got {mixture.shape}")
    if c.arch == "wave_unet" and mixture.shape[-1] % (2 ** c.wave_layers):
        raise DimensionError(f"time length {mixture.shape[-1]} not divisible by 2^{c.wave_layers}")
    values = {"mixture": mixture}
    for layer in graph.layers:
        x = ops.concat_channels([values[n] for n in layer.inputs])
        values[layer.name] = _apply(graph, layer, x)
    estimates = [values[n] for n in graph.head_names]
    total = estimates[0]
    for e in estimates[1:]:
        total = ops.add(total, e)
    residual = ops.sub(mixture, total)
    return ops.stack(estimates + [residual], axis=-3)


def layer_table(graph: ModelGraph) -> list[dict]:
    """Rows of (index, name, kind, dilation, in/out channels, receptive field so far)."""
    rows, rf, jump = [], 1, 1
    for i, layer in enumerate(graph.layers):
        if layer.kind == "decimate":
            jump *= 2
        elif layer.kind == "upsample":
            jump = max(1, jump // 2)
        elif layer.role != "head":
            rf += (layer.kernel - 1) * layer.dilation * jump
        rows.append(dict(index=i, name=layer.name, kind=layer.kind, kernel=layer.kernel,
                         dilation=layer.dilation, in_channels=layer.in_channels,
                         out_channels=layer.out_channels, receptive_field=rf))
    return rows


def downstream_receptive_field(graph: ModelGraph) -> int:
    rf = 1
    for row, layer in zip(layer_table(graph), graph.layers):
        if layer.role == "down":
            rf = row["receptive_field"]
    return rf


def render_inspect(graph: ModelGraph) -> str:
    c = graph.config
    lines = [f"arch: {c.arch}  blocks: {c.num_blocks}  layers/block: {c.layers_per_block}  "
             f"filters: {c.base_filters}  K: {c.K}  C: {c.C}  T: {c.segment_length}"]
    if c.arch != "wave_unet":
        schedule = dilation_schedule(c.num_blocks, c.layers_per_block, c.dilation_mode)
        lines.append(f"dilation schedule ({c.dilation_mode}): {schedule}")
        lines.append(f"max dilation: {max(max(b) for b in schedule)}")
    lines.append("")
    header = f"{'idx':>4}  {'name':<22} {'kind':<9} {'k':>3} {'dil':>5} {'in':>5} {'out':>5} {'rf':>9}"
    lines.append(header)
    lines.append("-" * len(header))
    for r in layer_table(graph):
        lines.append(f"{r['index']:>4}  {r['name']:<22} {r['kind']:<9} {r['kernel']:>3} "
                     f"{r['dilation']:>5} {r['in_channels']:>5} {r['out_channels']:>5} "
                     f"{r['receptive_field']:>9}")
    lines.append("")
    lines.append(f"total parameters: {graph.num_parameters()}")
    lines.append(f"receptive field (downstream path): {downstream_receptive_field(graph)}")
    return "\n".join(lines)
