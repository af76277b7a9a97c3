"""Declarative construction of spiking and ReLU SqueezeNet variants.

An ``ArchSpec`` fully describes a network: the stem convolution, the eight
fire-module widths, which of the modules F2..F9 survive pruning, where the
max-pools sit, the class count and the execution mode (spiking over T time
steps, or a plain ReLU CNN). Pruned graphs are rewired so every retained
module consumes the output of the nearest retained producer upstream.

Default widths follow the original SqueezeNet v1.0 table: a 96-filter stem and
fire widths (16,64,64) x2, (32,128,128) x2, (48,192,192) x2, (64,256,256) x2.
The stem is 3x3 stride 1 for the 32x32 inputs this toolkit targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import lif as lif_mod
from . import tensor as T
from .tensor import Tensor

FIRE_NAMES = ("F2", "F3", "F4", "F5", "F6", "F7", "F8", "F9")

# Pool position 0 means after the stem conv; k >= 1 means after the k-th
# retained fire module.
POOL_KERNEL = 3
POOL_STRIDE = 2


@dataclass(frozen=True)
class FireSpec:
    """Fire-module widths: squeeze 1x1 filters, then parallel 1x1/3x3 expands."""

    squeeze: int
    expand1: int
    expand3: int

    def __post_init__(self):
        if min(self.squeeze, self.expand1, self.expand3) < 1:
            raise ValueError(f"fire widths must be >= 1, got {self}")

    @property
    def out_channels(self) -> int:
        return self.expand1 + self.expand3


DEFAULT_CONV1 = (96, 3, 1, 1)  # filters, kernel, stride, padding
DEFAULT_FIRES = (
    FireSpec(16, 64, 64),
    FireSpec(16, 64, 64),
    FireSpec(32, 128, 128),
    FireSpec(32, 128, 128),
    FireSpec(48, 192, 192),
    FireSpec(48, 192, 192),
    FireSpec(64, 256, 256),
    FireSpec(64, 256, 256),
)


def default_pool_positions(retained_count: int) -> frozenset[int]:
    """Stem pool always; more pools after the 2nd and 4th retained modules."""
    positions = {0}
    if retained_count >= 2:
        positions.add(2)
    if retained_count >= 4:
        positions.add(4)
    return frozenset(positions)


@dataclass(frozen=True)
class ArchSpec:
    """Complete declarative description of one network variant."""

    conv1: tuple[int, int, int, int] = DEFAULT_CONV1
    fires: tuple[FireSpec, ...] = DEFAULT_FIRES
    retained: tuple[bool, ...] = (True,) * 8
    pool_after: Optional[frozenset[int]] = None
    num_classes: int = 10
    mode: str = "snn"
    time_steps: int = 4
    in_channels: int = 3

    def __post_init__(self):
        if len(self.fires) != 8 or len(self.retained) != 8:
            raise ValueError("spec needs exactly 8 fire modules and an 8-wide retained mask")
        if not any(self.retained):
            raise ValueError("retained mask must keep at least one fire module")
        if self.mode not in ("snn", "cnn"):
            raise ValueError(f"mode must be 'snn' or 'cnn', got {self.mode!r}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.time_steps < 1:
            raise ValueError(f"time_steps must be >= 1, got {self.time_steps}")
        if self.conv1[0] < 1 or self.conv1[1] < 1 or self.conv1[2] < 1 or self.conv1[3] < 0:
            raise ValueError(f"invalid conv1 spec {self.conv1}")

    @property
    def retained_names(self) -> tuple[str, ...]:
        return tuple(n for n, keep in zip(FIRE_NAMES, self.retained) if keep)

    def pool_positions(self) -> frozenset[int]:
        if self.pool_after is not None:
            return self.pool_after
        return default_pool_positions(sum(self.retained))


@dataclass(frozen=True)
class PruneSchedule:
    """A named retained-set over F2..F9."""

    name: str
    mask: frozenset[str]

    def retained_tuple(self) -> tuple[bool, ...]:
        return tuple(n in self.mask for n in FIRE_NAMES)


_SCHEDULE_MASKS = {
    "Full": FIRE_NAMES,
    "Head-1": ("F2", "F3", "F4", "F5", "F9"),
    "Head-2": ("F2", "F3", "F4", "F5", "F8"),
    "Tail-1": ("F2", "F5", "F6", "F7", "F8", "F9"),
    "Tail-2": ("F2", "F4", "F6", "F7", "F8", "F9"),
    "Alt-1": ("F2", "F4", "F6", "F8"),
    "Alt-2": ("F3", "F5", "F7", "F9"),
    "Ref-1": ("F4", "F6", "F8", "F9"),
    "Ref-2": ("F2", "F4", "F5", "F6", "F8", "F9"),
}

SCHEDULE_NAMES = tuple(_SCHEDULE_MASKS)


def schedule_mask(name: str) -> frozenset[str]:
    """Retained module names for one of the nine pruning schedules."""
    if name not in _SCHEDULE_MASKS:
        raise ValueError(
            f"unknown schedule {name!r}; valid names: {', '.join(SCHEDULE_NAMES)}")
    return frozenset(_SCHEDULE_MASKS[name])


def schedule(name: str) -> PruneSchedule:
    return PruneSchedule(name, schedule_mask(name))


def apply_schedule(spec: ArchSpec, name: str) -> ArchSpec:
    """Return a copy of ``spec`` with the named retained mask applied."""
    return replace(spec, retained=schedule(name).retained_tuple(), pool_after=None)


def scale_width(spec: ArchSpec, factor: float) -> ArchSpec:
    """Scale the stem and all fire widths by ``factor`` (minimum width 1)."""
    def s(n: int) -> int:
        return max(1, round(n * factor))

    conv1 = (s(spec.conv1[0]),) + spec.conv1[1:]
    fires = tuple(FireSpec(s(f.squeeze), s(f.expand1), s(f.expand3)) for f in spec.fires)
    return replace(spec, conv1=conv1, fires=fires)


# ---------------------------------------------------------------------------
# channel rewiring and parameter counting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelPlan:
    """Input channel count per retained fire module, plus the classifier's."""

    fire_inputs: tuple[tuple[str, int], ...]
    classifier_in: int


def rewire(spec: ArchSpec) -> ChannelPlan:
    """Propagate channel counts through the retained modules.

    Each retained fire consumes the output of the nearest retained producer
    before it (the stem conv if none); the classifier consumes the last
    retained producer's output.
    """
    current = spec.conv1[0]
    fire_inputs = []
    for name, fire, keep in zip(FIRE_NAMES, spec.fires, spec.retained):
        if not keep:
            continue
        fire_inputs.append((name, current))
        current = fire.out_channels
    return ChannelPlan(tuple(fire_inputs), current)


def _conv_params(cin: int, cout: int, kh: int, kw: int) -> int:
    return cout * (cin * kh * kw) + cout


def fire_params(cin: int, fire: FireSpec) -> int:
    """Trainable parameters of one fire module, bias terms included."""
    s, e1, e3 = fire.squeeze, fire.expand1, fire.expand3
    return (_conv_params(cin, s, 1, 1)
            + _conv_params(s, e1, 1, 1)
            + _conv_params(s, e3, 3, 3))


def count_params(spec: ArchSpec) -> int:
    """Closed-form trainable parameter count of the network ``spec`` builds."""
    plan = rewire(spec)
    filters, kernel, _, _ = spec.conv1
    total = _conv_params(spec.in_channels, filters, kernel, kernel)
    by_name = dict(zip(FIRE_NAMES, spec.fires))
    for name, cin in plan.fire_inputs:
        total += fire_params(cin, by_name[name])
    total += _conv_params(plan.classifier_in, spec.num_classes, 1, 1)
    return total


# ---------------------------------------------------------------------------
# built networks
# ---------------------------------------------------------------------------

class ConvLayer:
    """One convolution with weights, bias and geometry."""

    def __init__(self, name: str, cin: int, cout: int, kernel: int,
                 stride: int = 1, padding: int = 0):
        self.name = name
        self.cin = cin
        self.cout = cout
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.weight = Tensor(np.zeros((cout, cin, kernel, kernel), dtype=np.float32),
                             requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(cout, dtype=np.float32),
                           requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding,
                        name=self.name)

    @property
    def param_count(self) -> int:
        return self.weight.size + self.bias.size


class FireBlock:
    """Squeeze conv feeding two parallel expand convs, channel-concatenated."""

    def __init__(self, name: str, cin: int, spec: FireSpec):
        self.name = name
        self.spec = spec
        self.squeeze = ConvLayer(f"{name}.squeeze", cin, spec.squeeze, 1)
        self.expand1 = ConvLayer(f"{name}.expand1", spec.squeeze, spec.expand1, 1)
        self.expand3 = ConvLayer(f"{name}.expand3", spec.squeeze, spec.expand3, 3,
                                 padding=1)

    def convs(self) -> list[ConvLayer]:
        return [self.squeeze, self.expand1, self.expand3]


class Network:
    """An executable network built from an ``ArchSpec``.

    In spiking mode every backbone conv output passes through a LIF stage; in
    CNN mode through ReLU. The classifier conv feeds global average pooling
    directly and carries no nonlinearity in either mode, so its outputs are
    real-valued logits (one set per time step when spiking).
    """

    def __init__(self, spec: ArchSpec, lif_params: Optional[lif_mod.LifParams] = None):
        self.spec = spec
        self.lif_params = lif_params or lif_mod.LifParams()
        plan = rewire(spec)
        by_name = dict(zip(FIRE_NAMES, spec.fires))
        filters, kernel, stride, padding = spec.conv1
        self.conv1 = ConvLayer("conv1", spec.in_channels, filters, kernel, stride, padding)
        self.fires = [FireBlock(name.lower().replace("f", "fire"), cin, by_name[name])
                      for name, cin in plan.fire_inputs]
        self.classifier = ConvLayer("classifier", plan.classifier_in, spec.num_classes, 1)
        self.pool_positions = spec.pool_positions()
        self._states: dict[str, lif_mod.LifState] = {}

    # -- parameter access ---------------------------------------------------

    def conv_layers(self) -> list[ConvLayer]:
        layers = [self.conv1]
        for fire in self.fires:
            layers.extend(fire.convs())
        layers.append(self.classifier)
        return layers

    def parameters(self) -> list[Tensor]:
        params = []
        for layer in self.conv_layers():
            params.append(layer.weight)
            params.append(layer.bias)
        return params

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def init_params(self, seed: int, gain: Optional[float] = None) -> None:
        """Fan-in-scaled uniform init, deterministic for a given seed.

        Weights are drawn from U(-g/sqrt(fan_in), +g/sqrt(fan_in)). The
        spiking default uses a larger g than the ReLU default: unit-threshold
        LIF neurons need membrane drive on the order of v_th at init, and
        standard He scaling leaves every neuron silent with vanishing
        surrogate gradients (measured ~1e-13 through four fire modules).
        """
        if gain is None:
            gain = 8.0 if self.spec.mode == "snn" else np.sqrt(6.0)
        rng = np.random.default_rng(seed)
        for layer in self.conv_layers():
            fan_in = layer.cin * layer.kernel * layer.kernel
            bound = gain / np.sqrt(fan_in)
            layer.weight.data = rng.uniform(
                -bound, bound, layer.weight.shape).astype(np.float32)
            layer.bias.data = rng.uniform(
                -bound, bound, layer.bias.shape).astype(np.float32)

    # -- execution ------------------------------------------------------------

    def reset(self) -> None:
        """Drop all membrane state (fresh states are created lazily)."""
        self._states = {}

    def _lif(self, name: str, current: Tensor, smooth: bool) -> Tensor:
        state = self._states.get(name)
        if state is None or state.v.shape != current.shape:
            state = lif_mod.LifState.zeros(current.shape, self.lif_params, name)
            self._states[name] = state
        return lif_mod.lif_step(state, current, self.lif_params, smooth=smooth)

    def _activate(self, name: str, x: Tensor, smooth: bool,
                  stats: "SpikeStats", observer) -> Tensor:
        if self.spec.mode == "cnn":
            return T.relu(x, name=f"{name}.relu")
        s = self._lif(name, x, smooth)
        stats.add(s.data)
        if observer is not None:
            observer.on_spikes(name, s.data)
        return s

    def _conv(self, layer: ConvLayer, x: Tensor, spike_input: bool, observer) -> Tensor:
        if observer is not None:
            observer.on_conv(layer, x.data, spike_input)
        return layer(x)

    def forward(self, images: np.ndarray, smooth: bool = False,
                observer=None) -> "ForwardResult":
        """Run a batch; returns logits per time step plus firing statistics.

        ``images`` is a raw [N, C, H, W] float array fed as a constant input
        current at every time step (direct encoding). Call within a recording
        context to train; ``reset`` is implicit per call.
        """
        self.reset()
        x_in = Tensor(np.asarray(images, dtype=np.float32))
        steps = self.spec.time_steps if self.spec.mode == "snn" else 1
        stats = SpikeStats()
        logits_steps = []
        for step in range(steps):
            if observer is not None:
                observer.on_step(step)
            h = self._conv(self.conv1, x_in, False, observer)
            act = self._activate("conv1", h, smooth, stats, observer)
            if 0 in self.pool_positions:
                act = T.maxpool2d(act, POOL_KERNEL, POOL_STRIDE, name="pool0")
            spikes = self.spec.mode == "snn"
            for k, fire in enumerate(self.fires, start=1):
                sq = self._conv(fire.squeeze, act, spikes, observer)
                sq = self._activate(fire.squeeze.name, sq, smooth, stats, observer)
                e1 = self._conv(fire.expand1, sq, spikes, observer)
                e1 = self._activate(fire.expand1.name, e1, smooth, stats, observer)
                e3 = self._conv(fire.expand3, sq, spikes, observer)
                e3 = self._activate(fire.expand3.name, e3, smooth, stats, observer)
                act = T.concat_channels(e1, e3, name=f"{fire.name}.concat")
                if k in self.pool_positions:
                    act = T.maxpool2d(act, POOL_KERNEL, POOL_STRIDE, name=f"pool{k}")
            out = self._conv(self.classifier, act, spikes, observer)
            logits_steps.append(T.global_avgpool(out, name="gap"))
        return ForwardResult(logits_steps, stats)


class SpikeStats:
    """Running spike totals for the firing-rate monitor."""

    def __init__(self):
        self.spike_sum = 0.0
        self.neuron_steps = 0

    def add(self, spikes: np.ndarray) -> None:
        self.spike_sum += float(spikes.sum(dtype=np.float64))
        self.neuron_steps += spikes.size

    @property
    def firing_rate(self) -> float:
        if self.neuron_steps == 0:
            return 0.0
        return self.spike_sum / self.neuron_steps


@dataclass
class ForwardResult:
    logits_steps: list
    stats: SpikeStats

    def mean_logits(self) -> Tensor:
        """Time-averaged logits as a graph tensor."""
        acc = self.logits_steps[0]
        for t in self.logits_steps[1:]:
            acc = T.add(acc, t, name="logit_sum")
        if len(self.logits_steps) > 1:
            acc = T.affine(acc, 1.0 / len(self.logits_steps), 0.0, name="logit_mean")
        return acc


def build(spec: ArchSpec, lif_params: Optional[lif_mod.LifParams] = None,
          seed: Optional[int] = None) -> Network:
    """Construct a network from a spec; ``seed`` triggers weight init."""
    net = Network(spec, lif_params)
    if seed is not None:
        net.init_params(seed)
    return net


# ---------------------------------------------------------------------------
# text serialization (embedded in checkpoints and config files)
# ---------------------------------------------------------------------------

def arch_to_text(spec: ArchSpec) -> str:
    """Serialize as key=value lines; the retained mask by module names."""
    lines = [
        "conv1=" + ",".join(str(v) for v in spec.conv1),
    ]
    for name, fire in zip(FIRE_NAMES, spec.fires):
        lines.append(f"{name.lower()}={fire.squeeze},{fire.expand1},{fire.expand3}")
    lines.append("retained=" + ",".join(spec.retained_names))
    lines.append("pool_after=" + ",".join(str(p) for p in sorted(spec.pool_positions())))
    lines.append(f"num_classes={spec.num_classes}")
    lines.append(f"mode={spec.mode}")
    lines.append(f"time_steps={spec.time_steps}")
    lines.append(f"in_channels={spec.in_channels}")
    return "\n".join(lines) + "\n"


def arch_from_text(text: str) -> ArchSpec:
    fields: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad arch line {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        conv1 = tuple(int(v) for v in fields["conv1"].split(","))
        fires = tuple(
            FireSpec(*(int(v) for v in fields[name.lower()].split(",")))
            for name in FIRE_NAMES)
        retained_names = set(v for v in fields["retained"].split(",") if v)
        retained = tuple(n in retained_names for n in FIRE_NAMES)
        pool_after = frozenset(int(v) for v in fields["pool_after"].split(",") if v != "")
        if pool_after == default_pool_positions(sum(retained)):
            pool_after = None  # keep derived placements in derived form
        spec = ArchSpec(
            conv1=conv1,
            fires=fires,
            retained=retained,
            pool_after=pool_after,
            num_classes=int(fields["num_classes"]),
            mode=fields["mode"],
            time_steps=int(fields["time_steps"]),
            in_channels=int(fields.get("in_channels", "3")),
        )
    except KeyError as exc:
        raise ValueError(f"arch text missing field {exc.args[0]!r}") from exc
    unknown = retained_names - set(FIRE_NAMES)
    if unknown:
        raise ValueError(f"unknown fire modules in retained mask: {sorted(unknown)}")
    return spec
