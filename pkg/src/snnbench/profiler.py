"""Synaptic-operation counting and the energy model.

MACs (multiply-accumulates) are the unit of dense convolution work; ACs
(accumulates) are addition-only events fired by binary input spikes. Energy
uses the 45nm CMOS estimates of Horowitz (ISSCC 2014): 4.6 pJ per MAC and
0.9 pJ per 32-bit add.

Counting conventions (applied uniformly, stated once here):
  * bias additions are excluded from both counters,
  * pooling and elementwise ops are excluded,
  * a layer whose input is the raw (analog) image counts MACs; in spiking
    mode that input is constant across time, so its MACs are charged once
    per image unless ``first_layer_macs_once`` is turned off,
  * spike-fed layers charge one AC per nonzero input inside each receptive
    field, per output channel, per time step,
  * optionally one MAC per neuron per time step for the membrane update
    (default on),
  * all reported counts are per image (batch totals divided by N).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensor import conv_output_hw

AC_PICOJOULES = 0.9
MAC_PICOJOULES = 4.6


@dataclass(frozen=True)
class OpCounts:
    """Accumulate/multiply-accumulate/parameter totals; additive."""

    ac: int = 0
    mac: int = 0
    params: int = 0

    def __add__(self, other: "OpCounts") -> "OpCounts":
        return OpCounts(self.ac + other.ac, self.mac + other.mac,
                        self.params + other.params)


@dataclass(frozen=True)
class EnergyReport:
    energy_pj: float
    energy_mj: float
    eta: Optional[float] = None
    firing_rate: float = 0.0


def energy(counts: OpCounts, eta: Optional[float] = None,
           firing_rate: float = 0.0) -> EnergyReport:
    """E_total = N_AC * 0.9 pJ + N_MAC * 4.6 pJ."""
    pj = counts.ac * AC_PICOJOULES + counts.mac * MAC_PICOJOULES
    return EnergyReport(energy_pj=pj, energy_mj=pj * 1e-9, eta=eta,
                        firing_rate=firing_rate)


def eta_energy(e_cnn: float, e_snn: float) -> float:
    """How many times more energy the dense network burns than the spiking one."""
    if e_snn <= 0:
        raise ValueError(f"eta undefined for non-positive spiking energy {e_snn}")
    return e_cnn / e_snn


def count_mac_conv(cin: int, cout: int, hout: int, wout: int,
                   kh: int, kw: int) -> int:
    """Dense conv MACs per image: every output element does Cin*Kh*Kw of them."""
    return hout * wout * cout * cin * kh * kw


def _require_binary(x: np.ndarray, where: str) -> None:
    bad = ~((x == 0.0) | (x == 1.0))
    if bad.any():
        sample = float(x[bad].flat[0])
        raise ValueError(
            f"{where}: spike accounting needs binary input, found value {sample!r}")


def count_ac_conv(spikes: np.ndarray, cout: int, kh: int, kw: int,
                  stride: int = 1, padding: int = 0) -> int:
    """ACs of a conv fed by binary spikes: receptive-field nonzeros times Cout.

    Each 1-valued input inside an output position's window triggers one
    weight addition per output channel; window clipping at the borders is
    respected because padded zeros contribute nothing. Returns the total over
    the whole batch array passed in.
    """
    spikes = np.asarray(spikes)
    _require_binary(spikes, "count_ac_conv")
    if spikes.ndim != 4:
        raise ValueError(f"count_ac_conv: expected [N,C,H,W], got {spikes.shape}")
    n, c, h, w = spikes.shape
    hout, wout = conv_output_hw(h, w, kh, kw, stride, padding)
    if hout < 1 or wout < 1:
        raise ValueError(f"count_ac_conv: kernel {kh}x{kw} too large for {spikes.shape}")
    if padding:
        grid = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=np.int64)
        grid[:, :, padding:padding + h, padding:padding + w] = spikes != 0
    else:
        grid = (spikes != 0).astype(np.int64)
    window_hits = 0
    for i in range(kh):
        for j in range(kw):
            window_hits += int(
                grid[:, :, i:i + hout * stride:stride, j:j + wout * stride:stride].sum())
    return window_hits * cout


def firing_rate(spike_arrays) -> float:
    """Mean spikes per neuron per time step over a recorded collection."""
    total = 0.0
    count = 0
    for arr in spike_arrays:
        arr = np.asarray(arr)
        _require_binary(arr, "firing_rate")
        total += float(arr.sum(dtype=np.float64))
        count += arr.size
    if count == 0:
        return 0.0
    return total / count


# ---------------------------------------------------------------------------
# forward-pass profiling session
# ---------------------------------------------------------------------------

class LayerTally:
    __slots__ = ("name", "kind", "params", "ac", "mac", "spike_sum", "neuron_steps")

    def __init__(self, name: str, kind: str, params: int):
        self.name = name
        self.kind = kind
        self.params = params
        self.ac = 0
        self.mac = 0
        self.spike_sum = 0.0
        self.neuron_steps = 0

    @property
    def rate(self) -> float:
        return self.spike_sum / self.neuron_steps if self.neuron_steps else 0.0


@dataclass
class LayerProfile:
    name: str
    kind: str
    ac: int
    mac: int
    params: int
    firing_rate: float


@dataclass
class ProfileResult:
    """Per-image counts for the profiled network, plus its dense twin.

    ``cnn_counts``/``cnn_report`` describe the same architecture run as a
    plain CNN (every conv dense, single pass), so callers can state both
    sides of the energy comparison.
    """

    mode: str
    counts: OpCounts
    report: EnergyReport
    cnn_counts: OpCounts
    cnn_report: EnergyReport
    layers: list

    def layer_table_csv(self) -> str:
        out = io.StringIO()
        out.write("layer_name,type,ac,mac,params,firing_rate\n")
        for row in self.layers:
            out.write(f"{row.name},{row.kind},{row.ac},{row.mac},"
                      f"{row.params},{row.firing_rate!r}\n")
        return out.getvalue()


class ProfileSession:
    """Observer hooked into Network.forward that tallies AC/MAC events."""

    def __init__(self, mode: str, first_layer_macs_once: bool = True,
                 membrane_update_macs: bool = True):
        self.mode = mode
        self.first_layer_macs_once = first_layer_macs_once
        self.membrane_update_macs = membrane_update_macs
        self.step = 0
        self.n_images = 0
        self.tallies: dict[str, LayerTally] = {}
        self.order: list[str] = []
        self.cnn_mac = 0  # dense-twin MACs, batch total

    def _tally(self, name: str, kind: str, params: int) -> LayerTally:
        t = self.tallies.get(name)
        if t is None:
            t = LayerTally(name, kind, params)
            self.tallies[name] = t
            self.order.append(name)
        return t

    def on_step(self, step: int) -> None:
        self.step = step

    def on_conv(self, layer, x_data: np.ndarray, spike_input: bool) -> None:
        n, _, h, w = x_data.shape
        self.n_images = n
        hout, wout = conv_output_hw(h, w, layer.kernel, layer.kernel,
                                    layer.stride, layer.padding)
        kind = "classifier" if layer.name == "classifier" else "conv"
        tally = self._tally(layer.name, kind, layer.param_count)
        dense = count_mac_conv(layer.cin, layer.cout, hout, wout,
                               layer.kernel, layer.kernel)
        if self.step == 0:
            self.cnn_mac += n * dense
        if self.mode == "cnn" or not spike_input:
            if spike_input or self.step == 0 or not self.first_layer_macs_once:
                tally.mac += n * dense
        else:
            tally.ac += count_ac_conv(x_data, layer.cout, layer.kernel,
                                      layer.kernel, layer.stride, layer.padding)

    def on_spikes(self, name: str, spikes: np.ndarray) -> None:
        tally = self.tallies.get(name)
        if tally is None:
            return
        tally.spike_sum += float(spikes.sum(dtype=np.float64))
        tally.neuron_steps += spikes.size
        if self.membrane_update_macs:
            tally.mac += spikes.size  # one multiply per neuron per step


def _per_image(total: int, n: int) -> int:
    return int(round(total / n))


def profile_forward(network, batch: np.ndarray,
                    first_layer_macs_once: bool = True,
                    membrane_update_macs: bool = True) -> ProfileResult:
    """Run one inference pass and report per-image operation counts and energy."""
    batch = np.asarray(batch, dtype=np.float32)
    mode = network.spec.mode
    session = ProfileSession(mode, first_layer_macs_once, membrane_update_macs)
    network.forward(batch, observer=session)
    n = max(session.n_images, 1)

    layers = []
    ac_total = 0
    mac_total = 0
    spike_sum = 0.0
    neuron_steps = 0
    for name in session.order:
        t = session.tallies[name]
        ac_total += t.ac
        mac_total += t.mac
        spike_sum += t.spike_sum
        neuron_steps += t.neuron_steps
        layers.append(LayerProfile(
            name=t.name, kind=t.kind,
            ac=_per_image(t.ac, n), mac=_per_image(t.mac, n),
            params=t.params, firing_rate=t.rate))

    params = network.param_count()
    counts = OpCounts(ac=_per_image(ac_total, n), mac=_per_image(mac_total, n),
                      params=params)
    cnn_counts = OpCounts(ac=0, mac=_per_image(session.cnn_mac, n), params=params)
    cnn_report = energy(cnn_counts)
    rate = spike_sum / neuron_steps if neuron_steps else 0.0
    eta = None
    if mode == "snn":
        snn_report = energy(counts)
        if snn_report.energy_mj > 0:
            eta = eta_energy(cnn_report.energy_mj, snn_report.energy_mj)
    report = energy(counts, eta=eta, firing_rate=rate)
    return ProfileResult(mode=mode, counts=counts, report=report,
                         cnn_counts=cnn_counts, cnn_report=cnn_report,
                         layers=layers)
