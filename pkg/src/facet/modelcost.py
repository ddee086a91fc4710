"""Analytic parameter and MAC counting for the network building blocks.

Covers the blocks the detector architecture is assembled from: standard
convolutions, depthwise-separable convolutions (a k x k depthwise filter
followed by 1x1 channel mixing), squeeze-excitation blocks, nearest
upsampling, and the two-conv prediction heads. Conventions, stated once:
MACs are counted at the output resolution with "same" padding; biases
count as parameters but not MACs; FLOPs = 2 * MACs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

KINDS = ("conv", "dsc", "se", "upsample", "head")


class GraphError(ValueError):
    """Raised when a layer sequence has inconsistent channel chaining."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer: for `se`, `kernel` is read as the reduction ratio r."""

    kind: str
    in_channels: int
    out_channels: int
    kernel: int = 1
    height: int = 1
    width: int = 1
    stride: int = 1

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("in_channels", "out_channels", "kernel", "height", "width", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.kind in ("se", "upsample") and self.in_channels != self.out_channels:
            raise ValueError(f"{self.kind} layers preserve channel count")


@dataclass(frozen=True)
class CostReport:
    params: int
    macs: int

    @property
    def flops(self) -> int:
        return 2 * self.macs

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    def __add__(self, other: "CostReport") -> "CostReport":
        return CostReport(self.params + other.params, self.macs + other.macs)

    def to_text(self) -> str:
        return f"params={self.params} macs={self.macs} gflops={self.gflops:.6f}"


def layer_cost(spec: LayerSpec) -> CostReport:
    c_in, c_out, k = spec.in_channels, spec.out_channels, spec.kernel
    h_out = math.ceil(spec.height / spec.stride)
    w_out = math.ceil(spec.width / spec.stride)
    hw = h_out * w_out
    if spec.kind == "conv":
        return CostReport(
            params=c_out * c_in * k * k + c_out,
            macs=hw * c_out * c_in * k * k,
        )
    if spec.kind == "dsc":
        return CostReport(
            params=c_in * k * k + c_in + c_in * c_out + c_out,
            macs=hw * c_in * k * k + hw * c_in * c_out,
        )
    if spec.kind == "se":
        r = k  # reduction ratio
        # two bias-free FC layers C -> C/r -> C, plus the channel rescale
        return CostReport(
            params=2 * c_in * c_in // r,
            macs=2 * c_in * c_in // r + hw * c_in,
        )
    if spec.kind == "upsample":
        return CostReport(params=0, macs=0)
    # head: k x k conv C -> C, ReLU, then 1x1 conv C -> out
    return CostReport(
        params=c_in * c_in * k * k + c_in + c_in * c_out + c_out,
        macs=hw * c_in * c_in * k * k + hw * c_in * c_out,
    )


def network_cost(graph: list[LayerSpec]) -> CostReport:
    """Sum layer costs, checking that consecutive channel counts chain."""
    total = CostReport(0, 0)
    prev: LayerSpec | None = None
    for i, spec in enumerate(graph):
        if prev is not None and prev.out_channels != spec.in_channels:
            raise GraphError(
                f"layer {i} expects {spec.in_channels} input channels but "
                f"layer {i - 1} emits {prev.out_channels}"
            )
        total = total + layer_cost(spec)
        prev = spec
    return total


def complexity_model(kind: str, height: int, width: int, channels: int) -> float:
    """The asymptotic per-layer cost class each block targets.

    A standard convolution mixes channels at every pixel, O(H W C^2); the
    depthwise-separable substitution is designed around the reduced class
    O(H W C + C^2). These models back scaling-law checks; layer_cost gives
    the exact counts.
    """
    if kind == "conv":
        return float(height * width * channels * channels)
    if kind == "dsc":
        return float(height * width * channels + channels * channels)
    raise ValueError(f"no complexity model for kind {kind!r}")


def parse_graph(text: str) -> list[LayerSpec]:
    """Parse the line-oriented graph format: kind,cin,cout,k,H,W,stride."""
    layers = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 7:
            raise GraphError(f"expected 7 fields at line {lineno}, got {len(parts)}")
        kind = parts[0]
        try:
            cin, cout, k, h, w, stride = (int(p) for p in parts[1:])
        except ValueError:
            raise GraphError(f"non-integer field at line {lineno}") from None
        try:
            layers.append(LayerSpec(kind, cin, cout, k, h, w, stride))
        except ValueError as exc:
            raise GraphError(f"bad layer at line {lineno}: {exc}") from None
    return layers


def fpn_lateral_specs(
    channels: list[int], out_channels: int, height: int, width: int, block: str = "dsc"
) -> list[LayerSpec]:
    """Layers of a top-down pyramid path: block(C_i) + upsample per level.

    `channels` lists backbone stage channels from deepest to shallowest;
    spatial size doubles at each upsample. The per-level branches feed an
    elementwise sum, so the list is a bag of layers (cost is additive), not
    a chained sequence; sum it with `path_cost`.
    """
    specs: list[LayerSpec] = []
    h, w = height, width
    for i, c in enumerate(channels):
        specs.append(LayerSpec(block, c, out_channels, 3, h, w))
        if i < len(channels) - 1:
            specs.append(LayerSpec("upsample", out_channels, out_channels, 1, h, w))
            h, w = h * 2, w * 2
    return specs


def path_cost(specs: list[LayerSpec]) -> CostReport:
    """Total cost of an unordered bag of layers (no chaining check)."""
    total = CostReport(0, 0)
    for spec in specs:
        total = total + layer_cost(spec)
    return total
