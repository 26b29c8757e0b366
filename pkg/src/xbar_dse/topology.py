"""Crossbar netlist construction with distributed parasitics.

Two array topologies are supported:

* gate-input: the input bit drives the cell gate (word line), the bit line
  of every column is asserted to V_BL, and each column is an electrically
  independent two-rail ladder.
* drain-input: the input bit drives a horizontal bit-line rail shared by a
  row, while sense lines run vertically; the whole array is one coupled
  network.

Zero-valued parasitic resistances are legal and collapse their end nodes,
so the ideal (zero-parasitic) limit solves exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .devices import BitCellModel, Fidelity, TechnologyKind
from .errors import DomainError

# Vertical bit-cell pitch per technology (micrometers), set by the layout
# height of each bit-cell at the 7 nm node.
DEFAULT_VERTICAL_PITCH = {
    TechnologyKind.FEFET: 0.054,
    TechnologyKind.RERAM: 0.081,
    TechnologyKind.SRAM: 0.108,
    TechnologyKind.SOTMRAM: 0.108,
}

DEFAULT_WIRE_RES = 182.0   # ohm per micrometer, scaled-liner Cu at 7 nm
DEFAULT_VIA_RES = 56.0     # ohm
DEFAULT_R_DRIVER = 500.0   # ohm
DEFAULT_R_SINK = 100.0     # ohm


class Topology(enum.Enum):
    GATE_INPUT = "gate"
    DRAIN_INPUT = "drain"


class Activation(enum.Enum):
    FWA = "fwa"   # all rows active each cycle
    PWA = "pwa"   # group_size rows active per cycle


@dataclass(frozen=True)
class ParasiticsConfig:
    wire_res: float = DEFAULT_WIRE_RES
    via_res: float = DEFAULT_VIA_RES
    r_driver: float = DEFAULT_R_DRIVER
    r_sink: float = DEFAULT_R_SINK
    vertical_pitch: dict = field(
        default_factory=lambda: dict(DEFAULT_VERTICAL_PITCH))
    horizontal_pitch: float = None  # micrometers; None -> vertical pitch

    def __post_init__(self):
        for name in ("wire_res", "via_res", "r_driver", "r_sink"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        for tech, pitch in self.vertical_pitch.items():
            if pitch <= 0:
                raise DomainError(f"pitch for {tech} must be positive")
        if self.horizontal_pitch is not None and self.horizontal_pitch <= 0:
            raise DomainError("horizontal pitch must be positive")

    def scaled(self, k: float) -> "ParasiticsConfig":
        """All parasitic resistances multiplied by k (pitches untouched)."""
        return replace(self, wire_res=self.wire_res * k,
                       via_res=self.via_res * k,
                       r_driver=self.r_driver * k, r_sink=self.r_sink * k)


def segment_resistance(tech: TechnologyKind, p: ParasiticsConfig,
                       axis: str = "vertical") -> float:
    """Wire resistance (ohms) of one bit-cell pitch along the given axis."""
    if axis == "vertical":
        pitch = p.vertical_pitch[tech]
    elif axis == "horizontal":
        pitch = (p.horizontal_pitch if p.horizontal_pitch is not None
                 else p.vertical_pitch[tech])
    else:
        raise DomainError(f"unknown axis {axis!r}")
    return pitch * p.wire_res


@dataclass(frozen=True)
class CrossbarConfig:
    rows: int = 64
    cols: int = 64
    topology: Topology = Topology.GATE_INPUT
    v_wl: float = 0.7
    v_bl: float = 0.25
    activation: Activation = Activation.FWA
    group_size: int = 8
    device: BitCellModel = None
    parasitics: ParasiticsConfig = field(default_factory=ParasiticsConfig)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DomainError("array dimensions must be >= 1")
        if not (0.0 <= self.v_bl <= 0.7 and 0.0 <= self.v_wl <= 0.7):
            raise DomainError("voltages must lie in [0, 0.7] V")
        if self.activation is Activation.PWA and self.rows % self.group_size:
            raise DomainError("PWA group size must divide the row count")
        if self.device is None:
            object.__setattr__(self, "device", BitCellModel.fefet())

    @property
    def tech(self) -> TechnologyKind:
        return self.device.tech

    @property
    def active_rows(self) -> int:
        """Rows computing simultaneously in one activation cycle."""
        return (self.group_size if self.activation is Activation.PWA
                else self.rows)

    def activation_groups(self):
        """Row-index slices activated together, in cycle order."""
        if self.activation is Activation.FWA:
            return [np.arange(self.rows)]
        g = self.group_size
        return [np.arange(k, k + g) for k in range(0, self.rows, g)]

    @property
    def g_on(self) -> float:
        """Ideal per-device ON conductance used as the figure-of-merit reference."""
        return 1.0 / self.device.corners.r_on


@dataclass
class NetlistGraph:
    """Flattened node/element network ready for nodal analysis.

    Node 0 is ground.  ``fixed_voltage`` is NaN for unknown nodes.  Linear
    resistive elements are stored as parallel arrays; nonlinear two-terminal
    elements carry a callable v -> (I, dI/dV).  ``columns`` maps each output
    column to the (kind, index) refs of its cell elements, oriented so
    positive cell current flows toward the sense line.
    """

    num_nodes: int
    fixed_voltage: np.ndarray
    lin_a: np.ndarray
    lin_b: np.ndarray
    lin_g: np.ndarray
    lin_kind: list
    nonlinear: list                  # (a, b, fn, label)
    columns: list                    # per column: list of ("lin"/"nl", idx)
    meta: dict = field(default_factory=dict)

    @property
    def num_columns(self) -> int:
        return len(self.columns)

    def to_text(self) -> str:
        """Plain-text element list, one element per line (stable format:
        kind, node a, node b, value or model label)."""
        lines = [f"# nodes {self.num_nodes} ground 0"]
        for node in range(self.num_nodes):
            v = self.fixed_voltage[node]
            if node != 0 and not math.isnan(v):
                lines.append(f"V {node} 0 {v!r}")
        for k in range(len(self.lin_a)):
            r = 1.0 / self.lin_g[k]
            lines.append(
                f"R {self.lin_a[k]} {self.lin_b[k]} {r!r} {self.lin_kind[k]}")
        for a, b, _, label in self.nonlinear:
            lines.append(f"NL {a} {b} {label}")
        return "\n".join(lines) + "\n"


class _NetBuilder:
    """Accumulates nodes and elements; zero-resistance branches merge their
    end nodes (union-find), so ideal limits stay exactly solvable."""

    def __init__(self):
        self._parent = [0]            # node 0 = ground
        self._fixed = {0: 0.0}
        self._lin = []                # (a, b, r, kind)
        self._nl = []                 # (a, b, fn, label)
        self._cells = []              # (a, b, element ref placeholder)

    def node(self) -> int:
        self._parent.append(len(self._parent))
        return len(self._parent) - 1

    def fixed_node(self, volts: float) -> int:
        n = self.node()
        self._fixed[n] = volts
        return n

    def _find(self, n: int) -> int:
        while self._parent[n] != n:
            self._parent[n] = self._parent[self._parent[n]]
            n = self._parent[n]
        return n

    def resistor(self, a: int, b: int, r: float, kind: str):
        if r < 0:
            raise DomainError("negative resistance")
        if r == 0.0:
            ra, rb = self._find(a), self._find(b)
            if ra == rb:
                return
            fa, fb = ra in self._fixed, rb in self._fixed
            if fa and fb:
                if self._fixed[ra] != self._fixed[rb]:
                    raise DomainError(
                        "zero-resistance short between different potentials")
                self._parent[rb] = ra
            elif fb:
                self._parent[ra] = rb
            else:
                self._parent[rb] = ra
            return
        self._lin.append((a, b, r, kind))

    def cell(self, a: int, b: int, fn_or_g, label: str, linear: bool):
        """Add a bit-cell element from a to b; returns a ("lin"/"nl", idx)
        reference valid after finish()."""
        if linear:
            self._lin.append((a, b, 1.0 / fn_or_g, label))
            return ("lin", len(self._lin) - 1)
        self._nl.append((a, b, fn_or_g, label))
        return ("nl", len(self._nl) - 1)

    def finish(self, columns, meta) -> NetlistGraph:
        roots = sorted({self._find(n) for n in range(len(self._parent))})
        # Ground's root first so the compacted ground is node 0.
        g_root = self._find(0)
        roots.remove(g_root)
        roots.insert(0, g_root)
        remap = {root: k for k, root in enumerate(roots)}
        fixed = np.full(len(roots), np.nan)
        for n, v in self._fixed.items():
            fixed[remap[self._find(n)]] = v
        lin_a = np.array([remap[self._find(a)] for a, _, _, _ in self._lin],
                         dtype=np.int64)
        lin_b = np.array([remap[self._find(b)] for _, b, _, _ in self._lin],
                         dtype=np.int64)
        lin_g = np.array([1.0 / r for _, _, r, _ in self._lin])
        lin_kind = [k for _, _, _, k in self._lin]
        nl = [(remap[self._find(a)], remap[self._find(b)], fn, label)
              for a, b, fn, label in self._nl]
        return NetlistGraph(len(roots), fixed, lin_a, lin_b, lin_g, lin_kind,
                            nl, columns, meta)


def _check_data(cfg: CrossbarConfig, weights, inputs):
    weights = np.asarray(weights, dtype=np.int64)
    inputs = np.asarray(inputs, dtype=np.int64)
    if weights.shape != (cfg.rows, cfg.cols):
        raise DomainError(
            f"weights shape {weights.shape} != ({cfg.rows}, {cfg.cols})")
    if inputs.shape != (cfg.rows,):
        raise DomainError(f"inputs shape {inputs.shape} != ({cfg.rows},)")
    if not (np.isin(weights, (0, 1)).all() and np.isin(inputs, (0, 1)).all()):
        raise DomainError("inputs and weights must be binary")
    return weights, inputs


def build_gate_input(cfg: CrossbarConfig, weights, inputs) -> NetlistGraph:
    """Gate-input netlist: per column a driven BL rail and a sunk SL rail,
    both vertical, with one cell bridging them per row; the input bit only
    selects the cell state (gates carry no DC current)."""
    weights, inputs = _check_data(cfg, weights, inputs)
    p = cfg.parasitics
    seg = segment_resistance(cfg.tech, p, "vertical")
    b = _NetBuilder()
    columns = []
    for j in range(cfg.cols):
        src = b.fixed_node(cfg.v_bl)
        top = b.node()
        b.resistor(src, top, p.r_driver, "driver")
        rail = b.node()
        b.resistor(top, rail, p.via_res, "via")
        bl = []
        for i in range(cfg.rows):
            nxt = b.node()
            b.resistor(rail, nxt, seg, "wire")
            bl.append(nxt)
            rail = nxt
        sl = [b.node() for _ in range(cfg.rows)]
        for i in range(cfg.rows - 1):
            b.resistor(sl[i], sl[i + 1], seg, "wire")
        tail = b.node()
        b.resistor(sl[-1], tail, seg, "wire")
        sense = b.node()
        b.resistor(tail, sense, p.via_res, "via")
        b.resistor(sense, 0, p.r_sink, "sink")
        refs = []
        for i in range(cfg.rows):
            ib, wb = int(inputs[i]), int(weights[i, j])
            linear = cfg.device.is_linear(ib, wb)
            fn = (cfg.device.conductance(ib, wb) if linear
                  else cfg.device.iv(ib, wb))
            refs.append(b.cell(bl[i], sl[i], fn, f"cell[{i},{j}]", linear))
        columns.append(refs)
    meta = {"topology": Topology.GATE_INPUT, "rows": cfg.rows,
            "cols": cfg.cols, "v_bl": cfg.v_bl,
            "expected_nodes": cfg.cols * (2 * cfg.rows + 5) + 1}
    return b.finish(columns, meta)


def build_drain_input(cfg: CrossbarConfig, weights, inputs) -> NetlistGraph:
    """Drain-input netlist: the input bit drives a horizontal per-row BL rail
    at input*V_BL; SL rails run vertically; all gates sit at V_WL so the cell
    state is selected by the weight alone.  Columns couple through the shared
    BL rails."""
    weights, inputs = _check_data(cfg, weights, inputs)
    p = cfg.parasitics
    hseg = segment_resistance(cfg.tech, p, "horizontal")
    vseg = segment_resistance(cfg.tech, p, "vertical")
    b = _NetBuilder()
    bl = np.empty((cfg.rows, cfg.cols), dtype=np.int64)
    for i in range(cfg.rows):
        src = b.fixed_node(float(inputs[i]) * cfg.v_bl)
        head = b.node()
        b.resistor(src, head, p.r_driver, "driver")
        rail = b.node()
        b.resistor(head, rail, p.via_res, "via")
        for j in range(cfg.cols):
            nxt = b.node()
            b.resistor(rail, nxt, hseg, "wire")
            bl[i, j] = nxt
            rail = nxt
    columns = []
    for j in range(cfg.cols):
        sl = [b.node() for _ in range(cfg.rows)]
        for i in range(cfg.rows - 1):
            b.resistor(sl[i], sl[i + 1], vseg, "wire")
        tail = b.node()
        b.resistor(sl[-1], tail, vseg, "wire")
        sense = b.node()
        b.resistor(tail, sense, p.via_res, "via")
        b.resistor(sense, 0, p.r_sink, "sink")
        refs = []
        for i in range(cfg.rows):
            wb = int(weights[i, j])
            linear = cfg.device.is_linear(1, wb)
            fn = (cfg.device.conductance(1, wb) if linear
                  else cfg.device.iv(1, wb))
            refs.append(b.cell(int(bl[i, j]), sl[i], fn, f"cell[{i},{j}]",
                               linear))
        columns.append(refs)
    meta = {"topology": Topology.DRAIN_INPUT, "rows": cfg.rows,
            "cols": cfg.cols, "v_bl": cfg.v_bl,
            "expected_nodes": (cfg.rows * (cfg.cols + 3)
                               + cfg.cols * (cfg.rows + 2) + 1)}
    return b.finish(columns, meta)


def build_netlist(cfg: CrossbarConfig, weights, inputs) -> NetlistGraph:
    builder = (build_gate_input if cfg.topology is Topology.GATE_INPUT
               else build_drain_input)
    return builder(cfg, weights, inputs)


def expected_node_count(cfg: CrossbarConfig) -> int:
    """Closed-form node count (incl. ground and source nodes) for nonzero
    parasitics; used by the builder audit."""
    if cfg.topology is Topology.GATE_INPUT:
        return cfg.cols * (2 * cfg.rows + 5) + 1
    return cfg.rows * (cfg.cols + 3) + cfg.cols * (cfg.rows + 2) + 1


@dataclass(frozen=True)
class GateLadder:
    """Scalar parameters of one gate-input column ladder (all parasitics
    strictly positive), consumed by the batched fast solver."""

    rows: int
    g_driver: float
    g_via: float
    g_wire: float
    g_sink: float
    v_bl: float


def gate_ladder(cfg: CrossbarConfig) -> GateLadder:
    """Ladder parameters for the fast gate-input column solver, or None when
    the config has a zero parasitic (handled by the generic solver)."""
    p = cfg.parasitics
    seg = segment_resistance(cfg.tech, p, "vertical")
    if min(p.r_driver, p.via_res, seg, p.r_sink) <= 0.0:
        return None
    if cfg.topology is not Topology.GATE_INPUT:
        return None
    return GateLadder(cfg.rows, 1.0 / p.r_driver, 1.0 / p.via_res,
                      1.0 / seg, 1.0 / p.r_sink, cfg.v_bl)
