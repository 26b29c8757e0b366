"""Figure-of-merit extraction for crossbar arrays.

* Nonideality factor (NF): relative deviation of the analog column current
  from the parasitic-free ideal, |(I_ideal - I) / I_ideal|, pooled over
  columns, activation cycles, and sampled workloads.
* Sense margin (SM): for a dot-product output x, half the worst-case
  separation between the smallest current encoding x and the largest
  current encoding x - 1.
* O_MAX: the largest output x such that every margin up to x clears the
  sensing threshold (default 1 uA).

Worst-case SM patterns ("structured" mode) place the x ON cells farthest
from the sense node with every other active cell dark (0,0) for the
minimum, and the x - 1 ON cells nearest to it with every other active cell
leaking through its weight-0 state (1,0) for the maximum.  "exhaustive"
mode enumerates all 4^n cell states of the active group and is the oracle
the structured bounds are validated against on small arrays; "random" mode
augments the structured candidates with sampled patterns.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .devices import Fidelity
from .errors import ConvergenceError, DomainError
from .solver import solve_dc, solve_gate_columns
from .topology import (CrossbarConfig, Topology, build_netlist, gate_ladder)

SENSE_THRESHOLD = 1e-6       # amperes
EXHAUSTIVE_BUDGET = 4 ** 9   # max enumerated cell-state combinations


# ---------------------------------------------------------------------------
# Simulation front end (fast ladder path when possible)
# ---------------------------------------------------------------------------

def state_conductances(cfg: CrossbarConfig, weights, inputs) -> np.ndarray:
    """Level0 per-cell conductances, shape (rows, cols).

    Gate-input cells are state-selected by (input, weight); drain-input
    cells always sit in the (1, weight) state — the input enters through
    the rail voltage instead."""
    weights = np.asarray(weights, dtype=np.int64)
    inputs = np.asarray(inputs, dtype=np.int64)
    dev = cfg.device
    table = np.array([[dev.conductance(ib, wb) for wb in (0, 1)]
                      for ib in (0, 1)])
    if cfg.topology is Topology.DRAIN_INPUT:
        return table[1, weights]
    return table[inputs[:, None], weights]


def _can_use_ladder(cfg: CrossbarConfig) -> bool:
    return (cfg.topology is Topology.GATE_INPUT
            and cfg.device.fidelity is Fidelity.LEVEL0_LINEAR
            and gate_ladder(cfg) is not None)


def simulate(cfg: CrossbarConfig, weights, inputs,
             g_matrix: np.ndarray = None) -> np.ndarray:
    """Analog column currents for one input pattern (one activation cycle).

    g_matrix optionally overrides the Level0 cell conductances (used for
    device-variation studies); it must match the nominal state pattern.
    """
    if g_matrix is None and cfg.device.fidelity is Fidelity.LEVEL0_LINEAR:
        g_matrix = state_conductances(cfg, weights, inputs)
    if g_matrix is not None and cfg.topology is Topology.GATE_INPUT \
            and gate_ladder(cfg) is not None:
        return solve_gate_columns(gate_ladder(cfg), g_matrix.T)
    net = build_netlist(cfg, weights, inputs)
    if g_matrix is not None:
        for j, refs in enumerate(net.columns):
            for i, (kind, idx) in enumerate(refs):
                if kind != "lin":
                    raise DomainError(
                        "conductance overrides require linear cells")
                net.lin_g[idx] = g_matrix[i, j]
    return solve_dc(net).column_currents


def simulate_batch_gate(cfg: CrossbarConfig, g_batch: np.ndarray) -> np.ndarray:
    """Batched ladder solve: g_batch shape (..., rows) -> currents (...)."""
    lad = gate_ladder(cfg)
    if lad is None or cfg.topology is not Topology.GATE_INPUT:
        raise DomainError(
            "batched solve requires gate-input with nonzero parasitics")
    shape = g_batch.shape[:-1]
    out = solve_gate_columns(lad, g_batch.reshape(-1, g_batch.shape[-1]))
    return out.reshape(shape)


def simulate_activation(cfg: CrossbarConfig, weights, inputs,
                        g_matrices=None):
    """Per-cycle column currents under the configured activation scheme.

    Returns (cycle_currents, cycle_ideals), each shaped (n_groups, cols).
    Inactive rows have their input forced to 0 for the cycle; the digital
    accumulator sums cycles exactly, so NF/SM are evaluated per cycle.
    """
    weights = np.asarray(weights, dtype=np.int64)
    inputs = np.asarray(inputs, dtype=np.int64)
    groups = cfg.activation_groups()
    currents = np.empty((len(groups), cfg.cols))
    ideals = np.empty((len(groups), cfg.cols))
    for k, rows in enumerate(groups):
        masked = np.zeros_like(inputs)
        masked[rows] = inputs[rows]
        g = g_matrices[k] if g_matrices is not None else None
        currents[k] = simulate(cfg, weights, masked, g_matrix=g)
        ideals[k] = ideal_cycle_currents(cfg, weights, masked)
    return currents, ideals


def ideal_cycle_currents(cfg: CrossbarConfig, weights, masked_inputs) -> np.ndarray:
    """Parasitic-free column currents of one cycle: the dot-product term
    V * G_ON * (x . w) plus the leakage of every non-(1,1) cell at its
    nominal corner conductance.  This is the NF reference, so NF isolates
    the interconnect/driver non-ideality rather than device leakage."""
    masked_inputs = np.asarray(masked_inputs, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.int64)
    if cfg.device.fidelity is Fidelity.LEVEL0_LINEAR:
        g = state_conductances(cfg, weights, masked_inputs)
        if cfg.topology is Topology.DRAIN_INPUT:
            return cfg.v_bl * (masked_inputs[:, None] * g).sum(axis=0)
        return cfg.v_bl * g.sum(axis=0)
    table = np.empty((2, 2))
    for ib in (0, 1):
        for wb in (0, 1):
            i, _ = cfg.device.iv(ib, wb)(cfg.v_bl)
            table[ib, wb] = i
    if cfg.topology is Topology.DRAIN_INPUT:
        return (masked_inputs[:, None] * table[1, weights]).sum(axis=0)
    return table[masked_inputs[:, None], weights].sum(axis=0)


# ---------------------------------------------------------------------------
# Nonideality factor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NFSample:
    i_ideal: float
    i_nonideal: float
    nf: float
    signed_dev: float
    column: int = None
    digest: str = None


def nonideality_factor(i_ideal: float, i_nonideal: float,
                       column: int = None, digest: str = None):
    """NF of one (ideal, analog) current pair; None when the ideal current
    is zero (the sample is excluded from pools, not an error)."""
    if i_ideal == 0.0:
        return None
    signed = (i_ideal - i_nonideal) / i_ideal
    return NFSample(i_ideal, i_nonideal, abs(signed), signed, column, digest)


@dataclass
class NFDistribution:
    samples: np.ndarray            # pooled nf values
    signed: np.ndarray             # matching signed deviations
    n_excluded_zero_ideal: int
    n_failed: int = 0
    config: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def median(self) -> float:
        return float(np.median(self.samples))

    @property
    def quantiles(self) -> dict:
        q = np.quantile(self.samples, [0.0, 0.25, 0.5, 0.75, 1.0])
        return {"min": float(q[0]), "q1": float(q[1]), "median": float(q[2]),
                "q3": float(q[3]), "max": float(q[4])}


def _pattern_rng(seed, index) -> np.random.Generator:
    return np.random.default_rng((int(seed), int(index)))


def _workload(cfg, seed, index, input_density, weight_density):
    rng = _pattern_rng(seed, index)
    W = (rng.random((cfg.rows, cfg.cols)) < weight_density).astype(np.int64)
    X = (rng.random(cfg.rows) < input_density).astype(np.int64)
    return W, X


def workload_digest(weights, inputs) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(weights, dtype=np.uint8).tobytes())
    h.update(np.asarray(inputs, dtype=np.uint8).tobytes())
    return h.hexdigest()[:16]


def nf_distribution(cfg: CrossbarConfig, n_samples: int = 500, seed: int = 0,
                    input_density: float = 0.5, weight_density: float = 0.5,
                    g_fields=None) -> NFDistribution:
    """NF over random Bernoulli workloads, pooled over columns and cycles.

    Workload k comes from an RNG keyed by (seed, k), so the same sample
    index reproduces the same pattern across configurations — sweeps over a
    knob compare paired workloads.  ``g_fields`` optionally supplies a
    per-sample conductance perturbation callable (see dse.apply_variations).
    """
    if n_samples < 1:
        raise DomainError("need at least one sample")
    groups = cfg.activation_groups()
    fast = _can_use_ladder(cfg) and g_fields is None
    if fast:
        # One batched ladder solve over samples x cycles x columns.
        g_all, ideal_all = [], []
        for k in range(n_samples):
            W, X = _workload(cfg, seed, k, input_density, weight_density)
            for rows in groups:
                masked = np.zeros_like(X)
                masked[rows] = X[rows]
                g = state_conductances(cfg, W, masked)
                g_all.append(g.T)
                ideal_all.append(cfg.v_bl * g.sum(axis=0))
        ideals = np.concatenate(ideal_all)
        currents = solve_gate_columns(gate_ladder(cfg),
                                      np.concatenate(g_all, axis=0))
        nz = ideals != 0.0
        signed = (ideals[nz] - currents[nz]) / ideals[nz]
        return NFDistribution(np.abs(signed), signed, int(np.sum(~nz)), 0,
                              config={"n_samples": n_samples, "seed": seed})
    pooled, pooled_signed, excluded, failed = [], [], 0, 0
    for k in range(n_samples):
        W, X = _workload(cfg, seed, k, input_density, weight_density)
        g_matrices = g_fields(cfg, W, X, k) if g_fields is not None else None
        try:
            currents, ideals = simulate_activation(cfg, W, X, g_matrices)
        except ConvergenceError:
            failed += 1
            continue
        nz = ideals != 0.0
        pooled.append(np.abs((ideals[nz] - currents[nz]) / ideals[nz]))
        pooled_signed.append((ideals[nz] - currents[nz]) / ideals[nz])
        excluded += int(np.sum(~nz))
    if not pooled:
        raise DomainError("all samples failed or had zero ideal output")
    return NFDistribution(np.concatenate(pooled), np.concatenate(pooled_signed),
                          excluded, failed,
                          config={"n_samples": n_samples, "seed": seed})


# ---------------------------------------------------------------------------
# Sense margin
# ---------------------------------------------------------------------------

@dataclass
class SMCurve:
    x: np.ndarray                  # output values 1..x_max
    sm: np.ndarray                 # amperes
    i_min: np.ndarray              # I_min(x) for x = 0..x_max
    i_max: np.ndarray              # I_max(x) for x = 0..x_max
    threshold: float = SENSE_THRESHOLD
    mode: str = "structured"
    samples_examined: int = 0

    @property
    def o_max(self) -> int:
        return o_max(self, self.threshold)


def o_max(curve: SMCurve, threshold: float = SENSE_THRESHOLD) -> int:
    """Largest x whose every margin up to x exceeds the threshold."""
    ok = np.asarray(curve.sm if isinstance(curve, SMCurve) else curve) > threshold
    bad = np.flatnonzero(~ok)
    return int(bad[0]) if len(bad) else len(ok)


def _structured_column(cfg: CrossbarConfig, x: int, kind: str):
    """Column weights/inputs of the structured worst-case pattern.  "min":
    x ON cells farthest from the sense node, all other active cells dark
    (0,0).  "max": x ON cells nearest to it, other active cells at (1,0)."""
    n = cfg.rows
    groups = cfg.activation_groups()
    w = np.zeros(n, dtype=np.int64)
    inp = np.zeros(n, dtype=np.int64)
    if kind == "min":
        rows = groups[0]               # top rows: farthest from the sense node
        w[rows[:x]] = 1
        inp[rows[:x]] = 1
    elif kind == "max":
        rows = groups[-1]              # bottom rows: nearest the sense node
        if x:
            w[rows[-x:]] = 1
        inp[rows] = 1
    else:
        raise DomainError(f"unknown pattern kind {kind!r}")
    return w, inp


def _structured_current(cfg: CrossbarConfig, x: int, kind: str) -> float:
    w_col, inp = _structured_column(cfg, x, kind)
    if cfg.topology is Topology.GATE_INPUT:
        col_cfg = replace(cfg, cols=1)
        return float(simulate(col_cfg, w_col[:, None], inp)[0])
    # Drain input: shared BL rails couple the columns, so the extremes
    # depend on the rest of the array.  Minimum: every column replicates the
    # pattern (maximal rail competition), read the column farthest from the
    # drivers.  Maximum: all other columns dark, read the nearest column.
    if kind == "min":
        W = np.tile(w_col[:, None], (1, cfg.cols))
        j = cfg.cols - 1
    else:
        W = np.zeros((cfg.rows, cfg.cols), dtype=np.int64)
        W[:, 0] = w_col
        j = 0
    return float(simulate(cfg, W, inp)[j])


def sense_margin_curve(cfg: CrossbarConfig, x_max: int = None,
                       mode: str = "structured",
                       threshold: float = SENSE_THRESHOLD,
                       n_random: int = 500, seed: int = 0,
                       budget: int = EXHAUSTIVE_BUDGET) -> SMCurve:
    """SM(x) = (I_min(x) - I_max(x-1)) / 2 for x = 1..x_max.

    "structured" builds the closed-form worst-case candidates;
    "exhaustive" enumerates every (input, weight) state of the active group
    (gate-input only, 4^active_rows <= budget); "random" adds sampled
    patterns to the structured candidates.
    """
    limit = cfg.active_rows
    x_max = limit if x_max is None else min(int(x_max), limit)
    i_min = np.full(x_max + 1, np.inf)
    i_max = np.full(x_max + 1, -np.inf)
    examined = 0
    for x in range(x_max + 1):
        i_min[x] = _structured_current(cfg, x, "min")
        i_max[x] = _structured_current(cfg, x, "max")
        examined += 2
    if mode == "structured":
        pass
    elif mode in ("exhaustive", "random"):
        if cfg.topology is not Topology.GATE_INPUT or gate_ladder(cfg) is None:
            raise DomainError(
                f"{mode} mode requires a gate-input array with nonzero parasitics")
        if mode == "exhaustive":
            if 4 ** cfg.active_rows > budget:
                raise DomainError(
                    f"exhaustive enumeration 4^{cfg.active_rows} exceeds the "
                    f"budget of {budget} combinations")
            examined += _search_extremes(cfg, x_max, i_min, i_max,
                                         exhaustive=True)
            # Exhaustive search supersedes the structured candidates.
        else:
            examined += _search_extremes(cfg, x_max, i_min, i_max,
                                         exhaustive=False,
                                         n_random=n_random, seed=seed)
    else:
        raise DomainError(f"unknown sense-margin mode {mode!r}")
    sm = (i_min[1:] - i_max[:-1]) / 2.0
    return SMCurve(np.arange(1, x_max + 1), sm, i_min, i_max, threshold,
                   mode, examined)


def _search_extremes(cfg, x_max, i_min, i_max, exhaustive,
                     n_random=0, seed=0) -> int:
    """Tighten per-output extremes by simulating candidate cell-state
    patterns of the active group (positioned at both ends of the column)."""
    dev = cfg.device
    g_state = np.array([[dev.conductance(ib, wb) for wb in (0, 1)]
                        for ib in (0, 1)])
    n, g = cfg.rows, cfg.active_rows
    lad = gate_ladder(cfg)
    g_dark = g_state[0, 0]
    examined = 0
    if exhaustive:
        # All 4^g (input, weight) combinations of the active cells.
        codes = np.arange(4 ** g)
        states = (codes[:, None] // 4 ** np.arange(g)[None, :]) % 4
    else:
        rng = np.random.default_rng((int(seed), 0))
        states = rng.integers(0, 4, size=(max(1, n_random), g))
    inp_bits = states // 2
    w_bits = states % 2
    x_vals = ((inp_bits == 1) & (w_bits == 1)).sum(axis=1)
    g_cells = g_state[inp_bits, w_bits]
    for offset in (0, n - g):          # active group at either column end
        field_g = np.full((len(states), n), g_dark)
        field_g[:, offset:offset + g] = g_cells
        currents = solve_gate_columns(lad, field_g)
        examined += len(states)
        for x in range(min(x_max, g) + 1):
            sel = x_vals == x
            if sel.any():
                i_min[x] = min(i_min[x], float(currents[sel].min()))
                i_max[x] = max(i_max[x], float(currents[sel].max()))
    return examined


def analytic_sm_estimate(n_active: int, v: float, r_on: float, r_hrs: float):
    """Parasitic-free worst-case approximations: I_0_max = n*V/R_HRS (all
    active cells leaking through their weight-0 state) and I_1_min = V/R_ON."""
    if n_active < 1 or v <= 0 or r_on <= 0 or r_hrs <= 0:
        raise DomainError("arguments must be positive")
    return n_active * v / r_hrs, v / r_on


# ---------------------------------------------------------------------------
# CSV emitters
# ---------------------------------------------------------------------------

def write_nf_samples_csv(path, dist: NFDistribution) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sample", "nf", "signed_deviation"])
        for k, (a, s) in enumerate(zip(dist.samples, dist.signed)):
            wr.writerow([k, repr(float(a)), repr(float(s))])


def write_nf_summary_csv(path, rows) -> None:
    """rows: iterable of (label, NFDistribution)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["label", "min", "q1", "median", "q3", "max", "mean",
                     "count", "excluded_zero_ideal", "failed"])
        for label, d in rows:
            q = d.quantiles
            wr.writerow([label, repr(q["min"]), repr(q["q1"]),
                         repr(q["median"]), repr(q["q3"]), repr(q["max"]),
                         repr(d.mean), d.count, d.n_excluded_zero_ideal,
                         d.n_failed])


def write_sm_csv(path, curve: SMCurve) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "i_x_min_a", "i_xm1_max_a", "sm_a"])
        for k, x in enumerate(curve.x):
            wr.writerow([int(x), repr(float(curve.i_min[x])),
                         repr(float(curve.i_max[x - 1])),
                         repr(float(curve.sm[k]))])
