"""DC operating-point solvers for crossbar netlists.

``solve_dc`` runs damped Newton iteration on the nodal equations of any
NetlistGraph (sparse LU factorization each step).  Linear networks converge
in a single iteration.

``solve_gate_columns`` is a vectorized fast path for gate-input columns with
purely linear cells: every column is a symmetric pentadiagonal ladder, so a
batch of columns is solved with banded forward elimination in a handful of
numpy passes.  It produces the same currents as solve_dc to machine
precision and is what makes full-network inference runs affordable.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, SingularNetworkError
from .topology import GateLadder, NetlistGraph


@dataclass(frozen=True)
class SolverOptions:
    residual_tol: float = 1e-12      # amperes, max KCL residual
    max_iterations: int = 100
    damping_floor: float = 1.0 / 64.0


@dataclass
class SolveResult:
    node_voltages: np.ndarray        # full vector, fixed nodes included
    column_currents: np.ndarray      # sum of cell currents into each sense rail
    newton_iterations: int
    max_residual: float
    meta: dict = field(default_factory=dict)


def ideal_output(inputs, weights, v_read: float, g_on: float) -> np.ndarray:
    """Column currents of the parasitic-free, perfectly linear array:
    I_j = sum_i input_i * weight_ij * V * G_ON."""
    inputs = np.asarray(inputs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    return v_read * g_on * (inputs @ weights)


def _element_currents(net: NetlistGraph, v: np.ndarray):
    """Currents through linear elements (array) and nonlinear elements
    (current, derivative arrays), oriented a -> b."""
    lin_i = net.lin_g * (v[net.lin_a] - v[net.lin_b])
    nl_i = np.empty(len(net.nonlinear))
    nl_d = np.empty(len(net.nonlinear))
    for k, (a, b, fn, _) in enumerate(net.nonlinear):
        nl_i[k], nl_d[k] = fn(v[a] - v[b])
    return lin_i, nl_i, nl_d


def _residual(net, v, unknown_pos, lin_i=None, nl_i=None):
    if lin_i is None:
        lin_i, nl_i, _ = _element_currents(net, v)
    r = np.zeros(net.num_nodes)
    np.add.at(r, net.lin_a, lin_i)
    np.subtract.at(r, net.lin_b, lin_i)
    for k, (a, b, _, _) in enumerate(net.nonlinear):
        r[a] += nl_i[k]
        r[b] -= nl_i[k]
    return r[unknown_pos]


def solve_dc(net: NetlistGraph, options: SolverOptions = None) -> SolveResult:
    """Solve the DC operating point of a netlist.

    Raises SingularNetworkError for structurally singular systems and
    ConvergenceError if damped Newton stalls.
    """
    opt = options or SolverOptions()
    fixed_mask = ~np.isnan(net.fixed_voltage)
    unknown_pos = np.flatnonzero(~fixed_mask)
    index_of = np.full(net.num_nodes, -1, dtype=np.int64)
    index_of[unknown_pos] = np.arange(len(unknown_pos))

    v = np.where(fixed_mask, net.fixed_voltage, 0.0)
    n_unknown = len(unknown_pos)
    if n_unknown == 0:
        lin_i, nl_i, _ = _element_currents(net, v)
        return SolveResult(v, _column_sums(net, lin_i, nl_i), 0, 0.0)

    # Constant part of the Jacobian from linear elements.
    rows, cols, vals = [], [], []

    def stamp(a, b, g):
        ia, ib = index_of[a], index_of[b]
        if ia >= 0:
            rows.append(ia); cols.append(ia); vals.append(g)
            if ib >= 0:
                rows.append(ia); cols.append(ib); vals.append(-g)
        if ib >= 0:
            rows.append(ib); cols.append(ib); vals.append(g)
            if ia >= 0:
                rows.append(ib); cols.append(ia); vals.append(-g)

    for a, b, g in zip(net.lin_a, net.lin_b, net.lin_g):
        stamp(a, b, g)
    lin_jac = sp.coo_matrix(
        (vals, (rows, cols)), shape=(n_unknown, n_unknown)).tocsc()

    # Structural check: every unknown node must touch at least one element.
    touched = np.zeros(net.num_nodes, dtype=bool)
    touched[net.lin_a] = touched[net.lin_b] = True
    for a, b, _, _ in net.nonlinear:
        touched[a] = touched[b] = True
    if not touched[unknown_pos].all():
        floating = unknown_pos[~touched[unknown_pos]]
        raise SingularNetworkError(
            f"floating nodes with no incident elements: {floating.tolist()}")

    last_i = None
    iterations = 0
    r = _residual(net, v, unknown_pos)
    max_r = float(np.max(np.abs(r))) if len(r) else 0.0
    for it in range(opt.max_iterations + 1):
        if max_r <= opt.residual_tol:
            lin_i, nl_i, _ = _element_currents(net, v)
            return SolveResult(v, _column_sums(net, lin_i, nl_i),
                               iterations, max_r)
        if it == opt.max_iterations:
            raise ConvergenceError(
                f"no convergence after {it} iterations "
                f"(residual {max_r:.3e} A)", last_residual=max_r,
                iterations=it)
        jac = lin_jac
        if net.nonlinear:
            _, _, nl_d = _element_currents(net, v)
            nrows, ncols, nvals = [], [], []
            for k, (a, b, _, _) in enumerate(net.nonlinear):
                ia, ib = index_of[a], index_of[b]
                g = nl_d[k]
                if ia >= 0:
                    nrows.append(ia); ncols.append(ia); nvals.append(g)
                    if ib >= 0:
                        nrows.append(ia); ncols.append(ib); nvals.append(-g)
                if ib >= 0:
                    nrows.append(ib); ncols.append(ib); nvals.append(g)
                    if ia >= 0:
                        nrows.append(ib); ncols.append(ia); nvals.append(-g)
            jac = jac + sp.coo_matrix(
                (nvals, (nrows, ncols)), shape=(n_unknown, n_unknown)).tocsc()
        try:
            lu = spla.splu(jac)
        except RuntimeError as exc:
            raise SingularNetworkError(str(exc)) from exc
        delta = lu.solve(-r)
        if not np.all(np.isfinite(delta)):
            raise SingularNetworkError("singular nodal matrix (non-finite step)")
        iterations += 1
        # Damped step: halve until the residual no longer grows.
        t = 1.0
        while True:
            v_try = v.copy()
            v_try[unknown_pos] += t * delta
            r_try = _residual(net, v_try, unknown_pos)
            max_try = float(np.max(np.abs(r_try)))
            if max_try <= max_r or t <= opt.damping_floor:
                break
            t *= 0.5
        v, r, max_r = v_try, r_try, max_try

    raise AssertionError("unreachable")


def _column_sums(net: NetlistGraph, lin_i, nl_i) -> np.ndarray:
    out = np.zeros(net.num_columns)
    for j, refs in enumerate(net.columns):
        total = 0.0
        for kind, idx in refs:
            total += lin_i[idx] if kind == "lin" else nl_i[idx]
        out[j] = total
    return out


def branch_current_by_kind(net: NetlistGraph, v: np.ndarray) -> dict:
    """Total current through linear elements grouped by kind label, with
    cell[...] labels pooled under "cell"; used for conservation checks."""
    lin_i, nl_i, _ = _element_currents(net, v)
    totals = {}
    for k, kind in enumerate(net.lin_kind):
        key = "cell" if kind.startswith("cell") else kind
        totals[key] = totals.get(key, 0.0) + lin_i[k]
    for k, (_, _, _, label) in enumerate(net.nonlinear):
        key = "cell" if label.startswith("cell") else label
        totals[key] = totals.get(key, 0.0) + nl_i[k]
    return totals


# ---------------------------------------------------------------------------
# Batched gate-input fast path
# ---------------------------------------------------------------------------

def solve_gate_columns(ladder: GateLadder, cell_g: np.ndarray,
                       chunk: int = 50_000) -> np.ndarray:
    """Sense currents of a batch of gate-input column ladders.

    cell_g: (B, rows) per-cell conductances (row 0 nearest the driver).
    Returns a (B,) array of column output currents.  Node order down the
    ladder is [driver tap, rail head, bl_0, sl_0, bl_1, sl_1, ..., tail,
    sense], which makes the conductance matrix pentadiagonal; forward
    elimination alone yields the sense-node voltage, and the output current
    is g_sink * v_sense.
    """
    cell_g = np.asarray(cell_g, dtype=np.float64)
    if cell_g.ndim == 1:
        cell_g = cell_g[None, :]
    n = ladder.rows
    if cell_g.shape[1] != n:
        raise ValueError(f"cell_g has {cell_g.shape[1]} rows, expected {n}")
    total = cell_g.shape[0]
    out = np.empty(total)
    starts = range(0, total, chunk)
    workers = _worker_count()
    if workers > 1 and len(starts) > 1:
        def run(lo):
            out[lo:lo + chunk] = _gate_chunk(ladder, cell_g[lo:lo + chunk])
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    else:
        for lo in starts:
            out[lo:lo + chunk] = _gate_chunk(ladder, cell_g[lo:lo + chunk])
    return out


def _worker_count() -> int:
    """Worker count for chunked batch solves; XBAR_DSE_THREADS overrides the
    single-threaded default.  Results are identical for any worker count
    because every chunk writes a disjoint output slice."""
    try:
        return max(1, int(os.environ.get("XBAR_DSE_THREADS", "1")))
    except ValueError:
        return 1


def _gate_chunk(lad: GateLadder, g: np.ndarray) -> np.ndarray:
    # Node-major (N, B) layout keeps every elimination step on contiguous
    # memory; with the in-place updates this is ~5x faster than the naive
    # batch-major formulation.
    B, n = g.shape
    N = 2 * n + 4
    gD, gV, gw, gS = lad.g_driver, lad.g_via, lad.g_wire, lad.g_sink
    d0 = np.zeros((N, B))
    d1 = np.zeros((N - 1, B))
    d2 = np.zeros((N - 2, B))
    rhs = np.zeros((N, B))
    gT = g.T

    d0[0] = gD + gV
    d1[0] = -gV
    rhs[0] = gD * lad.v_bl
    d0[1] = gV + gw
    d1[1] = -gw
    bl = 2 + 2 * np.arange(n)
    sl = bl + 1
    below = np.where(np.arange(n) < n - 1, gw, 0.0)
    d0[bl] = gw + below[:, None] + gT
    d1[bl] = -gT
    d2[bl[:-1]] = -gw
    d0[sl] = gT + gw + np.where(np.arange(n) > 0, gw, 0.0)[:, None]
    d2[sl[:-1]] = -gw
    d1[sl[-1]] = -gw                 # last SL node to the tail node
    d0[N - 2] = gw + gV
    d1[N - 2] = -gV
    d0[N - 1] = gV + gS

    f = np.empty(B)
    tmp = np.empty(B)
    for i in range(N - 1):
        np.divide(d1[i], d0[i], out=f)
        np.multiply(f, d1[i], out=tmp)
        d0[i + 1] -= tmp
        np.multiply(f, rhs[i], out=tmp)
        rhs[i + 1] -= tmp
        if i < N - 2:
            np.multiply(f, d2[i], out=tmp)
            d1[i + 1] -= tmp
            np.divide(d2[i], d0[i], out=f)
            np.multiply(f, d2[i], out=tmp)
            d0[i + 2] -= tmp
            np.multiply(f, rhs[i], out=tmp)
            rhs[i + 2] -= tmp
    return gS * rhs[N - 1] / d0[N - 1]
