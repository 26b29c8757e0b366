"""Quantized-network inference with matrix-vector products offloaded to
crossbar arrays.

Weights and activations are symmetric fixed-point tensors (16 bit by
default).  Each weight matrix is stored differentially (W = W+ - W-), each
half bit-sliced across single-bit devices, and inputs are streamed one
two's-complement bit plane per cycle.  Column currents are ADC-quantized
and recombined digitally with shift-add; partial-word-line activation
accumulates per-group ADC counts before the shift-add, which is lossless.

Three evaluation modes share the same digital pipeline and differ only in
how a column current is obtained:

- "ideal":     exact integer dot products (the parasitic-free limit),
- "solver":    batched DC solves of the column ladder networks,
- "surrogate": trained-network reconstruction of the solver current.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dse import VariationConfig
from .errors import DomainError
from .solver import solve_gate_columns
from .topology import CrossbarConfig, Topology, gate_ladder

DEFAULT_BITS = 16


# ---------------------------------------------------------------------------
# Fixed-point tensors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedPointTensor:
    """Symmetric uniform quantization: real value = values * scale."""

    values: np.ndarray              # int64
    bits: int
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise DomainError("scale must be positive")
        if np.max(np.abs(self.values), initial=0) > _qmax(self.bits):
            raise DomainError(f"values exceed the signed {self.bits}-bit range")

    def dequantize(self) -> np.ndarray:
        return self.values * self.scale


def _qmax(bits: int) -> int:
    if bits < 1:
        raise DomainError("bit width must be >= 1")
    return max(2 ** (bits - 1) - 1, 1)


def quantize_tensor(x, bits: int = DEFAULT_BITS) -> FixedPointTensor:
    """Symmetric quantization with scale = max|x| / (2^(bits-1) - 1); an
    all-zero tensor quantizes with scale 1 by convention."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot quantize non-finite values")
    peak = float(np.max(np.abs(x), initial=0.0))
    scale = peak / _qmax(bits) if peak > 0 else 1.0
    values = np.round(x / scale).astype(np.int64)
    return FixedPointTensor(values, bits, scale)


def input_bit_planes(values: np.ndarray, bits: int):
    """Two's-complement bit planes of signed integers.

    Returns (planes, weights): planes has a trailing axis of length `bits`
    (LSB first) with entries in {0, 1}; weights[b] is the signed value of
    plane b (2^b, except -2^(bits-1) for the sign plane)."""
    if bits < 2:
        raise DomainError("bit streaming needs at least 2 bits")
    v = np.asarray(values, dtype=np.int64)
    twos = v & ((1 << bits) - 1)
    shifts = np.arange(bits, dtype=np.int64)
    planes = ((twos[..., None] >> shifts) & 1).astype(np.uint8)
    weights = 2 ** shifts
    weights[-1] = -weights[-1]
    return planes, weights


def weight_bit_slices(values: np.ndarray, bits: int) -> np.ndarray:
    """Unsigned binary slices (LSB first) of non-negative integers."""
    v = np.asarray(values, dtype=np.int64)
    if v.min(initial=0) < 0:
        raise DomainError("weight slices require non-negative values")
    shifts = np.arange(bits, dtype=np.int64)
    return ((v[..., None] >> shifts) & 1).astype(np.uint8)


# ---------------------------------------------------------------------------
# ADC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdcModel:
    """Uniform current ADC: round-half-up to I_LSB, clamped to the level
    count; saturation is counted, never fatal."""

    i_lsb: float
    levels: int

    def __post_init__(self):
        if self.i_lsb <= 0:
            raise DomainError("ADC LSB current must be positive")
        if self.levels < 2:
            raise DomainError("ADC needs at least 2 levels")

    def quantize(self, currents: np.ndarray):
        counts = np.floor(np.asarray(currents) / self.i_lsb + 0.5).astype(np.int64)
        n_sat = int(np.count_nonzero(counts > self.levels - 1)
                    + np.count_nonzero(counts < 0))
        return np.clip(counts, 0, self.levels - 1), n_sat


def default_adc(cfg: CrossbarConfig) -> AdcModel:
    """LSB = the ideal single-cell ON current; one level per simultaneously
    active row plus zero."""
    return AdcModel(i_lsb=cfg.v_bl * cfg.g_on, levels=cfg.active_rows + 1)


# ---------------------------------------------------------------------------
# Weight mapping
# ---------------------------------------------------------------------------

@dataclass
class ArrayMapping:
    """Bit-sliced differential mapping of one integer weight matrix onto
    row tiles of a physical array.

    Physical column order within a tile is (output j, sign +/-, slice s),
    slice fastest; each device stores one bit."""

    bits: int
    row_tiles: list                 # list of (row_slice, slice_bits (r, C))
    n_in: int
    n_out: int

    @property
    def n_columns(self) -> int:
        return self.n_out * 2 * self.bits


def map_weights(w_fp: FixedPointTensor, tile_rows: int) -> ArrayMapping:
    w = w_fp.values
    if w.ndim != 2:
        raise DomainError("weight tensor must be a matrix")
    n_in, n_out = w.shape
    pos = weight_bit_slices(np.maximum(w, 0), w_fp.bits)    # (n_in, n_out, bits)
    neg = weight_bit_slices(np.maximum(-w, 0), w_fp.bits)
    both = np.stack([pos, neg], axis=2)                     # (n_in, n_out, 2, bits)
    flat = both.reshape(n_in, n_out * 2 * w_fp.bits)
    tiles = []
    for lo in range(0, n_in, tile_rows):
        rows = slice(lo, min(lo + tile_rows, n_in))
        tiles.append((rows, flat[rows]))
    return ArrayMapping(w_fp.bits, tiles, n_in, n_out)


# ---------------------------------------------------------------------------
# Crossbar matrix-vector product
# ---------------------------------------------------------------------------

MODES = ("ideal", "solver", "surrogate")


@dataclass
class MvmStats:
    n_tasks: int = 0                # distinct column solves/predictions
    n_saturated: int = 0            # ADC clamp events (task-level)
    nf_values: list = field(default_factory=list)   # (nf array, weights array)

    def nf_quartiles(self):
        if not self.nf_values:
            return None
        vals = np.concatenate([v for v, _ in self.nf_values])
        wts = np.concatenate([w for _, w in self.nf_values])
        order = np.argsort(vals)
        vals, wts = vals[order], wts[order]
        cum = np.cumsum(wts) / wts.sum()
        return {q: float(vals[np.searchsorted(cum, p)])
                for q, p in (("q25", 0.25), ("median", 0.5), ("q75", 0.75))}


@lru_cache(maxsize=32)
def _tile_deltas(seed: int, layer: int, tile: int, rows: int,
                 cols: int) -> np.ndarray:
    """Unit-sigma conductance noise for one physical tile, keyed by
    (seed, layer, tile) so every device has a fixed draw."""
    rng = np.random.default_rng((seed, layer, tile))
    return rng.standard_normal((rows, cols))


def _conductance_table(cfg: CrossbarConfig) -> np.ndarray:
    dev = cfg.device
    return np.array([[dev.conductance(ib, wb) for wb in (0, 1)]
                     for ib in (0, 1)])


def _column_currents(cfg: CrossbarConfig, ladder, table, uniq, wbits,
                     delta, mode, surrogate):
    """Currents for every (unique input pattern, physical column) pair.

    uniq: (u, r) {0,1}; wbits: (r, C) {0,1}; delta: (r, C) siemens or None.
    Returns (currents, ideal) as (u, C) arrays; the ideal reference is the
    leakage-inclusive state-conductance sum used by the NF convention."""
    u, r = uniq.shape
    C = wbits.shape[1]
    out = np.empty((u, C))
    ideal = np.empty((u, C))
    g00, g01 = table[0, 0], table[0, 1]
    g10, g11 = table[1, 0], table[1, 1]
    w = wbits.astype(np.float64)
    chunk = max(1, 8_000_000 // max(1, r * C))
    for lo in range(0, u, chunk):
        xi = uniq[lo:lo + chunk].astype(np.float64)[:, :, None]  # (uc, r, 1)
        g = (g00 + xi * (g10 - g00) + w * (g01 - g00)
             + (xi * w) * (g11 - g10 - g01 + g00))               # (uc, r, C)
        if delta is not None:
            g = np.maximum(g + xi * delta, 1e-12)
        tasks = g.transpose(0, 2, 1).reshape(-1, r)
        i_ideal = cfg.v_bl * tasks.sum(axis=1)
        if mode == "solver":
            if ladder is None:
                cur = i_ideal
            else:
                cur = solve_gate_columns(ladder, tasks)
        else:                        # surrogate
            feats = np.empty((tasks.shape[0], 2 * r))
            feats[:, :r] = np.broadcast_to(
                uniq[lo:lo + chunk][:, None, :],
                (xi.shape[0], C, r)).reshape(-1, r)
            feats[:, r:] = tasks * cfg.device.corners.r_on
            signed = surrogate.forward(feats)
            cur = np.where(i_ideal > 0, i_ideal * (1.0 - signed), 0.0)
        out[lo:lo + chunk] = cur.reshape(-1, C)
        ideal[lo:lo + chunk] = i_ideal.reshape(-1, C)
    return out, ideal


def crossbar_mvm_batch(x_fp: FixedPointTensor, w_fp: FixedPointTensor,
                       cfg: CrossbarConfig, mode: str = "ideal",
                       adc: AdcModel = None, surrogate=None,
                       variation: VariationConfig = None,
                       layer_index: int = 0):
    """Integer matrix-vector products for a batch of fixed-point inputs.

    x_fp values: (B, n); w_fp values: (n, m).  Returns (acc (B, m) int64,
    MvmStats); acc approximates x_int @ w_int (exactly, in ideal mode with
    a non-saturating ADC)."""
    if mode not in MODES:
        raise DomainError(f"unknown mode {mode!r}; expected one of {MODES}")
    if cfg.topology is not Topology.GATE_INPUT:
        raise DomainError("inference offload requires the gate-input array")
    if mode == "surrogate" and surrogate is None:
        raise DomainError("surrogate mode needs a trained network")
    x = np.atleast_2d(x_fp.values)
    if x.shape[1] != w_fp.values.shape[0]:
        raise DomainError("input length does not match weight rows")
    if x_fp.bits != w_fp.bits:
        raise DomainError("input and weight bit widths must match")
    bits = x_fp.bits
    B, n = x.shape
    mapping = map_weights(w_fp, cfg.rows)
    stats = MvmStats()

    planes, cycle_w = input_bit_planes(x, bits)      # (B, n, bits)
    acc = np.zeros((B, mapping.n_out), dtype=np.int64)
    slice_w = 2 ** np.arange(bits, dtype=np.int64)

    for t, (row_slice, wbits) in enumerate(mapping.row_tiles):
        r = wbits.shape[0]
        tile_cfg = cfg if r == cfg.rows else replace(cfg, rows=r)
        tile_adc = adc or default_adc(tile_cfg)
        bit_mat = planes[:, row_slice, :].transpose(0, 2, 1).reshape(B * bits, r)
        if mode == "ideal":
            counts, n_sat = _ideal_counts(tile_cfg, tile_adc, bit_mat, wbits)
            stats.n_saturated += n_sat
        else:
            ladder = _solver_ladder(tile_cfg, mode)
            table = _conductance_table(tile_cfg)
            delta = None
            if variation is not None and variation.sigma_frac > 0:
                delta = (variation.sigma_frac * tile_cfg.g_on
                         * _tile_deltas(int(variation.seed), layer_index, t,
                                        r, wbits.shape[1]))
            counts = np.zeros((B * bits, wbits.shape[1]), dtype=np.int64)
            for rows_g in tile_cfg.activation_groups():
                masked = np.zeros_like(bit_mat)
                masked[:, rows_g] = bit_mat[:, rows_g]
                uniq, inv = np.unique(masked, axis=0, return_inverse=True)
                cur, ideal = _column_currents(tile_cfg, ladder, table, uniq,
                                              wbits, delta, mode, surrogate)
                group_counts, n_sat = tile_adc.quantize(cur)
                stats.n_saturated += n_sat
                stats.n_tasks += cur.size
                _record_nf(stats, cur, ideal, inv)
                counts += group_counts[inv]
        # Shift-add recombination: (B, bits_in, out, sign, bits_w).
        c6 = counts.reshape(B, bits, mapping.n_out, 2, bits)
        signed = c6[..., 0, :].astype(np.int64) - c6[..., 1, :]
        per_cycle = signed @ slice_w                 # (B, bits_in, out)
        acc += np.tensordot(cycle_w, per_cycle, axes=([0], [1])).astype(np.int64)
    return acc, stats


def _ideal_counts(cfg, adc, bit_mat, wbits):
    """Exact per-group integer dot products through the ADC transfer."""
    counts = np.zeros((bit_mat.shape[0], wbits.shape[1]), dtype=np.int64)
    n_sat = 0
    w = wbits.astype(np.int64)
    for rows_g in cfg.activation_groups():
        dots = bit_mat[:, rows_g].astype(np.int64) @ w[rows_g]
        n_sat += int(np.count_nonzero(dots > adc.levels - 1))
        counts += np.minimum(dots, adc.levels - 1)
    return counts, n_sat


def _solver_ladder(cfg: CrossbarConfig, mode: str):
    if mode != "solver":
        return None
    ladder = gate_ladder(cfg)
    if ladder is None:
        p = cfg.parasitics
        if not (p.wire_res == p.via_res == p.r_driver == p.r_sink == 0):
            raise DomainError(
                "solver-mode inference supports either all-positive or "
                "all-zero parasitics")
    return ladder


def _record_nf(stats, currents, i_ideal, inv):
    """Occurrence-weighted deviation samples versus the leakage-inclusive
    ideal, matching the NF convention used everywhere else."""
    mask = i_ideal > 0
    if not mask.any():
        return
    nf = np.abs(1.0 - currents[mask] / i_ideal[mask]).ravel()
    weights = np.bincount(inv, minlength=i_ideal.shape[0]).astype(np.float64)
    wts = np.broadcast_to(weights[:, None], i_ideal.shape)[mask].ravel()
    # Deterministic stride subsampling keeps the summary memory bounded.
    if nf.size > 250_000:
        step = -(-nf.size // 250_000)
        nf, wts = nf[::step], wts[::step]
    stats.nf_values.append((nf.astype(np.float32), wts.astype(np.float32)))


def crossbar_mvm(x_fp: FixedPointTensor, w_fp: FixedPointTensor,
                 cfg: CrossbarConfig, mode: str = "ideal",
                 adc: AdcModel = None, surrogate=None,
                 variation: VariationConfig = None):
    """Single-vector convenience wrapper around crossbar_mvm_batch."""
    acc, stats = crossbar_mvm_batch(
        FixedPointTensor(np.atleast_2d(x_fp.values), x_fp.bits, x_fp.scale),
        w_fp, cfg, mode=mode, adc=adc, surrogate=surrogate,
        variation=variation)
    return acc[0], stats


# ---------------------------------------------------------------------------
# Model and dataset files
# ---------------------------------------------------------------------------

MODEL_FORMAT = "xbar-dse-model-v1"
DATASET_FORMAT = "xbar-dse-dataset-v1"
_ACTIVATIONS = {
    "relu": lambda z: np.maximum(z, 0.0),
    "none": lambda z: z,
}


@dataclass
class LayerSpec:
    weights: np.ndarray             # (in, out) float
    bias: np.ndarray                # (out,)
    activation: str = "none"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if self.weights.shape[1] != self.bias.shape[0]:
            raise DomainError("bias length must match output width")


@dataclass
class MlpModel:
    layers: list

    def predict_float(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            h = _ACTIVATIONS[layer.activation](h @ layer.weights + layer.bias)
        return h


def save_model(path, model: MlpModel) -> None:
    path = Path(path)
    blob_path = path.with_suffix(".bin")
    manifest = {"format": MODEL_FORMAT, "dtype": "<f4",
                "blob": blob_path.name, "layers": []}
    parts = []
    for layer in model.layers:
        manifest["layers"].append({
            "in": int(layer.weights.shape[0]),
            "out": int(layer.weights.shape[1]),
            "activation": layer.activation})
        parts.extend([layer.weights.ravel(), layer.bias.ravel()])
    np.concatenate(parts).astype("<f4").tofile(blob_path)
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def load_model(path) -> MlpModel:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DomainError(f"cannot read model manifest: {exc}") from exc
    if manifest.get("format") != MODEL_FORMAT:
        raise DomainError(f"not a {MODEL_FORMAT} file: {path}")
    blob = np.fromfile(path.parent / manifest["blob"],
                       dtype=manifest.get("dtype", "<f4")).astype(np.float64)
    expected = sum(s["in"] * s["out"] + s["out"] for s in manifest["layers"])
    if blob.size != expected:
        raise DomainError(
            f"model blob holds {blob.size} values, expected {expected}")
    layers, pos = [], 0
    for s in manifest["layers"]:
        w = blob[pos:pos + s["in"] * s["out"]].reshape(s["in"], s["out"])
        pos += w.size
        b = blob[pos:pos + s["out"]]
        pos += b.size
        layers.append(LayerSpec(w, b, s["activation"]))
    return MlpModel(layers)


def save_dataset(path, features: np.ndarray, labels: np.ndarray) -> None:
    path = Path(path)
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] != labels.shape[0]:
        raise DomainError("feature and label counts differ")
    blob_path = path.with_suffix(".bin")
    manifest = {"format": DATASET_FORMAT, "dtype": "<f4",
                "blob": blob_path.name,
                "n_samples": int(features.shape[0]),
                "n_features": int(features.shape[1]),
                "n_classes": int(labels.max() + 1)}
    np.concatenate([features.ravel(),
                    labels.astype(np.float64)]).astype("<f4").tofile(blob_path)
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(path):
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DomainError(f"cannot read dataset manifest: {exc}") from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise DomainError(f"not a {DATASET_FORMAT} file: {path}")
    blob = np.fromfile(path.parent / manifest["blob"],
                       dtype=manifest.get("dtype", "<f4")).astype(np.float64)
    n, d = manifest["n_samples"], manifest["n_features"]
    if blob.size != n * d + n:
        raise DomainError(
            f"dataset blob holds {blob.size} values, expected {n * d + n}")
    features = blob[:n * d].reshape(n, d)
    labels = blob[n * d:].astype(np.int64)
    return features, labels


# ---------------------------------------------------------------------------
# End-to-end inference
# ---------------------------------------------------------------------------

@dataclass
class InferenceResult:
    mode: str
    n_samples: int
    accuracy: float
    accuracy_ideal: float
    n_saturated: int
    layer_nf: list                  # per-layer quartile dicts (or None)
    predictions: np.ndarray

    @property
    def drop(self) -> float:
        return self.accuracy_ideal - self.accuracy


def run_inference(model, dataset, mode: str = "ideal",
                  cfg: CrossbarConfig = None, bits: int = DEFAULT_BITS,
                  n_samples: int = None, sample_seed: int = 0,
                  adc: AdcModel = None, surrogate=None,
                  variation: VariationConfig = None) -> InferenceResult:
    """Classify a dataset with every matrix product offloaded to crossbars.

    model: MlpModel or manifest path; dataset: (features, labels) or
    manifest path.  The ideal-mode accuracy on the same samples is always
    reported alongside, so accuracy drops come from one call."""
    if isinstance(model, (str, Path)):
        model = load_model(model)
    if isinstance(dataset, (str, Path)):
        features, labels = load_dataset(dataset)
    else:
        features, labels = dataset
    if cfg is None:
        cfg = CrossbarConfig()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if n_samples is not None and n_samples < len(labels):
        pick = np.random.default_rng(sample_seed).permutation(
            len(labels))[:n_samples]
        features, labels = features[pick], labels[pick]

    w_fps = [quantize_tensor(layer.weights, bits) for layer in model.layers]

    def forward(run_mode):
        h = features
        total_sat, layer_nf = 0, []
        for k, layer in enumerate(model.layers):
            x_fp = quantize_tensor(h, bits)
            acc, stats = crossbar_mvm_batch(
                x_fp, w_fps[k], cfg, mode=run_mode, adc=adc,
                surrogate=surrogate, variation=variation, layer_index=k)
            z = acc * (x_fp.scale * w_fps[k].scale) + layer.bias
            h = _ACTIVATIONS[layer.activation](z)
            total_sat += stats.n_saturated
            layer_nf.append(stats.nf_quartiles())
        return np.argmax(h, axis=1), total_sat, layer_nf

    pred_ideal, _, _ = forward("ideal")
    acc_ideal = float(np.mean(pred_ideal == labels))
    if mode == "ideal":
        return InferenceResult("ideal", len(labels), acc_ideal, acc_ideal,
                               0, [None] * len(model.layers), pred_ideal)
    pred, n_sat, layer_nf = forward(mode)
    return InferenceResult(mode, len(labels), float(np.mean(pred == labels)),
                           acc_ideal, n_sat, layer_nf, pred)
