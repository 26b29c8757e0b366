"""Per-column MLP emulator of the array non-ideality.

A column of a gate-input array is fully described by its n input bits and
its n cell conductances; a small [2n -> H -> 1] network learns the signed
relative current deviation of that column from solver-generated data, and
inference can then reconstruct non-ideal currents without a circuit solve:
I_nonideal = I_ideal * (1 - signed_dev).

The signed deviation (not its absolute value) is the regression target so
the current reconstruction keeps its direction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .devices import Fidelity
from .errors import ConvergenceError, DomainError
from .metrics import state_conductances
from .solver import solve_gate_columns
from .topology import CrossbarConfig, Topology, gate_ladder


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

@dataclass
class ColumnDataset:
    features: np.ndarray           # (N, 2n): input bits, conductances / G_ON
    targets: np.ndarray            # (N,): signed relative deviation
    n_excluded_zero_ideal: int
    train_fraction: float = 0.8

    @property
    def n(self) -> int:
        return self.features.shape[1] // 2

    def split(self):
        """Deterministic train/test split (leading fraction is training)."""
        cut = int(round(self.train_fraction * len(self.targets)))
        return ((self.features[:cut], self.targets[:cut]),
                (self.features[cut:], self.targets[cut:]))


def generate_dataset(cfg: CrossbarConfig, n_records: int, seed: int = 0,
                     input_density: float = 0.5, weight_density: float = 0.5,
                     g_fields=None) -> ColumnDataset:
    """Solver-labelled column records from random Bernoulli workloads.

    Record k is keyed by (seed, k).  Requires a gate-input configuration
    (the per-column decomposition relies on column independence).
    """
    if cfg.topology is not Topology.GATE_INPUT:
        raise DomainError("surrogate training requires a gate-input array")
    if cfg.device.fidelity is not Fidelity.LEVEL0_LINEAR:
        raise DomainError("surrogate training uses the Level0 linear cells")
    lad = gate_ladder(cfg)
    if lad is None:
        raise DomainError("surrogate training requires nonzero parasitics")
    if n_records < 1:
        raise DomainError("need at least one record")
    n = cfg.rows
    inputs = np.empty((n_records, n))
    g_cols = np.empty((n_records, n))
    for k in range(n_records):
        rng = np.random.default_rng((int(seed), int(k)))
        w = (rng.random(n) < weight_density).astype(np.int64)
        x = (rng.random(n) < input_density).astype(np.int64)
        g = state_conductances(cfg, w[:, None], x)[:, 0]
        if g_fields is not None:
            g = g_fields(cfg, w[:, None], x, k)[0][:, 0]
        inputs[k] = x
        g_cols[k] = g
    ideals = cfg.v_bl * g_cols.sum(axis=1)
    currents = solve_gate_columns(lad, g_cols)
    keep = ideals != 0.0
    signed = (ideals[keep] - currents[keep]) / ideals[keep]
    features = np.concatenate([inputs[keep], g_cols[keep] * cfg.device.corners.r_on],
                              axis=1)
    return ColumnDataset(features, signed, int(np.sum(~keep)))


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0.0).astype(float)),
}


@dataclass
class SurrogateNet:
    w1: np.ndarray                 # (2n, H)
    b1: np.ndarray                 # (H,)
    w2: np.ndarray                 # (H, 1)
    b2: np.ndarray                 # (1,)
    activation: str = "tanh"
    feat_mean: np.ndarray = None   # (2n,) input standardization
    feat_scale: np.ndarray = None  # (2n,)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if self.feat_mean is None:
            self.feat_mean = np.zeros(self.w1.shape[0])
        if self.feat_scale is None:
            self.feat_scale = np.ones(self.w1.shape[0])

    @property
    def n(self) -> int:
        return self.w1.shape[0] // 2

    def _normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feat_mean) / self.feat_scale

    def forward(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[1] != self.w1.shape[0]:
            raise DomainError(
                f"feature length {features.shape[1]} != {self.w1.shape[0]}")
        act, _ = _ACTIVATIONS[self.activation]
        a1 = act(self._normalize(features) @ self.w1 + self.b1)
        return (a1 @ self.w2 + self.b2)[:, 0]

    # -- persistence --------------------------------------------------------

    def save(self, json_path) -> None:
        """JSON manifest plus a sibling .bin blob of all parameters as
        little-endian float64 in the order w1, b1, w2, b2, mean, scale."""
        json_path = str(json_path)
        bin_path = json_path[:-5] + ".bin" if json_path.endswith(".json") \
            else json_path + ".bin"
        blob = np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(),
                               self.b2, self.feat_mean, self.feat_scale])
        blob.astype("<f8").tofile(bin_path)
        manifest = {
            "format": "xbar-dse-surrogate-v1",
            "layers": [int(self.w1.shape[0]), int(self.w1.shape[1]), 1],
            "activation": self.activation,
            "blob": bin_path.rsplit("/", 1)[-1],
            "blob_dtype": "<f8",
            "meta": self.meta,
        }
        with open(json_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(json_path) -> "SurrogateNet":
        json_path = str(json_path)
        with open(json_path) as fh:
            m = json.load(fh)
        if m.get("format") != "xbar-dse-surrogate-v1":
            raise DomainError("not a surrogate net manifest")
        d_in, h, _ = m["layers"]
        bin_path = json_path.rsplit("/", 1)
        bin_path = (bin_path[0] + "/" if len(bin_path) == 2 else "") + m["blob"]
        blob = np.fromfile(bin_path, dtype="<f8")
        expect = d_in * h + h + h + 1 + 2 * d_in
        if blob.size != expect:
            raise DomainError(f"blob has {blob.size} values, expected {expect}")
        pos = 0

        def take(k):
            nonlocal pos
            out = blob[pos:pos + k]
            pos += k
            return out

        return SurrogateNet(take(d_in * h).reshape(d_in, h), take(h),
                            take(h).reshape(h, 1), take(1),
                            m["activation"], take(d_in), take(d_in),
                            m.get("meta", {}))


@dataclass(frozen=True)
class TrainOptions:
    hidden: int = 64
    activation: str = "tanh"
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 64
    momentum: float = 0.9
    seed: int = 0


@dataclass
class TrainResult:
    net: SurrogateNet
    train_mse: float
    test_mse: float
    epoch_losses: list


def _mse_and_grads(net: SurrogateNet, x: np.ndarray, y: np.ndarray):
    act, dact = _ACTIVATIONS[net.activation]
    xn = net._normalize(x)
    z1 = xn @ net.w1 + net.b1
    a1 = act(z1)
    out = (a1 @ net.w2 + net.b2)[:, 0]
    err = out - y
    mse = float(np.mean(err * err))
    scale = 2.0 / len(y)
    d_out = (scale * err)[:, None]
    g_w2 = a1.T @ d_out
    g_b2 = d_out.sum(axis=0)
    d_a1 = d_out @ net.w2.T * dact(a1)
    g_w1 = xn.T @ d_a1
    g_b1 = d_a1.sum(axis=0)
    return mse, (g_w1, g_b1, g_w2, g_b2)


def gradient_check(net: SurrogateNet, x: np.ndarray, y: np.ndarray,
                   step: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences
    over every parameter."""
    _, grads = _mse_and_grads(net, x, y)
    params = [net.w1, net.b1, net.w2, net.b2]
    worst = 0.0
    for p, g in zip(params, grads):
        flat_p = p.ravel()
        flat_g = g.ravel()
        for k in range(flat_p.size):
            orig = flat_p[k]
            flat_p[k] = orig + step
            hi, _ = _mse_and_grads(net, x, y)
            flat_p[k] = orig - step
            lo, _ = _mse_and_grads(net, x, y)
            flat_p[k] = orig
            fd = (hi - lo) / (2 * step)
            denom = max(abs(fd), abs(flat_g[k]), 1e-8)
            worst = max(worst, abs(fd - flat_g[k]) / denom)
    return worst


def train(dataset: ColumnDataset, options: TrainOptions = None) -> TrainResult:
    """Mini-batch gradient descent with momentum on the signed deviation.

    The recorded epoch losses are non-increasing: an epoch whose full-batch
    loss rises is rolled back and the learning rate halved.
    """
    opt = options or TrainOptions()
    (x_tr, y_tr), (x_te, y_te) = dataset.split()
    if len(y_tr) == 0:
        raise DomainError("empty training split")
    rng = np.random.default_rng(opt.seed)
    d_in = x_tr.shape[1]
    mean = x_tr.mean(axis=0)
    scale = x_tr.std(axis=0)
    scale[scale < 1e-12] = 1.0
    net = SurrogateNet(
        rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, opt.hidden)),
        np.zeros(opt.hidden),
        rng.normal(0.0, 1.0 / np.sqrt(opt.hidden), (opt.hidden, 1)),
        np.zeros(1), opt.activation, mean, scale,
        meta={"records": len(y_tr) + len(y_te)})
    params = [net.w1, net.b1, net.w2, net.b2]
    vel = [np.zeros_like(p) for p in params]
    lr = opt.learning_rate
    loss, _ = _mse_and_grads(net, x_tr, y_tr)
    losses = [loss]
    order = np.arange(len(y_tr))
    for epoch in range(opt.epochs):
        snapshot = [p.copy() for p in params]
        rng.shuffle(order)
        for lo in range(0, len(order), opt.batch_size):
            idx = order[lo:lo + opt.batch_size]
            mse, grads = _mse_and_grads(net, x_tr[idx], y_tr[idx])
            if not np.isfinite(mse):
                raise ConvergenceError(
                    f"training diverged at epoch {epoch} (loss {mse})",
                    last_residual=mse, iterations=epoch)
            for p, v, g in zip(params, vel, grads):
                v *= opt.momentum
                v -= lr * g
                p += v
        loss, _ = _mse_and_grads(net, x_tr, y_tr)
        if loss > losses[-1]:
            # Roll the epoch back, kill the momentum that caused the
            # overshoot, and retry more carefully.
            for p, s in zip(params, snapshot):
                p[...] = s
            for v in vel:
                v[...] = 0.0
            lr *= 0.5
            losses.append(losses[-1])
        else:
            losses.append(loss)
            # Bold-driver step policy: grow the step while progress holds.
            lr *= 1.1
    train_mse = losses[-1]
    test_mse = (float(np.mean((net.forward(x_te) - y_te) ** 2))
                if len(y_te) else float("nan"))
    return TrainResult(net, train_mse, test_mse, losses)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def column_features(cfg: CrossbarConfig, input_bits, weight_bits,
                    g_column: np.ndarray = None) -> np.ndarray:
    """Feature vector(s) for columns: input bits then R_ON-normalized cell
    conductances.  Accepts (n,) vectors or (B, n) batches."""
    input_bits = np.atleast_2d(np.asarray(input_bits, dtype=np.float64))
    weight_bits = np.atleast_2d(np.asarray(weight_bits, dtype=np.int64))
    if g_column is None:
        g_column = np.stack([
            state_conductances(cfg, w[:, None], x.astype(np.int64))[:, 0]
            for w, x in zip(weight_bits, input_bits)])
    g_norm = np.atleast_2d(g_column) * cfg.device.corners.r_on
    return np.concatenate([input_bits, g_norm], axis=1)


def predict(net: SurrogateNet, cfg: CrossbarConfig, input_bits, weight_bits,
            i_ideal=None, g_column=None):
    """Signed deviation, nf, and reconstructed current for one column or a
    batch.  i_ideal defaults to the leakage-aware parasitic-free current;
    zero-ideal columns bypass the net and return zero current."""
    feats = column_features(cfg, input_bits, weight_bits, g_column)
    n = net.n
    if i_ideal is None:
        i_ideal = cfg.v_bl * (feats[:, n:] / cfg.device.corners.r_on).sum(axis=1)
    i_ideal = np.atleast_1d(np.asarray(i_ideal, dtype=np.float64))
    signed = net.forward(feats)
    nz = i_ideal != 0.0
    signed = np.where(nz, signed, 0.0)
    i_nonideal = i_ideal * (1.0 - signed)
    return signed, np.abs(signed), i_nonideal
