"""Command-line front end: configuration loading, subcommand dispatch, and
reproducible artifact emission.

Configuration is resolved in three layers — built-in defaults, then an
optional JSON config file (comments allowed), then ``--set key=value``
overrides and convenience flags.  Every artifact-producing run also writes a
``manifest.json`` recording the fully resolved configuration, seed, package
versions, and wall time, so any run can be reproduced from its manifest.

Exit codes: 0 success, 1 usage/configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import difflib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import dse, metrics
from .devices import BitCellModel, Fidelity, TechnologyKind
from .errors import ConvergenceError, DomainError, SingularNetworkError, StateError
from .inference import run_inference
from .surrogate import SurrogateNet, TrainOptions, generate_dataset, train
from .topology import Activation, CrossbarConfig, ParasiticsConfig, Topology

DEFAULTS = {
    "tech": "fefet",
    "rows": 64,
    "cols": 64,
    "topology": "gate",
    "activation": "fwa",
    "group_size": 8,
    "v_wl": 0.7,
    "v_bl": 0.25,
    "fidelity": "level0",
    "threshold": 1e-6,
    "device": {},
    "parasitics": {
        "wire_res": 182.0,
        "via_res": 56.0,
        "r_driver": 500.0,
        "r_sink": 100.0,
        "scale": 1.0,
    },
}

DEVICE_KNOBS = {
    "sram": ("v_bias", "r_on"),
    "reram": ("gap", "r_on"),
    "fefet": ("t_fe", "r_on", "k_mw"),
    "sotmram": ("t_mgo",),
}


class UsageError(Exception):
    """Bad flags, malformed config, or missing files (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Configuration loading
# ---------------------------------------------------------------------------

def _strip_json_comments(text: str) -> str:
    """Remove // line and /* block */ comments outside string literals."""
    out = []
    i, n = 0, len(text)
    in_string = False
    while i < n:
        c = text[i]
        if in_string:
            out.append(c)
            if c == "\\" and i + 1 < n:
                out.append(text[i + 1])
                i += 1
            elif c == '"':
                in_string = False
        elif c == '"':
            in_string = True
            out.append(c)
        elif c == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        elif c == "/" and i + 1 < n and text[i + 1] == "*":
            end = text.find("*/", i + 2)
            if end == -1:
                raise UsageError("unterminated /* comment in config")
            i = end + 2
            continue
        else:
            out.append(c)
        i += 1
    return "".join(out)


def _suggest(key: str, candidates) -> str:
    near = difflib.get_close_matches(key, list(candidates), n=1)
    return f"; did you mean {near[0]!r}?" if near else ""


def _check_types(provided, reference, path=""):
    for key, value in provided.items():
        where = f"{path}{key}"
        if key not in reference:
            raise UsageError(
                f"unknown config key {where!r}{_suggest(key, reference)}")
        ref = reference[key]
        if isinstance(ref, dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {where!r} must be an object")
            _check_types(value, ref, where + ".")
        elif isinstance(ref, bool):
            if not isinstance(value, bool):
                raise UsageError(f"config key {where!r} must be a boolean")
        elif isinstance(ref, int) and not isinstance(ref, bool):
            if not isinstance(value, int) or isinstance(value, bool):
                raise UsageError(f"config key {where!r} must be an integer")
        elif isinstance(ref, float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise UsageError(f"config key {where!r} must be a number")
        elif isinstance(ref, str):
            if not isinstance(value, str):
                raise UsageError(f"config key {where!r} must be a string")


def _merge(base: dict, update: dict) -> None:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value


def _reference_schema(tech: str) -> dict:
    ref = copy.deepcopy(DEFAULTS)
    ref["device"] = {k: 0.0 for k in DEVICE_KNOBS.get(tech, ())}
    return ref


def _parse_override(item: str):
    if "=" not in item:
        raise UsageError(f"override {item!r} is not of the form key=value")
    key, _, raw = item.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path=None, overrides=()) -> dict:
    """Layered config resolution: defaults <- file <- overrides.

    Unknown keys are rejected with a nearest-key suggestion; values must
    match the type of the corresponding default."""
    cfg = copy.deepcopy(DEFAULTS)
    file_cfg = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file not found: {p}")
        try:
            text = _strip_json_comments(p.read_text())
            file_cfg = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed config {p}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
    override_cfg = {}
    for item in overrides:
        key, value = _parse_override(item)
        node = override_cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    tech = (override_cfg.get("tech") or file_cfg.get("tech")
            or DEFAULTS["tech"])
    if tech not in DEVICE_KNOBS:
        raise UsageError(f"unknown technology {tech!r}"
                         f"{_suggest(str(tech), DEVICE_KNOBS)}")
    reference = _reference_schema(tech)
    _check_types(file_cfg, reference)
    _check_types(override_cfg, reference)
    _merge(cfg, file_cfg)
    _merge(cfg, override_cfg)
    return cfg


def build_crossbar_config(cfg: dict) -> CrossbarConfig:
    """Instantiate the simulation config from a resolved config dict."""
    try:
        tech = TechnologyKind(cfg["tech"])
        topology = Topology(cfg["topology"])
        activation = Activation(cfg["activation"])
        fidelity = Fidelity(cfg["fidelity"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    pz = cfg["parasitics"]
    parasitics = ParasiticsConfig(
        wire_res=pz["wire_res"], via_res=pz["via_res"],
        r_driver=pz["r_driver"], r_sink=pz["r_sink"]).scaled(pz["scale"])
    device = BitCellModel.for_tech(tech, fidelity=fidelity,
                                   **{k: float(v)
                                      for k, v in cfg["device"].items()})
    return CrossbarConfig(rows=cfg["rows"], cols=cfg["cols"],
                          topology=topology, v_wl=cfg["v_wl"],
                          v_bl=cfg["v_bl"], activation=activation,
                          group_size=cfg["group_size"], device=device,
                          parasitics=parasitics)


# ---------------------------------------------------------------------------
# Artifact plumbing
# ---------------------------------------------------------------------------

class _Run:
    """Output directory handling, overwrite protection, and the manifest."""

    def __init__(self, args, resolved_cfg):
        self.args = args
        self.cfg = resolved_cfg
        self.out = Path(args.out) if args.out else None
        self.outputs = []
        self.t0 = time.time()
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)

    def target(self, name: str) -> Path:
        if self.out is None:
            raise UsageError(f"--out is required to write {name}")
        path = self.out / name
        if path.exists() and not self.args.force:
            raise UsageError(f"refusing to overwrite {path} (use --force)")
        self.outputs.append(name)
        return path

    def write_json(self, name: str, payload) -> Path:
        path = self.target(name)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    def finish(self) -> None:
        if self.out is None:
            return
        manifest = {
            "subcommand": self.args.subcommand,
            "config": self.cfg,
            "seed": getattr(self.args, "seed", None),
            "threads": _thread_count(),
            "versions": {
                "xbar_dse": __version__,
                "python": sys.version.split()[0],
                "numpy": np.__version__,
            },
            "outputs": sorted(self.outputs),
            "wall_time_s": round(time.time() - self.t0, 3),
        }
        path = self.out / "manifest.json"
        if path.exists() and not self.args.force:
            raise UsageError(f"refusing to overwrite {path} (use --force)")
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("XBAR_DSE_THREADS", "1")))
    except ValueError:
        return 1


def _nf_payload(d) -> dict:
    return {**d.quantiles, "mean": d.mean, "count": d.count,
            "excluded_zero_ideal": d.n_excluded_zero_ideal,
            "failed": d.n_failed}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_solve(args, cfg, xbar):
    inputs = _parse_bits(args.input, xbar.rows, "--input")
    weights = _parse_bits(args.weight, xbar.rows * xbar.cols, "--weight")
    weights = weights.reshape(xbar.rows, xbar.cols)
    currents = metrics.simulate(xbar, weights, inputs)
    for j, current in enumerate(currents):
        print(f"column {j}: {current:.6e} A")
    run = _Run(args, cfg)
    if run.out is not None:
        run.write_json("solve.json", {
            "inputs": inputs.tolist(), "weights": weights.tolist(),
            "column_currents_a": currents.tolist()})
        run.finish()
    return 0


def _parse_bits(spec: str, count: int, flag: str) -> np.ndarray:
    parts = [p for p in spec.replace(",", " ").split() if p]
    try:
        bits = np.array([int(p) for p in parts], dtype=np.int64)
    except ValueError as exc:
        raise UsageError(f"{flag} must be 0/1 bits: {exc}") from exc
    if bits.size == 1:
        bits = np.full(count, bits[0])
    if bits.size != count:
        raise UsageError(f"{flag} needs {count} bits, got {bits.size}")
    if not np.isin(bits, (0, 1)).all():
        raise UsageError(f"{flag} entries must be 0 or 1")
    return bits


def _cmd_nf(args, cfg, xbar):
    dist = metrics.nf_distribution(xbar, n_samples=args.samples,
                                   seed=args.seed)
    print(f"nf median {dist.median:.6f}  mean {dist.mean:.6f}  "
          f"count {dist.count}")
    run = _Run(args, cfg)
    if run.out is not None:
        metrics.write_nf_samples_csv(run.target("nf_samples.csv"), dist)
        metrics.write_nf_summary_csv(run.target("nf_summary.csv"),
                                     [("run", dist)])
        run.finish()
    return 0


def _cmd_sm(args, cfg, xbar):
    curve = metrics.sense_margin_curve(xbar, x_max=args.x_max,
                                       mode=args.mode,
                                       threshold=cfg["threshold"],
                                       seed=args.seed)
    print(f"o_max {curve.o_max} at threshold {cfg['threshold']:.3e} A")
    run = _Run(args, cfg)
    if run.out is not None:
        metrics.write_sm_csv(run.target("sm.csv"), curve)
        run.finish()
    return 0


def _cmd_sweep(args, cfg, xbar):
    values = (tuple(float(v) for v in args.values.split(","))
              if args.values else None)
    spec_values = values or {
        "r_on": dse.RON_SWEEP_DEFAULT,
        "t_fe": dse.TFE_SWEEP_DEFAULT,
        "t_mgo": dse.TMGO_SWEEP_DEFAULT}[args.knob]
    spec = dse.SweepSpec(args.knob, tuple(spec_values),
                         n_samples=args.samples, seed=args.seed)
    rows = []
    if args.knob == "r_on":
        result = dse.sweep_ron(xbar.tech, spec.values, base_cfg=xbar,
                               spec=spec)
        points = [(p.value, xbar.activation.value, p) for p in result.points]
    elif args.knob == "t_fe":
        result = dse.sweep_tfe(spec.values, base_cfg=xbar, spec=spec)
        points = [(p.value, xbar.activation.value, p) for p in result.points]
    else:
        grid = dse.sweep_tmgo(spec.values, base_cfg=xbar, spec=spec)
        points = [(t, act.value, p) for (t, act), p in sorted(
            grid.items(), key=lambda kv: (kv[0][0], kv[0][1].value))]
    for value, act, p in points:
        rows.append({"value": value, "activation": act,
                     "implied_knob": p.implied_knob,
                     "nf_median": p.nf.median, "nf_mean": p.nf.mean,
                     "o_max": p.o_max,
                     "sm_a": p.sm.sm.tolist()})
        print(f"{args.knob}={value:g} [{act}]  nf_median {p.nf.median:.6f}  "
              f"o_max {p.o_max}")
    run = _Run(args, cfg)
    if run.out is not None:
        path = run.target("sweep.csv")
        with open(path, "w") as fh:
            fh.write("value,activation,implied_knob,nf_median,nf_mean,o_max\n")
            for r in rows:
                implied = "" if r["implied_knob"] is None \
                    else f"{r['implied_knob']:.12g}"
                fh.write(f"{r['value']:.12g},{r['activation']},{implied},"
                         f"{r['nf_median']:.12g},{r['nf_mean']:.12g},"
                         f"{r['o_max']}\n")
        run.write_json("sweep.json", {"knob": args.knob, "points": rows})
        run.finish()
    return 0


def _cmd_variations(args, cfg, xbar):
    if not 0.0 <= args.sigma < 1.0:
        raise UsageError("--sigma must lie in [0, 1)")
    per_seed = []
    for k in range(args.n_seeds):
        vc = dse.VariationConfig(sigma_frac=args.sigma, seed=args.seed + k)
        dist = metrics.nf_distribution(xbar, n_samples=args.samples,
                                       seed=args.seed,
                                       g_fields=dse.apply_variations(xbar, vc))
        per_seed.append((vc.seed, dist))
        print(f"seed {vc.seed}: nf median {dist.median:.6f}")
    medians = [d.median for _, d in per_seed]
    print(f"mean of medians over {args.n_seeds} seeds: "
          f"{float(np.mean(medians)):.6f}")
    run = _Run(args, cfg)
    if run.out is not None:
        metrics.write_nf_summary_csv(
            run.target("variations.csv"),
            [(f"seed_{s}", d) for s, d in per_seed])
        run.write_json("variations.json", {
            "sigma_frac": args.sigma,
            "per_seed": {str(s): _nf_payload(d) for s, d in per_seed},
            "mean_of_medians": float(np.mean(medians))})
        run.finish()
    return 0


def _cmd_train_surrogate(args, cfg, xbar):
    dataset = generate_dataset(xbar, args.records, seed=args.seed)
    options = TrainOptions(hidden=args.hidden, epochs=args.epochs,
                           learning_rate=args.lr, batch_size=args.batch_size,
                           seed=args.seed)
    result = train(dataset, options)
    print(f"train mse {result.train_mse:.3e}  test mse {result.test_mse:.3e}")
    run = _Run(args, cfg)
    if run.out is None:
        raise UsageError("train-surrogate needs --out to store the network")
    net_path = run.target("surrogate.json")
    run.outputs.append("surrogate.bin")
    result.net.save(net_path)
    run.write_json("training.json", {
        "records": args.records, "hidden": args.hidden,
        "epochs": args.epochs, "train_mse": result.train_mse,
        "test_mse": result.test_mse,
        "epoch_losses": [float(x) for x in result.epoch_losses]})
    run.finish()
    return 0


def _bundled_workload():
    from .deskmodel import desk_test_set, desk_model
    return desk_model(), desk_test_set()


def _cmd_infer(args, cfg, xbar):
    if args.bundled:
        model, dataset = _bundled_workload()
    else:
        if not (args.model and args.dataset):
            raise UsageError("provide --model and --dataset, or --bundled")
        model, dataset = args.model, args.dataset
    net = SurrogateNet.load(args.surrogate) if args.surrogate else None
    if args.mode == "surrogate" and net is None:
        raise UsageError("surrogate mode needs --surrogate NET.json")
    variation = None
    if args.variation_sigma > 0:
        variation = dse.VariationConfig(sigma_frac=args.variation_sigma,
                                        seed=args.variation_seed)
    result = run_inference(model, dataset, mode=args.mode, cfg=xbar,
                           n_samples=args.n_samples, sample_seed=args.seed,
                           surrogate=net, variation=variation)
    print(f"mode {result.mode}: accuracy {result.accuracy:.4f}  "
          f"ideal {result.accuracy_ideal:.4f}  drop {result.drop:.4f}  "
          f"saturated {result.n_saturated}")
    run = _Run(args, cfg)
    if run.out is not None:
        run.write_json("inference.json", {
            "mode": result.mode, "n_samples": result.n_samples,
            "accuracy": result.accuracy,
            "accuracy_ideal": result.accuracy_ideal,
            "accuracy_drop": result.drop,
            "n_saturated": result.n_saturated,
            "layer_nf_quartiles": result.layer_nf,
            "variation_sigma": args.variation_sigma})
        run.finish()
    return 0


def _cmd_compare(args, cfg, xbar):
    runner = None
    if args.with_inference:
        model, dataset = _bundled_workload()
        ideal_cache = {}

        def runner(tech_cfg, variation):
            if variation is None:
                res = run_inference(model, dataset, mode="solver",
                                    cfg=tech_cfg, n_samples=args.infer_samples,
                                    sample_seed=args.seed)
                ideal_cache[tech_cfg.tech] = res.accuracy_ideal
                return res.accuracy
            accs = [run_inference(model, dataset, mode="solver", cfg=tech_cfg,
                                  n_samples=args.infer_samples,
                                  sample_seed=args.seed,
                                  variation=dse.VariationConfig(
                                      variation.sigma_frac, seed=s)).accuracy
                    for s in range(args.variation_seeds)]
            return float(np.mean(accs))

    variation = (dse.VariationConfig(args.variation_sigma, seed=0)
                 if args.variation_sigma > 0 else None)
    report = dse.compare_technologies(rows=cfg["rows"], cols=cfg["cols"],
                                      n_samples=args.samples, seed=args.seed,
                                      x_max=args.x_max,
                                      inference_runner=runner,
                                      variation=variation)
    if args.with_inference:
        for tech, entry in report.entries.items():
            entry.accuracy_ideal = ideal_cache.get(tech)
    for tech, entry in report.entries.items():
        line = f"{tech.value}: nf median {entry.nf.median:.6f}  o_max {entry.o_max}"
        if entry.accuracy_nominal is not None:
            line += f"  accuracy {entry.accuracy_nominal:.4f}"
        print(line)
    run = _Run(args, cfg)
    if run.out is not None:
        run.write_json("compare.json", report.to_dict())
        run.finish()
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(sub):
    sub.add_argument("--config", help="JSON config file (comments allowed)")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE",
                     help="override a config key (dotted path)")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", help="output directory for artifacts")
    sub.add_argument("--force", action="store_true",
                     help="allow overwriting existing outputs")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker count (default: XBAR_DSE_THREADS or 1)")
    for flag, key in (("--tech", "tech"), ("--rows", "rows"),
                      ("--cols", "cols"), ("--topology", "topology"),
                      ("--activation", "activation"),
                      ("--group-size", "group_size")):
        sub.add_argument(flag, dest=f"cfg_{key}", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xbar-dse",
                     description="Crossbar-array non-ideality simulator "
                                 "and design-space explorer")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("solve", help="DC-solve one input/weight pattern")
    _add_common(p)
    p.add_argument("--input", required=True,
                   help="row input bits (single bit or comma list)")
    p.add_argument("--weight", required=True,
                   help="weight bits, row-major (single bit or comma list)")
    p.set_defaults(func=_cmd_solve)

    p = subs.add_parser("nf", help="non-ideality factor distribution")
    _add_common(p)
    p.add_argument("--samples", type=int, default=500)
    p.set_defaults(func=_cmd_nf)

    p = subs.add_parser("sm", help="sense-margin curve and O_MAX")
    _add_common(p)
    p.add_argument("--x-max", type=int, default=None)
    p.add_argument("--mode", default="structured",
                   choices=("structured", "exhaustive", "random"))
    p.set_defaults(func=_cmd_sm)

    p = subs.add_parser("sweep", help="design-knob sweep")
    _add_common(p)
    p.add_argument("--knob", required=True,
                   choices=("r_on", "t_fe", "t_mgo"))
    p.add_argument("--values", help="comma-separated knob values")
    p.add_argument("--samples", type=int, default=500)
    p.set_defaults(func=_cmd_sweep)

    p = subs.add_parser("variations",
                        help="device-variation Monte Carlo on the NF")
    _add_common(p)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=_cmd_variations)

    p = subs.add_parser("train-surrogate",
                        help="train the per-column deviation surrogate")
    _add_common(p)
    p.add_argument("--records", type=int, default=20000)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=_cmd_train_surrogate)

    p = subs.add_parser("infer", help="quantized-network inference")
    _add_common(p)
    p.add_argument("--model", help="model manifest JSON")
    p.add_argument("--dataset", help="dataset manifest JSON")
    p.add_argument("--bundled", action="store_true",
                   help="use the bundled desk model and dataset")
    p.add_argument("--mode", default="ideal",
                   choices=("ideal", "solver", "surrogate"))
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--surrogate", help="trained surrogate network JSON")
    p.add_argument("--variation-sigma", type=float, default=0.0)
    p.add_argument("--variation-seed", type=int, default=0)
    p.set_defaults(func=_cmd_infer)

    p = subs.add_parser("compare",
                        help="cross-technology comparison report")
    _add_common(p)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--x-max", type=int, default=None)
    p.add_argument("--with-inference", action="store_true")
    p.add_argument("--infer-samples", type=int, default=128)
    p.add_argument("--variation-sigma", type=float, default=0.0)
    p.add_argument("--variation-seeds", type=int, default=10)
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be >= 1")
            os.environ["XBAR_DSE_THREADS"] = str(args.threads)
        overrides = list(args.overrides)
        for key in ("tech", "topology", "activation"):
            value = getattr(args, f"cfg_{key}")
            if value is not None:
                overrides.append(f"{key}={json.dumps(value)}")
        for key in ("rows", "cols", "group_size"):
            value = getattr(args, f"cfg_{key}")
            if value is not None:
                try:
                    overrides.append(f"{key}={int(value)}")
                except ValueError as exc:
                    raise UsageError(f"--{key} must be an integer") from exc
        cfg = load_config(args.config, overrides)
        xbar = build_crossbar_config(cfg)
        return args.func(args, cfg, xbar)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, StateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, SingularNetworkError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
