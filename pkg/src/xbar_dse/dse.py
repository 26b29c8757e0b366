"""Design-space exploration: knob sweeps, device-variation Monte Carlo, and
the cross-technology comparison report.

All sweep points are evaluated on paired workloads (the sample index keys
the RNG, not the sweep point), so trend assertions compare like with like.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .devices import BitCellModel, TechnologyKind, calibrated_fefet
from .errors import DomainError
from .metrics import (NFDistribution, SMCurve, nf_distribution,
                      sense_margin_curve, state_conductances)
from .topology import Activation, CrossbarConfig, Topology

RON_SWEEP_DEFAULT = (10e3, 20e3, 60e3, 250e3)
TFE_SWEEP_DEFAULT = (5.0, 6.0, 7.0)
TMGO_SWEEP_DEFAULT = (1.1, 1.2, 1.3)


@dataclass(frozen=True)
class SweepSpec:
    knob: str                       # r_on | t_fe | t_mgo
    values: tuple
    n_samples: int = 500
    seed: int = 0
    x_max: int = None
    sm_mode: str = "structured"

    def __post_init__(self):
        if not self.values:
            raise DomainError("sweep needs at least one value")
        if self.n_samples < 1:
            raise DomainError("need at least one sample per point")


@dataclass(frozen=True)
class VariationConfig:
    """Per-device Gaussian conductance noise: G <- G + N(0, (s*G_ON)^2),
    floored at g_min."""

    sigma_frac: float = 0.1
    seed: int = 0
    g_min: float = 1e-12

    def __post_init__(self):
        if not (0.0 <= self.sigma_frac < 1.0):
            raise DomainError("sigma_frac must lie in [0, 1)")
        if self.g_min <= 0:
            raise DomainError("conductance floor must be positive")


@dataclass
class SweepPoint:
    value: float
    nf: NFDistribution
    sm: SMCurve
    o_max: int
    implied_knob: float = None      # e.g. V_BIAS, gap, or set-state V_T


@dataclass
class SweepResult:
    knob: str
    points: list

    def median_nf(self) -> list:
        return [p.nf.median for p in self.points]

    def o_max_values(self) -> list:
        return [p.o_max for p in self.points]


def _evaluate_point(cfg: CrossbarConfig, spec: SweepSpec, value,
                    implied) -> SweepPoint:
    nf = nf_distribution(cfg, n_samples=spec.n_samples, seed=spec.seed)
    sm = sense_margin_curve(cfg, x_max=spec.x_max, mode=spec.sm_mode,
                            seed=spec.seed)
    return SweepPoint(value, nf, sm, sm.o_max, implied)


def _implied_ron_knob(model: BitCellModel):
    """Physical knob setting behind a bound R_ON, when it exists."""
    if model.tech is TechnologyKind.SRAM:
        return float(model.params.v_bias)
    if model.tech is TechnologyKind.RERAM:
        return float(model.params.gap) if model.calibrated else None
    if model.tech is TechnologyKind.FEFET:
        try:
            return float(calibrated_fefet(
                model.params.t_fe, model.corners.r_on, model.params.k_mw).vt_set)
        except DomainError:
            return None
    return None


def sweep_ron(tech: TechnologyKind, values=RON_SWEEP_DEFAULT,
              base_cfg: CrossbarConfig = None,
              spec: SweepSpec = None) -> SweepResult:
    """ON-resistance sweep for the three R_ON-tunable technologies.

    Each value binds the technology's own knob (SRAM bias, ReRAM gap,
    FeFET set-state threshold) where the target is physically reachable;
    the Level0 corner is bound directly either way so the sweep covers the
    full requested range."""
    if tech is TechnologyKind.SOTMRAM:
        raise DomainError("SOT-MRAM ON resistance is fixed by the stack; "
                          "sweep T_MgO instead")
    spec = spec or SweepSpec("r_on", tuple(values))
    base_cfg = base_cfg or CrossbarConfig(device=BitCellModel.for_tech(tech))
    points = []
    for r_on in spec.values:
        model = base_cfg.device.with_r_on(float(r_on))
        cfg = replace(base_cfg, device=model)
        points.append(_evaluate_point(cfg, spec, float(r_on),
                                      _implied_ron_knob(model)))
    return SweepResult("r_on", points)


def sweep_tfe(values=TFE_SWEEP_DEFAULT, base_cfg: CrossbarConfig = None,
              spec: SweepSpec = None, r_on: float = 60e3) -> SweepResult:
    """Ferroelectric-thickness sweep; R_ON is re-pinned at each thickness so
    the trend isolates the shrinking memory window."""
    spec = spec or SweepSpec("t_fe", tuple(values))
    base_cfg = base_cfg or CrossbarConfig(device=BitCellModel.fefet())
    points = []
    for t_fe in spec.values:
        model = BitCellModel.fefet(t_fe=float(t_fe), r_on=r_on,
                                   fidelity=base_cfg.device.fidelity)
        cfg = replace(base_cfg, device=model)
        points.append(_evaluate_point(cfg, spec, float(t_fe),
                                      model.corners.r_hrs))
    return SweepResult("t_fe", points)


def sweep_tmgo(values=TMGO_SWEEP_DEFAULT,
               activations=(Activation.FWA, Activation.PWA),
               base_cfg: CrossbarConfig = None,
               spec: SweepSpec = None, group_size: int = 8) -> dict:
    """MgO-thickness x activation-scheme grid for SOT-MRAM.

    Returns {(t_mgo, activation): SweepPoint}."""
    spec = spec or SweepSpec("t_mgo", tuple(values))
    base_cfg = base_cfg or CrossbarConfig(device=BitCellModel.sotmram())
    grid = {}
    for act in activations:
        for t_mgo in spec.values:
            model = BitCellModel.sotmram(t_mgo=float(t_mgo),
                                         fidelity=base_cfg.device.fidelity)
            cfg = replace(base_cfg, device=model, activation=act,
                          group_size=group_size)
            grid[(float(t_mgo), act)] = _evaluate_point(
                cfg, spec, float(t_mgo), None)
    return grid


# ---------------------------------------------------------------------------
# Device variations
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _variation_deltas(seed: int, rows: int, cols: int) -> np.ndarray:
    """Unit-sigma noise field; device (i, j) draws from the RNG stream keyed
    by (seed, flat device index), so the field is independent of evaluation
    order and worker partitioning."""
    flat = np.array([np.random.default_rng((seed, k)).standard_normal()
                     for k in range(rows * cols)])
    return flat.reshape(rows, cols)


def variation_field(cfg: CrossbarConfig, vc: VariationConfig) -> np.ndarray:
    """Conductance offsets (siemens), shape (rows, cols)."""
    if vc.sigma_frac == 0.0:
        return np.zeros((cfg.rows, cfg.cols))
    deltas = _variation_deltas(int(vc.seed), cfg.rows, cfg.cols)
    return vc.sigma_frac * cfg.g_on * deltas


def apply_variations(cfg: CrossbarConfig, vc: VariationConfig):
    """Perturbation hook for nf_distribution / inference: returns a callable
    (cfg, weights, inputs, sample_index) -> per-cycle conductance matrices.

    The noise is added to each selected synapse's conductance (cells whose
    access path is on for the cycle); deselected gate-input cells conduct
    through the access stack, which the synapse offset does not reach."""
    delta = variation_field(cfg, vc)

    def g_fields(cfg_, weights, inputs, sample_index):
        weights = np.asarray(weights, dtype=np.int64)
        inputs = np.asarray(inputs, dtype=np.int64)
        out = []
        for rows in cfg_.activation_groups():
            masked = np.zeros_like(inputs)
            masked[rows] = inputs[rows]
            g = state_conductances(cfg_, weights, masked)
            if cfg_.topology is Topology.DRAIN_INPUT:
                g = g + delta
            else:
                g = g + masked[:, None] * delta
            out.append(np.maximum(g, vc.g_min))
        return out

    return g_fields


def perturbed_state_conductances(cfg: CrossbarConfig, weights, inputs,
                                 vc: VariationConfig) -> np.ndarray:
    """Single-cycle convenience wrapper around apply_variations."""
    return apply_variations(cfg, vc)(cfg, weights, inputs, 0)[0]


# ---------------------------------------------------------------------------
# Cross-technology comparison
# ---------------------------------------------------------------------------

def optimized_config(tech: TechnologyKind, rows: int = 64, cols: int = 64,
                     topology: Topology = Topology.GATE_INPUT) -> CrossbarConfig:
    """Per-technology settings picked from the sweeps: 60 kOhm ON corner for
    the tunable technologies, thickest stacks, and partial activation for
    SOT-MRAM (its FWA margins never clear the sensing threshold)."""
    if tech is TechnologyKind.SRAM:
        device, act = BitCellModel.sram(v_bias=0.52), Activation.FWA
    elif tech is TechnologyKind.RERAM:
        device, act = BitCellModel.reram(r_on=60e3), Activation.FWA
    elif tech is TechnologyKind.FEFET:
        device, act = BitCellModel.fefet(t_fe=7.0, r_on=60e3), Activation.FWA
    else:
        device, act = BitCellModel.sotmram(t_mgo=1.3), Activation.PWA
    return CrossbarConfig(rows=rows, cols=cols, topology=topology,
                          device=device, activation=act, group_size=8)


@dataclass
class TechReport:
    tech: TechnologyKind
    settings: dict
    nf: NFDistribution
    sm: SMCurve
    o_max: int
    accuracy_nominal: float = None
    accuracy_variation_mean: float = None
    accuracy_ideal: float = None


@dataclass
class ComparisonReport:
    entries: dict                   # TechnologyKind -> TechReport
    seed: int
    n_samples: int

    def nf_medians(self) -> dict:
        return {t: r.nf.median for t, r in self.entries.items()}

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "n_samples": self.n_samples,
               "technologies": {}}
        for tech, r in self.entries.items():
            out["technologies"][tech.value] = {
                "settings": r.settings,
                "nf": {**r.nf.quantiles, "mean": r.nf.mean,
                       "count": r.nf.count,
                       "excluded_zero_ideal": r.nf.n_excluded_zero_ideal,
                       "failed": r.nf.n_failed},
                "sm_curve": {"x": r.sm.x.tolist(), "sm_a": r.sm.sm.tolist()},
                "o_max": r.o_max,
                "accuracy_ideal": r.accuracy_ideal,
                "accuracy_nominal": r.accuracy_nominal,
                "accuracy_variation_mean": r.accuracy_variation_mean,
            }
        return out


def _settings_dict(cfg: CrossbarConfig) -> dict:
    s = {"rows": cfg.rows, "cols": cfg.cols, "topology": cfg.topology.value,
         "activation": cfg.activation.value, "r_on": cfg.device.corners.r_on}
    if cfg.activation is Activation.PWA:
        s["group_size"] = cfg.group_size
    return s


def compare_technologies(rows: int = 64, cols: int = 64, n_samples: int = 500,
                         seed: int = 0, x_max: int = None,
                         inference_runner=None,
                         variation: VariationConfig = None) -> ComparisonReport:
    """Evaluate all four technologies at their optimized settings on shared
    workload seeds.  ``inference_runner(cfg, variation_or_None) -> accuracy``
    optionally adds end-to-end accuracy columns (see the inference module)."""
    entries = {}
    for tech in TechnologyKind:
        cfg = optimized_config(tech, rows, cols)
        # NF characterizes the array non-ideality itself, so it is compared
        # under full activation for every technology; SM/O_MAX and inference
        # run with the optimized activation scheme (partial for SOT-MRAM).
        nf_cfg = replace(cfg, activation=Activation.FWA)
        nf = nf_distribution(nf_cfg, n_samples=n_samples, seed=seed)
        sm = sense_margin_curve(cfg, x_max=x_max, seed=seed)
        rep = TechReport(tech, _settings_dict(cfg), nf, sm, sm.o_max)
        if inference_runner is not None:
            rep.accuracy_nominal = inference_runner(cfg, None)
            if variation is not None:
                rep.accuracy_variation_mean = inference_runner(cfg, variation)
        entries[tech] = rep
    return ComparisonReport(entries, seed, n_samples)
