"""Bit-cell models for the four crossbar memory technologies.

Every bit-cell is exposed as a two-terminal I(V) element whose state is
selected by the (input bit, weight bit) pair.  Two fidelity levels exist:

* ``Level0Linear`` -- a linear resistor per (input, weight) corner, taken
  from the calibrated corner-resistance table.
* ``Level1Physical`` -- the underlying device physics (sinh conduction for
  ReRAM, a calibrated analytic FET for FeFET, resistance maps for SRAM and
  SOT-MRAM), calibrated so the effective corner resistance at the read
  operating point (WL = 0.7 V, 0.25 V across the cell) matches Level0.

All models are pure functions over immutable parameter records and are safe
to call concurrently.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import DomainError, StateError


class TechnologyKind(enum.Enum):
    SRAM = "sram"
    RERAM = "reram"
    FEFET = "fefet"
    SOTMRAM = "sotmram"


class Fidelity(enum.Enum):
    LEVEL0_LINEAR = "level0"
    LEVEL1_PHYSICAL = "level1"


# Read operating point shared by all technologies.
V_WL_READ = 0.7      # volts on the gate/word line for an asserted input
V_CELL_READ = 0.25   # volts across the cell at the nominal operating point

# ReRAM filament gap range supported by the compact model (nm).
RERAM_GAP_MIN = 0.34
RERAM_GAP_MAX = 1.09
# Series resistance of the ReRAM access transistor in its ON state (ohms).
# Reconciles the ~17 kOhm sinh-model minimum with the ~20 kOhm minimum cell
# resistance of the full 1T1R bit-cell.
RERAM_ACCESS_R = 3.0e3

# SRAM read-port ON resistance versus gate bias: monotone map anchored at the
# published endpoints (0.7 V -> 10 kOhm, 0.45 V -> 250 kOhm) and the chosen
# 60 kOhm optimum near 0.52 V; intermediate knots are interpolation anchors.
SRAM_VBIAS_ANCHORS = (0.45, 0.48, 0.52, 0.60, 0.70)
SRAM_RON_ANCHORS = (250e3, 150e3, 60e3, 20e3, 10e3)
SRAM_VBIAS_MIN = 0.45
SRAM_VBIAS_MAX = 0.70

# SOT-MRAM read-path resistance versus MgO barrier thickness (nm -> ohms).
# Values are read-path effective: MTJ plus read access transistor folded in.
MTJ_TMGO_GRID = (1.1, 1.2, 1.3)
MTJ_RP_GRID = (8e3, 12e3, 20e3)
MTJ_RAP_GRID = (28e3, 52e3, 100e3)

# Access-transistor OFF resistance for the deselected (input = 0) state of
# the 1T1R / 2T1MTJ cells, and the fixed SRAM read-port leakage corners.
ACCESS_OFF_R = 2.1e8
SRAM_R_HRS = 2.1e11
SRAM_R_OFF = 1.5e11
SRAM_R_OFF_H = 4.5e11

# FeFET corner targets at the 7 nm-thickness reference design (ohms).
FEFET_REF_T_FE = 7.0
FEFET_REF_R_ON = 60e3
FEFET_REF_R_HRS = 4.0e6
FEFET_REF_R_OFF = 2.3e7
FEFET_REF_R_OFF_H = 4.6e9

# Ferroelectric (HZO) stack calibration per thickness:
# thickness nm -> (saturated P uC/cm^2, remanent P uC/cm^2, relative
# permittivity, coercive field MV/cm).
FEFET_STACK_TABLE = {
    7.0: (30.0, 27.0, 22.0, 2.4),
    6.0: (30.0, 27.0, 23.5, 2.525),
    5.0: (30.0, 27.0, 25.0, 2.65),
}

# Soft-saturation voltage scale of the analytic FET drain characteristic.
_FET_VSAT = 0.5


@dataclass(frozen=True)
class ReRAMParams:
    """Al-doped HfOx sinh-conduction compact-model coefficients."""

    i0: float = 0.2e-3     # amps
    g0: float = 0.15       # nm
    v0: float = 0.35       # volts
    gap: float = 0.534     # nm, filament tip to electrode

    def __post_init__(self):
        if self.i0 <= 0 or self.g0 <= 0 or self.v0 <= 0:
            raise DomainError("ReRAM coefficients must be positive")
        if not (RERAM_GAP_MIN <= self.gap <= RERAM_GAP_MAX):
            raise DomainError(
                f"gap {self.gap} nm outside [{RERAM_GAP_MIN}, {RERAM_GAP_MAX}] nm")


@dataclass(frozen=True)
class FeFETParams:
    """FeFET stack parameters; polarization values in uC/cm^2, Ec in MV/cm."""

    t_fe: float = 7.0
    ps: float = 30.0
    pr: float = 27.0
    eps_r: float = 22.0
    ec: float = 2.4
    k_mw: float = 1.0
    v_set: float = 3.5
    v_reset: float = -3.5

    def __post_init__(self):
        if not (0.0 < self.pr < self.ps):
            raise DomainError("requires 0 < Pr < Ps")
        if self.ec <= 0:
            raise DomainError("coercive field must be positive")
        if self.t_fe <= 0:
            raise DomainError("ferroelectric thickness must be positive")

    @property
    def delta(self) -> float:
        """Hysteresis branch width (MV/cm), pinned so the descending major
        branch passes through (0, +Pr)."""
        return self.ec / (2.0 * math.atanh(self.pr / self.ps))

    @classmethod
    def for_thickness(cls, t_fe: float, **overrides) -> "FeFETParams":
        if t_fe not in FEFET_STACK_TABLE:
            raise DomainError(f"no stack calibration for T_FE = {t_fe} nm")
        ps, pr, eps_r, ec = FEFET_STACK_TABLE[t_fe]
        return cls(t_fe=t_fe, ps=ps, pr=pr, eps_r=eps_r, ec=ec, **overrides)


@dataclass(frozen=True)
class SOTParams:
    """SOT-MRAM read-path resistances for a given MgO barrier thickness."""

    t_mgo: float = 1.3
    r_p: float = field(default=None)
    r_ap: float = field(default=None)

    def __post_init__(self):
        if not (MTJ_TMGO_GRID[0] <= self.t_mgo <= MTJ_TMGO_GRID[-1]):
            raise DomainError(
                f"T_MgO {self.t_mgo} nm outside [{MTJ_TMGO_GRID[0]}, {MTJ_TMGO_GRID[-1]}] nm")
        if self.r_p is None:
            object.__setattr__(self, "r_p", mtj_resistance(self.t_mgo, "P"))
        if self.r_ap is None:
            object.__setattr__(self, "r_ap", mtj_resistance(self.t_mgo, "AP"))
        if not self.r_p < self.r_ap:
            raise DomainError("requires R_P < R_AP")


@dataclass(frozen=True)
class SRAMParams:
    """8T-SRAM read-port bias knob."""

    v_bias: float = 0.52

    def __post_init__(self):
        if not (SRAM_VBIAS_MIN <= self.v_bias <= SRAM_VBIAS_MAX):
            raise DomainError(
                f"V_BIAS {self.v_bias} V outside [{SRAM_VBIAS_MIN}, {SRAM_VBIAS_MAX}] V")


@dataclass(frozen=True)
class CellStateResistances:
    """Effective cell resistance for each (input, weight) corner at the read
    operating point: (1,1) -> r_on, (1,0) -> r_hrs, (0,1) -> r_off,
    (0,0) -> r_off_h."""

    r_on: float
    r_hrs: float
    r_off: float
    r_off_h: float

    def __post_init__(self):
        for name in ("r_on", "r_hrs", "r_off", "r_off_h"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")

    def for_state(self, input_bit: int, weight_bit: int) -> float:
        if input_bit:
            return self.r_on if weight_bit else self.r_hrs
        return self.r_off if weight_bit else self.r_off_h

    def check_ordering(self, tech: TechnologyKind) -> None:
        """Raise if the corner ordering expected for the technology is broken."""
        if tech in (TechnologyKind.FEFET, TechnologyKind.RERAM, TechnologyKind.SOTMRAM):
            if not self.r_hrs < self.r_off:
                raise DomainError(f"{tech.value}: expected r_hrs < r_off")
        if tech in (TechnologyKind.SRAM, TechnologyKind.FEFET):
            if not self.r_off_h > self.r_off:
                raise DomainError(f"{tech.value}: expected r_off_h > r_off")


# ---------------------------------------------------------------------------
# ReRAM
# ---------------------------------------------------------------------------

def reram_current(p: ReRAMParams, v: float) -> float:
    """Sinh-conduction current of the bare ReRAM element (no access device).

    I = I0 * exp(-gap/g0) * sinh(v/V0); odd in v.
    """
    if abs(v) > 1.0 + 1e-12:
        raise DomainError(f"|v| = {abs(v)} V exceeds the 1 V model range")
    return p.i0 * math.exp(-p.gap / p.g0) * math.sinh(v / p.v0)


def reram_small_signal_resistance(p: ReRAMParams, v: float = 0.0) -> float:
    """dV/dI of the bare element at bias v (ohms)."""
    g = (p.i0 * math.exp(-p.gap / p.g0) / p.v0) * math.cosh(v / p.v0)
    return 1.0 / g


def reram_gap_for_resistance(p: ReRAMParams, r_target: float) -> float:
    """Gap length (nm) whose zero-bias small-signal resistance equals
    r_target; inverse of ``reram_small_signal_resistance`` at v = 0."""
    if r_target <= 0:
        raise DomainError("target resistance must be positive")
    gap = p.g0 * math.log(p.i0 * r_target / p.v0)
    if not (RERAM_GAP_MIN - 1e-12 <= gap <= RERAM_GAP_MAX + 1e-12):
        raise DomainError(
            f"R = {r_target:.4g} Ohm maps to gap {gap:.4g} nm, outside "
            f"[{RERAM_GAP_MIN}, {RERAM_GAP_MAX}] nm")
    return min(max(gap, RERAM_GAP_MIN), RERAM_GAP_MAX)


def _reram_series_current(p: ReRAMParams, r_series: float, v: float,
                          tol: float = 1e-15, max_iter: int = 80):
    """Current and dI/dV of the sinh element in series with r_series at total
    voltage v.  Solves r*i + V0*asinh(i/A) = v by damped Newton (monotone)."""
    a = p.i0 * math.exp(-p.gap / p.g0)
    if v == 0.0:
        return 0.0, 1.0 / (r_series + p.v0 / a)
    i = v / (r_series + p.v0 / a)
    for _ in range(max_iter):
        f = r_series * i + p.v0 * math.asinh(i / a) - v
        fp = r_series + p.v0 / math.hypot(a, i)
        step = f / fp
        i -= step
        if abs(step) <= tol * (abs(i) + 1e-30):
            break
    didv = 1.0 / (r_series + p.v0 / math.hypot(a, i))
    return i, didv


def reram_effective_resistance(p: ReRAMParams, r_series: float = RERAM_ACCESS_R,
                               v: float = V_CELL_READ) -> float:
    """Chordal resistance v / I(v) of the series (access + ReRAM) cell."""
    i, _ = _reram_series_current(p, r_series, v)
    return v / i


@lru_cache(maxsize=None)
def reram_gap_for_cell_resistance(r_cell: float, r_series: float = RERAM_ACCESS_R,
                                  v: float = V_CELL_READ) -> float:
    """Gap (nm) at which the full cell's chordal resistance at the read point
    equals r_cell.  Used to calibrate the Level1 model against a corner
    target."""
    base = ReRAMParams(gap=RERAM_GAP_MIN)

    def err(gap):
        return reram_effective_resistance(replace(base, gap=gap), r_series, v) - r_cell

    lo, hi = err(RERAM_GAP_MIN), err(RERAM_GAP_MAX)
    if not (lo <= 0.0 <= hi):
        raise DomainError(
            f"cell resistance {r_cell:.4g} Ohm not reachable within the gap range")
    return brentq(err, RERAM_GAP_MIN, RERAM_GAP_MAX, xtol=1e-12)


# ---------------------------------------------------------------------------
# Ferroelectric hysteresis (Preisach-style tanh branch pair)
# ---------------------------------------------------------------------------

def preisach_polarization(p: FeFETParams, field_history) -> float:
    """Polarization (uC/cm^2) after traversing field_history (MV/cm).

    Major-loop branches P = Ps*tanh((E -/+ Ec)/(2*delta)) for ascending /
    descending sweeps; minor loops are handled by offsetting the branch so P
    is continuous at every reversal point.  |P| is clamped to Ps.
    """
    hist = list(field_history)
    if not hist:
        raise DomainError("field history must be non-empty")
    two_delta = 2.0 * p.delta

    def branch(e, direction, offset):
        shift = p.ec if direction > 0 else -p.ec
        raw = p.ps * math.tanh((e - shift) / two_delta) + offset
        return min(max(raw, -p.ps), p.ps)

    # Virgin state: ascending major branch from negative saturation.
    direction, offset = +1, 0.0
    e_prev = hist[0]
    pol = branch(e_prev, direction, offset)
    for e in hist[1:]:
        if e == e_prev:
            continue
        new_dir = +1 if e > e_prev else -1
        if new_dir != direction:
            # New branch, offset chosen for continuity at the reversal point.
            shift = p.ec if new_dir > 0 else -p.ec
            offset = pol - p.ps * math.tanh((e_prev - shift) / two_delta)
            direction = new_dir
        pol = branch(e, direction, offset)
        e_prev = e
    return pol


def fefet_memory_window(p: FeFETParams) -> float:
    """Threshold separation (volts) between programmed states:
    k_mw * 2 * Ec * T_FE (Ec converted from MV/cm to V/nm)."""
    return p.k_mw * 2.0 * (p.ec * 0.1) * p.t_fe


# ---------------------------------------------------------------------------
# FeFET analytic transistor, calibrated against the reference corner targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeFETTransistor:
    """Logistic-conductance FET: G(v_gs) = gm / (1 + exp(-(v_gs - V_T)/s))
    with a soft-saturating drain characteristic.  V_T depends on the
    programmed state."""

    gm: float
    swing: float          # subthreshold scale s (volts)
    vt_set: float
    vt_reset: float

    def conductance(self, v_gs: float, state: str) -> float:
        vt = self.vt_set if state == "set" else self.vt_reset
        return self.gm / (1.0 + math.exp(-(v_gs - vt) / self.swing))

    def ids(self, v_gs: float, v_ds: float, state: str) -> float:
        # Odd extension in v_ds keeps Newton iterates well-behaved.
        sat = _FET_VSAT * -math.expm1(-abs(v_ds) / _FET_VSAT)
        return math.copysign(self.conductance(v_gs, state) * sat, v_ds)

    def dids_dvds(self, v_gs: float, v_ds: float, state: str) -> float:
        return self.conductance(v_gs, state) * math.exp(-abs(v_ds) / _FET_VSAT)

    def chordal_resistance(self, v_gs: float, state: str,
                           v_ds: float = V_CELL_READ) -> float:
        return v_ds / self.ids(v_gs, v_ds, state)


def _log1pexp(z: float) -> float:
    return z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))


def _logistic_ratio_point(target: float, swing: float) -> float:
    """x such that F(x)/F(x - V_WL_READ) = target for the logistic F."""

    def log_ratio(x):
        # log of F(x)/F(x - 0.7) = log(1+e^{-(x-0.7)/s}) - log(1+e^{-x/s})
        return _log1pexp(-(x - V_WL_READ) / swing) - _log1pexp(-x / swing)

    return brentq(lambda x: log_ratio(x) - math.log(target), -40.0, 40.0,
                  xtol=1e-14)


@lru_cache(maxsize=None)
def _fefet_reference_fit() -> FeFETTransistor:
    """Solve the four reference corner resistances exactly for
    (gm, swing, vt_set, vt_reset) at the reference thickness."""
    ratio_set = FEFET_REF_R_OFF / FEFET_REF_R_ON        # gate swing, set state
    ratio_reset = FEFET_REF_R_OFF_H / FEFET_REF_R_HRS   # gate swing, reset state
    ratio_states = FEFET_REF_R_HRS / FEFET_REF_R_ON     # set vs reset at read bias
    s_max = V_WL_READ / math.log(max(ratio_set, ratio_reset)) - 1e-9

    def mismatch(s):
        a = _logistic_ratio_point(ratio_set, s)     # 0.7 - vt_set
        b = _logistic_ratio_point(ratio_reset, s)   # 0.7 - vt_reset
        # log of F(a)/F(b) minus log of the target state ratio
        return _log1pexp(-b / s) - _log1pexp(-a / s) - math.log(ratio_states)

    swing = brentq(mismatch, 0.02, s_max, xtol=1e-15)
    a = _logistic_ratio_point(ratio_set, swing)
    b = _logistic_ratio_point(ratio_reset, swing)
    vt_set, vt_reset = V_WL_READ - a, V_WL_READ - b
    sat = _FET_VSAT * -math.expm1(-V_CELL_READ / _FET_VSAT)
    gm = (V_CELL_READ / (FEFET_REF_R_ON * sat)) * (1.0 + math.exp(-a / swing))
    return FeFETTransistor(gm=gm, swing=swing, vt_set=vt_set, vt_reset=vt_reset)


@lru_cache(maxsize=None)
def calibrated_fefet(t_fe: float = FEFET_REF_T_FE, r_on: float = FEFET_REF_R_ON,
                     k_mw: float = 1.0) -> FeFETTransistor:
    """FeFET transistor for a given thickness and pinned ON resistance.

    The reference fit anchors the 7 nm design; other thicknesses scale the
    effective threshold window with the physical memory window and tighten
    the subthreshold swing as the stack thins (weaker short-channel effects).
    The set-state threshold is re-fit so the ON corner stays at r_on.
    """
    ref = _fefet_reference_fit()
    params = FeFETParams.for_thickness(t_fe, k_mw=k_mw)
    ref_params = FeFETParams.for_thickness(FEFET_REF_T_FE, k_mw=k_mw)
    window = (ref.vt_reset - ref.vt_set) * (
        fefet_memory_window(params) / fefet_memory_window(ref_params))
    swing = ref.swing * (1.0 + 0.05 * (t_fe - FEFET_REF_T_FE))
    sat = _FET_VSAT * -math.expm1(-V_CELL_READ / _FET_VSAT)
    r_min = V_CELL_READ * (1.0 + 1e-12) / (ref.gm * sat)
    if r_on <= r_min:
        raise DomainError(
            f"FeFET ON resistance {r_on:.4g} Ohm below the {r_min:.4g} Ohm "
            "channel limit; not reachable by set-voltage tuning")

    def err(vt):
        g = ref.gm / (1.0 + math.exp(-(V_WL_READ - vt) / swing))
        return V_CELL_READ / (g * sat) - r_on

    vt_set = brentq(err, -60.0, 60.0, xtol=1e-14)
    return FeFETTransistor(gm=ref.gm, swing=swing,
                           vt_set=vt_set, vt_reset=vt_set + window)


def fefet_ids(v_gs: float, v_ds: float, state: str, p: FeFETParams,
              r_on: float = FEFET_REF_R_ON) -> float:
    """Drain current of the calibrated FeFET at (v_gs, v_ds) for the given
    programmed state ('set' or 'reset')."""
    if not (0.0 <= v_gs <= V_WL_READ + 1e-12):
        raise DomainError(f"v_gs = {v_gs} V outside [0, {V_WL_READ}] V")
    if not (0.0 <= v_ds <= V_CELL_READ + 1e-12):
        raise DomainError(f"v_ds = {v_ds} V outside [0, {V_CELL_READ}] V")
    if state not in ("set", "reset"):
        raise DomainError(f"unknown state {state!r}")
    fet = calibrated_fefet(p.t_fe, r_on, p.k_mw)
    return fet.ids(v_gs, v_ds, state)


# ---------------------------------------------------------------------------
# SOT-MRAM and SRAM resistance maps
# ---------------------------------------------------------------------------

def mtj_resistance(t_mgo: float, state: str) -> float:
    """Read-path resistance (ohms) of the MTJ for parallel ('P') or
    anti-parallel ('AP') state; log-linear in barrier thickness."""
    if not (MTJ_TMGO_GRID[0] - 1e-12 <= t_mgo <= MTJ_TMGO_GRID[-1] + 1e-12):
        raise DomainError(
            f"T_MgO {t_mgo} nm outside [{MTJ_TMGO_GRID[0]}, {MTJ_TMGO_GRID[-1]}] nm")
    if state == "P":
        grid = MTJ_RP_GRID
    elif state == "AP":
        grid = MTJ_RAP_GRID
    else:
        raise DomainError(f"unknown MTJ state {state!r}")
    return float(np.exp(np.interp(t_mgo, MTJ_TMGO_GRID, np.log(grid))))


@lru_cache(maxsize=1)
def _sram_ron_spline() -> PchipInterpolator:
    return PchipInterpolator(SRAM_VBIAS_ANCHORS, SRAM_RON_ANCHORS)


def sram_on_resistance(v_bias: float) -> float:
    """Read-port ON resistance (ohms) at the given gate bias."""
    if not (SRAM_VBIAS_MIN - 1e-12 <= v_bias <= SRAM_VBIAS_MAX + 1e-12):
        raise DomainError(
            f"V_BIAS {v_bias} V outside [{SRAM_VBIAS_MIN}, {SRAM_VBIAS_MAX}] V")
    return float(_sram_ron_spline()(v_bias))


def sram_bias_for_resistance(r_on: float) -> float:
    """Inverse of ``sram_on_resistance`` (monotone)."""
    if not (SRAM_RON_ANCHORS[-1] <= r_on <= SRAM_RON_ANCHORS[0]):
        raise DomainError(
            f"R_ON {r_on:.4g} Ohm outside the [{SRAM_RON_ANCHORS[-1]:.0f}, "
            f"{SRAM_RON_ANCHORS[0]:.0f}] Ohm bias-tunable range")
    return brentq(lambda v: sram_on_resistance(v) - r_on,
                  SRAM_VBIAS_MIN, SRAM_VBIAS_MAX, xtol=1e-12)


# ---------------------------------------------------------------------------
# Unified bit-cell model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BitCellModel:
    """A calibrated bit-cell of one technology at one knob setting.

    ``corners`` holds the Level0 linear corner resistances; Level1 models
    additionally carry the physical parameter record they dispatch to.
    """

    tech: TechnologyKind
    fidelity: Fidelity
    corners: CellStateResistances
    params: object = None
    calibrated: bool = True

    # -- constructors -------------------------------------------------------

    @staticmethod
    def sram(v_bias: float = 0.52, r_on: float = None,
             fidelity: Fidelity = Fidelity.LEVEL0_LINEAR) -> "BitCellModel":
        """SRAM cell; r_on (if given) overrides the bias-derived ON corner."""
        params = SRAMParams(v_bias=v_bias)
        ron = sram_on_resistance(v_bias) if r_on is None else r_on
        corners = CellStateResistances(ron, SRAM_R_HRS, SRAM_R_OFF, SRAM_R_OFF_H)
        return BitCellModel(TechnologyKind.SRAM, fidelity, corners, params)

    @staticmethod
    def reram(gap: float = None, r_on: float = 60e3,
              fidelity: Fidelity = Fidelity.LEVEL0_LINEAR) -> "BitCellModel":
        """ReRAM 1T1R cell.

        The ON gap is calibrated so the cell's chordal resistance at the read
        point equals r_on; an explicit ``gap`` takes precedence.  The HRS
        corner is pinned at the maximum gap.  Level0 allows r_on targets
        below the physical gap range (gap then reported as None)."""
        if gap is not None:
            p = ReRAMParams(gap=gap)
            ron = reram_effective_resistance(p)
        else:
            try:
                p = ReRAMParams(gap=reram_gap_for_cell_resistance(r_on))
                ron = r_on
            except DomainError:
                if fidelity is Fidelity.LEVEL1_PHYSICAL:
                    raise
                p, ron = None, r_on
        hrs = reram_effective_resistance(ReRAMParams(gap=RERAM_GAP_MAX))
        corners = CellStateResistances(ron, hrs, ACCESS_OFF_R, ACCESS_OFF_R)
        return BitCellModel(TechnologyKind.RERAM, fidelity, corners, p,
                            calibrated=p is not None)

    @staticmethod
    def fefet(t_fe: float = 7.0, r_on: float = 60e3, k_mw: float = 1.0,
              fidelity: Fidelity = Fidelity.LEVEL0_LINEAR) -> "BitCellModel":
        """FeFET cell; leakage corners derive from the calibrated transistor
        at the reference ON resistance, the ON corner follows r_on."""
        params = FeFETParams.for_thickness(t_fe, k_mw=k_mw)
        fet = calibrated_fefet(t_fe, FEFET_REF_R_ON, k_mw)
        corners = CellStateResistances(
            r_on,
            fet.chordal_resistance(V_WL_READ, "reset"),
            fet.chordal_resistance(0.0, "set"),
            fet.chordal_resistance(0.0, "reset"),
        )
        return BitCellModel(TechnologyKind.FEFET, fidelity, corners, params)

    @staticmethod
    def sotmram(t_mgo: float = 1.3,
                fidelity: Fidelity = Fidelity.LEVEL0_LINEAR) -> "BitCellModel":
        params = SOTParams(t_mgo=t_mgo)
        corners = CellStateResistances(params.r_p, params.r_ap,
                                       ACCESS_OFF_R, ACCESS_OFF_R * 1.0)
        return BitCellModel(TechnologyKind.SOTMRAM, fidelity, corners, params)

    @staticmethod
    def for_tech(tech: TechnologyKind, **kwargs) -> "BitCellModel":
        ctor = {TechnologyKind.SRAM: BitCellModel.sram,
                TechnologyKind.RERAM: BitCellModel.reram,
                TechnologyKind.FEFET: BitCellModel.fefet,
                TechnologyKind.SOTMRAM: BitCellModel.sotmram}[tech]
        return ctor(**kwargs)

    # -- knob rebinding ------------------------------------------------------

    def with_r_on(self, r_on: float) -> "BitCellModel":
        """Rebind the ON-resistance knob of a tunable technology."""
        if self.tech is TechnologyKind.SRAM:
            try:
                v_bias = sram_bias_for_resistance(r_on)
            except DomainError:
                v_bias = self.params.v_bias
            return BitCellModel.sram(v_bias=v_bias, r_on=r_on, fidelity=self.fidelity)
        if self.tech is TechnologyKind.RERAM:
            return BitCellModel.reram(r_on=r_on, fidelity=self.fidelity)
        if self.tech is TechnologyKind.FEFET:
            return BitCellModel.fefet(t_fe=self.params.t_fe, r_on=r_on,
                                      k_mw=self.params.k_mw, fidelity=self.fidelity)
        raise DomainError("SOT-MRAM ON resistance is not independently tunable")

    # -- element evaluation --------------------------------------------------

    def conductance(self, input_bit: int, weight_bit: int) -> float:
        """Level0 corner conductance (siemens) for the state."""
        return 1.0 / self.corners.for_state(input_bit, weight_bit)

    def iv(self, input_bit: int, weight_bit: int):
        """Two-terminal element function v -> (current, dI/dV) for the state."""
        if self.fidelity is Fidelity.LEVEL0_LINEAR:
            g = self.conductance(input_bit, weight_bit)
            return lambda v: (g * v, g)
        if not self.calibrated:
            raise StateError("Level1 bit-cell used before calibration")
        if self.tech in (TechnologyKind.SRAM, TechnologyKind.SOTMRAM):
            g = self.conductance(input_bit, weight_bit)
            return lambda v: (g * v, g)
        if self.tech is TechnologyKind.RERAM:
            if not input_bit:
                g = self.conductance(input_bit, weight_bit)
                return lambda v: (g * v, g)
            gap = self.params.gap if weight_bit else RERAM_GAP_MAX
            p = replace(self.params, gap=gap)
            return lambda v: _reram_series_current(p, RERAM_ACCESS_R, v)
        # FeFET
        fet = calibrated_fefet(self.params.t_fe, self.corners.r_on, self.params.k_mw)
        state = "set" if weight_bit else "reset"
        v_gs = V_WL_READ if input_bit else 0.0
        return lambda v: (fet.ids(v_gs, v, state), fet.dids_dvds(v_gs, v, state))

    def is_linear(self, input_bit: int, weight_bit: int) -> bool:
        """True when the element for this state is an exact linear resistor."""
        if self.fidelity is Fidelity.LEVEL0_LINEAR:
            return True
        if self.tech in (TechnologyKind.SRAM, TechnologyKind.SOTMRAM):
            return True
        if self.tech is TechnologyKind.RERAM:
            return not input_bit
        return False

    def effective_corner_resistance(self, input_bit: int, weight_bit: int,
                                    v: float = V_CELL_READ) -> float:
        """Chordal resistance of the (possibly nonlinear) element at bias v."""
        i, _ = self.iv(input_bit, weight_bit)(v)
        return v / i


def bitcell_iv(model: BitCellModel, input_bit: int, weight_bit: int,
               v_cell: float):
    """Current and dI/dV of the bit-cell at v_cell for the selected state."""
    return model.iv(input_bit, weight_bit)(v_cell)
