"""Continuation-criterion monitor.

Three criterion lists are tracked:

``holder``
    sup 1/h, sup 1/c, sup ||eta||_{W^{1+eps,inf}}, sup ||(V,B)||_{W^{eps,inf}},
    sup ||a||_{W^{eps,inf}}, and the integrals of ||Da||_inf,
    ||a||_{W^{1/2,inf}}, ||grad eta||^3_{W^{1/2,inf}}, ||(V,B)||^3_{W^{1+eps,inf}}.
``sobolev``
    sup 1/h, sup 1/c, sup of the H^{s0+1/2} x H^{s0+1/2} x H^{s0} x H^{s0}
    norm of (eta, psi, V, B), sup ||a||_{W^{eps,inf}}, and the integrals of
    ||Da||_inf, ||a||_{W^{1/2,inf}}, ||grad eta||_{W^{1/2,inf}}, ||(V,B)||_{W^{1+eps,inf}}.
``sobolev_reduced``
    sup 1/h, sup 1/c, the same Sobolev quartet at a larger s0, and the
    integrals of ||grad eta||_{W^{1/2,inf}} and ||(V,B)||_{W^{1+eps,inf}}.

Norms of a pair (V, B) or of a vector field are sums of the component norms.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import SurfaceState, TraceFields
from .paradiff import RayleighTaylorError, good_unknowns
from .spectral import SpectralGrid, holder_norm, sobolev_norm, sup_norm, zygmund_norm

HOLDER_KEYS = ("eta_w1eps", "grad_eta_whalf", "vb_weps", "vb_w1eps", "a_weps", "a_whalf")
SOBOLEV_LEVELS = ("s0", "r", "s")
SOBOLEV_KEYS = tuple(f"{f}_{lvl}" for lvl in SOBOLEV_LEVELS for f in ("eta", "psi", "V", "B"))
INTEGRAL_KEYS = ("int_da", "int_a_half", "int_grad_eta_cubed", "int_vb_cubed", "int_grad_eta", "int_vb")
SUP_KEYS = ("sup_inv_h", "sup_inv_c", "sup_eta_w1eps", "sup_vb_weps", "sup_a_weps", "sup_sobolev_s0",
            "sup_sobolev_r")

CRITERIA = {
    "holder": ("sup_inv_h", "sup_inv_c", "sup_eta_w1eps", "sup_vb_weps", "sup_a_weps",
               "int_da", "int_a_half", "int_grad_eta_cubed", "int_vb_cubed"),
    "sobolev": ("sup_inv_h", "sup_inv_c", "sup_sobolev_s0", "sup_a_weps",
                "int_da", "int_a_half", "int_grad_eta", "int_vb"),
    "sobolev_reduced": ("sup_inv_h", "sup_inv_c", "sup_sobolev_r", "int_grad_eta", "int_vb"),
}

COLUMNS = (("t", "h_margin", "c_min") + tuple(f"holder_{k}" for k in HOLDER_KEYS)
           + tuple(f"sobolev_{k}" for k in SOBOLEV_KEYS)
           + ("da_sup", "hamiltonian", "energy_A", "energy_B") + INTEGRAL_KEYS)


@dataclass(frozen=True)
class MonitorSettings:
    s: float = 2.0
    s0: float = 1.25
    s0_reduced: float = 1.5
    eps: float = 0.1
    sup_threshold: float = 1e6
    int_threshold: float = 1e6
    points: int | None = None


def growth_polynomial(x: float, y: float) -> float:
    """Cubic growth term of the energy rate functional."""
    return x + y + x**3 + y**3


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    h_margin: float
    c_min: float
    holder: dict
    sobolev: dict
    da_sup: float
    hamiltonian: float
    energy_A: float
    energy_B: float
    accumulators: dict = field(default_factory=dict)
    accepted: bool = True

    def row(self) -> list:
        vals = [self.t, self.h_margin, self.c_min]
        vals += [self.holder[k] for k in HOLDER_KEYS]
        vals += [self.sobolev[k] for k in SOBOLEV_KEYS]
        vals += [self.da_sup, self.hamiltonian, self.energy_A, self.energy_B]
        vals += [self.accumulators.get(k, float("nan")) for k in INTEGRAL_KEYS]
        return vals


def _pair(grid, fields, fn, *args):
    return sum(fn(grid, f, *args) for f in fields)


def energy_functionals(grid: SpectralGrid, state: SurfaceState, tr: TraceFields, s: float, eps: float,
                       points: int | None = None) -> tuple[float, float]:
    """(A, B): the energy aggregate and its rate functional.

    A = ||(U_s, theta_s)||_{L2} + ||psi||_{L2} + ||zeta_s||_{H^-1} + ||(V,B)||_{H^{s-1/2}}
    B = ||a||_{C^{1/2}_*} + ||Da||_inf + Q(||grad eta||_{C^{1/2}_*}, ||(V,B)||_{C^{1+eps}_*})
    """
    gu = good_unknowns(grid, tr.V, tr.B, state.eta, tr.a, s)
    l2 = math.sqrt(sum(sobolev_norm(grid, c, 0.0) ** 2 for c in list(gu.U_s) + list(gu.theta_s)))
    zeta_neg = math.sqrt(sum(sobolev_norm(grid, c, -1.0) ** 2 for c in gu.zeta_s))
    vb = _pair(grid, list(tr.V) + [tr.B], sobolev_norm, s - 0.5)
    A = l2 + sobolev_norm(grid, state.psi, 0.0) + zeta_neg + vb
    x = _pair(grid, list(tr.zeta), zygmund_norm, 0.5, points)
    y = _pair(grid, list(tr.V) + [tr.B], zygmund_norm, 1 + eps, points)
    da = sup_norm(grid, tr.Da, points) if tr.Da is not None else 0.0
    Bf = zygmund_norm(grid, tr.a, 0.5, points) + da + growth_polynomial(x, y)
    return A, Bf


def instantaneous(grid: SpectralGrid, depth: float, g: float, state: SurfaceState, tr: TraceFields,
                  dn: np.ndarray, st: MonitorSettings) -> DiagnosticsRecord:
    """All pointwise-in-time quantities of one state (no accumulators)."""
    p = st.points
    eps = st.eps
    h = depth + float(np.min(state.eta))
    c = float(np.min(tr.a))
    vb = list(tr.V) + [tr.B]
    holder = {
        "eta_w1eps": holder_norm(grid, state.eta, 1 + eps, p),
        "grad_eta_whalf": _pair(grid, list(tr.zeta), holder_norm, 0.5, p),
        "vb_weps": _pair(grid, vb, holder_norm, eps, p),
        "vb_w1eps": _pair(grid, vb, holder_norm, 1 + eps, p),
        "a_weps": holder_norm(grid, tr.a, eps, p),
        "a_whalf": holder_norm(grid, tr.a, 0.5, p),
    }
    sob = {}
    for lvl, s0 in zip(SOBOLEV_LEVELS, (st.s0, st.s0_reduced, st.s)):
        sob[f"eta_{lvl}"] = sobolev_norm(grid, state.eta, s0 + 0.5)
        sob[f"psi_{lvl}"] = sobolev_norm(grid, state.psi, s0 + 0.5)
        sob[f"V_{lvl}"] = _pair(grid, list(tr.V), sobolev_norm, s0)
        sob[f"B_{lvl}"] = sobolev_norm(grid, tr.B, s0)
    da = sup_norm(grid, tr.Da, p) if tr.Da is not None else float("nan")
    ham = 0.5 * grid.inner(state.psi, dn) + 0.5 * g * grid.inner(state.eta, state.eta)
    accepted = h > 0 and c > 0
    try:
        A, B = energy_functionals(grid, state, tr, st.s, eps, p)
    except RayleighTaylorError:
        A, B = float("nan"), float("nan")
        accepted = False
    return DiagnosticsRecord(state.t, h, c, holder, sob, da, ham, A, B, accepted=accepted)


def _integrands(rec: DiagnosticsRecord) -> dict:
    hd = rec.holder
    return {
        "int_da": rec.da_sup,
        "int_a_half": hd["a_whalf"],
        "int_grad_eta_cubed": hd["grad_eta_whalf"] ** 3,
        "int_vb_cubed": hd["vb_w1eps"] ** 3,
        "int_grad_eta": hd["grad_eta_whalf"],
        "int_vb": hd["vb_w1eps"],
    }


def _sup_values(rec: DiagnosticsRecord) -> dict:
    inv = lambda v: 1.0 / v if v > 0 else math.inf  # noqa: E731
    sb = rec.sobolev
    return {
        "sup_inv_h": inv(rec.h_margin),
        "sup_inv_c": inv(rec.c_min),
        "sup_eta_w1eps": rec.holder["eta_w1eps"],
        "sup_vb_weps": rec.holder["vb_weps"],
        "sup_a_weps": rec.holder["a_weps"],
        "sup_sobolev_s0": sb["eta_s0"] + sb["psi_s0"] + sb["V_s0"] + sb["B_s0"],
        "sup_sobolev_r": sb["eta_r"] + sb["psi_r"] + sb["V_r"] + sb["B_r"],
    }


class CriterionAccumulators:
    """Trapezoidal time integrals, running sups and first crossing times."""

    def __init__(self, sup_threshold: float = 1e6, int_threshold: float = 1e6):
        self.sup_threshold = sup_threshold
        self.int_threshold = int_threshold
        self.integrals = {k: 0.0 for k in INTEGRAL_KEYS}
        self.sups = {k: -math.inf for k in SUP_KEYS}
        self.crossed: dict = {}
        self.last_t: float | None = None
        self.t0: float | None = None
        self.last_integrand: dict = {}

    def threshold(self, key: str) -> float:
        return self.int_threshold if key.startswith("int_") else self.sup_threshold

    def value(self, key: str) -> float:
        return self.integrals[key] if key.startswith("int_") else self.sups[key]

    @property
    def elapsed(self) -> float:
        return 0.0 if self.last_t is None else self.last_t - self.t0

    def push(self, t: float, integrands: dict, sups: dict) -> None:
        if self.last_t is not None:
            if t < self.last_t:
                raise ValueError("records must arrive in time order")
            dt = t - self.last_t
            for k in INTEGRAL_KEYS:
                q0, q1 = self.last_integrand[k], integrands[k]
                inc = 0.5 * dt * (q0 + q1) if dt > 0 else 0.0
                if not math.isnan(inc):
                    self.integrals[k] += max(inc, 0.0)
                else:
                    self.integrals[k] = math.inf
        else:
            self.t0 = t
        for k, v in sups.items():
            self.sups[k] = math.inf if math.isnan(v) else max(self.sups[k], v)
        self.last_t = t
        self.last_integrand = dict(integrands)
        for k in INTEGRAL_KEYS + SUP_KEYS:
            v = self.value(k)
            # an unobserved sup stays at -inf and is not a crossing
            if k not in self.crossed and (math.isnan(v) or v > self.threshold(k)):
                self.crossed[k] = t

    # serialization helpers ------------------------------------------------
    def state_dict(self) -> dict:
        return {
            "integrals": dict(self.integrals), "sups": dict(self.sups), "crossed": dict(self.crossed),
            "last_t": self.last_t, "t0": self.t0, "last_integrand": dict(self.last_integrand),
            "sup_threshold": self.sup_threshold, "int_threshold": self.int_threshold,
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> "CriterionAccumulators":
        acc = cls(d["sup_threshold"], d["int_threshold"])
        acc.integrals.update(d["integrals"])
        acc.sups.update(d["sups"])
        acc.crossed = dict(d["crossed"])
        acc.last_t = d["last_t"]
        acc.t0 = d["t0"]
        acc.last_integrand = dict(d["last_integrand"])
        return acc


@dataclass(frozen=True)
class ItemStatus:
    name: str
    value: float
    threshold: float
    crossed_at: float | None


@dataclass(frozen=True)
class CriterionReport:
    final_time: float
    termination: str
    criteria: dict
    leading: dict
    overall_leading: str | None
    verdict: str

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            return v

        payload = asdict(self)
        for items in payload["criteria"].values():
            for it in items:
                it["value"] = clean(it["value"])
        return json.dumps(payload, indent=2, sort_keys=True)


def verdict(acc: CriterionAccumulators, final_time: float, termination: str = "time limit") -> CriterionReport:
    """Itemized status per criterion with the earliest crossing as leading indicator.

    Ties in crossing time are resolved by criterion order, then item order.
    """
    criteria = {}
    leading = {}
    overall = None
    overall_key = None
    for ci, (name, items) in enumerate(CRITERIA.items()):
        rows = []
        best = None
        for ii, key in enumerate(items):
            t = acc.crossed.get(key)
            rows.append(ItemStatus(key, acc.value(key), acc.threshold(key), t))
            if t is not None and (best is None or t < best[0]):
                best = (t, key)
            if t is not None and (overall_key is None or (t, ci, ii) < overall_key):
                overall_key = (t, ci, ii)
                overall = key
        criteria[name] = rows
        leading[name] = best[1] if best else None
    if overall is None:
        text = "no breakdown observed"
    else:
        hit = [n for n in CRITERIA if leading[n] is not None]
        finite = [n for n in CRITERIA if leading[n] is None]
        text = f"breakdown indicated by {', '.join(hit)} criteria (leading: {overall})"
        if finite:
            text += f"; {', '.join(finite)} criteria finite"
    return CriterionReport(final_time, termination, criteria, leading, overall, text)


class BlowupMonitor:
    def __init__(self, grid: SpectralGrid, depth: float, g: float, settings: MonitorSettings | None = None):
        self.grid = grid
        self.depth = depth
        self.g = g
        self.settings = settings or MonitorSettings()
        self.acc = CriterionAccumulators(self.settings.sup_threshold, self.settings.int_threshold)
        self.records: list = []

    def record(self, state: SurfaceState, traces: TraceFields, dn: np.ndarray) -> DiagnosticsRecord:
        rec = instantaneous(self.grid, self.depth, self.g, state, traces, dn, self.settings)
        return self.push(rec)

    def push(self, rec: DiagnosticsRecord) -> DiagnosticsRecord:
        self.acc.push(rec.t, _integrands(rec), _sup_values(rec))
        out = DiagnosticsRecord(**{**rec.__dict__, "accumulators": dict(self.acc.integrals)})
        self.records.append(out)
        return out

    def push_quantities(self, t: float, integrands: dict | None = None, sups: dict | None = None) -> None:
        """Feed raw criterion quantities (for constructed profiles)."""
        base_i = {k: 0.0 for k in INTEGRAL_KEYS}
        base_s = {k: 0.0 for k in SUP_KEYS}
        base_i.update(integrands or {})
        base_s.update(sups or {})
        self.acc.push(t, base_i, base_s)

    @property
    def crossed(self) -> bool:
        return bool(self.acc.crossed)

    def verdict(self, termination: str = "time limit") -> CriterionReport:
        t = self.acc.last_t if self.acc.last_t is not None else 0.0
        return verdict(self.acc, t, termination)


def gronwall_ratio(records) -> np.ndarray:
    """(dA/dt) / (B A) at interior records by centered differences; NaN where A = 0."""
    t = np.array([r.t for r in records])
    A = np.array([r.energy_A for r in records])
    B = np.array([r.energy_B for r in records])
    if len(records) < 3:
        return np.full(0, np.nan)
    dA = (A[2:] - A[:-2]) / (t[2:] - t[:-2])
    den = B[1:-1] * A[1:-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(A[1:-1] > 0, dA / den, np.nan)
