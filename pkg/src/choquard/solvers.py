"""Groundstate and constrained-minimizer solvers.

petviashvili_solve finds the unit-coefficient groundstate of
-Delta W + W = (I_alpha * |W|^p) |W|^(p-2) W by a stabilized fixed point;
minimize_on_sphere runs mass-projected, preconditioned gradient descent
with backtracking and classifies vanishing/blow-up runs.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .functionals import (
    EnergyBreakdown,
    energy,
    gradient,
    nonlocal_terms,
    normalize_mass,
    resample_scaled,
)
from .grid import Field, Grid, boundary_mass, inner, lp_norm
from .params import ChoquardParams, Regime
from .potentials import PotentialSpec
from .spectral import (
    SpectralWorkspace,
    inverse_helmholtz,
    kinetic_energy,
    laplacian_apply,
)

__all__ = [
    "SolveStatus",
    "PetviashviliOptions",
    "FlowOptions",
    "SolveReport",
    "petviashvili_solve",
    "rescale_unit_to_Qp",
    "critical_mass",
    "minimize_on_sphere",
    "multiplier_sign_check",
    "gaussian_field",
]


class SolveStatus(enum.Enum):
    CONVERGED = "Converged"
    VANISHING = "Vanishing"
    BLOWUP = "Blowup"
    MAX_ITERS = "MaxIters"


@dataclass(frozen=True)
class PetviashviliOptions:
    tol_residual: float = 1e-10
    max_iters: int = 2000
    gamma: float | None = None  # None: (2p-1)/(2p-2)
    init_width: float = 1.0
    init_field: Field | None = None

    def __post_init__(self):
        if self.tol_residual <= 0:
            raise ValueError("tol_residual must be positive")
        if self.gamma is not None and not (1.0 < self.gamma <= 2.0):
            raise ValueError(f"gamma must lie in (1, 2], got {self.gamma}")


@dataclass(frozen=True)
class FlowOptions:
    step0: float = 1.0
    backtrack: float = 0.5
    tol_grad: float = 1e-8
    max_iters: int = 5000
    blowup_A_factor: float = 1e6
    vanish_peak_ratio: float = 1e-6
    energy_floor: float = -1e9
    precond_shift: float = 1.0
    adapt_shift: bool = False  # track |mu| within [0.01, 100] instead
    cg: bool = True  # Polak-Ribiere direction mixing, auto-restarting
    armijo: float = 1e-4
    plateau_window: int = 10
    plateau_rtol: float = 1e-9

    def __post_init__(self):
        if self.step0 <= 0:
            raise ValueError("step0 must be positive")
        if not (0.0 < self.backtrack < 1.0):
            raise ValueError(f"backtrack must lie in (0, 1), got {self.backtrack}")
        if self.tol_grad <= 0:
            raise ValueError("tol_grad must be positive")


@dataclass
class SolveReport:
    status: SolveStatus
    field: Field
    breakdown: EnergyBreakdown
    mu: float
    iterations: int
    residual: float
    residual_summary: dict
    boundary_mass: float
    c: float
    params: ChoquardParams
    diagnostics: dict = dc_field(default_factory=dict)

    @property
    def energy_value(self) -> float:
        return self.breakdown.E if self.breakdown.E is not None else self.breakdown.I_p

    def to_record(self) -> dict:
        g = self.field.grid
        return {
            "status": self.status.value,
            "iters": self.iterations,
            "A": self.breakdown.A,
            "B": self.breakdown.B,
            "C": self.breakdown.C,
            "mass_sq": self.breakdown.mass_sq,
            "energy": self.energy_value,
            "mu": self.mu,
            "residual": self.residual,
            "boundary_mass": self.boundary_mass,
            "grid": {"N": g.dim, "M": g.points_per_axis, "L": g.box_length},
            "params": {"alpha": self.params.alpha, "p": self.params.p},
            "c": self.c,
        }


def gaussian_field(grid: Grid, width: float = 1.0, center=None) -> Field:
    """exp(-|x - center|^2 / (2 width^2)), unit amplitude."""
    r = grid.radius(center)
    return Field(grid, np.exp(-(r**2) / (2.0 * width**2)))


def _residual_summary(history: list[float]) -> dict:
    if not history:
        return {"first": None, "last": None, "min": None, "count": 0}
    return {
        "first": history[0],
        "last": history[-1],
        "min": min(history),
        "count": len(history),
    }


def petviashvili_solve(
    params: ChoquardParams,
    opts: PetviashviliOptions | None,
    ws: SpectralWorkspace,
) -> SolveReport:
    """Stabilized fixed point for the unit-coefficient groundstate.

    Iterates v <- S^gamma (-Delta + 1)^(-1) N(v) with
    S = <(-Delta + 1) v, v> / B(v) and gamma = (2p-1)/(2p-2) by default.
    Converged means relative equation residual <= tol and |S - 1| <= 1e-10.
    """
    if not (params.p_low < params.p < params.p_high):
        raise ValueError(
            "petviashvili needs p strictly inside the exponent window; "
            f"got p = {params.p:g}"
        )
    if opts is None:
        opts = PetviashviliOptions()
    p = params.p
    gamma = opts.gamma if opts.gamma is not None else (2 * p - 1) / (2 * p - 2)
    v = opts.init_field.copy() if opts.init_field is not None else gaussian_field(
        ws.grid, opts.init_width
    )
    history: list[float] = []
    status = SolveStatus.MAX_ITERS
    s_val = np.inf
    iters = 0
    for iters in range(1, opts.max_iters + 1):
        conv, b = nonlocal_terms(v, params, ws)
        if not np.isfinite(b) or b <= 0.0:
            status = SolveStatus.MAX_ITERS
            break
        nl = Field(ws.grid, conv.values * np.sign(v.values) * np.abs(v.values) ** (p - 1.0))
        a = kinetic_energy(v, ws)
        mass_sq = ws.grid.cell_weight * float(np.sum(v.values**2))
        s_val = (a + mass_sq) / b
        lhs = Field(ws.grid, laplacian_apply(v, ws).values + v.values)
        res = lp_norm(Field(ws.grid, lhs.values - nl.values), 2) / lp_norm(v, 2)
        history.append(res)
        if res <= opts.tol_residual and abs(s_val - 1.0) <= 1e-10:
            status = SolveStatus.CONVERGED
            break
        if not np.isfinite(s_val) or s_val > 1e8 or s_val < 1e-8:
            status = SolveStatus.MAX_ITERS
            break
        v = inverse_helmholtz(nl, 1.0, ws)
        v = Field(ws.grid, s_val**gamma * v.values)

    br = energy(v, params, ws)
    # Rayleigh multiplier of the unconstrained equation; -1 at the fixed point
    g = gradient(v, params, ws)
    mu = inner(g, v) / br.mass_sq if br.mass_sq > 0 else float("nan")
    return SolveReport(
        status=status,
        field=v,
        breakdown=br,
        mu=mu,
        iterations=iters,
        residual=history[-1] if history else float("inf"),
        residual_summary=_residual_summary(history),
        boundary_mass=boundary_mass(v),
        c=float(np.sqrt(br.mass_sq)),
        params=params,
        diagnostics={"S_final": s_val, "gamma": gamma},
    )


def rescale_unit_to_Qp(W: Field, params: ChoquardParams, ws: SpectralWorkspace) -> Field:
    """Map the unit-coefficient groundstate to the extremal normalization.

    Q(x) = lam W(mu x) with mu = sqrt(b/a), lam^(2p-2) = b mu^alpha,
    a = (N p - (N + alpha))/2, b = (N + alpha - (N - 2) p)/2.  At the
    mass-critical p this is mass-preserving with mu = sqrt((alpha + 2)/N).
    """
    n, al, p = params.dim, params.alpha, params.p
    a = (n * p - (n + al)) / 2.0
    b = (n + al - (n - 2.0) * p) / 2.0
    if a <= 0 or b <= 0:
        raise ValueError("rescaling needs p strictly inside the exponent window")
    mu = float(np.sqrt(b / a))
    lam = float((b * mu**al) ** (1.0 / (2.0 * p - 2.0)))
    q = resample_scaled(W, mu, ws)
    return Field(W.grid, lam * q.values)


def _cache_dir() -> Path:
    root = os.environ.get("CHQ_CACHE_DIR")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "chq"


def _cstar_cache_key(params: ChoquardParams, grid: Grid) -> str:
    raw = (
        f"cstar-v1-N{grid.dim}-M{grid.points_per_axis}-L{grid.box_length!r}-"
        f"alpha{params.alpha!r}"
    )
    return hashlib.sha256(raw.encode()).hexdigest()[:24]


def critical_mass(
    params: ChoquardParams,
    opts: PetviashviliOptions | None,
    ws: SpectralWorkspace,
    use_cache: bool = True,
) -> float:
    """|Q|_2 of the mass-critical extremal, cached per (N, alpha, grid).

    Cache location: $CHQ_CACHE_DIR, default ~/.cache/chq.
    """
    if params.regime is not Regime.MASS_CRITICAL:
        raise ValueError("critical mass is defined at p = (N + alpha + 2)/N only")
    key = _cstar_cache_key(params, ws.grid)
    path = _cache_dir() / f"{key}.json"
    if use_cache and path.is_file():
        with open(path) as fh:
            return float(json.load(fh)["c_star"])
    rep = petviashvili_solve(params, opts, ws)
    if rep.status is not SolveStatus.CONVERGED:
        raise RuntimeError(
            f"groundstate solve failed ({rep.status.value}, residual {rep.residual:.2e})"
        )
    q = rescale_unit_to_Qp(rep.field, params, ws)
    c_star = lp_norm(q, 2)
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "c_star": c_star,
            "N": ws.grid.dim,
            "M": ws.grid.points_per_axis,
            "L": ws.grid.box_length,
            "alpha": params.alpha,
            "residual": rep.residual,
            "iters": rep.iterations,
        }
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(payload, fh)
        os.replace(tmp, path)
    return c_star


def minimize_on_sphere(
    params: ChoquardParams,
    c: float,
    vspec: PotentialSpec | None,
    init: Field,
    opts: FlowOptions,
    ws: SpectralWorkspace,
) -> SolveReport:
    """Projected, preconditioned gradient descent on the sphere |u|_2 = c.

    Monotone energy via backtracking; renormalizes the mass after every
    step.  Status: Converged on small relative tangential gradient; Blowup
    on kinetic growth past blowup_A_factor with the energy still falling,
    or energy below energy_floor; Vanishing on peak collapse once the
    energy has plateaued.  mu is <grad E(u), u> / c^2 at the last iterate.
    """
    if not (c > 0):
        raise ValueError(f"constraint mass must be positive, got {c}")
    if lp_norm(init, 2) == 0.0:
        raise ValueError("initial field must be nonzero")

    def e_of(br: EnergyBreakdown) -> float:
        return br.E if br.E is not None else br.I_p

    u = normalize_mass(init, c)
    br = energy(u, params, ws, vspec)
    e_cur = e_of(br)
    a0 = max(br.A, 1e-300)
    peak0 = float(np.max(np.abs(u.values)))
    e_window: list[float] = [e_cur]
    history: list[float] = []
    step = opts.step0
    status = SolveStatus.MAX_ITERS
    mu = float("nan")
    iters = 0
    diagnostics: dict = {}
    prev_gt: Field | None = None
    prev_pg: Field | None = None
    prev_d: Field | None = None

    for iters in range(1, opts.max_iters + 1):
        g = gradient(u, params, ws, vspec)
        mu = inner(g, u) / c**2
        gt = Field(ws.grid, g.values - mu * u.values)
        gnorm = lp_norm(g, 2)
        rel = lp_norm(gt, 2) / gnorm if gnorm > 0 else 0.0
        history.append(rel)
        if rel <= opts.tol_grad:
            status = SolveStatus.CONVERGED
            break

        plateau_band = opts.plateau_rtol * max(1.0, abs(e_cur))
        window_drop = e_window[0] - e_cur
        peak = float(np.max(np.abs(u.values)))
        still_decreasing = window_drop > plateau_band
        if e_cur < opts.energy_floor or (
            br.A >= opts.blowup_A_factor * a0 and still_decreasing
        ):
            status = SolveStatus.BLOWUP
            break
        if peak <= opts.vanish_peak_ratio * peak0 and not still_decreasing:
            status = SolveStatus.VANISHING
            break

        shift = opts.precond_shift
        if opts.adapt_shift and np.isfinite(mu):
            shift = min(max(abs(mu), 1e-2), 1e2)
        pg = inverse_helmholtz(gt, shift, ws)
        d = pg
        if opts.cg and prev_pg is not None and prev_d is not None:
            denom = inner(prev_gt, prev_pg)
            beta = inner(Field(ws.grid, gt.values - prev_gt.values), pg) / denom
            if beta > 0.0 and np.isfinite(beta):
                mix = Field(ws.grid, pg.values + beta * prev_d.values)
                # re-project: prev_d was tangent at the previous iterate
                mix = Field(ws.grid, mix.values - (inner(mix, u) / c**2) * u.values)
                if inner(gt, mix) > 0.0:
                    d = mix

        def line_search(d: Field, slope: float):
            s = step
            while s >= 1e-16 * opts.step0:
                trial = normalize_mass(Field(ws.grid, u.values - s * d.values), c)
                br_t = energy(trial, params, ws, vspec)
                e_t = e_of(br_t)
                if np.isfinite(e_t) and e_t <= e_cur - opts.armijo * s * slope:
                    return trial, br_t, e_t, s
                s *= opts.backtrack
            # energy differences at rounding resolution; retry, accepting on
            # tangential-gradient decrease with at most fp_band energy creep
            fp_band = 8.0 * np.finfo(float).eps * max(1.0, abs(e_cur))
            gt_norm = lp_norm(gt, 2)
            s = step
            while s >= 1e-16 * opts.step0:
                trial = normalize_mass(Field(ws.grid, u.values - s * d.values), c)
                br_t = energy(trial, params, ws, vspec)
                e_t = e_of(br_t)
                if np.isfinite(e_t) and e_t <= e_cur + fp_band:
                    g_t = gradient(trial, params, ws, vspec)
                    mu_t = inner(g_t, trial) / c**2
                    gt_t = Field(ws.grid, g_t.values - mu_t * trial.values)
                    if lp_norm(gt_t, 2) < gt_norm:
                        return trial, br_t, e_t, s
                s *= opts.backtrack
            return None

        slope = inner(gt, d)
        found = line_search(d, slope) if slope > 0.0 else None
        if found is None and d is not pg:
            # stale direction memory; restart from the plain one
            prev_gt = prev_pg = prev_d = None
            d = pg
            slope = inner(gt, pg)
            found = line_search(d, slope) if slope > 0.0 else None
        if found is None:
            diagnostics["stall"] = (
                "nonpositive descent slope" if slope <= 0.0 else "backtracking exhausted"
            )
            break
        prev_gt, prev_pg, prev_d = gt, pg, d
        trial, br_t, e_t, s = found
        u, br, e_cur = trial, br_t, e_t
        step = min(s / opts.backtrack, 1e3 * opts.step0)
        e_window.append(e_cur)
        if len(e_window) > opts.plateau_window:
            e_window.pop(0)

    diagnostics.update(
        {
            "A_growth": br.A / a0,
            "peak_ratio": float(np.max(np.abs(u.values))) / peak0,
            "final_step": step,
        }
    )
    return SolveReport(
        status=status,
        field=u,
        breakdown=br,
        mu=mu,
        iterations=iters,
        residual=history[-1] if history else float("inf"),
        residual_summary=_residual_summary(history),
        boundary_mass=boundary_mass(u),
        c=c,
        params=params,
        diagnostics=diagnostics,
    )


def multiplier_sign_check(report: SolveReport) -> bool:
    """True iff the converged report's multiplier estimate is negative."""
    if report.status is not SolveStatus.CONVERGED:
        raise ValueError("multiplier sign check needs a converged report")
    return report.mu < 0.0
