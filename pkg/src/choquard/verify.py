"""Independent oracles and the self-check suite.

Every oracle recomputes a quantity along a route disjoint from the
production path: direct summation against the same discrete kernel,
adaptive radial quadrature for the Newtonian case, finite differences
for gradients, closed forms for scalings and sharp constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from math import gamma, pi

import numpy as np
from scipy.integrate import quad

from .functionals import (
    dilate,
    energy,
    extremal_profile,
    gradient,
    hls_ratio,
    pohozaev_residual,
    virial_residual_critical,
    wp_ratio,
)
from .grid import Field, Grid, inner, lp_norm
from .params import ChoquardParams, riesz_constant
from .potentials import PotentialSpec, Well
from .solvers import (
    PetviashviliOptions,
    SolveStatus,
    gaussian_field,
    petviashvili_solve,
    rescale_unit_to_Qp,
)
from .spectral import RieszOptions, RieszScheme, SpectralWorkspace, riesz_convolve

__all__ = [
    "OracleReport",
    "direct_convolution_oracle",
    "newtonian_radial_potential",
    "sharp_hls_constant",
    "check_convolution_direct",
    "check_convolution_newtonian",
    "check_gradient_fd",
    "check_dilation_scaling",
    "check_groundstate_identities",
    "check_hls_scale_invariance",
    "check_hls_sharp_constant",
    "run_suite",
    "write_suite_report",
    "suite_passed",
]

_DIRECT_LIMIT = 16


@dataclass(frozen=True)
class OracleReport:
    oracle: str
    max_rel_err: float
    tol: float
    passed: bool
    input: dict
    details: dict = dc_field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "oracle": self.oracle,
            "max_rel_err": self.max_rel_err,
            "tol": self.tol,
            "pass": self.passed,
            "input": self.input,
        }


def _report(oracle: str, err: float, tol: float, inp: dict, details=None) -> OracleReport:
    return OracleReport(
        oracle=oracle,
        max_rel_err=float(err),
        tol=tol,
        passed=bool(err <= tol),
        input=inp,
        details=details or {},
    )


def direct_convolution_oracle(
    f: Field, alpha: float, ws: SpectralWorkspace, corrupt: bool = False
) -> Field:
    """O(M^(2N)) circular convolution against the workspace kernel table.

    Same discrete kernel as the spectral path, per-target pairwise
    summation instead of an FFT.  Refuses grids above 16 points per axis.
    """
    g = f.grid
    if g.points_per_axis > _DIRECT_LIMIT:
        raise ValueError(
            f"direct oracle is O(M^2N); grids above {_DIRECT_LIMIT} points per axis "
            "are refused"
        )
    table = ws.freespace_kernel_table(alpha)
    if corrupt:
        table = table.copy()
        table[(0,) * g.dim] *= 1.0 + 1e-6
    p = ws.pad_points
    idx = np.indices(g.shape)
    out = np.empty(g.shape)
    for target in np.ndindex(*g.shape):
        disp = tuple((target[d] - idx[d]) % p for d in range(g.dim))
        out[target] = np.sum(table[disp] * f.values)
    return Field(g, g.cell_weight * out)


def newtonian_radial_potential(radial_f, radii, corrupt: bool = False) -> np.ndarray:
    """Potential of a radial density against the alpha = 2 kernel in three
    dimensions: phi(r) = (1/r) int_0^r s^2 f ds + int_r^inf s f ds.

    Adaptive quadrature on the segments between the sorted radii, prefix
    sums for the cumulative pieces.
    """
    radii = np.asarray(radii, dtype=np.float64)
    order = np.argsort(radii)
    r_sorted = radii[order]
    inner_segs = np.empty(r_sorted.size)
    outer_segs = np.empty(r_sorted.size)
    prev = 0.0
    for i, r in enumerate(r_sorted):
        inner_segs[i] = quad(lambda s: s * s * radial_f(s), prev, r)[0]
        prev = r
    prev = 0.0
    for i, r in enumerate(r_sorted):
        outer_segs[i] = quad(lambda s: s * radial_f(s), prev, r)[0]
        prev = r
    tail = quad(lambda s: s * radial_f(s), r_sorted[-1], np.inf)[0]
    inner_cum = np.cumsum(inner_segs)
    outer_from_r = tail + np.sum(outer_segs) - np.cumsum(outer_segs)
    phi_sorted = np.where(
        r_sorted > 0, inner_cum / np.where(r_sorted > 0, r_sorted, 1.0), 0.0
    )
    phi_sorted = phi_sorted + outer_from_r
    if corrupt:
        phi_sorted = phi_sorted * (1.0 + 1e-5)
    phi = np.empty_like(phi_sorted)
    phi[order] = phi_sorted
    return phi


def sharp_hls_constant(dim: int, alpha: float) -> float:
    """Best constant for B(u) / |u|_2^(2(N+alpha)/N) at the lower endpoint,
    from the closed form for the diagonal inequality with the inverted
    parabolas as extremals."""
    lam = dim - alpha
    if not (0 < lam < dim):
        raise ValueError("need 0 < dim - alpha < dim")
    c_diag = (
        pi ** (lam / 2.0)
        * gamma(dim / 2.0 - lam / 2.0)
        / gamma(dim - lam / 2.0)
        * (gamma(dim / 2.0) / gamma(dim)) ** (-1.0 + lam / dim)
    )
    return riesz_constant(dim, alpha) * c_diag


def _smooth_noise(ws: SpectralWorkspace, rng: np.random.Generator) -> Field:
    """Band-limited unit-mass noise: white samples low-pass filtered at a
    quarter of the Nyquist frequency."""
    g = ws.grid
    raw = rng.standard_normal(g.shape)
    spec = np.fft.fftn(raw)
    cut = 0.25 / (2.0 * g.spacing)
    xi2 = np.zeros(g.shape)
    for axis in range(g.dim):
        freq = np.fft.fftfreq(g.points_per_axis, d=g.spacing)
        shape = [1] * g.dim
        shape[axis] = g.points_per_axis
        xi2 = xi2 + (freq.reshape(shape)) ** 2
    spec *= np.exp(-xi2 / cut**2)
    vals = np.fft.ifftn(spec).real
    f = Field(g, vals)
    return Field(g, vals / lp_norm(f, 2))


def check_convolution_direct(
    dim: int, alpha: float, tol: float = 1e-12, corrupt: bool = False
) -> OracleReport:
    grid = Grid(dim, 16, 8.0)
    ws = SpectralWorkspace(grid)
    rng = np.random.default_rng(7 + dim)
    f = _smooth_noise(ws, rng)
    fast = riesz_convolve(f, RieszOptions(RieszScheme.FREE_SPACE, alpha), ws)
    slow = direct_convolution_oracle(f, alpha, ws, corrupt=corrupt)
    scale = float(np.max(np.abs(slow.values)))
    err = float(np.max(np.abs(fast.values - slow.values))) / scale
    return _report(
        f"convolution_direct_{dim}d",
        err,
        tol,
        {"N": dim, "M": 16, "L": 8.0, "alpha": alpha, "field": f"seeded-noise({7 + dim})"},
    )


def check_convolution_newtonian(
    points: int = 64,
    box: float = 16.0,
    sigma: float = 1.0,
    tol: float = 1e-6,
    corrupt: bool = False,
) -> OracleReport:
    """FFT convolution of a Gaussian against adaptive radial quadrature,
    alpha = 2 in three dimensions, pointwise relative error."""
    grid = Grid(3, points, box)
    ws = SpectralWorkspace(grid)
    f = gaussian_field(grid, sigma)
    conv = riesz_convolve(f, RieszOptions(RieszScheme.FREE_SPACE, 2.0), ws)
    r = grid.radius()
    uniq, inv = np.unique(np.round(r, 10), return_inverse=True)
    phi_uniq = newtonian_radial_potential(
        lambda s: np.exp(-(s**2) / (2.0 * sigma**2)), uniq, corrupt=corrupt
    )
    phi = phi_uniq[inv].reshape(grid.shape)
    rel = np.abs(conv.values - phi) / np.abs(phi)
    far = r >= 5.0 * sigma
    total = grid.cell_weight * float(np.sum(f.values))
    far_ref = riesz_constant(3, 2.0) * total / np.where(far, r, 1.0)
    far_err = float(np.max(np.abs(conv.values[far] - far_ref[far]) / far_ref[far]))
    return _report(
        "convolution_newtonian_3d",
        float(np.max(rel)),
        tol,
        {"N": 3, "M": points, "L": box, "alpha": 2.0, "field": f"gaussian({sigma:g})"},
        details={"far_field_rel_err": far_err},
    )


def check_gradient_fd(
    params: ChoquardParams,
    ws: SpectralWorkspace,
    vspec: PotentialSpec | None = None,
    n_fields: int = 3,
    seed: int = 202,
    tol: float = 1e-6,
) -> OracleReport:
    """Directional derivatives of the energy against central differences."""
    rng = np.random.default_rng(seed)

    def e_of(f: Field) -> float:
        br = energy(f, params, ws, vspec)
        return br.E if br.E is not None else br.I_p

    worst = 0.0
    for _ in range(n_fields):
        u = _smooth_noise(ws, rng)
        v = _smooth_noise(ws, rng)
        g = gradient(u, params, ws, vspec)
        der = inner(g, v)
        eps = 1e-5
        up = Field(ws.grid, u.values + eps * v.values)
        um = Field(ws.grid, u.values - eps * v.values)
        fd = (e_of(up) - e_of(um)) / (2.0 * eps)
        worst = max(worst, abs(fd - der) / max(abs(der), 1e-12))
    return _report(
        "gradient_fd",
        worst,
        tol,
        {
            "N": params.dim,
            "M": ws.grid.points_per_axis,
            "L": ws.grid.box_length,
            "alpha": params.alpha,
            "p": params.p,
            "fields": n_fields,
            "seed": seed,
            "potential": vspec is not None,
        },
    )


def check_dilation_scaling(
    params: ChoquardParams,
    ws: SpectralWorkspace,
    ts=(0.5, 2.0),
    tol: float = 1e-6,
    tol_mass: float = 1e-10,
) -> OracleReport:
    """dilate must keep the mass to 1e-10 and scale A by t^2 and B by
    t^(Np - (N + alpha)) to the stated tolerance."""
    n, al, p = params.dim, params.alpha, params.p
    u = gaussian_field(ws.grid, 1.0)
    base = energy(u, params, ws)
    worst = 0.0
    mass_err = 0.0
    for t in ts:
        ut = dilate(u, t, ws)
        br = energy(ut, params, ws)
        mass_err = max(mass_err, abs(br.mass_sq - base.mass_sq) / base.mass_sq)
        worst = max(worst, abs(br.A - t**2 * base.A) / (t**2 * base.A))
        k = n * p - (n + al)
        worst = max(worst, abs(br.B - t**k * base.B) / (t**k * base.B))
    passed = worst <= tol and mass_err <= tol_mass
    return OracleReport(
        oracle="dilation_scaling",
        max_rel_err=float(max(worst, mass_err)),
        tol=tol,
        passed=passed,
        input={
            "N": n,
            "M": ws.grid.points_per_axis,
            "L": ws.grid.box_length,
            "alpha": al,
            "p": p,
            "t": list(ts),
        },
        details={"mass_rel_err": mass_err, "tol_mass": tol_mass, "scaling_rel_err": worst},
    )


def check_groundstate_identities(
    params_sub: ChoquardParams,
    params_crit: ChoquardParams,
    ws: SpectralWorkspace,
    opts: PetviashviliOptions | None = None,
) -> list[OracleReport]:
    """Four identity checks on fresh solves: the dilation identity at a
    subcritical p, the extremal quotient identities of the rescaled
    profile, the critical virial pair, and the critical action value."""
    opts = opts or PetviashviliOptions()
    inp = {
        "N": params_sub.dim,
        "M": ws.grid.points_per_axis,
        "L": ws.grid.box_length,
        "alpha": params_sub.alpha,
    }
    out: list[OracleReport] = []

    rep = petviashvili_solve(params_sub, opts, ws)
    ok = rep.status is SolveStatus.CONVERGED
    poho = pohozaev_residual(rep.field, params_sub, ws) if ok else float("inf")
    out.append(
        _report("groundstate_pohozaev", poho, 1e-5, inp | {"p": params_sub.p})
    )
    if ok:
        q_p = rescale_unit_to_Qp(rep.field, params_sub, ws)
        br = energy(q_p, params_sub, ws)
        err_bp = abs(br.A - br.B / params_sub.p) / br.A
        err_mass = abs(br.A - br.mass_sq) / br.A
        quotient = wp_ratio(q_p, params_sub, ws)
        s_p = lp_norm(q_p, 2) ** (2.0 * params_sub.p - 2.0) / params_sub.p
        err_q = abs(quotient / s_p - 1.0)
        err25 = max(err_bp, err_mass)
    else:
        err25 = err_q = float("inf")
    out.append(_report("extremal_identities", err25, 1e-4, inp | {"p": params_sub.p}))
    out.append(_report("extremal_quotient", err_q, 1e-4, inp | {"p": params_sub.p}))

    repc = petviashvili_solve(params_crit, opts, ws)
    okc = repc.status is SolveStatus.CONVERGED
    vir = (
        virial_residual_critical(repc.field, params_crit, ws)
        if okc
        else float("inf")
    )
    out.append(
        _report("groundstate_virial_critical", vir, 1e-5, inp | {"p": params_crit.p})
    )
    if okc:
        br = energy(repc.field, params_crit, ws)
        action = br.A / 2.0 + br.mass_sq / 2.0 - br.B / (2.0 * params_crit.p)
        err32 = abs(action - br.mass_sq / 2.0) / (br.mass_sq / 2.0)
    else:
        err32 = float("inf")
    out.append(
        _report("critical_action_identity", err32, 1e-4, inp | {"p": params_crit.p})
    )
    return out


def check_hls_scale_invariance(
    dim: int = 1, alpha: float = 0.5, tol: float = 1e-10
) -> OracleReport:
    """The endpoint quotient of the inverted parabola is scale-free; on
    grids scaled with the profile the discrete value must not move."""
    params = ChoquardParams(dim, alpha, (dim + alpha) / dim)
    g1 = Grid(dim, 256, 40.0)
    g2 = Grid(dim, 256, 80.0)
    r1 = hls_ratio(extremal_profile(g1, 1.0), params, SpectralWorkspace(g1))
    r2 = hls_ratio(extremal_profile(g2, 2.0), params, SpectralWorkspace(g2))
    err = abs(r1 - r2) / abs(r1)
    return _report(
        "hls_scale_invariance",
        err,
        tol,
        {"N": dim, "alpha": alpha, "M": 256, "L": [40.0, 80.0], "eta": [1.0, 2.0]},
    )


def check_hls_sharp_constant(
    dim: int = 1, alpha: float = 0.5, tol: float = 1e-2
) -> OracleReport:
    """Scan the extremal family for the endpoint quotient and compare to
    the closed-form best constant."""
    params = ChoquardParams(dim, alpha, (dim + alpha) / dim)
    grid = Grid(dim, 1024, 80.0)
    ws = SpectralWorkspace(grid)
    etas = np.geomspace(0.5, 8.0, 12)
    best = max(hls_ratio(extremal_profile(grid, float(e)), params, ws) for e in etas)
    theory = sharp_hls_constant(dim, alpha)
    err = abs(best - theory) / theory
    return _report(
        "hls_sharp_constant",
        err,
        tol,
        {"N": dim, "alpha": alpha, "M": 1024, "L": 80.0},
        details={"best_ratio": best, "theory": theory},
    )


def run_suite(fault_injection: bool = False) -> list[OracleReport]:
    """Ordered oracle suite.  Failures never abort the run; the caller
    inspects the reports.  fault_injection perturbs each convolution
    oracle's reference copy to prove the harness can fail."""
    reports: list[OracleReport] = []
    reports.append(check_convolution_direct(1, 0.5, corrupt=fault_injection))
    reports.append(check_convolution_direct(2, 1.0, corrupt=fault_injection))
    reports.append(check_convolution_newtonian(corrupt=fault_injection))

    grid1 = Grid(1, 64, 16.0)
    ws1 = SpectralWorkspace(grid1)
    params_g = ChoquardParams(1, 0.5, 3.0)
    vspec = PotentialSpec((Well((0.0,), 1.0, 2.0),))
    reports.append(check_gradient_fd(params_g, ws1, vspec))

    grid2 = Grid(1, 128, 32.0)
    reports.append(
        check_dilation_scaling(ChoquardParams(1, 0.5, 2.5), SpectralWorkspace(grid2))
    )

    grid3 = Grid(1, 512, 24.0)
    ws3 = SpectralWorkspace(grid3)
    reports.extend(
        check_groundstate_identities(
            ChoquardParams(1, 0.5, 2.5), ChoquardParams(1, 0.5, 3.5), ws3
        )
    )
    reports.append(check_hls_scale_invariance())
    reports.append(check_hls_sharp_constant())
    return reports


def write_suite_report(reports: list[OracleReport], path) -> None:
    with open(path, "w") as fh:
        for rep in reports:
            fh.write(json.dumps(rep.to_record()) + "\n")


def suite_passed(reports: list[OracleReport]) -> bool:
    return all(r.passed for r in reports)
