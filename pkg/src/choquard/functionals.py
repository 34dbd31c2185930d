"""Energies, gradients, scalings, and variational-identity residuals.

Component names: A = int |grad u|^2, B = int (I_alpha * |u|^p) |u|^p,
C = int V |u|^2, mass_sq = int u^2, I_p = A/2 - B/(2p),
E = A/2 + C/2 - B/(2p).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Field, boundary_mass, lp_norm
from .params import ChoquardParams, Regime
from .potentials import PotentialSpec, evaluate_potential
from .spectral import (
    RieszOptions,
    RieszScheme,
    SpectralWorkspace,
    kinetic_energy,
    laplacian_apply,
    riesz_convolve,
)

__all__ = [
    "EnergyBreakdown",
    "energy",
    "gradient",
    "dilate",
    "resample_affine",
    "resample_scaled",
    "normalize_mass",
    "wp_ratio",
    "hls_ratio",
    "pohozaev_residual",
    "virial_residual_critical",
    "extremal_profile",
]

BOUNDARY_MASS_WARN = 1e-8


@dataclass(frozen=True)
class EnergyBreakdown:
    A: float
    B: float
    C: float
    mass_sq: float
    I_p: float
    E: float | None

    def to_record(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "C": self.C,
            "mass_sq": self.mass_sq,
            "I_p": self.I_p,
            "E": self.E,
        }


def _signed_power(v: np.ndarray, expo: float) -> np.ndarray:
    """sign(v) |v|^expo with the continuous extension 0 at v = 0."""
    return np.sign(v) * np.abs(v) ** expo


def nonlocal_terms(
    u: Field,
    params: ChoquardParams,
    ws: SpectralWorkspace,
    scheme: RieszScheme = RieszScheme.FREE_SPACE,
) -> tuple[Field, float]:
    """Convolution I_alpha * |u|^p and the pairing B = <conv, |u|^p>."""
    pw = Field(u.grid, np.abs(u.values) ** params.p)
    conv = riesz_convolve(pw, RieszOptions(scheme, params.alpha), ws)
    b = float(u.grid.cell_weight * np.sum(conv.values * pw.values))
    return conv, b


def energy(
    u: Field,
    params: ChoquardParams,
    ws: SpectralWorkspace,
    vspec: PotentialSpec | None = None,
    scheme: RieszScheme = RieszScheme.FREE_SPACE,
) -> EnergyBreakdown:
    """Energy components of u; E is only reported with a potential."""
    a = kinetic_energy(u, ws)
    _, b = nonlocal_terms(u, params, ws, scheme)
    mass_sq = float(u.grid.cell_weight * np.sum(u.values**2))
    if vspec is not None:
        v = evaluate_potential(vspec, u.grid)
        c = float(u.grid.cell_weight * np.sum(v.values * u.values**2))
        e = 0.5 * a + 0.5 * c - b / (2.0 * params.p)
    else:
        c = 0.0
        e = None
    return EnergyBreakdown(
        A=a,
        B=b,
        C=c,
        mass_sq=mass_sq,
        I_p=0.5 * a - b / (2.0 * params.p),
        E=e,
    )


def gradient(
    u: Field,
    params: ChoquardParams,
    ws: SpectralWorkspace,
    vspec: PotentialSpec | None = None,
    scheme: RieszScheme = RieszScheme.FREE_SPACE,
) -> Field:
    """-Delta u + V u - (I_alpha * |u|^p) |u|^(p-2) u (V term if present).

    Matches centered finite differences of `energy` to first order; without
    a potential this is the gradient of I_p.
    """
    lap = laplacian_apply(u, ws)
    conv, _ = nonlocal_terms(u, params, ws, scheme)
    out = lap.values - conv.values * _signed_power(u.values, params.p - 1.0)
    if vspec is not None:
        out = out + evaluate_potential(vspec, u.grid).values * u.values
    return Field(u.grid, out)


def _interp_matrix(m: int, spacing: float, t: float, shift: float = 0.0) -> np.ndarray:
    """Trig interpolation matrix: samples -> interpolant at t * x_n + shift.

    Acts on the raw DFT spectrum; the Nyquist mode is symmetrized so real
    inputs map to real interpolants.
    """
    x = (np.arange(m) - m // 2) * spacing
    xi = np.fft.fftfreq(m, d=spacing)
    # DFT index 0 sits at x = -L/2; evaluate relative to that origin
    z = t * x + shift + m * spacing / 2.0
    w = np.exp(2j * np.pi * np.outer(z, xi)) / m
    nyq = m // 2
    w[:, nyq] = np.cos(2.0 * np.pi * np.abs(xi[nyq]) * z) / m
    return w


def resample_affine(u: Field, t: float, offset, ws: SpectralWorkspace) -> Field:
    """Samples of the trig interpolant of u at the points t * x + offset.

    The interpolant is L-periodic, so a point outside the box would read a
    wrapped image; those samples are zeroed instead, which is exact for
    fields that decay inside the box.
    """
    if u.grid != ws.grid:
        raise ValueError("field grid does not match workspace grid")
    if not (t > 0):
        raise ValueError(f"scale factor must be positive, got {t}")
    g = u.grid
    off = np.broadcast_to(np.asarray(offset, dtype=np.float64), (g.dim,))
    half = g.box_length / 2.0
    x = g.axis_coords()
    spec = np.fft.fftn(u.values)
    for axis in range(g.dim):
        w = _interp_matrix(g.points_per_axis, g.spacing, t, float(off[axis]))
        spec = np.moveaxis(np.tensordot(w, spec, axes=([1], [axis])), 0, axis)
    vals = np.ascontiguousarray(spec.real)
    for axis in range(g.dim):
        y = t * x + off[axis]
        valid = (y >= -half) & (y < half)
        if not valid.all():
            shape = [1] * g.dim
            shape[axis] = g.points_per_axis
            vals = vals * valid.reshape(shape)
    return Field(g, np.ascontiguousarray(vals))


def resample_scaled(u: Field, t: float, ws: SpectralWorkspace) -> Field:
    """Samples of the trig interpolant of u at the scaled points t * x."""
    return resample_affine(u, t, np.zeros(u.grid.dim), ws)


def dilate(u: Field, t: float, ws: SpectralWorkspace) -> Field:
    """Mass-preserving dilation u^t(x) = t^(N/2) u(t x).

    A scales by t^2 and the nonlocal term by t^(N p - (N + alpha)).
    Warns when the result leaks mass into the boundary shell.
    """
    out = resample_scaled(u, t, ws)
    out = Field(u.grid, t ** (u.grid.dim / 2.0) * out.values)
    if boundary_mass(out) > BOUNDARY_MASS_WARN:
        warnings.warn(
            f"dilation by t={t:g} pushed boundary mass to {boundary_mass(out):.2e}",
            stacklevel=2,
        )
    return out


def normalize_mass(u: Field, c: float) -> Field:
    """Rescale amplitude so the L2 norm is exactly c."""
    nrm = lp_norm(u, 2)
    if nrm == 0.0:
        raise ValueError("cannot normalize the zero field")
    if not (c > 0):
        raise ValueError(f"target mass must be positive, got {c}")
    return Field(u.grid, (c / nrm) * u.values)


def wp_ratio(u: Field, params: ChoquardParams, ws: SpectralWorkspace) -> float:
    """Scale-invariant ratio A^a mass_sq^b / B with the window exponents.

    a = (N p - (N + alpha))/2, b = (N + alpha - (N - 2) p)/2.  At an
    extremal of the interpolation inequality the value is
    |Q_p|_2^(2p-2) / p.
    """
    n, al, p = params.dim, params.alpha, params.p
    if not (params.p_low < p < params.p_high):
        raise ValueError("wp_ratio needs p strictly between the window endpoints")
    br = energy(u, params, ws)
    if br.B <= 0.0:
        raise ValueError("wp_ratio needs a field with positive nonlocal energy")
    a_exp = (n * p - (n + al)) / 2.0
    b_exp = (n + al - (n - 2.0) * p) / 2.0
    return float(br.A**a_exp * br.mass_sq**b_exp / br.B)


def hls_ratio(u: Field, params: ChoquardParams, ws: SpectralWorkspace) -> float:
    """B / mass_sq^((N+alpha)/N) at the lower endpoint exponent."""
    if params.regime is not Regime.LOWER_ENDPOINT:
        raise ValueError("hls_ratio is defined at p = (N + alpha)/N only")
    br = energy(u, params, ws)
    if br.mass_sq == 0.0:
        raise ValueError("hls_ratio needs a nonzero field")
    return float(br.B / br.mass_sq ** ((params.dim + params.alpha) / params.dim))


def pohozaev_residual(u: Field, params: ChoquardParams, ws: SpectralWorkspace) -> float:
    """Relative defect of A = ((N p - (N + alpha))/(2p)) B."""
    br = energy(u, params, ws)
    if br.A == 0.0:
        raise ValueError("pohozaev_residual needs a field with kinetic energy")
    n, al, p = params.dim, params.alpha, params.p
    coef = (n * p - (n + al)) / (2.0 * p)
    return float(abs(br.A - coef * br.B) / br.A)


def virial_residual_critical(
    u: Field, params: ChoquardParams, ws: SpectralWorkspace
) -> float:
    """Worst relative defect of the three-way identity at p = p_critical:

    ((N+alpha+2)/N) A = ((N+alpha+2)/(alpha+2)) mass_sq = B.
    """
    if params.regime is not Regime.MASS_CRITICAL:
        raise ValueError("virial residual is defined at p = (N + alpha + 2)/N only")
    br = energy(u, params, ws)
    if br.B <= 0.0:
        raise ValueError("virial residual needs positive nonlocal energy")
    n, al = params.dim, params.alpha
    r1 = (n + al + 2.0) / n * br.A
    r2 = (n + al + 2.0) / (al + 2.0) * br.mass_sq
    return float(max(abs(r1 - br.B), abs(r2 - br.B)) / br.B)


def extremal_profile(grid, eta: float, center=None) -> Field:
    """Lower-endpoint extremal (eta / (eta^2 + |x - a|^2))^(N/2), unit amplitude."""
    if not (eta > 0):
        raise ValueError(f"eta must be positive, got {eta}")
    r = grid.radius(center)
    return Field(grid, (eta / (eta**2 + r**2)) ** (grid.dim / 2.0))
