"""Spectral fixed-point solver for the periodic viscoelastic cell problem.

Implements the basic scheme (Moulinec & Suquet, CMAME 157:69-94, 1998)
extended to complex algebra: at one pulsation the two phases carry complex
moduli, fields are complex, and the iteration

    eps_{k+1} = eps_bar - Gamma0 * (sigma(eps_k) - C0 : eps_k)

runs with the periodic Green operator Gamma0 of an isotropic homogeneous
reference medium (lambda0, mu0), applied in Fourier space.  Convergence is
monitored through the equilibrium residual, the RMS of the Fourier-space
stress divergence ||xi . sigma_hat(xi)|| over the frequency lattice,
normalized by ||sigma_hat(0)||.

Conventions (fixed so golden files are portable):
  - tensor fields are numpy arrays of shape (3, R, R), components indexed
    by XX, YY, XY (tensorial shear), row-major, axis 0 of the grid is y;
  - FFT: forward unnormalized, inverse scaled by 1/R^2 (numpy default);
  - frequency lattice xi = 2*pi*(integer cycles per cell side), fftfreq
    layout; the Green operator is homogeneous of degree 0 in xi, so the
    +/-R/2 sign ambiguity of even grids only affects entries odd in the
    Nyquist component.  On Nyquist rows the standard even-grid treatment
    replaces the operator by the isotropic reference compliance (C0)^-1,
    which is symmetric under every square symmetry and makes the converged
    stress vanish at those unresolvable frequencies;
  - the zero-frequency strain is pinned to the prescribed mean strain at
    every iteration (strain-controlled loading).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import fft as sfft

from .viscoelastic import ComplexModuli, SymTensor2

XX, YY, XY = 0, 1, 2

FIELDS_MAGIC = b"VDMF"
FIELDS_FORMAT_VERSION = 1
_FIELD_TAGS = (b"EXX ", b"EYY ", b"EXY ", b"SXX ", b"SYY ", b"SXY ")


@dataclass(frozen=True)
class ReferenceMedium:
    """Complex Lame constants of the homogeneous comparison medium."""

    lambda0: complex
    mu0: complex

    def __post_init__(self):
        if self.mu0.real <= 0:
            raise ValueError(f"reference mu0 must have positive real part, got {self.mu0}")
        if (self.lambda0 + 2.0 * self.mu0 / 3.0).real <= 0:
            raise ValueError("reference bulk modulus must have positive real part")


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-6
    max_iterations: int = 1000
    store_local_fields: bool = False

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class SolveResult:
    mean_stress: SymTensor2
    iterations: int
    final_residual: float
    converged: bool
    strain: np.ndarray | None = None   # (3, R, R) complex when stored
    stress: np.ndarray | None = None


def choose_reference(matrix: ComplexModuli, fiber: ComplexModuli) -> ReferenceMedium:
    """Arithmetic mean of the complex phase moduli (standard convergent
    choice for the basic scheme at moderate contrast)."""
    k0 = 0.5 * (matrix.k + fiber.k)
    g0 = 0.5 * (matrix.g + fiber.g)
    return ReferenceMedium(lambda0=k0 - 2.0 * g0 / 3.0, mu0=g0)


class _GreenTables(NamedTuple):
    """Degree-2 monomials of the frequency unit vector n = xi/|xi| (zero at
    xi = 0), flat indices of the Nyquist rows, and the 2*pi-scaled frequency
    grids used by the residual."""

    m2xx: np.ndarray
    m2xy: np.ndarray
    m2yy: np.ndarray
    m2tr: np.ndarray
    nyq_idx: np.ndarray
    xi_x: np.ndarray
    xi_y: np.ndarray


@lru_cache(maxsize=8)
def _green_tables(resolution: int) -> _GreenTables:
    r = resolution
    f = np.fft.fftfreq(r) * r                # integer cycles, fftfreq layout
    fx = f[np.newaxis, :]                    # x varies along axis 1
    fy = f[:, np.newaxis]
    norm = np.hypot(fx, fy)
    norm[0, 0] = 1.0
    nx = fx / norm
    ny = fy / norm
    nx[0, 0] = ny[0, 0] = 0.0

    nyquist = np.zeros((r, r), dtype=bool)
    if r % 2 == 0:
        nyquist[r // 2, :] = True
        nyquist[:, r // 2] = True

    two_pi = 2.0 * np.pi
    return _GreenTables(
        m2xx=nx * nx,
        m2xy=nx * ny,
        m2yy=ny * ny,
        m2tr=nx * nx + ny * ny,
        nyq_idx=np.flatnonzero(nyquist),
        xi_x=two_pi * np.broadcast_to(fx, (r, r)).copy(),
        xi_y=two_pi * np.broadcast_to(fy, (r, r)).copy(),
    )


def _apply_green(
    tau_hat: np.ndarray,
    lam0: complex,
    mu0: complex,
    t: _GreenTables,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Gamma0 : tau_hat on the whole lattice.

    For symmetric tau the classical operator contracts to

        (Gamma0 tau)_kh = (n_k b_h + n_h b_k) / (2 mu0) - c2 n_k n_h (n.tau.n)

    with b = tau.n and c2 = (lambda0 + mu0) / (mu0 (lambda0 + 2 mu0)); the
    quartic part reduces to m2_kh * (n.tau.n).  On Nyquist rows the operator
    is the isotropic reference compliance instead, which pins the converged
    stress coefficients there to zero (classical even-grid closure for the
    frequencies whose sign is ambiguous) and is exactly symmetric under
    every element of the square's symmetry group.
    """
    c2 = (lam0 + mu0) / (mu0 * (lam0 + 2.0 * mu0))
    inv_mu0 = 1.0 / mu0
    txx, tyy, txy = tau_hat[XX], tau_hat[YY], tau_hat[XY]
    if out is None:
        out = np.empty_like(tau_hat)

    tsum = txx + tyy
    mxy_txy = t.m2xy * txy
    s = t.m2xx * txx                  # s = c2 * (n . tau . n)
    s += t.m2yy * tyy
    s += 2.0 * mxy_txy
    s *= c2

    np.multiply(t.m2xx, txx, out=out[XX])
    out[XX] += mxy_txy
    out[XX] *= inv_mu0
    out[XX] -= t.m2xx * s
    np.multiply(t.m2yy, tyy, out=out[YY])
    out[YY] += mxy_txy
    out[YY] *= inv_mu0
    out[YY] -= t.m2yy * s
    np.multiply(t.m2tr, txy, out=out[XY])
    out[XY] += t.m2xy * tsum
    out[XY] *= 0.5 * inv_mu0
    out[XY] -= t.m2xy * s

    idx = t.nyq_idx
    if idx.size:
        # eps = (C0)^-1 sigma with tr(eps) = tr(sigma) / (2 (lam0 + mu0))
        fxx, fyy, fxy = txx.ravel()[idx], tyy.ravel()[idx], txy.ravel()[idx]
        tr_part = (lam0 / (4.0 * mu0 * (lam0 + mu0))) * (fxx + fyy)
        half_inv_mu0 = 0.5 * inv_mu0
        out[XX].ravel()[idx] = fxx * half_inv_mu0 - tr_part
        out[YY].ravel()[idx] = fyy * half_inv_mu0 - tr_part
        out[XY].ravel()[idx] = fxy * half_inv_mu0
    return out


def _residual_from_hat(sig_hat: np.ndarray, t: _GreenTables) -> float:
    """RMS of ||xi . sigma_hat|| over the lattice / ||sigma_hat(0)||_F."""
    div_x = t.xi_x * sig_hat[XX]
    div_x += t.xi_y * sig_hat[XY]
    div_y = t.xi_x * sig_hat[XY]
    div_y += t.xi_y * sig_hat[YY]
    num_sq = float(np.vdot(div_x, div_x).real + np.vdot(div_y, div_y).real)
    n_pixels = sig_hat.shape[-1] * sig_hat.shape[-2]
    num = np.sqrt(num_sq / n_pixels)
    s0 = sig_hat[:, 0, 0]
    den = float(np.sqrt(abs(s0[XX]) ** 2 + abs(s0[YY]) ** 2 + 2.0 * abs(s0[XY]) ** 2))
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return float(num / den)


def equilibrium_residual(stress_field: np.ndarray) -> float:
    """Normalized Fourier-space divergence of a (3, R, R) stress field.

    Zero for spatially uniform fields; invariant under adding a constant
    tensor (which only shifts the xi = 0 coefficient).
    """
    stress_field = np.asarray(stress_field)
    r = stress_field.shape[-1]
    return _residual_from_hat(sfft.fft2(stress_field, axes=(-2, -1)), _green_tables(r))


def solve_cell(
    grid: np.ndarray,
    matrix: ComplexModuli,
    fiber: ComplexModuli,
    mean_strain: SymTensor2,
    settings: SolverSettings | None = None,
    reference: ReferenceMedium | None = None,
) -> SolveResult:
    """Solve one periodic cell problem under a prescribed mean strain.

    Fixed-point iteration entirely in complex arithmetic; the polarization
    tau = sigma - C0 : eps is formed in real space with the moduli deltas,
    transformed, corrected by the Green operator, and the zero-frequency
    strain is pinned to mean_strain.  The stress transform needed by the
    residual is assembled as tau_hat + C0 : eps_hat (linearity of the DFT).

    Never raises on non-convergence: the last iterate is returned with
    converged=False and the achieved residual.
    """
    settings = settings or SolverSettings()
    grid = np.asarray(grid)
    r = grid.shape[0]
    if grid.ndim != 2 or grid.shape[1] != r:
        raise ValueError(f"grid must be square, got {grid.shape}")

    ref = reference if reference is not None else choose_reference(matrix, fiber)
    lam0, mu0 = ref.lambda0, ref.mu0

    fiber_mask = grid != 0
    dlam = np.where(fiber_mask, (fiber.k - 2.0 * fiber.g / 3.0) - lam0,
                    (matrix.k - 2.0 * matrix.g / 3.0) - lam0)
    two_dmu = np.where(fiber_mask, 2.0 * (fiber.g - mu0), 2.0 * (matrix.g - mu0))

    tables = _green_tables(r)
    ebar = np.array([mean_strain.xx, mean_strain.yy, mean_strain.xy], dtype=np.complex128)
    if not np.all(np.isfinite(ebar)):
        raise ValueError(f"mean strain must be finite, got {mean_strain}")

    eps = np.empty((3, r, r), dtype=np.complex128)
    eps[:] = ebar[:, np.newaxis, np.newaxis]
    eps_hat = np.zeros_like(eps)
    eps_hat[:, 0, 0] = ebar * (r * r)

    tau = np.empty_like(eps)
    sig_hat = np.empty_like(eps)
    green_buf = np.empty_like(eps)
    two_mu0 = 2.0 * mu0
    converged = False
    residual = np.inf
    iterations = 0
    for iterations in range(1, settings.max_iterations + 1):
        shared = dlam * (eps[XX] + eps[YY])
        np.multiply(two_dmu, eps[XX], out=tau[XX])
        tau[XX] += shared
        np.multiply(two_dmu, eps[YY], out=tau[YY])
        tau[YY] += shared
        np.multiply(two_dmu, eps[XY], out=tau[XY])
        tau_hat = sfft.fft2(tau, axes=(-2, -1))

        tr_hat = eps_hat[XX] + eps_hat[YY]
        tr_hat *= lam0
        np.multiply(two_mu0, eps_hat[XX], out=sig_hat[XX])
        sig_hat[XX] += tr_hat
        sig_hat[XX] += tau_hat[XX]
        np.multiply(two_mu0, eps_hat[YY], out=sig_hat[YY])
        sig_hat[YY] += tr_hat
        sig_hat[YY] += tau_hat[YY]
        np.multiply(two_mu0, eps_hat[XY], out=sig_hat[XY])
        sig_hat[XY] += tau_hat[XY]

        residual = _residual_from_hat(sig_hat, tables)
        if residual <= settings.tolerance:
            converged = True
            break
        if iterations == settings.max_iterations:
            break

        eps_hat = _apply_green(tau_hat, lam0, mu0, tables, out=green_buf)
        np.negative(eps_hat, out=eps_hat)
        eps_hat[:, 0, 0] = ebar * (r * r)
        eps = sfft.ifft2(eps_hat, axes=(-2, -1))

    n_pixels = r * r
    mean_stress = SymTensor2(
        xx=complex(sig_hat[XX, 0, 0]) / n_pixels,
        yy=complex(sig_hat[YY, 0, 0]) / n_pixels,
        xy=complex(sig_hat[XY, 0, 0]) / n_pixels,
    )
    result = SolveResult(
        mean_stress=mean_stress,
        iterations=iterations,
        final_residual=residual,
        converged=converged,
    )
    if settings.store_local_fields:
        sig = np.empty_like(eps)
        tr = eps[XX] + eps[YY]
        sig[XX] = tau[XX] + lam0 * tr + 2.0 * mu0 * eps[XX]
        sig[YY] = tau[YY] + lam0 * tr + 2.0 * mu0 * eps[YY]
        sig[XY] = tau[XY] + 2.0 * mu0 * eps[XY]
        result.strain = eps
        result.stress = sig
    return result


def save_fields(path, strain: np.ndarray, stress: np.ndarray) -> None:
    """Dump converged local fields: magic 'VDMF', version u16 LE, resolution
    u16 LE, field count u16 LE, then per field a 4-byte ASCII tag and
    resolution^2 complex64 values row-major (re, im pairs)."""
    r = strain.shape[-1]
    fields = list(strain) + list(stress)
    with open(path, "wb") as fh:
        fh.write(FIELDS_MAGIC)
        fh.write(struct.pack("<HHH", FIELDS_FORMAT_VERSION, r, len(fields)))
        for tag, comp in zip(_FIELD_TAGS, fields):
            fh.write(tag)
            fh.write(np.ascontiguousarray(comp, dtype=np.complex64).tobytes())


def load_fields(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != FIELDS_MAGIC:
        raise ValueError(f"{path}: not a fields file (bad magic)")
    version, r, count = struct.unpack("<HHH", data[4:10])
    if version != FIELDS_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported fields format version {version}")
    out: dict[str, np.ndarray] = {}
    offset = 10
    block = r * r * 8  # complex64
    for _ in range(count):
        tag = data[offset:offset + 4].decode().strip()
        offset += 4
        out[tag] = np.frombuffer(data[offset:offset + block], dtype=np.complex64).reshape(r, r).copy()
        offset += block
    return out
