"""Frequency sweeps: storage/loss shear modulus curves of a periodic cell.

At each pulsation the cell is loaded with a mean tensorial shear strain
eps_xy = gamma0/2 (engineering amplitude gamma0) and the complex effective
shear modulus is reported as

    G*_xy(w) = <sigma_xy> / gamma0 = G'(w) + j G''(w)

so a homogeneous cell returns exactly its phase's SLS shear modulus.
Frequencies within a sweep are independent jobs; curves are identical for
any worker count.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fft_homogenizer import SolverSettings, SolveResult, solve_cell
from .viscoelastic import (
    ComplexModuli,
    PhaseMaterial,
    SymTensor2,
    complex_moduli,
    sls_modulus,
)

DEFAULT_OMEGA_MIN = 1e-3
DEFAULT_OMEGA_MAX = 1e3
DEFAULT_POINTS = 30

CURVE_HEADER = "omega_rad_s,g_storage_gpa,g_loss_gpa"


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing pulsations (rad/s), log-spaced by construction."""

    omegas: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=np.float64)
        if om.size < 2:
            raise ValueError("frequency grid needs at least 2 points")
        if np.any(om <= 0) or np.any(np.diff(om) <= 0):
            raise ValueError("pulsations must be positive and strictly increasing")
        object.__setattr__(self, "omegas", om)

    @staticmethod
    def log_spaced(
        omega_min: float = DEFAULT_OMEGA_MIN,
        omega_max: float = DEFAULT_OMEGA_MAX,
        points: int = DEFAULT_POINTS,
    ) -> "FrequencyGrid":
        if omega_min <= 0 or omega_max <= omega_min:
            raise ValueError("need 0 < omega_min < omega_max")
        return FrequencyGrid(np.logspace(np.log10(omega_min), np.log10(omega_max), points))

    def __len__(self) -> int:
        return len(self.omegas)


@dataclass
class DmaCurve:
    """Storage/loss shear moduli (GPa) over a pulsation grid, with a
    per-point solver convergence flag and provenance metadata."""

    omegas: np.ndarray
    storage: np.ndarray
    loss: np.ndarray
    converged: np.ndarray
    meta: dict = field(default_factory=dict)

    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def grid_digest(grid: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(grid.shape[0]).encode())
    h.update(np.ascontiguousarray(grid, dtype=np.uint8).tobytes())
    return h.hexdigest()


def settings_digest(settings: SolverSettings, freq: FrequencyGrid) -> str:
    canon = json.dumps(
        {
            "tolerance": settings.tolerance,
            "max_iterations": settings.max_iterations,
            "omegas": [f"{w:.17g}" for w in freq.omegas],
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canon.encode()).hexdigest()


def _solve_shear_point(
    grid: np.ndarray,
    materials: tuple[PhaseMaterial, PhaseMaterial],
    omega: float,
    settings: SolverSettings,
    shear_amplitude: float,
) -> SolveResult:
    matrix, fiber = materials
    mean_strain = SymTensor2(xx=0.0, yy=0.0, xy=0.5 * shear_amplitude)
    return solve_cell(
        grid,
        complex_moduli(matrix, omega),
        complex_moduli(fiber, omega),
        mean_strain,
        settings,
    )


def _sweep_worker(args) -> tuple[complex, bool]:
    grid, materials, omega, settings, shear_amplitude = args
    result = _solve_shear_point(grid, materials, omega, settings, shear_amplitude)
    return result.mean_stress.xy / shear_amplitude, result.converged


def sweep(
    grid: np.ndarray,
    materials: tuple[PhaseMaterial, PhaseMaterial],
    freq: FrequencyGrid | None = None,
    settings: SolverSettings | None = None,
    threads: int = 1,
    shear_amplitude: float = 1.0,
) -> DmaCurve:
    """Run one cell solve per pulsation and assemble the DMA curve.

    Non-converged points are kept (last iterate) and flagged rather than
    failing the sweep, so dataset generation can retry whole samples.
    """
    freq = freq or FrequencyGrid.log_spaced()
    settings = settings or SolverSettings()
    if shear_amplitude <= 0:
        raise ValueError("shear amplitude must be positive")

    jobs = [(grid, materials, float(w), settings, shear_amplitude) for w in freq.omegas]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_sweep_worker, jobs))
    else:
        outcomes = [_sweep_worker(job) for job in jobs]

    g_star = np.array([g for g, _ in outcomes], dtype=np.complex128)
    converged = np.array([ok for _, ok in outcomes], dtype=bool)
    return DmaCurve(
        omegas=freq.omegas.copy(),
        storage=g_star.real.copy(),
        loss=g_star.imag.copy(),
        converged=converged,
        meta={
            "grid_digest": grid_digest(grid),
            "settings_digest": settings_digest(settings, freq),
        },
    )


def elastic_limits(
    grid: np.ndarray,
    materials: tuple[PhaseMaterial, PhaseMaterial],
    settings: SolverSettings | None = None,
) -> tuple[float, float]:
    """(relaxed, unrelaxed) effective shear moduli: two purely real solves
    with the per-phase (K_inf, G_inf) and (K0, G0) constants."""
    matrix, fiber = materials
    out = []
    for pick in (lambda p: p.m_inf, lambda p: p.m0):
        result = solve_cell(
            grid,
            ComplexModuli(k=complex(pick(matrix.bulk)), g=complex(pick(matrix.shear))),
            ComplexModuli(k=complex(pick(fiber.bulk)), g=complex(pick(fiber.shear))),
            SymTensor2(xx=0.0, yy=0.0, xy=0.5),
            settings,
        )
        out.append(float((result.mean_stress.xy).real))
    return out[0], out[1]


def bounds(
    vf: float,
    materials: tuple[PhaseMaterial, PhaseMaterial],
    omega: float,
) -> tuple[complex, complex]:
    """(Reuss, Voigt) mixing of the complex phase shear moduli at one
    pulsation: harmonic and arithmetic means weighted by fiber fraction."""
    if not 0.0 <= vf <= 1.0:
        raise ValueError(f"volume fraction must lie in [0, 1], got {vf}")
    matrix, fiber = materials
    g_m = sls_modulus(matrix.shear, omega)
    g_f = sls_modulus(fiber.shear, omega)
    voigt = (1.0 - vf) * g_m + vf * g_f
    reuss = 1.0 / ((1.0 - vf) / g_m + vf / g_f)
    return reuss, voigt


def save_curve(path, curve: DmaCurve) -> None:
    """CSV with 17-significant-digit decimals, one row per pulsation,
    lowest first (format: omega_rad_s,g_storage_gpa,g_loss_gpa)."""
    lines = [CURVE_HEADER]
    for w, s, l in zip(curve.omegas, curve.storage, curve.loss):
        lines.append(f"{w:.17g},{s:.17g},{l:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_curve(path) -> DmaCurve:
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip() != CURVE_HEADER:
        raise ValueError(f"{path}: bad curve CSV header")
    rows = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    if rows.ndim != 2 or rows.shape[1] != 3 or rows.shape[0] < 2:
        raise ValueError(f"{path}: malformed curve CSV")
    return DmaCurve(
        omegas=rows[:, 0],
        storage=rows[:, 1],
        loss=rows[:, 2],
        converged=np.ones(rows.shape[0], dtype=bool),
    )


def plot_curve_svg(curve: DmaCurve, out_path) -> None:
    """Static two-axis figure: storage (blue, left) and loss (red, right)
    against log pulsation.  Output bytes are deterministic."""
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "vdmalab"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogx(curve.omegas, curve.storage, color="tab:blue", marker="o", ms=3)
    ax.set_xlabel("pulsation $\\omega$ (rad/s)")
    ax.set_ylabel("storage $G'_{xy}$ (GPa)", color="tab:blue")
    ax.tick_params(axis="y", labelcolor="tab:blue")
    ax2 = ax.twinx()
    ax2.semilogx(curve.omegas, curve.loss, color="tab:red", marker="s", ms=3)
    ax2.set_ylabel("loss $G''_{xy}$ (GPa)", color="tab:red")
    ax2.tick_params(axis="y", labelcolor="tab:red")
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
