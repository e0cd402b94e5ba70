"""Standard Linear Solid (SLS) phase models and the local constitutive law.

Every phase is isotropic viscoelastic with bulk (K) and shear (G) moduli
following a one-branch SLS law in the pulsation domain:

    M(jw) = (M_inf + jw*tau*M0) / (1 + jw*tau)

where M0 is the unrelaxed (glassy) modulus, M_inf the relaxed (rubbery)
modulus and tau the relaxation time.  M(0) = M_inf, M(w -> inf) = M0, and
the loss part peaks at w*tau = 1 with value (M0 - M_inf)/2.

Stress follows from strain through the complex linear relation

    sigma = (K - 2G/3) tr(eps) I + 2 G eps

with tensorial (not engineering) shear components.  The 2D reduction is
plane strain (eps_zz = 0), so tr(eps) = eps_xx + eps_yy; sigma_zz exists
but is recoverable analytically and is not stored.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass
from pathlib import Path


class DomainError(ValueError):
    """Raised when material parameters fall outside their physical domain."""


@dataclass(frozen=True)
class SlsParams:
    """One-branch SLS parameters: unrelaxed m0, relaxed m_inf (GPa), tau (s)."""

    m0: float
    m_inf: float
    tau: float

    def __post_init__(self):
        if not (self.m0 > 0 and self.m_inf > 0 and self.tau > 0):
            raise DomainError(f"SLS parameters must be positive, got {self}")


@dataclass(frozen=True)
class PhaseMaterial:
    """Bulk and shear SLS parameter sets for one phase."""

    name: str
    bulk: SlsParams
    shear: SlsParams


@dataclass(frozen=True)
class ComplexModuli:
    """Complex bulk and shear moduli (GPa) of one phase at a fixed pulsation."""

    k: complex
    g: complex

    def __post_init__(self):
        if not (self.k.real > 0 and self.g.real > 0):
            raise DomainError(f"moduli need positive real parts, got {self}")


@dataclass(frozen=True)
class SymTensor2:
    """Symmetric 2nd-order tensor, plane-strain components (xx, yy, xy).

    Components are complex scalars (or broadcastable numpy arrays when used
    as a per-pixel field).  Shear is tensorial: the engineering amplitude
    gamma equals 2*xy.
    """

    xx: complex
    yy: complex
    xy: complex

    def trace(self):
        return self.xx + self.yy


def sls_modulus(p: SlsParams, omega: float) -> complex:
    """Complex SLS modulus (M_inf + jw*tau*M0) / (1 + jw*tau) at pulsation omega."""
    if omega < 0:
        raise DomainError(f"pulsation must be non-negative, got {omega}")
    jwt = 1j * omega * p.tau
    return (p.m_inf + jwt * p.m0) / (1.0 + jwt)


def complex_moduli(material: PhaseMaterial, omega: float) -> ComplexModuli:
    """Evaluate both SLS laws of a phase at one pulsation."""
    return ComplexModuli(
        k=sls_modulus(material.bulk, omega),
        g=sls_modulus(material.shear, omega),
    )


def elastic_to_bulk_shear(e: float, nu: float) -> tuple[float, float]:
    """(K, G) from Young's modulus and Poisson ratio: K = E/3(1-2nu), G = E/2(1+nu)."""
    if nu >= 0.5 or nu <= -1.0:
        raise DomainError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    if e <= 0:
        raise DomainError(f"Young's modulus must be positive, got {e}")
    return e / (3.0 * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu))


def bulk_shear_to_elastic(k: float, g: float) -> tuple[float, float]:
    """Inverse conversion: E = 9KG/(3K+G), nu = (3K-2G)/(2(3K+G))."""
    return 9.0 * k * g / (3.0 * k + g), (3.0 * k - 2.0 * g) / (2.0 * (3.0 * k + g))


def apply_constitutive(m: ComplexModuli, strain: SymTensor2) -> SymTensor2:
    """Stress from strain: sigma = (K - 2G/3) tr(eps) I + 2G eps (plane strain)."""
    lam = m.k - 2.0 * m.g / 3.0
    tr = strain.trace()
    return SymTensor2(
        xx=lam * tr + 2.0 * m.g * strain.xx,
        yy=lam * tr + 2.0 * m.g * strain.yy,
        xy=2.0 * m.g * strain.xy,
    )


# Built-in preset: typical polypropylene matrix with glass fibers.  The fiber
# K/G values derive from E = 73 GPa, nu = 0.2 with a 10:1 unrelaxed/relaxed
# ratio and tau = 10 s; the matrix row is stored at GPa precision.
_PP_GLASS = (
    PhaseMaterial(
        name="matrix",
        bulk=SlsParams(m0=8.6, m_inf=7.33, tau=1.0),
        shear=SlsParams(m0=0.55, m_inf=0.47, tau=1.0),
    ),
    PhaseMaterial(
        name="fiber",
        bulk=SlsParams(m0=40.5556, m_inf=4.05556, tau=10.0),
        shear=SlsParams(m0=30.4167, m_inf=3.04167, tau=10.0),
    ),
)

PRESETS = {"pp-glass": _PP_GLASS}
DEFAULT_PRESET = "pp-glass"


def default_materials() -> tuple[PhaseMaterial, PhaseMaterial]:
    """(matrix, fiber) built-in preset constants."""
    return _PP_GLASS


def materials_to_dict(pair: tuple[PhaseMaterial, PhaseMaterial]) -> dict:
    matrix, fiber = pair
    def one(m: PhaseMaterial) -> dict:
        return {
            "name": m.name,
            "bulk": {"m0": m.bulk.m0, "m_inf": m.bulk.m_inf, "tau": m.bulk.tau},
            "shear": {"m0": m.shear.m0, "m_inf": m.shear.m_inf, "tau": m.shear.tau},
        }
    return {"matrix": one(matrix), "fiber": one(fiber)}


def materials_from_dict(d: dict) -> tuple[PhaseMaterial, PhaseMaterial]:
    def one(key: str) -> PhaseMaterial:
        entry = d[key]
        return PhaseMaterial(
            name=str(entry.get("name", key)),
            bulk=SlsParams(**{k: float(v) for k, v in entry["bulk"].items()}),
            shear=SlsParams(**{k: float(v) for k, v in entry["shear"].items()}),
        )
    return one("matrix"), one("fiber")


def save_materials(path, pair: tuple[PhaseMaterial, PhaseMaterial]) -> None:
    """Write a materials definition as JSON (schema: materials_to_dict)."""
    Path(path).write_text(json.dumps(materials_to_dict(pair), indent=2, sort_keys=True) + "\n")


def load_materials(source: str) -> tuple[PhaseMaterial, PhaseMaterial]:
    """Resolve a preset name or a JSON materials file path."""
    if source in PRESETS:
        return PRESETS[source]
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"unknown materials preset or file: {source!r}")
    return materials_from_dict(json.loads(path.read_text()))


def materials_digest(pair: tuple[PhaseMaterial, PhaseMaterial]) -> str:
    """Stable content digest of a materials definition (canonical JSON)."""
    canon = json.dumps(materials_to_dict(pair), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
