"""End-to-end dataset generation, splitting, augmentation and verification.

A dataset is one directory: manifest.json plus grids/ and curves/ holding
the binary rasters and curve CSVs.  Generation is a pure function of its
arguments at the byte level: every (volume fraction, index, retry) slot
derives its own RNG stream from the global seed, workers only write
slot-owned files, and the manifest is assembled in a deterministic order
after all slots finish, so worker count never changes the output.

Translated (augmented) copies share their parent's curve file, which the
solver's exact translation invariance justifies; `verify` can recompute a
deterministic sample fraction to confirm, alongside digest, convergence,
volume-fraction and physical-sanity checks.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dma
from .fft_homogenizer import SolverSettings
from .microstructure import (
    RveConfig,
    generate_rve,
    load_grid,
    measure_vf,
    rasterize,
    save_grid,
    translate_periodic,
)
from .viscoelastic import (
    PhaseMaterial,
    default_materials,
    materials_digest,
    materials_from_dict,
    materials_to_dict,
)

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT_VERSION = 1
VF_RANGE = (0.05, 0.75)

# spawn_key tags keeping slot, augmentation and verification streams disjoint
_TAG_AUGMENT = 0xA6
_TAG_VERIFY = 0xE1


class PartialDataset(RuntimeError):
    """Some (vf, index) slots never produced a fully converged sample."""

    def __init__(self, failures: list[tuple[float, int]]):
        self.failures = failures
        super().__init__(f"{len(failures)} slot(s) failed after retries: {failures[:10]}")


@dataclass(frozen=True)
class AugmentationSpec:
    """Periodic-translation augmentation: half horizontal, half vertical."""

    translations_per_sample: int = 4
    stream: int = 1

    def __post_init__(self):
        if self.translations_per_sample < 0:
            raise ValueError("translations_per_sample must be >= 0")


@dataclass
class SampleRecord:
    id: str
    seed: int
    vf_target: float
    vf_measured: float
    n_fibers: int
    grid_path: str
    grid_digest: str
    curve_path: str
    curve_digest: str
    split: str
    converged: bool
    parent_id: str | None = None
    shift: tuple[int, int] | None = None   # (dx, dy) for augmented copies

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "seed": self.seed,
            "vf_target": self.vf_target,
            "vf_measured": self.vf_measured,
            "n_fibers": self.n_fibers,
            "grid_path": self.grid_path,
            "grid_digest": self.grid_digest,
            "curve_path": self.curve_path,
            "curve_digest": self.curve_digest,
            "split": self.split,
            "converged": self.converged,
            "parent_id": self.parent_id,
        }
        d["shift"] = list(self.shift) if self.shift is not None else None
        return d

    @staticmethod
    def from_dict(d: dict) -> "SampleRecord":
        shift = tuple(d["shift"]) if d.get("shift") is not None else None
        return SampleRecord(
            id=d["id"], seed=int(d["seed"]), vf_target=d["vf_target"],
            vf_measured=d["vf_measured"], n_fibers=int(d["n_fibers"]),
            grid_path=d["grid_path"], grid_digest=d["grid_digest"],
            curve_path=d["curve_path"], curve_digest=d["curve_digest"],
            split=d["split"], converged=bool(d["converged"]),
            parent_id=d.get("parent_id"), shift=shift,
        )


@dataclass
class Manifest:
    format_version: int
    global_seed: int
    resolution: int
    vf_tolerance: float
    materials: dict                       # materials_to_dict payload
    materials_digest: str
    frequency: dict                       # omega_min / omega_max / points
    solver: dict                          # tolerance / max_iterations
    settings_digest: str
    generation: dict                      # count_per_vf / vf grid / retries
    split_fractions: tuple[float, float, float]
    records: list[SampleRecord] = field(default_factory=list)

    def frequency_grid(self) -> dma.FrequencyGrid:
        return dma.FrequencyGrid.log_spaced(
            self.frequency["omega_min"], self.frequency["omega_max"],
            self.frequency["points"],
        )

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(
            tolerance=self.solver["tolerance"],
            max_iterations=self.solver["max_iterations"],
        )

    def material_pair(self) -> tuple[PhaseMaterial, PhaseMaterial]:
        return materials_from_dict(self.materials)

    def base_records(self) -> list[SampleRecord]:
        return [r for r in self.records if r.parent_id is None]

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "global_seed": self.global_seed,
            "resolution": self.resolution,
            "vf_tolerance": self.vf_tolerance,
            "materials": self.materials,
            "materials_digest": self.materials_digest,
            "frequency": self.frequency,
            "solver": self.solver,
            "settings_digest": self.settings_digest,
            "generation": self.generation,
            "split_fractions": list(self.split_fractions),
            "records": [r.to_dict() for r in self.records],
        }

    @staticmethod
    def from_dict(d: dict) -> "Manifest":
        return Manifest(
            format_version=int(d["format_version"]),
            global_seed=int(d["global_seed"]),
            resolution=int(d["resolution"]),
            vf_tolerance=float(d["vf_tolerance"]),
            materials=d["materials"],
            materials_digest=d["materials_digest"],
            frequency=d["frequency"],
            solver=d["solver"],
            settings_digest=d["settings_digest"],
            generation=d["generation"],
            split_fractions=tuple(d["split_fractions"]),
            records=[SampleRecord.from_dict(r) for r in d["records"]],
        )


def save_manifest(root, manifest: Manifest) -> None:
    path = Path(root) / MANIFEST_NAME
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


def load_manifest(root) -> Manifest:
    path = Path(root) / MANIFEST_NAME
    return Manifest.from_dict(json.loads(path.read_text()))


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _vf_grid(vf_min: float, vf_max: float, vf_step: float) -> list[float]:
    lo, hi = VF_RANGE
    if not (lo <= vf_min <= vf_max <= hi):
        raise ValueError(f"vf range must lie within [{lo}, {hi}]")
    if vf_step <= 0:
        raise ValueError("vf_step must be positive")
    count = int(math.floor((vf_max - vf_min) / vf_step + 1e-9)) + 1
    return [round(vf_min + k * vf_step, 9) for k in range(count)]


def max_fibers(vf: float, resolution: int) -> int:
    """Largest fiber count whose derived radius spans >= 2 pixels; sub-pixel
    fibers rasterize to noise."""
    return max(1, min(150, int(vf * resolution**2 / (4.0 * np.pi))))


def _slot_id(vf: float, index: int) -> str:
    return f"vf{int(round(vf * 1000)):03d}-{index:04d}"


def _generate_slot(args) -> dict:
    (root, vf, index, global_seed, resolution, vf_tolerance, materials_dict,
     freq_params, solver_params, retries) = args
    root = Path(root)
    materials = materials_from_dict(materials_dict)
    freq = dma.FrequencyGrid.log_spaced(**freq_params)
    settings = SolverSettings(**solver_params)
    sample_id = _slot_id(vf, index)
    vf_milli = int(round(vf * 1000))

    for retry in range(retries + 1):
        ss = np.random.SeedSequence(global_seed, spawn_key=(vf_milli, index, retry))
        ss_draw, ss_sample = ss.spawn(2)
        draw_rng = np.random.Generator(np.random.Philox(ss_draw))
        n_fibers = int(draw_rng.integers(1, max_fibers(vf, resolution) + 1))
        seed = int(ss_sample.generate_state(1, np.uint64)[0])

        config = RveConfig(vf_target=vf, n_fibers=n_fibers, seed=seed,
                           resolution=resolution, vf_tolerance=vf_tolerance)
        spec = generate_rve(config)
        grid = rasterize(spec, resolution)
        curve = dma.sweep(grid, materials, freq, settings)
        if not curve.all_converged():
            continue

        grid_path = f"grids/{sample_id}.bin"
        curve_path = f"curves/{sample_id}.csv"
        save_grid(root / grid_path, grid)
        dma.save_curve(root / curve_path, curve)
        return {
            "ok": True,
            "record": SampleRecord(
                id=sample_id, seed=seed, vf_target=vf,
                vf_measured=measure_vf(grid), n_fibers=n_fibers,
                grid_path=grid_path, grid_digest=_file_digest(root / grid_path),
                curve_path=curve_path, curve_digest=_file_digest(root / curve_path),
                split="train", converged=True,
            ),
        }
    return {"ok": False, "vf": vf, "index": index}


def generate_dataset(
    out_dir,
    count_per_vf: int,
    vf_min: float,
    vf_max: float,
    vf_step: float,
    global_seed: int,
    settings: SolverSettings | None = None,
    *,
    resolution: int = 256,
    vf_tolerance: float = 0.01,
    materials: tuple[PhaseMaterial, PhaseMaterial] | None = None,
    freq: dma.FrequencyGrid | None = None,
    threads: int = 1,
    retries: int = 3,
) -> Manifest:
    """Generate count_per_vf samples for every volume fraction on the grid,
    persist grids and curves, and write the manifest.

    Slots whose sweeps keep hitting the iteration cap are regenerated with a
    fresh derived seed up to `retries` times; any slot still failing makes
    the call raise PartialDataset listing the (vf, index) pairs.
    """
    root = Path(out_dir)
    (root / "grids").mkdir(parents=True, exist_ok=True)
    (root / "curves").mkdir(parents=True, exist_ok=True)
    settings = settings or SolverSettings()
    materials = materials or default_materials()
    freq = freq or dma.FrequencyGrid.log_spaced()

    freq_params = {
        "omega_min": float(freq.omegas[0]),
        "omega_max": float(freq.omegas[-1]),
        "points": len(freq),
    }
    solver_params = {"tolerance": settings.tolerance,
                     "max_iterations": settings.max_iterations}
    materials_dict = materials_to_dict(materials)

    vfs = _vf_grid(vf_min, vf_max, vf_step)
    jobs = [
        (str(root), vf, index, global_seed, resolution, vf_tolerance,
         materials_dict, freq_params, solver_params, retries)
        for vf in vfs for index in range(count_per_vf)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_generate_slot, jobs))
    else:
        outcomes = [_generate_slot(job) for job in jobs]

    failures = [(o["vf"], o["index"]) for o in outcomes if not o["ok"]]
    if failures:
        raise PartialDataset(failures)

    manifest = Manifest(
        format_version=MANIFEST_FORMAT_VERSION,
        global_seed=global_seed,
        resolution=resolution,
        vf_tolerance=vf_tolerance,
        materials=materials_dict,
        materials_digest=materials_digest(materials),
        frequency=freq_params,
        solver=solver_params,
        settings_digest=dma.settings_digest(settings, freq),
        generation={"count_per_vf": count_per_vf, "vf_min": vf_min,
                    "vf_max": vf_max, "vf_step": vf_step, "retries": retries},
        split_fractions=(1.0, 0.0, 0.0),
        records=[o["record"] for o in outcomes],
    )
    manifest.records.sort(key=lambda rec: rec.id)
    save_manifest(root, manifest)
    return manifest


def split(
    manifest: Manifest,
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> Manifest:
    """Assign train/val/test membership to base samples; augmented copies
    inherit their parent's split so translated views never leak across.
    """
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be >= 0 and sum to 1, got {fractions}")
    base = manifest.base_records()
    n = len(base)
    counts = [int(math.floor(f * n)) for f in fractions]
    # hand leftovers to the largest fractional parts, earlier split wins ties
    leftovers = n - sum(counts)
    order = sorted(range(3), key=lambda i: (-(fractions[i] * n - counts[i]), i))
    for i in order[:leftovers]:
        counts[i] += 1

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    perm = rng.permutation(n)
    names = ["train"] * counts[0] + ["val"] * counts[1] + ["test"] * counts[2]
    assignment = {base[j].id: names[pos] for pos, j in enumerate(perm)}

    new_records = []
    for rec in manifest.records:
        key = rec.parent_id if rec.parent_id is not None else rec.id
        new_records.append(replace(rec, split=assignment[key]))
    return replace(manifest, split_fractions=tuple(fractions), records=new_records)


def augment(manifest: Manifest, spec: AugmentationSpec, root) -> Manifest:
    """Add periodic translations of every base sample.

    Shifts are drawn from a per-sample stream derived from the sample seed;
    the first half are horizontal (dx, 0), the rest vertical (0, dy).  The
    translated grid reuses the parent's curve file: the DMA response is
    translation-invariant, so nothing is recomputed.
    """
    root = Path(root)
    n_new = spec.translations_per_sample
    if n_new == 0:
        return manifest
    resolution = manifest.resolution
    n_horizontal = (n_new + 1) // 2

    new_records = list(manifest.records)
    for rec in manifest.base_records():
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(rec.seed, spawn_key=(_TAG_AUGMENT, spec.stream))))
        grid = load_grid(root / rec.grid_path)
        for k in range(n_new):
            offset = int(rng.integers(1, resolution))
            dx, dy = (offset, 0) if k < n_horizontal else (0, offset)
            child_id = f"{rec.id}-t{k}"
            grid_path = f"grids/{child_id}.bin"
            save_grid(root / grid_path, translate_periodic(grid, dx, dy))
            new_records.append(replace(
                rec,
                id=child_id,
                grid_path=grid_path,
                grid_digest=_file_digest(root / grid_path),
                parent_id=rec.id,
                shift=(dx, dy),
            ))
    new_records.sort(key=lambda r: r.id)
    return replace(manifest, records=new_records)


def _real_limit_bounds(vf: float, materials, relaxed: bool) -> tuple[float, float]:
    matrix, fiber = materials
    g_m = matrix.shear.m_inf if relaxed else matrix.shear.m0
    g_f = fiber.shear.m_inf if relaxed else fiber.shear.m0
    voigt = (1.0 - vf) * g_m + vf * g_f
    reuss = 1.0 / ((1.0 - vf) / g_m + vf / g_f)
    return reuss, voigt


def verify_dataset(
    root,
    recompute_fraction: float = 0.01,
    bounds_slack: float = 0.02,
    loss_floor: float = -1e-5,
) -> list[str]:
    """Integrity and sanity replay; returns a list of violation messages.

    Checks: unique ids, digests against disk, convergence flags, measured
    volume fractions, non-negative loss (within the numerical floor),
    relaxed <= unrelaxed storage endpoints, Reuss/Voigt band at both
    endpoints (with slack for the finite frequency-span tails), and a
    deterministic recompute of a record fraction (at least one) whose
    sweeps must reproduce the stored curves.
    """
    root = Path(root)
    problems: list[str] = []
    try:
        manifest = load_manifest(root)
    except Exception as exc:  # unreadable manifest is the only fatal case
        return [f"manifest unreadable: {exc}"]

    ids = [r.id for r in manifest.records]
    if len(set(ids)) != len(ids):
        problems.append("duplicate record ids")
    if abs(sum(manifest.split_fractions) - 1.0) > 1e-9:
        problems.append("split fractions do not sum to 1")

    materials = manifest.material_pair()
    for rec in manifest.records:
        for path, digest in ((rec.grid_path, rec.grid_digest),
                             (rec.curve_path, rec.curve_digest)):
            full = root / path
            if not full.exists():
                problems.append(f"{rec.id}: missing file {path}")
                continue
            if _file_digest(full) != digest:
                problems.append(f"{rec.id}: digest mismatch for {path}")
        if not rec.converged:
            problems.append(f"{rec.id}: retained but not converged")
        if abs(rec.vf_measured - rec.vf_target) > manifest.vf_tolerance:
            problems.append(f"{rec.id}: measured vf {rec.vf_measured:.4f} "
                            f"off target {rec.vf_target:.4f}")
        if rec.parent_id is not None and rec.split != _split_of(manifest, rec.parent_id):
            problems.append(f"{rec.id}: split differs from parent")

        curve_file = root / rec.curve_path
        if not curve_file.exists():
            continue
        curve = dma.load_curve(curve_file)
        if np.any(curve.loss < loss_floor):
            problems.append(f"{rec.id}: loss below {loss_floor} GPa")
        if curve.storage[-1] < curve.storage[0]:
            problems.append(f"{rec.id}: unrelaxed storage below relaxed storage")
        for endpoint, relaxed in ((0, True), (-1, False)):
            reuss, voigt = _real_limit_bounds(rec.vf_measured, materials, relaxed)
            value = curve.storage[endpoint]
            if not reuss * (1 - bounds_slack) <= value <= voigt * (1 + bounds_slack):
                problems.append(f"{rec.id}: storage endpoint {value:.4f} outside "
                                f"[{reuss:.4f}, {voigt:.4f}] band")

    if recompute_fraction > 0 and manifest.records:
        k = max(1, int(round(recompute_fraction * len(manifest.records))))
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(manifest.global_seed, spawn_key=(_TAG_VERIFY,))))
        picks = rng.choice(len(manifest.records), size=min(k, len(manifest.records)),
                           replace=False)
        freq = manifest.frequency_grid()
        settings = manifest.solver_settings()
        for j in sorted(int(p) for p in picks):
            rec = manifest.records[j]
            try:
                grid = load_grid(root / rec.grid_path)
                stored = dma.load_curve(root / rec.curve_path)
            except Exception as exc:
                problems.append(f"{rec.id}: recompute load failed: {exc}")
                continue
            fresh = dma.sweep(grid, materials, freq, settings)
            scale = np.maximum(np.hypot(stored.storage, stored.loss), 1e-12)
            err = np.hypot(fresh.storage - stored.storage, fresh.loss - stored.loss) / scale
            if np.max(err) > 1e-8:
                problems.append(f"{rec.id}: recomputed curve deviates "
                                f"(max rel {np.max(err):.2e})")
    return problems


def _split_of(manifest: Manifest, record_id: str) -> str:
    for rec in manifest.records:
        if rec.id == record_id:
            return rec.split
    return "?"
