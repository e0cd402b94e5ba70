"""Virtual DMA laboratory for periodic fiber-reinforced composites.

Generates two-phase RVE rasters, solves the periodic viscoelastic cell
problem with an FFT fixed-point scheme across a pulsation sweep, and
assembles reproducible storage/loss shear-modulus datasets with the
metrics used to evaluate surrogate models of them.
"""

from .viscoelastic import (
    ComplexModuli,
    DomainError,
    PhaseMaterial,
    SlsParams,
    SymTensor2,
    apply_constitutive,
    complex_moduli,
    default_materials,
    elastic_to_bulk_shear,
    load_materials,
    sls_modulus,
)
from .microstructure import (
    D4Element,
    FiberSpec,
    GenerationFailed,
    RveConfig,
    generate_rve,
    load_grid,
    measure_vf,
    rasterize,
    save_grid,
    transform_d4,
    translate_periodic,
)
from .fft_homogenizer import (
    ReferenceMedium,
    SolveResult,
    SolverSettings,
    choose_reference,
    equilibrium_residual,
    solve_cell,
)
from .dma import DmaCurve, FrequencyGrid, bounds, elastic_limits, load_curve, save_curve, sweep
from .dataset import (
    AugmentationSpec,
    Manifest,
    PartialDataset,
    SampleRecord,
    augment,
    generate_dataset,
    load_manifest,
    save_manifest,
    split,
    verify_dataset,
)
from .metrics import (
    DegenerateBatch,
    DegeneratePoint,
    mae,
    mape_per_sample,
    mape_sum_over_batch,
    wmape,
)

__version__ = "0.1.0"
