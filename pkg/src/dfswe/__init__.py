"""dfswe: hide images inside freshly generated images.

Two invertible flow models plus a reversible latent-circulation procedure
turn one or more secret images into a natural-looking carrier image; the
same pipeline run backwards recovers the secrets.
"""

from .config import GlowConfig, latent_shapes
from .circulation import (
    CirculationPlan,
    DctParams,
    HideReceipt,
    circulate_extract,
    circulate_hide,
    dct_apply,
    dct_fit,
    dct_invert,
    pks_initialize,
    plan_allocation,
)
from .errors import (
    ConfigError,
    DataError,
    DfsweError,
    ModelError,
    PlanError,
    ReceiptError,
    SegmentError,
    TrainingDiverged,
)
from .flow import GlowModel, identity_model, random_model, sample_latents
from .images import ImageTensor, dequantize, quantize
from .pipeline import FULL_GRID, HideOptions, Tactics, ablate, extract, hide
from .storage import (
    load_checkpoint,
    load_receipt,
    parse_receipt,
    read_image,
    save_checkpoint,
    save_receipt,
    serialize_receipt,
    write_image,
)
from .training import TrainConfig, ingest_dataset, train

__version__ = "0.1.0"

__all__ = [
    "GlowConfig", "latent_shapes",
    "CirculationPlan", "DctParams", "HideReceipt",
    "circulate_extract", "circulate_hide",
    "dct_apply", "dct_fit", "dct_invert",
    "pks_initialize", "plan_allocation",
    "GlowModel", "identity_model", "random_model", "sample_latents",
    "ImageTensor", "dequantize", "quantize",
    "FULL_GRID", "HideOptions", "Tactics", "ablate", "extract", "hide",
    "load_checkpoint", "save_checkpoint",
    "load_receipt", "save_receipt", "parse_receipt", "serialize_receipt",
    "read_image", "write_image",
    "TrainConfig", "ingest_dataset", "train",
    "DfsweError", "ConfigError", "DataError", "ModelError", "PlanError",
    "ReceiptError", "SegmentError", "TrainingDiverged",
]
