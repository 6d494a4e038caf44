"""Export safetensors checkpoints into .rtz raw-tensor containers."""

from .exporter import (
    ROLES,
    ExportManifest,
    VerificationError,
    export,
    infer_role,
    load_role_map,
    verify,
)
from .formats import FormatError, read_rtz, read_safetensors, write_rtz

__version__ = "0.1.0"
