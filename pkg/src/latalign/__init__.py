"""Monotonic latent alignment objectives as operator dynamic programs."""

__version__ = "0.1.0"

from .alignment import (  # noqa: E402
    Alignment,
    AlignmentPath,
    LogProbMatrix,
    OperatorKind,
    OperatorSet,
    Step,
    TargetSeq,
    Vocab,
    path_log_likelihood,
    path_to_alignment,
    validate_path,
)
from .dp import (  # noqa: E402
    Aggregation,
    DpConfig,
    DpResult,
    NoValidPathError,
    axe_grad,
    cross_entropy,
    ctc_grad,
    latent_loss,
    value_and_grad,
)
from .instances import Instance, InstanceError  # noqa: E402
from .oracle import SizeGuardError, count_paths, enumerate_paths, oracle_loss  # noqa: E402

__all__ = [
    "Aggregation", "Alignment", "AlignmentPath", "DpConfig", "DpResult", "Instance",
    "InstanceError", "LogProbMatrix", "NoValidPathError", "OperatorKind", "OperatorSet",
    "SizeGuardError", "Step", "TargetSeq", "Vocab", "axe_grad", "count_paths", "cross_entropy",
    "ctc_grad", "enumerate_paths", "latent_loss", "oracle_loss", "path_log_likelihood",
    "path_to_alignment", "validate_path", "value_and_grad",
]
