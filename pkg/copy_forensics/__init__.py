"""Answer-copying detection for multiple-choice exams."""

__version__ = "1.0.0"

from .errors import (  # noqa: E402
    CopyForensicsError,
    DomainError,
    IneligibleStudentError,
    InputFormatError,
    InsufficientDataError,
    ModelFileError,
)
from .state_model import MISSING, ExamDesign, ResponseMatrix, StudentRecord  # noqa: E402
from .variants import VARIANTS, IndexVariant, get_variant, parse_variants  # noqa: E402
from .models import fit_nominal_mml, fit_wesolowsky  # noqa: E402
from .indices import detect_pair, detect_room  # noqa: E402
from .mtp import bh_reject, massive_summary, room_report  # noqa: E402

__all__ = [
    "__version__",
    "MISSING",
    "VARIANTS",
    "CopyForensicsError",
    "DomainError",
    "ExamDesign",
    "IndexVariant",
    "IneligibleStudentError",
    "InputFormatError",
    "InsufficientDataError",
    "ModelFileError",
    "ResponseMatrix",
    "StudentRecord",
    "bh_reject",
    "detect_pair",
    "detect_room",
    "fit_nominal_mml",
    "fit_wesolowsky",
    "get_variant",
    "massive_summary",
    "parse_variants",
    "room_report",
]
