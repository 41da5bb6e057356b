"""Micro-ultrasound / histopathology fusion toolkit."""

__version__ = "0.1.0"

from .imgio import (  # noqa: F401
    FormatError,
    FrameStack,
    Image2D,
    LabelMap2D,
    LandmarkFile,
    LandmarkPoint,
    ValidationError,
    Volume3D,
)
from .reconstruct import (  # noqa: F401
    FanCoordinate,
    ProbeGeometry,
    VolumeSpec,
    reconstruct_volume,
    sample_fan_frames,
    voxel_to_fan,
)
from .transforms import (  # noqa: F401
    AffineTransform2D,
    ComposedTransform2D,
    FFDTransform2D,
    resample,
    warp_labels,
)
from .losses import mattes_mi, ssd_loss  # noqa: F401
from .register import RegistrationConfig, register_affine, register_ffd  # noqa: F401
from .metrics import aggregate_case, dice, hausdorff, landmark_error, urethra_deviation  # noqa: F401
from .stitch import Fragment, compose_fragments, fit_rigid_landmarks, orient_fragment  # noqa: F401
from .pipeline import Correspondence, PipelineConfig, propagate_correspondence, run_case  # noqa: F401
from .phantom import PhantomSpec, generate_phantom  # noqa: F401
