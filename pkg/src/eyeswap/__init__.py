"""Iris texture swapping attacks and gaze-velocity liveness defenses on
synthetic eye-tracking data."""

from .imaging import GrayImage, PixelPoint, bilinear_sample, load_pgm, save_pgm
from .segmentation import (
    BinaryMask,
    Circle,
    IrisGeometry,
    SegmentationParams,
    detect_geometry,
    detect_limbus,
    detect_pupil,
    dice_score,
    geometry_to_mask,
)
from .rubbersheet import PolarTexture, load_texture, match_intensity, save_texture, swap_iris, unwrap
from .iriscode import GaborParams, IrisTemplate, authenticate, encode, hamming_distance
from .gaze import (
    CalibrationModel,
    GazeSample,
    GazeTrace,
    Target,
    TargetSchedule,
    accuracy,
    estimate_gaze,
    fit_calibration,
    precision,
)
from .synth import (
    Scanpath,
    SubjectProfile,
    SynthParams,
    default_schedule,
    generate_scanpath,
    generate_subject_texture,
    make_profile,
    render_frame,
    simulate_frame_drops,
)
from .liveness import (
    REAL,
    SPOOF,
    SplitPlan,
    VelocitySignal,
    VelocityWindow,
    attack_success_rate,
    compute_velocity,
    make_windows,
    predict_user,
    preprocess,
)
from .lstm import LstmModel, TrainParams, forward, gradient_check, init_model
from .config import ExperimentConfig, config_hash, load_config
from .harness import (
    AttackReport,
    AttackRun,
    run_experiment,
    run_offline_attack,
    run_online_attack,
    split_subjects,
)

__version__ = "0.1.0"
