"""Global video-text tracking on boxes and embeddings.

Detections of the current frame are associated with every tracklet held in
a sliding window of past frames. Appearance scores come from a small
attention associator (or a cosine fallback) and are fused by elementwise
max with a Gaussian-Wasserstein positional score before Hungarian
assignment.
"""
from .assign import AssignmentResult, solve
from .assoc import AssocMatrix, AssocModel, associate, decode_associations, encode_pool, frame_softmax, \
    load_checkpoint, save_checkpoint, tracklet_loss, train_toy
from .errors import (DegenerateGeometry, EmptyGroundTruth, EmptyPool, LabelError, OrderError, ShapeError,
                     SpecError, TextTrackError, TrainingDiverged, ValidationError)
from .geom import (Gaussian2, RotatedBox, box_to_gaussian, min_area_rotated_box, polygon_iou,
                   positional_score, wasserstein_distance)
from .metrics import GTObject, MetricsReport, PredObject, compute_report, edit_distance, evaluate_video
from .pool import GlobalPool, aggregate_tracklet_scores
from .synth import Clip, NoiseSpec, Scenario, TextSpec, generate, preset
from .tracker import Detection, FrameInput, Tracker, TrackerConfig, run_video, transcription_vote

__version__ = "0.1.0"
