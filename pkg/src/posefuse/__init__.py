"""posefuse: dense 6D pose fusion and evaluation.

Aggregates per-pixel quaternion predictions into object orientations
(averaging, pruning, RANSAC clustering), recovers translations by Hough
voting on center-direction maps, provides the reference orientation losses
with gradients, and evaluates poses under the ADD / ADD-S AUC protocol.
"""

from .aggregate import (AggregatedOrientation, AggregationConfig, Strategy,
                        WeightedQuatSet, WeightSource, aggregate,
                        naive_average, most_confident, prune_and_average,
                        ransac_cluster, select_weights)
from .errors import EmptyAggregationError, FormatError, SchemaError
from .hough import (CameraIntrinsics, DenseMaps, ObjectDetection,
                    compute_inliers, detect_objects, hough_vote,
                    recover_translation)
from .losses import (CombinedLossWeights, ObjectModel, combined_loss,
                     grad_ploss, grad_qloss, l2_pixel_loss, ploss, qloss,
                     sloss, smloss)
from .metrics import (EvalReport, Pose, add_distance, adds_distance, auc,
                      classwise_summary, evaluate, rotation_only_distance,
                      translation_error)
from .quat import (angular_distance, eig_sym4, from_matrix, markley_average,
                   normalize, to_matrix)
from .synth import NoiseSpec, synth_scene

__version__ = "0.1.0"
