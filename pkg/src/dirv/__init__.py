"""Detection-head engine for human-object interaction detection.

The package covers everything below the neural network: interaction-region
target assignment, the classification/regression losses with analytic
gradients, voting-based inference, role-mAP evaluation and a synthetic
benchmark harness.
"""

from .assignment import (
    HUMAN_CLASS,
    IGNORED,
    NEGATIVE,
    POSITIVE,
    GtInstance,
    GtInteraction,
    GtScene,
    Thresholds,
    assign_instance_actions,
    assign_regions,
)
from .estimators import InteractionLoss, InteractionRegionAssigner, InteractionVoter
from .evaluation import EvalConfig, average_precision, map_role, match_triplets
from .geometry import Anchor, AnchorConfig, Box, generate_anchors
from .losses import LossConfig, LossVariant
from .voting import InstanceDetection, RegionPrediction, TripletScore, VotingConfig, run_voting

__version__ = "0.1.0"
