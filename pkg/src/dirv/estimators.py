"""Estimator-style wrappers around assignment, loss and voting.

The wrappers follow the scikit-learn conventions: hyper-parameters are the
constructor arguments, ``fit`` builds the anchor set and returns ``self``,
learned state ends with an underscore, and ``get_params``/``set_params``/
``clone`` work unchanged.  Nothing is learned from data; ``fit`` only
freezes the configuration.

Example:
    >>> assigner = InteractionRegionAssigner(num_verbs=6).fit(scenes)
    >>> assignments = assigner.transform(scenes)
    >>> voter = InteractionVoter(num_verbs=6).fit()
    >>> triplets = voter.predict(list(zip(detections, regions)))
"""

from __future__ import annotations

from typing import Any

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .assignment import AssignmentArrays, Thresholds, assign_arrays
from .evaluation import EvalConfig, evaluate, map_role
from .geometry import AnchorConfig, anchor_array
from .losses import ClassTargets, LossConfig, LossVariant, interaction_loss
from .validation import check_logits, check_same_length, check_scene_outputs, check_scenes
from .voting import SceneArrays, TripletScore, VoteResult, VotingConfig, vote_scene


class InteractionRegionAssigner(TransformerMixin, BaseEstimator):
    """Label every anchor of a scene against its ground-truth interactions.

    Args:
        anchors: Anchor layout; ``None`` uses the default 256x256 pyramid.
        t_u: Union IoU threshold.
        t_h: Human coverage threshold.
        t_o: Object coverage threshold.
        num_verbs: Number of object verbs (columns of the label matrix).
        num_noobject_verbs: Extra verb ids allowed on interactions without an object.
    """

    def __init__(self, anchors: AnchorConfig | None = None, t_u: float = 0.25, t_h: float = 0.25,
                 t_o: float = 0.25, num_verbs: int = 6, num_noobject_verbs: int = 2):
        self.anchors = anchors
        self.t_u = t_u
        self.t_h = t_h
        self.t_o = t_o
        self.num_verbs = num_verbs
        self.num_noobject_verbs = num_noobject_verbs

    def fit(self, X: Any = None, y: Any = None) -> "InteractionRegionAssigner":
        """Freeze thresholds and build the anchor array; ``X`` is validated if given."""
        self.thresholds_ = Thresholds(t_u=self.t_u, t_h=self.t_h, t_o=self.t_o)
        self.anchor_config_ = self.anchors if self.anchors is not None else AnchorConfig()
        self.anchor_centers_, self.anchor_levels_ = anchor_array(self.anchor_config_)
        self.n_anchors_ = len(self.anchor_centers_)
        if X is not None:
            check_scenes(X, self.num_verbs, self.num_noobject_verbs)
        return self

    def transform(self, X: Any) -> list[AssignmentArrays]:
        """One :class:`AssignmentArrays` per scene, in input order."""
        check_is_fitted(self, "anchor_centers_")
        scenes = check_scenes(X, self.num_verbs, self.num_noobject_verbs)
        return [assign_arrays(self.anchor_centers_, s, self.thresholds_, self.num_verbs) for s in scenes]

    def class_targets(self, X: Any) -> list[ClassTargets]:
        return [ClassTargets.from_assignment(a) for a in self.transform(X)]


class InteractionLoss(BaseEstimator):
    """Interaction-classification loss as a stateless estimator.

    ``score(logits, targets)`` returns the negated mean loss so that higher is
    better, as scikit-learn scorers expect.
    """

    def __init__(self, alpha: float = 0.25, gamma: float = 2.0, variant: str = "ignorance"):
        self.alpha = alpha
        self.gamma = gamma
        self.variant = variant

    def fit(self, X: Any = None, y: Any = None) -> "InteractionLoss":
        self.config_ = LossConfig(alpha=self.alpha, gamma=self.gamma, variant=LossVariant(self.variant))
        return self

    def loss(self, logits: Any, targets: ClassTargets) -> tuple[float, np.ndarray]:
        """Loss value and gradient with respect to ``logits`` for one scene."""
        check_is_fitted(self, "config_")
        arr = check_logits(logits, targets.labels.shape)
        return interaction_loss(arr, targets, self.config_)

    def score(self, X: Any, y: Any) -> float:
        check_same_length(X, y, names=("logits", "targets"))
        values = [self.loss(x, t)[0] for x, t in zip(X, y)]
        return -float(np.mean(values)) if values else 0.0


class InteractionVoter(BaseEstimator):
    """Voting inference over scenes of detections and region predictions.

    ``predict`` takes a sequence of ``(detections, regions)`` pairs and
    returns the scored triplets of each scene.  ``score`` evaluates them
    against ground-truth scenes and returns the role mAP.

    Args:
        anchors: Anchor layout the regions' ``anchor_index`` refers to.
        sigma: Spread of the Gaussian location probability.
        t_h: Human coverage gate.
        t_o: Object coverage gate.
        region_nms_iou: Region-NMS IoU threshold; ``None`` keeps voting only.
        score_floor: Triplets scoring below this value are dropped.
        num_verbs: Number of object verbs.
        num_noobject_verbs: Number of verbs scored without an object.
        iou_threshold: Evaluation IoU threshold used by ``score``.
    """

    def __init__(self, anchors: AnchorConfig | None = None, sigma: float = 0.9, t_h: float = 0.25,
                 t_o: float = 0.25, region_nms_iou: float | None = None, score_floor: float = 1e-6,
                 num_verbs: int = 6, num_noobject_verbs: int = 2, iou_threshold: float = 0.5):
        self.anchors = anchors
        self.sigma = sigma
        self.t_h = t_h
        self.t_o = t_o
        self.region_nms_iou = region_nms_iou
        self.score_floor = score_floor
        self.num_verbs = num_verbs
        self.num_noobject_verbs = num_noobject_verbs
        self.iou_threshold = iou_threshold

    def fit(self, X: Any = None, y: Any = None) -> "InteractionVoter":
        self.voting_config_ = VotingConfig(sigma=self.sigma, t_h=self.t_h, t_o=self.t_o,
                                           region_nms_iou=self.region_nms_iou,
                                           score_floor=self.score_floor)
        self.eval_config_ = EvalConfig(iou_threshold=self.iou_threshold)
        anchors = self.anchors if self.anchors is not None else AnchorConfig()
        self.anchor_centers_, _ = anchor_array(anchors)
        return self

    def vote(self, X: Any) -> list[VoteResult]:
        """Full per-scene voting results (matches, probabilities, fused table)."""
        check_is_fitted(self, "voting_config_")
        out = []
        for k, (dets, regions) in enumerate(check_scene_outputs(X)):
            sa = SceneArrays.build(dets, regions, self.num_verbs)
            out.append(vote_scene(self.anchor_centers_, sa, self.voting_config_, self.num_verbs,
                                  scene_id=k))
        return out

    def predict(self, X: Any) -> list[list[TripletScore]]:
        return [r.triplets for r in self.vote(X)]

    def score(self, X: Any, y: Any) -> float:
        """Role mAP of the predictions for ``X`` against ground-truth scenes ``y``."""
        pairs = check_scene_outputs(X)
        scenes = check_scenes(y, self.num_verbs, self.num_noobject_verbs)
        check_same_length(pairs, scenes, names=("X", "y"))
        preds = self.predict(pairs)
        aps = evaluate(preds, [d for d, _ in pairs], scenes, self.eval_config_,
                       self.num_verbs + self.num_noobject_verbs)
        return map_role(aps)
