"""Markov-chain segment labelling, ranking and model training."""

from .chain import (
    OFF,
    ON,
    EmptySequenceError,
    LineObservationSequence,
    ObservationSample,
    StateSequence,
    build_observation_sequence,
    emission_logs,
    forward_backward,
    log_likelihood,
    viterbi,
)
from .model import (
    TABLE1_TRANSITIONS,
    LikelihoodModel,
    ModelBundle,
    TransitionModel,
    default_likelihoods,
    default_model,
    load_model,
    scale_transition_model,
)
from .pipeline import DetectionStats, DetectorConfig, run_mcmlsd
from .ranker import LogisticRanker, rank2_score, train_rank2
from .segments import (
    METHODS,
    RankedSegment,
    appearance_score,
    extract_segments,
    rank_segment,
    remove_segment_edges,
)
from .train import LabeledLine, TrainingError, labeled_lines_from_segments, train_likelihoods, train_priors
