"""Personalized question-difficulty ranking by collaborative Copeland voting."""

from .base import BaseRanker, RankingTask
from .baselines import (
    EigenRankLite,
    ExpertRanker,
    LatentModel,
    MFRanker,
    TopicRanker,
    UBCFRanker,
    asc_sequence,
    convert_scores,
    mf_train,
)
from .copeland import (
    EduRankConfig,
    EduRankRanker,
    NeighborSimilarity,
    QuestionPrior,
    blended_rv,
    build_prior,
    copeland_aggregate,
    copeland_rank,
    copeland_scores,
    relative_voting,
    similarity,
    win_score,
)
from .core import (
    Dataset,
    DifficultyRanking,
    Relation,
    ResponseRecord,
    StudentQuestionSummary,
    compare_difficulty,
    difficulty_key,
    infer_ranking,
    ingest_log,
    write_log,
)
from .evaluation import (
    EvalReport,
    SplitSpec,
    coldstart_removal,
    coldstart_windows,
    evaluate,
    evaluate_split,
    temporal_split,
    topic_agreement,
)
from .metrics import PairVerdict, ap_score, kendall_tau, ndpm
from .synth import SynthSpec, generate_synthetic

__version__ = "0.1.0"
