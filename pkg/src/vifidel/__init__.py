"""VIFIDEL: visual-fidelity scores for image descriptions.

A caption is compared with the object labels of its image through an exact
Word Mover's Distance in embedding space; human references, when available,
reweight words by how consistently the references mention them.
"""
from .embeddings import (
    EmbeddingTable,
    LookupPolicy,
    cosine,
    load_binary_embeddings,
    load_embeddings,
    load_text_embeddings,
    lookup,
    save_binary_embeddings,
    save_text_embeddings,
)
from .estimator import VifidelScorer, WMDReferenceScorer
from .evalharness import (
    ForcedChoiceItem,
    JudgmentItem,
    correlate,
    forced_choice_accuracy,
    majority_vote,
    spearman,
)
from .imagecontent import (
    Detection,
    ImageContent,
    build_image_nbow,
    load_detections,
    merge_sources,
)
from .metric import (
    PenaltyWeights,
    ReferenceSet,
    ScoreRecord,
    combine_scores,
    penalty_weights,
    vifidel,
    weighted_cost,
    wmd_reference_baseline,
)
from .textproc import StopwordSet, WordDistribution, build_nbow, default_stopwords, tokenize
from .transport import (
    CostParams,
    TransportPlan,
    TransportProblem,
    build_problem,
    solve,
    wmd,
    word_travel_cost,
)

__version__ = "0.1.0"
