"""rxcritic: compile clinical-guideline knowledge bases into prescription-critiquing rules."""

from .kb_model import (
    Criterion,
    CriterionKind,
    Criticism,
    CriticismType,
    FactSource,
    Grade,
    Guideline,
    HistoryEntry,
    Intensity,
    Outcome,
    Recommendation,
    RecommendedTreatment,
    Strategy,
    Treatment,
    Truth,
    eval_condition,
)

__version__ = "0.1.0"
