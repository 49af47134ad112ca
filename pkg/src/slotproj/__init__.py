"""Cross-lingual projection of slot-annotated SLU training data.

Slot spans are encoded as paired single-letter markers, sent through a
pluggable translation backend, checked for marker consistency with a retry
feedback loop, and decoded back to BIO annotations in the target language.
The package also exports tagged parallel fine-tuning pairs and scores SLU
predictions (intent accuracy, slot F1, overall accuracy).
"""

from .annotations import (
    AnnotatedUtterance,
    MalformedBIO,
    OverlappingSpans,
    SlotSpan,
    SpanOutOfRange,
    extract_spans,
    spans_to_bio,
)
from .backends import (
    BackendConfig,
    FaultyBackend,
    HttpBackend,
    IdentityBackend,
    ScrambleBackend,
    ScriptedBackend,
    TranslationBackend,
    TranslationRequest,
    TranslationResult,
    build_prompt,
)
from .datasets import (
    Dataset,
    FinetunePair,
    MassiveCorpus,
    export_finetune_pairs,
    parse_annot_utt,
    read_massive,
    read_multiatis,
    render_annot_utt,
    write_multiatis,
)
from .errors import SlotprojError
from .metrics import (
    MetricsReport,
    PredictionRecord,
    evaluate,
    intent_accuracy,
    overall_accuracy,
    slot_f1,
)
from .pipeline import (
    CorpusStats,
    ProjectionOutcome,
    RetryPolicy,
    ValidationReport,
    project_dataset,
    project_example,
    validate_tags,
)
from .tagging import decode_tagged, default_mode, encode_tagged, strip_markers

__version__ = "0.1.0"

__all__ = [
    "AnnotatedUtterance",
    "BackendConfig",
    "CorpusStats",
    "Dataset",
    "FaultyBackend",
    "FinetunePair",
    "HttpBackend",
    "IdentityBackend",
    "MalformedBIO",
    "MassiveCorpus",
    "MetricsReport",
    "OverlappingSpans",
    "PredictionRecord",
    "ProjectionOutcome",
    "RetryPolicy",
    "ScrambleBackend",
    "ScriptedBackend",
    "SlotprojError",
    "SlotSpan",
    "SpanOutOfRange",
    "TranslationBackend",
    "TranslationRequest",
    "TranslationResult",
    "ValidationReport",
    "build_prompt",
    "decode_tagged",
    "default_mode",
    "encode_tagged",
    "evaluate",
    "export_finetune_pairs",
    "extract_spans",
    "intent_accuracy",
    "overall_accuracy",
    "parse_annot_utt",
    "project_dataset",
    "project_example",
    "read_massive",
    "read_multiatis",
    "render_annot_utt",
    "slot_f1",
    "spans_to_bio",
    "strip_markers",
    "validate_tags",
    "write_multiatis",
]
