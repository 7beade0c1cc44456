"""Desk-scale aesthetic-gradient personalization toolkit.

Builds unit-norm aesthetic embeddings from image embeddings, nudges a
miniature dual-encoder text tower toward them by gradient ascent on the
text/aesthetic dot product, and evaluates the effect with a seeded paired
experiment against a toy generator.
"""

from .aesthetics import (
    OPTIMIZER_ASCENT,
    OPTIMIZER_SGLD,
    REFERENCE_EPSILON,
    TOY_EPSILON,
    AestheticEmbedding,
    PersonalizationConfig,
    PersonalizationTrace,
    TraceStep,
    build_aesthetic_embedding,
    reference_default_config,
    personalize,
    personalized_conditioning,
    semantic_drift,
    similarity,
    toy_default_config,
)
from .encoder import (
    EncoderConfig,
    MiniClipWeights,
    TokenSequence,
    Vocabulary,
    build_vocab,
    encode_image,
    encode_text,
    encode_text_plain,
    init_weights,
    load_weights,
    save_weights,
    tokenize,
)
from .errors import (
    ConfigError,
    ContractError,
    DegenerateVectorError,
    DeterminismError,
    FormatError,
    InputError,
    NumericError,
    ShapeMismatchError,
    ToolkitError,
    UnknownMagicError,
)
from .formats import (
    load_aesthetic,
    load_embedding_matrix,
    load_image_grid,
    save_aesthetic,
    save_vector,
)
from .harness import (
    PROMPT_CORPUS,
    ExperimentReport,
    ToyGeneratorWeights,
    emit_report,
    init_toy_generator,
    keyword_baseline,
    run_experiment,
    toy_generate,
)
from .runconfig import (
    RunConfig,
    builtin_run_config,
    encoder_preset,
    load_run_config,
    resolve_experiment,
    synthesize_aesthetic,
    write_run_config,
)
from .scorer import ScorerWeights, load_scorer, make_aligned_scorer, save_scorer, score
from .tensor import (
    ComputationRecord,
    GradientMap,
    Tensor,
    backward,
    grad_check,
    precision,
    recording,
)

__version__ = "0.1.0"

__all__ = [
    "AestheticEmbedding",
    "ComputationRecord",
    "ConfigError",
    "ContractError",
    "DegenerateVectorError",
    "DeterminismError",
    "EncoderConfig",
    "ExperimentReport",
    "FormatError",
    "GradientMap",
    "InputError",
    "MiniClipWeights",
    "NumericError",
    "OPTIMIZER_ASCENT",
    "OPTIMIZER_SGLD",
    "REFERENCE_EPSILON",
    "PROMPT_CORPUS",
    "PersonalizationConfig",
    "PersonalizationTrace",
    "RunConfig",
    "ScorerWeights",
    "ShapeMismatchError",
    "TOY_EPSILON",
    "Tensor",
    "TokenSequence",
    "ToolkitError",
    "ToyGeneratorWeights",
    "TraceStep",
    "UnknownMagicError",
    "Vocabulary",
    "backward",
    "build_aesthetic_embedding",
    "build_vocab",
    "builtin_run_config",
    "emit_report",
    "encode_image",
    "encode_text",
    "encode_text_plain",
    "encoder_preset",
    "grad_check",
    "init_toy_generator",
    "init_weights",
    "keyword_baseline",
    "load_aesthetic",
    "load_embedding_matrix",
    "load_image_grid",
    "load_run_config",
    "load_scorer",
    "load_weights",
    "make_aligned_scorer",
    "reference_default_config",
    "personalize",
    "personalized_conditioning",
    "precision",
    "recording",
    "resolve_experiment",
    "run_experiment",
    "save_aesthetic",
    "save_scorer",
    "save_vector",
    "save_weights",
    "score",
    "semantic_drift",
    "similarity",
    "synthesize_aesthetic",
    "tokenize",
    "toy_default_config",
    "toy_generate",
    "write_run_config",
]
