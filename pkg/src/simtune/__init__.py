"""simtune: tune utterance similarity to match code similarity.

Train a small transformation over frozen text embeddings so that the cosine
of two transformed utterance embeddings tracks the code similarity of their
exemplars; curate boundary training pairs; retrieve top-k few-shot examples;
evaluate scorers on pairwise ranking benchmarks.
"""

__version__ = "0.1.0"

from .codesim import (
    MASKING_PRESETS,
    MaskingConfig,
    PairMetric,
    SimilarityMatrix,
    levenshtein,
    masking_preset,
    normalized_edit_similarity,
    similarity_matrix,
    sketch,
    sketch_match,
    template_match,
)
from .corpus import Corpus, Exemplar, load_corpus, save_corpus
from .curation import (
    CurationParams,
    RankingBenchmark,
    RankingTriplet,
    TrainingTriplet,
    build_ranking_benchmark,
    curate_training_triplets,
)
from .embedding import (
    EmbeddingBank,
    EmbeddingStore,
    FallbackEmbedder,
    RemoteEmbedder,
    cosine,
    embed_batch,
    embed_corpus,
    fallback_embed,
)
from .errors import (
    CorpusError,
    DataError,
    MaskingError,
    MismatchError,
    PoolError,
    ProviderError,
    ProviderIntegrityError,
    SimtuneError,
    StaleArtifactError,
    TemplateError,
    TrainingError,
    UsageError,
)
from .evaluation import (
    CodeOracleScorer,
    RawEmbeddingScorer,
    TransformedScorer,
    language_variation_sweep,
    rank_accuracy,
    sampling_ablation,
)
from .retrieval import (
    PromptTemplate,
    RetrievalIndex,
    SelectionResult,
    assemble_prompt,
    build_index,
    select_examples,
)
from .synthetic import synth_corpus
from .transform import (
    TrainConfig,
    TrainReport,
    TransformParams,
    forward,
    pair_gradient,
    pair_loss,
    train,
)
