"""procrec: reconstruct symbolized return processes as variable-order Markov
chains and score next-symbol forecasts against a random baseline."""

__version__ = "0.1.0"

from .coding import (
    CodingScheme,
    SymbolSequence,
    encode_series,
    make_five_symbol_scheme,
    make_scheme,
    make_three_symbol_scheme,
)
from .errors import (
    DegenerateStd,
    DuplicateTimestamp,
    IngestError,
    MalformedRow,
    NonPositivePrice,
    ProcrecError,
    SequenceTooShort,
    SeriesTooShort,
    SplitTooSmall,
)
from .ingest import (
    ColumnSchema,
    PricePoint,
    PriceSeries,
    ReturnSeries,
    SeriesStats,
    compute_log_returns,
    compute_stats,
    load_price_csv,
    phase_space_pairs,
    split_halves,
)
from .markov import (
    BlockCensus,
    ConditionalTable,
    ConditionalTableSet,
    ContextRow,
    TransitionMatrix,
    build_conditional_tables,
    census_blocks,
    transition_matrix,
)
from .predict import (
    ExperimentConfig,
    ExperimentReport,
    PredictionOutcome,
    RandomStream,
    RunErrors,
    evaluate_run,
    predict_next,
    prediction_outcomes,
    random_baseline_next,
    report_to_json_dict,
    resolve_fallback,
    run_experiment,
)
