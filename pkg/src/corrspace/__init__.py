"""Correlation-preserving time-series embeddings with exact k-d tree search.

A small fully-connected network maps the non-redundant half of a series'
scaled DFT spectrum onto the unit sphere in R^m so that twice the squared
embedding distance approximates 2 - 2*corr; top-k and threshold correlation
queries then run through an exact k-d tree over the embeddings. DFT
truncation and down-sampling baselines plus an evaluation harness
(precision, gap, approximation loss, latency) round out the toolkit.
"""

__version__ = "0.1.0"

from . import errors
from .core import (
    FrequencyVector,
    NormalizedSeries,
    TimeSeries,
    dft,
    distance_sq,
    normalize,
    pearson,
    truncated_distance_sq,
)
from .datasets import (
    Dataset,
    SplitDataset,
    gen_example1,
    gen_example2,
    load_csv,
    save_csv,
    split,
)
from .embed import (
    DftTruncationEmbedder,
    DownSampleEmbedder,
    LearnedEmbedder,
    NetworkParams,
    embed_dft_baseline,
    embed_downsample,
    feature_width,
    features,
    forward,
    load_model,
    save_model,
)
from .evaluation import (
    EvalReport,
    SweepConfig,
    approximation_loss,
    exact_top_k,
    gap,
    latency_benchmark,
    precision,
    sweep,
)
from .index import KdTree, QueryResult, build, load_index, save_index, threshold_radius_sq
from .train import (
    TrainConfig,
    adam_step,
    desk_config,
    gradient,
    init_params,
    loss_approximate,
    loss_order,
    train,
    xavier_init,
)
