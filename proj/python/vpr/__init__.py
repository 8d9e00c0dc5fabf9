"""Local-feature re-ranking for visual place recognition."""

import json

from ._vpr import (
    AggregateConfig,
    AnchorConfig,
    ContractError,
    Database,
    FeatureSet,
    FormatError,
    HistogramConfig,
    IoError,
    LoadError,
    MatchSet,
    PipelineConfig,
    RankedResult,
    RansacConfig,
    SynthDataset,
    SynthSpec,
    aggregate_score,
    anchor_score,
    count_inliers,
    evaluate_json,
    filter_topk,
    fit_homography,
    generate,
    histogram,
    histogram_score,
    load_features,
    load_global_descriptors,
    match,
    parse_features,
    ransac_score,
    recall_at_1,
    recognize,
    serialize_features,
    write_features,
    write_global_descriptors,
)

__version__ = "0.1.0"


def evaluate(results, db, config, bench=False):
    """Evaluation report for a list of RankedResult as a dict."""
    return json.loads(evaluate_json(list(results), db, config, bench))


def recognize_all(db, config=None):
    """Run recognize() for every query in the database."""
    config = config or PipelineConfig()
    return [recognize(q, db, config) for q in db.query_ids]

