"""Live-streaming QoE toolkit.

Synthesizes playback stalls on frame-timing tracks, expands distorted tracks
into render schedules, processes subjective ratings into MOS, and scores
quality predictors with correlation and classification criteria. A small HTTP
service hands schedules to a rating station and collects its scores.

Modules:
    timeline     PTS tracks, validation, sidecar CSV files
    distortion   stall recipes, catch-up synthesis, corpus enumeration
    restructure  stall detection and render schedules
    subjective   rater normalization, rejection, MOS, factor summaries
    criteria     logistic mapping, correlation and classification criteria
    workbench    manifests, CLI, rating service
"""

from . import criteria, distortion, restructure, subjective, timeline, workbench

__version__ = "0.1.0"

__all__ = ["criteria", "distortion", "restructure", "subjective", "timeline", "workbench", "__version__"]
