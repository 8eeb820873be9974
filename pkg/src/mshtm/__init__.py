"""Multi-scale hybrid topic modeling.

Broad topics come from NMF over whole documents; sentence-level chunks are
encoded against the fixed NMF dictionary, assigned to every topic whose
coefficient clears a per-topic threshold, and clustered within each topic
to find subtopics described by c-TF-IDF keywords.
"""

from .errors import MshtmError, PipelineError
from .pipeline import PipelineConfig, run_mshtm
from .report import TopicHierarchyReport, export_html, export_json, load_json

__version__ = "0.1.0"

__all__ = [
    "MshtmError",
    "PipelineConfig",
    "PipelineError",
    "TopicHierarchyReport",
    "export_html",
    "export_json",
    "load_json",
    "run_mshtm",
]
