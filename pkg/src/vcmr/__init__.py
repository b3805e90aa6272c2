"""Video corpus moment retrieval by segment-level retrieval.

Videos are cut into fixed-length strided segments, segments are ranked
against query embeddings by cosine similarity, and the segment boundaries
serve as the predicted moment. Optional stages refine spans with reader
logits and merge two runs by weighted re-ranking.
"""

from .embeddings import EmbeddingStore, fuse_features, fuse_modalities, load_store, save_store
from .ensemble import EnsembleWeights, default_grid, grid_search, merge_rerank
from .evaluation import Annotation, EvalConfig, EvalReport, average_rank, evaluate, recall_at_k
from .reader import FusionConfig, ReaderOutput, best_span, fuse_scores, predict_moment, refine_run, token_to_time
from .retriever import SegmentIndex, cosine_similarity, retrieve_vcmr, retrieve_vr, search_run, search_topk
from .runs import Run, ScoredMoment, read_run, write_run
from .segmenter import HOW2R_GRID, TVR_GRID, SegmentConfig, VideoSegment, coverage, segment_corpus, segment_video
from .synthetic import SyntheticSpec, generate_synthetic, write_corpus
from .timespan import MomentPrediction, TimeSpan, tiou, vcmr_hit

__version__ = "0.1.0"
