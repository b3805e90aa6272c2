"""
Exact cosine search over a segment index
========================================
"""

import numpy as np

from vcmr.retriever import SegmentIndex, search_topk
from vcmr.synthetic import SyntheticSpec, generate_synthetic

corpus = generate_synthetic(SyntheticSpec(n_videos=50, dim=64, noise=1.0, seed=3))
index = SegmentIndex.from_segments(corpus.segments, corpus.segment_store)
print(len(index), "segments of dimension", index.dimension)

ann = corpus.annotations[0]
for rank, m in enumerate(search_topk(corpus.query_store[ann.query_id], index, 5), 1):
    mark = "<- planted" if (m.video_id, m.span) == (ann.video_id, ann.span) else ""
    print(rank, m.video_id, m.span.as_tuple(), f"{m.score:.4f}", mark)

# rescaling the query leaves the ranking alone
q = corpus.query_store[ann.query_id]
same = [m.key for m in search_topk(q, index, 10)] == [m.key for m in search_topk(1e3 * q, index, 10)]
print("scale invariant:", same)

# whole-video retrieval uses one vector per video; the mean over all its
# clips is a blurrier target than the planted clip itself
videos = SegmentIndex.from_videos(corpus.durations, corpus.video_store)
print("top video:", search_topk(q, videos, 1)[0].video_id, "truth:", ann.video_id)
