"""
Cutting videos into fixed-length clips
======================================

Every (length, stride) pair slides a window over the video. The table
below shows how much of a set of random annotations each grid can match
at tIoU > 0.7.
"""

import numpy as np

from vcmr import TimeSpan, MomentPrediction
from vcmr.segmenter import HOW2R_GRID, TVR_GRID, SegmentConfig, coverage, segment_corpus, segment_video

# a 60 s video with 5 s clips every 2 s
clips = segment_video("demo", 60.0, SegmentConfig([(5, 2)]))
print([c.span.as_tuple() for c in clips[:4]], "...", clips[-1].span.as_tuple())

# a 12 s video gets a tail clip flush with the end
print([c.span.as_tuple() for c in segment_video("demo", 12.0, SegmentConfig([(5, 2)]))])

rng = np.random.default_rng(0)
durations = {f"v{i}": 120.0 for i in range(10)}
annotations = []
for q in range(1000):
    length = rng.uniform(3, 60)
    start = rng.uniform(0, 120 - length)
    annotations.append(MomentPrediction(f"v{q % 10}", TimeSpan(start, start + length)))

for name, grid in (("TVr", TVR_GRID), ("How2r", HOW2R_GRID)):
    segments = segment_corpus(durations, grid)
    print(f"{name:6s} {len(segments):5d} clips  coverage {coverage(segments, annotations):.3f}")

# the worst case for one pair: an annotation halfway between two clip starts
L, stride = 5.0, 2.0
d = stride / 2
print("tIoU at offset stride/2:", (L - d) / (L + d))
