"""
Reader refinement and two-run ensembles
=======================================

A reader emits start/end logits over a clip's tokens. If the chosen pair
is confident enough the clip's span shrinks to the reader's span.
"""

import numpy as np

from vcmr import TimeSpan
from vcmr.ensemble import EnsembleWeights, grid_search, merge_rerank
from vcmr.evaluation import Annotation, evaluate
from vcmr.reader import FusionConfig, ReaderOutput, best_span, predict_moment
from vcmr.runs import ScoredMoment

start = np.array([0.1, 7.5, 0.2, 0.0, 0.3])
end = np.array([0.0, 0.1, 0.4, 8.2, 0.1])
print("best pair:", best_span(start, end))

clip = ScoredMoment("v1", TimeSpan(10.0, 20.0), 0.8)
reader = ReaderOutput("q1", "v1", clip.span, start, end)
for threshold in (5.0, 9.0):
    out = predict_moment(clip, reader, FusionConfig(start_threshold=threshold, end_threshold=threshold))
    print(f"threshold {threshold}: {out.provenance:9s} {out.span.as_tuple()}")

# two runs that are each right on a different query
gt1, gt2 = TimeSpan(0.0, 5.0), TimeSpan(30.0, 35.0)
anns = [Annotation("q1", "v1", gt1), Annotation("q2", "v2", gt2)]
decoy = ScoredMoment("v9", TimeSpan(50.0, 55.0), 0.6)
run_a = {"q1": [ScoredMoment("v1", gt1, 0.9), decoy], "q2": [decoy, ScoredMoment("v2", gt2, 0.55)]}
run_b = {"q1": [decoy, ScoredMoment("v1", gt1, 0.3)], "q2": [ScoredMoment("v2", gt2, 0.95), decoy]}
for name, run in (("A", run_a), ("B", run_b)):
    print(name, "R@1", evaluate(run, anns).recalls[1])
weights, value = grid_search(run_a, run_b, anns)
print("best weights", weights, "average recall", value)
print("R@1 merged", evaluate(merge_rerank(run_a, run_b, EnsembleWeights(0.5, 0.5)), anns).recalls[1])
