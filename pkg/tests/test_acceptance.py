"""Acceptance criteria, one test each.

Every test records a single PASS/FAIL line (echoed in the terminal summary)
before asserting, so a failing criterion still reports what was measured.
"""

import time
from fractions import Fraction

import numpy as np

from vcmr.embeddings import EmbeddingStore, read_binary, write_binary
from vcmr.ensemble import EnsembleWeights, default_grid, grid_search, merge_rerank
from vcmr.evaluation import Annotation, EvalConfig, average_rank, evaluate
from vcmr.reader import FusionConfig, ReaderOutput, best_span, predict_moment, refine_run
from vcmr.retriever import IndexEntry, SegmentIndex, search_run, search_topk
from vcmr.runs import ScoredMoment, write_run
from vcmr.segmenter import HOW2R_GRID, TVR_GRID, SegmentConfig, coverage, segment_corpus, segment_video
from vcmr.synthetic import SyntheticSpec, generate_synthetic, write_corpus
from vcmr.timespan import MomentPrediction, TimeSpan, tiou, tiou_many

from oracles import best_span_matrix, cosine_rows, tiou_exact, tiou_matrix, windows_reference

TOL = 1e-12


# 1 ------------------------------------------------------------------------

def test_criterion_1_tiou(criterion):
    rng = np.random.default_rng(101)
    n = 10_000
    t0 = time.perf_counter()
    # dyadic endpoints keep translations exact
    a0 = rng.integers(0, 2**20, n) / 1024
    a1 = a0 + rng.integers(1, 2**17, n) / 1024
    b0 = a0 + rng.integers(-2**17, 2**17, n) / 1024
    b0 = np.abs(b0)
    b1 = b0 + rng.integers(1, 2**17, n) / 1024
    shift = rng.integers(0, 1000, n).astype(float)
    # arbitrary floats for the rational-arithmetic comparison
    c0 = rng.uniform(0, 100, n)
    c1 = c0 + rng.uniform(1e-3, 50, n)
    d0 = np.abs(c0 + rng.uniform(-30, 30, n))
    d1 = d0 + rng.uniform(1e-3, 50, n)

    worst = dict(symmetry=0.0, identity=0.0, translation=0.0, closed_form=0.0, exact=0.0)
    in_bounds = True
    for k in range(n):
        a, b = TimeSpan(a0[k], a1[k]), TimeSpan(b0[k], b1[k])
        ab = tiou(a, b)
        in_bounds &= 0.0 <= ab <= 1.0
        worst["symmetry"] = max(worst["symmetry"], abs(ab - tiou(b, a)))
        worst["identity"] = max(worst["identity"], abs(tiou(a, a) - 1.0))
        worst["translation"] = max(worst["translation"], abs(ab - tiou(a.shift(shift[k]), b.shift(shift[k]))))
        u, w = TimeSpan(c0[k], c1[k]), TimeSpan(d0[k], d1[k])
        worst["exact"] = max(worst["exact"], abs(tiou(u, w) - float(tiou_exact(u.as_tuple(), w.as_tuple()))))
        # equal lengths L at offset d: (L - d) / (L + d) while d < L
        L, d = a.duration(), abs(b0[k] - a0[k])
        expected = (L - d) / (L + d) if d < L else 0.0
        worst["closed_form"] = max(worst["closed_form"], abs(tiou(a, TimeSpan(b0[k], b0[k] + L)) - expected))
    vec = tiou_many(b0, b1, TimeSpan(a0[0], a1[0]))
    worst["vectorised"] = float(np.max(np.abs(vec - tiou_matrix(b0, b1, a0[0], a1[0]))))
    elapsed = time.perf_counter() - t0

    ok = in_bounds and max(worst.values()) <= TOL and elapsed < 1.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    criterion(1, ok, f"tIoU on {n} pairs, max deviations [{detail}], bounds {in_bounds}, {elapsed:.2f}s (< 1s)")
    assert ok


# 2 ------------------------------------------------------------------------

def _sample_annotations(rng, n, video_ids, duration, lengths):
    out = []
    for q in range(n):
        L = float(lengths(rng))
        start = float(rng.uniform(0, duration - L))
        out.append(MomentPrediction(video_ids[q % len(video_ids)], TimeSpan(start, start + L)))
    return out


def _oracle_coverage(segments, annotations, threshold=0.7):
    by_video = {}
    for s in segments:
        by_video.setdefault(s.video_id, []).append(s.span.as_tuple())
    arrays = {v: np.array(p) for v, p in by_video.items()}
    hits = 0
    for ann in annotations:
        pool = arrays[ann.video_id]
        hits += bool(np.any(tiou_matrix(pool[:, 0], pool[:, 1], ann.span.start, ann.span.end) > threshold))
    return hits / len(annotations)


def test_criterion_2_segmentation(criterion):
    t0 = time.perf_counter()
    one_pair = SegmentConfig([(5, 2)])
    sixty = [s.span.as_tuple() for s in segment_video("v", 60, one_pair)]
    how2r = [s.span.as_tuple() for s in segment_video("v", 60, HOW2R_GRID) if s.source_length == 5]
    sixty_ok = sixty[:3] == [(0, 5), (2, 7), (4, 9)] and sixty == windows_reference(60, 5, 2) and how2r == sixty

    rng = np.random.default_rng(202)
    duration, n = 120.0, 2000
    videos = [f"v{i:02d}" for i in range(20)]
    durations = {v: duration for v in videos}
    grid_lengths = np.array(TVR_GRID.lengths)
    tvr_segments = segment_corpus(durations, TVR_GRID)

    grid_anns = _sample_annotations(rng, n, videos, duration, lambda r: r.choice(grid_lengths))
    grid_cov = coverage(tvr_segments, grid_anns, 0.7)
    grid_oracle = _oracle_coverage(tvr_segments, grid_anns)
    per_length = {}
    for L in grid_lengths:
        subset = [a for a in grid_anns if a.span.duration() == L]
        per_length[float(L)] = coverage(tvr_segments, subset, 0.7)

    uniform_anns = _sample_annotations(rng, n, videos, duration, lambda r: r.uniform(3, 60))
    uniform_cov = coverage(tvr_segments, uniform_anns, 0.7)
    uniform_oracle = _oracle_coverage(tvr_segments, uniform_anns)
    elapsed = time.perf_counter() - t0

    agree = grid_cov == grid_oracle and uniform_cov == uniform_oracle
    parts = {
        "60 s example": sixty_ok,
        "grid lengths 100%": grid_cov == 1.0,
        "uniform [3,60] >= 0.8": uniform_cov >= 0.8,
        "oracle agreement": agree,
        "runtime < 10s": elapsed < 10,
    }
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]
    per = ", ".join(f"L={L:g}: {c:.3f}" for L, c in per_length.items())
    criterion(
        2,
        ok,
        f"60 s example {sixty[:3]}; TVr-grid coverage {grid_cov:.4f} ({per}); uniform coverage {uniform_cov:.4f}; "
        f"n={n} each; {elapsed:.2f}s" + (f"; failed: {failed}" if failed else ""),
    )
    assert ok


# 3 ------------------------------------------------------------------------

def _random_index(rng):
    n = int(rng.integers(1, 10_001))
    dim = int(rng.integers(1, 129))
    vectors = rng.standard_normal((n, dim)).astype(np.float32)
    if n > 4:
        # exact ties: duplicated rows, power-of-two rescaled rows and zero rows
        src = rng.integers(0, n, n // 5)
        dst = rng.integers(0, n, n // 5)
        vectors[dst] = vectors[src]
        scaled = rng.integers(0, n, n // 20)
        vectors[scaled] = vectors[rng.integers(0, n, n // 20)] * np.float32(2.0)
        vectors[rng.integers(0, n, 3)] = 0.0
    entries = [IndexEntry(f"v{int(rng.integers(0, 40)):02d}", TimeSpan(float(i), float(i) + 5.0), 5.0) for i in range(n)]
    order = rng.permutation(n)
    entries = [entries[i] for i in order]
    vectors = vectors[order]
    return entries, vectors


def _oracle_topk(query, entries, vectors, k):
    scores = cosine_rows(query, vectors)
    rows = sorted(zip(entries, scores), key=lambda t: (-t[1], t[0].video_id, t[0].span.start, t[0].span.end))
    return [(e.video_id, e.span.start, e.span.end) for e, _ in rows[:k]], [s for _, s in rows[:k]]


def test_criterion_3_retriever(criterion):
    rng = np.random.default_rng(303)
    exact_match = scale_ok = 0
    worst_score = 0.0
    trials = 100
    for _ in range(trials):
        entries, vectors = _random_index(rng)
        index = SegmentIndex(entries, vectors)
        k = int(rng.integers(1, 51))
        if rng.random() < 0.3:
            query = vectors[int(rng.integers(0, len(vectors)))].astype(np.float64)
        else:
            query = rng.standard_normal(vectors.shape[1])
        got = search_topk(query, index, k)
        keys = [m.key for m in got]
        want_keys, want_scores = _oracle_topk(query, entries, vectors, k)
        exact_match += keys == want_keys
        if keys == want_keys:
            worst_score = max(worst_score, max(abs(m.score - s) for m, s in zip(got, want_scores)))
        scales = (2.0**-10, 0.37, 3.0, 1e4)
        scale_ok += all([m.key for m in search_topk(c * query, index, k)] == keys for c in scales)
    ok = exact_match == trials and scale_ok == trials and worst_score <= TOL
    criterion(
        3,
        ok,
        f"top-k equals full-sort oracle in {exact_match}/{trials} instances (max score gap {worst_score:.1e}); "
        f"ranking unchanged under query scaling in {scale_ok}/{trials}",
    )
    assert ok


# 4 ------------------------------------------------------------------------

def _reader_case(rng, qid, vid, start):
    n = int(rng.integers(2, 33))
    clip = TimeSpan(start, start + 10.0)
    cand = ScoredMoment(vid, clip, float(rng.random()))
    reader = ReaderOutput(qid, vid, clip, rng.normal(4, 4, n), rng.normal(4, 4, n))
    return cand, reader


def test_criterion_4_reader(criterion):
    rng = np.random.default_rng(404)
    agree = 0
    arrays = 1000
    for t in range(arrays):
        n = int(rng.integers(2, 513))
        if t % 3 == 0:
            start, end = rng.integers(-3, 4, n).astype(float), rng.integers(-3, 4, n).astype(float)
        else:
            start, end = rng.standard_normal(n), rng.standard_normal(n)
        i, j, s = best_span(start, end)
        agree += (i, j, s) == best_span_matrix(start, end)

    run, readers, cases = {}, [], []
    for q in range(30):
        qid = f"q{q:02d}"
        run[qid] = []
        for c in range(8):
            cand, reader = _reader_case(rng, qid, f"v{c}", 20.0 * q)
            run[qid].append(cand)
            readers.append(reader)
            cases.append((cand, reader))
    thresholds = np.concatenate([[-np.inf], np.linspace(-4, 16, 41), [np.inf]])
    single, refined = [], []
    for th in thresholds:
        cfg = FusionConfig(start_threshold=th, end_threshold=th)
        single.append(sum(predict_moment(c, r, cfg).provenance == "reader" for c, r in cases))
        out = refine_run(run, readers, cfg)
        refined.append(sum(m.provenance == "reader" for ms in out.values() for m in ms))
    monotone = all(b <= a for a, b in zip(single, single[1:])) and all(b <= a for a, b in zip(refined, refined[1:]))
    ends_ok = single[0] == len(cases) and single[-1] == 0
    ok = agree == arrays and monotone and ends_ok
    criterion(
        4,
        ok,
        f"best_span equals O(n^2) oracle on {agree}/{arrays} arrays; reader-provenance counts over "
        f"{len(thresholds)} thresholds {single[0]} -> {single[-1]}, non-increasing {monotone}",
    )
    assert ok


# 5 ------------------------------------------------------------------------

def _random_runs(rng, n_queries=40):
    run_a, run_b, anns = {}, {}, []
    for q in range(n_queries):
        qid = f"q{q:02d}"
        pool = [(f"v{int(rng.integers(0, 6))}", float(s), float(s) + 5.0) for s in rng.choice(200, 30, replace=False)]
        gt = pool[int(rng.integers(0, 30))]
        anns.append(Annotation(qid, gt[0], TimeSpan(gt[1], gt[2])))
        for run in (run_a, run_b):
            picks = rng.choice(30, int(rng.integers(5, 21)), replace=False)
            moments = [ScoredMoment(pool[p][0], TimeSpan(pool[p][1], pool[p][2]), float(rng.normal())) for p in picks]
            run[qid] = sorted(moments, key=lambda m: -m.score)
    return run_a, run_b, anns


def _oracle_merge(run_a, run_b, alpha, beta):
    merged = {}
    for qid in set(run_a) | set(run_b):
        sides = []
        for run in (run_a, run_b):
            scores = {}
            raw = [m.score for m in run.get(qid, [])]
            lo, hi = (min(raw), max(raw)) if raw else (0.0, 0.0)
            for m in run.get(qid, []):
                scores.setdefault(m.key, 0.5 if hi == lo else (m.score - lo) / (hi - lo))
            sides.append((scores, min(scores.values()) if scores else 0.0))
        (a, fa), (b, fb) = sides
        keys = set(a) | set(b)
        scored = [(alpha * a.get(k, fa) + beta * b.get(k, fb), k) for k in keys]
        merged[qid] = [k for _, k in sorted(scored, key=lambda t: (-t[0], t[1]))]
    return merged


def _oracle_average_recall(merged, anns, ks=(1, 5, 10)):
    recalls = []
    for k in ks:
        hits = 0
        for ann in anns:
            for vid, s, e in merged.get(ann.query_id, [])[:k]:
                if vid == ann.video_id and tiou_exact((s, e), ann.span.as_tuple()) > Fraction(7, 10):
                    hits += 1
                    break
        recalls.append(hits / len(anns))
    return sum(recalls) / len(recalls)


def _planted_halves(rng, n_queries=40):
    run_a, run_b, anns = {}, {}, []
    for q in range(n_queries):
        qid = f"q{q:02d}"
        gt = ScoredMoment("gt", TimeSpan(10.0 * q, 10.0 * q + 5.0), 1.0)
        anns.append(Annotation(qid, "gt", gt.span))
        for run, good in ((run_a, q % 2 == 0), (run_b, q % 2 == 1)):
            noise = [ScoredMoment(f"d{int(rng.integers(0, 50))}", TimeSpan(float(t), float(t) + 5.0), float(rng.uniform(0, 0.9)))
                     for t in rng.choice(500, 15, replace=False)]
            run[qid] = sorted(([gt] if good else []) + noise, key=lambda m: -m.score)
    return run_a, run_b, anns


def test_criterion_5_ensemble(criterion):
    rng = np.random.default_rng(505)
    invariant = trials = 0
    for _ in range(20):
        run_a, run_b, _ = _random_runs(rng, 10)
        alpha = float(rng.uniform(0.05, 1))
        base = merge_rerank(run_a, run_b, EnsembleWeights(alpha, 1 - alpha))
        base_keys = {q: [m.key for m in ms] for q, ms in base.items()}
        for c in (0.5, 2.0, 3.0, 0.1, 1000.0):
            scaled = merge_rerank(run_a, run_b, EnsembleWeights(c * alpha, c * (1 - alpha)))
            invariant += {q: [m.key for m in ms] for q, ms in scaled.items()} == base_keys
            trials += 1

    run_a, run_b, anns = _random_runs(rng)
    grid = default_grid()
    best, value = grid_search(run_a, run_b, anns, grid)
    oracle_scores = [(w, _oracle_average_recall(_oracle_merge(run_a, run_b, w.alpha, w.beta), anns)) for w in grid]
    top = max(v for _, v in oracle_scores)
    oracle_best = min((w for w, v in oracle_scores if v == top), key=lambda w: (w.alpha, w.beta))
    argmax_ok = best == oracle_best and abs(value - top) <= TOL

    run_a, run_b, anns = _planted_halves(rng)
    single_a = evaluate(run_a, anns).average_recall
    single_b = evaluate(run_b, anns).average_recall
    planted_w, planted_v = grid_search(run_a, run_b, anns)
    planted_ok = planted_v >= max(single_a, single_b)

    ok = invariant == trials and argmax_ok and planted_ok
    criterion(
        5,
        ok,
        f"ranking invariant under weight scaling {invariant}/{trials}; grid argmax ({best.alpha:g}, {best.beta:g}) = {value:.4f} "
        f"vs oracle ({oracle_best.alpha:g}, {oracle_best.beta:g}) = {top:.4f}; planted halves ensemble "
        f"{planted_v:.4f} at ({planted_w.alpha:g}, {planted_w.beta:g}) vs singles {single_a:.4f}/{single_b:.4f}",
    )
    assert ok


# 6 ------------------------------------------------------------------------

def _pipeline(spec):
    corpus = generate_synthetic(spec)
    index = SegmentIndex.from_segments(corpus.segments, corpus.segment_store)
    run = search_run(corpus.query_store, index, 10)
    return corpus, evaluate(run, corpus.annotations)


def test_criterion_6_end_to_end(criterion):
    t0 = time.perf_counter()
    corpus, report = _pipeline(SyntheticSpec(n_videos=1000, dim=256, noise=0.0, seed=0))
    elapsed = time.perf_counter() - t0
    n_segments = len(corpus.segments)

    sigmas = (0.0, 2.0, 3.0, 4.0, 6.0, 10.0)
    means = []
    for sigma in sigmas:
        values = [_pipeline(SyntheticSpec(n_videos=1000, dim=256, noise=sigma, seed=seed))[1].average_recall for seed in range(5)]
        means.append(float(np.mean(values)))
    monotone = all(b <= a for a, b in zip(means, means[1:]))

    ok = report.recalls[1] == 1.0 and monotone and elapsed < 60
    sweep = ", ".join(f"{s:g}: {m:.4f}" for s, m in zip(sigmas, means))
    criterion(
        6,
        ok,
        f"1000 videos, {n_segments} segments, VCMR R@1 = {report.recalls[1]:.4f} at sigma 0 in {elapsed:.1f}s (< 60s); "
        f"mean average recall over 5 seeds by sigma [{sweep}], non-increasing {monotone}",
    )
    assert ok


# 7 ------------------------------------------------------------------------

def _artifacts(directory, seed):
    spec = SyntheticSpec(n_videos=150, dim=64, noise=1.5, seed=seed, annotations_per_video=2)
    corpus = generate_synthetic(spec)
    write_corpus(corpus, directory / "corpus")
    seg_index = SegmentIndex.from_segments(corpus.segments, corpus.segment_store)
    run = search_run(corpus.query_store, seg_index, 20)
    write_run(directory / "run.jsonl", run)
    (directory / "eval.json").write_text(evaluate(run, corpus.annotations, dataset_ranks=[1, 1, 2, 3]).to_json())
    vr_index = SegmentIndex.from_videos(corpus.durations, corpus.video_store)
    vr_run = search_run(corpus.query_store, vr_index, 20, workers=3)
    write_run(directory / "vr_run.jsonl", vr_run)
    (directory / "vr_eval.json").write_text(evaluate(vr_run, corpus.annotations, EvalConfig(task="VR")).to_json())
    return {str(p.relative_to(directory)): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_criterion_7_determinism(criterion, tmp_path):
    first = _artifacts(tmp_path / "a", 77)
    second = _artifacts(tmp_path / "b", 77)
    identical = first == second
    other_seed_differs = _artifacts(tmp_path / "c", 78)["corpus/queries.emb"] != first["corpus/queries.emb"]

    rng = np.random.default_rng(707)
    tricky = np.array([[-0.0, 1e-45, np.finfo(np.float32).max], [np.finfo(np.float32).tiny, -1.5, 3.0]], dtype=np.float32)
    stores = [
        read_binary(tmp_path / "a" / "corpus" / "segments.emb"),
        EmbeddingStore(["été", "x" * 300], tricky),
        EmbeddingStore([f"id{i}" for i in range(500)], rng.standard_normal((500, 33)).astype(np.float32)),
    ]
    roundtrip = True
    for n, store in enumerate(stores):
        p1, p2 = tmp_path / f"s{n}.emb", tmp_path / f"s{n}b.emb"
        write_binary(store, p1)
        back = read_binary(p1)
        write_binary(back, p2)
        roundtrip &= p1.read_bytes() == p2.read_bytes() and back == store
    ok = identical and other_seed_differs and roundtrip
    criterion(
        7,
        ok,
        f"{len(first)} artifacts (corpus, run files, eval reports) byte-identical across reruns {identical}; "
        f"different seed differs {other_seed_differs}; EMB1 write-read-write identical on {len(stores)} stores {roundtrip}",
    )
    assert ok


# 8 ------------------------------------------------------------------------

def test_criterion_8_average_rank(criterion):
    value = average_rank([1, 1, 2, 3])
    ok = value == 1.75
    criterion(8, ok, f"average_rank([1, 1, 2, 3]) = {value}")
    assert ok
