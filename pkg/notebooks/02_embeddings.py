"""
Embedding stores and the EMB1 file format
=========================================
"""

import tempfile
from pathlib import Path

import numpy as np

from vcmr.embeddings import EmbeddingStore, fuse_stores, load_store, save_store

rng = np.random.default_rng(1)
ids = ["clip-a", "clip-b", "clip-c"]
pre = EmbeddingStore(ids, rng.standard_normal((3, 8)).astype(np.float32), "visual_precomputed")
raw = EmbeddingStore(ids[:2], rng.standard_normal((2, 8)).astype(np.float32), "visual_raw")
sub = EmbeddingStore(ids, rng.standard_normal((3, 8)).astype(np.float32), "subtitle")

# clip-c has no raw feature, so only its precomputed part enters the visual sum
fused = fuse_stores(pre, raw, sub)
print(np.allclose(fused["clip-c"], pre["clip-c"] + sub["clip-c"]))

with tempfile.TemporaryDirectory() as tmp:
    binary = Path(tmp) / "fused.emb"
    text = Path(tmp) / "fused.jsonl"
    save_store(fused, binary)
    save_store(fused, text)
    print(binary.stat().st_size, "bytes binary,", text.stat().st_size, "bytes JSONL")
    # both formats hold the same float32 values bit for bit
    print(load_store(binary) == load_store(text) == fused)
