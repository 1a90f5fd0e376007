"""
Filtering a toy image-text pool
===============================

A synthetic pool where the "downstream" task only cares about a few
directions of the embedding space. CLIP score finds well-matched pairs;
VAS then keeps the ones that point where the target data lives.
"""

import numpy as np

from vasfilter import (
    EmbeddingMatrix,
    align_pairs,
    clip_scores,
    second_moment,
    two_stage_filter,
    vas_scores,
)
from vasfilter.embstore import renormalize_rows



def unit(x, modality="vision"):
    return EmbeddingMatrix(renormalize_rows(x), modality=modality, normalized=True)


rng = np.random.default_rng(0)
n, d = 5000, 32

# pool: half the samples live on the first 4 axes, half are spread out
# over all 32 (same expected energy, so CLIP score alone can't tell them apart)
topic = np.zeros((n, d), dtype=np.float32)
topic[: n // 2, :4] = rng.standard_normal((n // 2, 4))
topic[n // 2:] = rng.standard_normal((n - n // 2, d)) * np.sqrt(4 / d)
image = topic + 0.3 * rng.standard_normal((n, d)).astype(np.float32)
# a quarter of captions are swapped with another sample's
text = topic + 0.3 * rng.standard_normal((n, d)).astype(np.float32)
bad = rng.choice(n, n // 4, replace=False)
text[bad] = topic[rng.permutation(bad)]

pairs = align_pairs(unit(image), unit(text, "language"))

# target set: a small sample from the same 4 axes
target = np.zeros((300, d), dtype=np.float32)
target[:, :4] = rng.standard_normal((300, 4))
target += 0.3 * rng.standard_normal(target.shape).astype(np.float32)
prior = second_moment(unit(target))

cs = clip_scores(pairs)
print("mean CLIP score, clean vs shuffled captions:",
      round(float(np.delete(cs.scores, bad).mean()), 3), round(float(cs.scores[bad].mean()), 3))

vs = vas_scores(pairs.vision, None, prior)
print("mean VAS, on-topic vs off-topic images:",
      round(float(vs.scores[: n // 2].mean()), 3), round(float(vs.scores[n // 2:].mean()), 3))

# keep the top half by CLIP, then 30% of the pool by VAS
result = two_stage_filter(pairs, prior, vas_target=int(0.3 * n), clip_keep=0.5)
kept = result.kept
for st in result.stages:
    print(f"  {st.name:>12}: {st.input_n} -> {st.output_n}")
print("kept pairs with a shuffled caption:", np.isin(kept, bad).sum(), "of", kept.size)
print("kept pairs that are on-topic:", int((kept < n // 2).sum()), "of", kept.size)

# CLIP score alone, same budget
clip_only = np.argsort(-cs.scores, kind="stable")[: kept.size]
print("CLIP-only top 30%, on-topic:", int((clip_only < n // 2).sum()), "of", kept.size)
