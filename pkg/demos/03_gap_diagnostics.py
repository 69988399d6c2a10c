"""How far do the cheap strategies drift from full recomputation?

Representation gap: mean cosine similarity between each strategy's
retained-suffix keys and the recomputed ones, per layer. Prediction gap:
KL divergence between next-token distributions along a 64-token greedy
generation. PIE should hug cosine 1.0 and near-zero KL; conflict-fast
should sit visibly below / above.
"""

import numpy as np

from kvedit import (DEFAULT_CORPUS, ModelConfig, ScenarioConfig, gen_insertion,
                    init_model, key_cosine_by_layer, kl_divergence, suffix_span,
                    tile_document, update_conflict_fast, update_full_recompute,
                    update_pie)

model = init_model(ModelConfig(seed=0))
document = tile_document(DEFAULT_CORPUS, 512)
scen = gen_insertion(document, ScenarioConfig(kind="insertion", rng_seed=12))
print(f"context: {len(scen.original)} tokens, inserting "
      f"{len(scen.script.ops[0].new_tokens)} tokens at {scen.script.ops[0].start}")

pre_cache, _ = model.encode(scen.original)
full, _ = update_full_recompute(model, pre_cache, scen.original, scen.script)
pie, _ = update_pie(model, pre_cache, scen.original, scen.script)
cfe, _ = update_conflict_fast(model, pre_cache, scen.original, scen.script)

span = suffix_span(scen.script, full.logical_len)
cos_pie = key_cosine_by_layer(pie, full, span)
cos_cfe = key_cosine_by_layer(cfe, full, span)

print(f"\n== key cosine vs full recompute over suffix {span} ==")
print("layer    pie      conflict_fast")
for l in range(model.config.n_layers):
    print(f"  {l}    {cos_pie[l]:.4f}      {cos_cfe[l]:.4f}")

entry = scen.edited[-1]
_, d_full = model.generate_greedy(full.copy(), entry, 64, return_distributions=True)
_, d_pie = model.generate_greedy(pie.copy(), entry, 64, return_distributions=True)
_, d_cfe = model.generate_greedy(cfe.copy(), entry, 64, return_distributions=True)

kl_pie = [kl_divergence(p, q) for p, q in zip(d_full, d_pie)]
kl_cfe = [kl_divergence(p, q) for p, q in zip(d_full, d_cfe)]

print("\n== KL(full || strategy) along 64 generated steps ==")
print("steps     pie mean     conflict_fast mean")
for a, b in ((0, 16), (16, 32), (32, 48), (48, 64)):
    print(f"{a:2d}-{b:2d}   {np.mean(kl_pie[a:b]):.3e}     {np.mean(kl_cfe[a:b]):.3e}")
print(f"overall  {np.mean(kl_pie):.3e}     {np.mean(kl_cfe):.3e}   "
      f"(ratio {np.mean(kl_cfe) / max(np.mean(kl_pie), 1e-300):.1f}x)")
