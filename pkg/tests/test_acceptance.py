"""Acceptance suite: one test per criterion, at the stated tolerances.

Criteria 2 and 3 share one batch of 200 seeded random cases (module-scoped
fixture). Every test prints a single [acceptance] PASS line on success;
a failure prints FAIL and the assertion that broke.
"""

import contextlib
import json
import math
import statistics
import time

import numpy as np
import pytest

from kvedit import (ModelConfig, RotaryTable, ScenarioConfig, apply_edit_tokens,
                    edit_similarity, gen_scenario, init_model, kl_divergence,
                    random_script, run_diagnose, suffix_span, tile_document,
                    update_conflict_fast, update_full_recompute, update_pie,
                    write_report, BenchConfig, DEFAULT_CORPUS, EditOp, EditScript,
                    ByteTokenizer, gen_insertion)

DESK = ModelConfig()  # L=4, H=4, head_dim=16, mlp 256, vocab 512


@contextlib.contextmanager
def criterion(num, desc):
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {num}: FAIL - {desc}")
        raise
    print(f"[acceptance] criterion {num}: PASS - {desc}")


# -- criterion 1 -----------------------------------------------------------------

def test_criterion_1_rotation_algebra():
    with criterion(1, "rotation composition and norm preservation, 1000 triples"):
        start = time.perf_counter()
        table = RotaryTable(16)
        rng = np.random.default_rng(101)
        worst_comp = 0.0
        worst_norm = 0.0
        for _ in range(1000):
            v = rng.standard_normal(16).astype(np.float32)
            a, b = (int(x) for x in rng.integers(-4096, 4097, size=2))
            two_step = table.rotate(table.rotate(v, a), b)
            one_step = table.rotate(v, a + b)
            worst_comp = max(worst_comp, float(np.abs(two_step - one_step).max()))
            worst_norm = max(worst_norm, abs(float(np.linalg.norm(table.rotate(v, a)))
                                             - float(np.linalg.norm(v))))
        elapsed = time.perf_counter() - start
        assert worst_comp < 1e-5, f"composition error {worst_comp}"
        assert worst_norm < 1e-6, f"norm drift {worst_norm}"
        assert elapsed < 5.0, f"runtime {elapsed:.1f}s"


# -- criteria 2 + 3 share 200 random oracle cases ----------------------------------

class OracleBatch:
    def __init__(self):
        rng = np.random.default_rng(20240601)
        self.logit_diffs = []
        self.greedy_matches = []
        self.layer0_diffs = []
        t0 = time.perf_counter()
        for _ in range(200):
            model = init_model(ModelConfig(seed=int(rng.integers(0, 2**31))))
            n = int(rng.integers(16, 513))
            seq = [int(t) for t in rng.integers(0, DESK.vocab_size, n)]
            script = random_script(n, rng, max_ops=3, max_span=24, max_new=24,
                                   vocab_size=DESK.vocab_size)
            pre, _ = model.encode(seq)
            edited = apply_edit_tokens(seq, script)
            full, _ = update_full_recompute(model, pre, seq, script)
            fresh, fresh_logits = model.encode(edited)
            logits = model.next_logits(full, edited[-1])
            self.logit_diffs.append(float(np.abs(logits - fresh_logits).max()))
            gen_a = model.generate_greedy(full.copy(), edited[-1], 64)
            gen_b = model.generate_greedy(fresh.copy(), edited[-1], 64)
            self.greedy_matches.append(gen_a == gen_b)
            pie, _ = update_pie(model, pre, seq, script)
            self.layer0_diffs.append(float(np.abs(
                pie.keys[0, :pie.logical_len] - full.keys[0, :full.logical_len]).max()))
        self.elapsed = time.perf_counter() - t0


@pytest.fixture(scope="module")
def oracle_batch():
    return OracleBatch()


def test_criterion_2_full_recompute_oracle(oracle_batch):
    with criterion(2, "full recompute == fresh encode on 200 random edits"):
        worst = max(oracle_batch.logit_diffs)
        assert worst < 1e-4, f"worst logit diff {worst}"
        mismatches = oracle_batch.greedy_matches.count(False)
        assert mismatches == 0, f"{mismatches} greedy continuations diverged"
        assert oracle_batch.elapsed < 120.0, f"runtime {oracle_batch.elapsed:.1f}s"


def test_criterion_3_pie_layer0_exactness(oracle_batch):
    with criterion(3, "PIE layer-0 keys equal full-recompute keys on the same cases"):
        worst = max(oracle_batch.layer0_diffs)
        assert worst < 1e-6, f"worst layer-0 key diff {worst}"


# -- criterion 4 -----------------------------------------------------------------

def test_criterion_4_cosine_ordering(tmp_path):
    with criterion(4, "per-layer cosine: PIE above conflict-fast at every layer"):
        cfg = BenchConfig(model=DESK, strategies=("pie", "conflict_fast"),
                          context_lens=(512,),
                          scenario=ScenarioConfig(kind="insertion", rng_seed=40),
                          trials=12, n_generate=8)
        report = run_diagnose(cfg)
        out = tmp_path / "cosine_by_layer.json"
        write_report(report, out, "json")
        assert json.loads(out.read_text())["schema"] == "kvedit.diagnose.v1"
        by_strategy = {c["strategy"]: c for c in report["cells"]}
        pie = by_strategy["pie"]["cosine_by_layer"]
        cfe = by_strategy["conflict_fast"]["cosine_by_layer"]
        assert pie[0] >= 0.99, f"PIE layer-0 cosine {pie[0]}"
        for l in range(DESK.n_layers):
            assert pie[l] > cfe[l], f"layer {l}: PIE {pie[l]} vs CFE {cfe[l]}"


# -- criterion 5 -----------------------------------------------------------------

def test_criterion_5_kl_ordering():
    with criterion(5, "mean KL(full||PIE) < mean KL(full||CFE) on >=95% of insertions"):
        model = init_model(DESK)
        document = tile_document(DEFAULT_CORPUS, 400)
        wins = 0
        cases = 0
        seed = 50_000
        while cases < 100:
            seed += 1
            scen = gen_insertion(document, ScenarioConfig(kind="insertion",
                                                          rng_seed=seed))
            post_len = len(scen.edited)
            # interior insertions only: a retained prefix and suffix must exist
            # for the three strategies to differ at all
            if scen.script.ops[0].start == 0 or suffix_span(scen.script, post_len) is None:
                continue
            assert len(scen.original) >= 256 and scen.script.net_delta >= 8
            cases += 1
            pre, _ = model.encode(scen.original)
            full, _ = update_full_recompute(model, pre, scen.original, scen.script)
            pie, _ = update_pie(model, pre, scen.original, scen.script)
            cfe, _ = update_conflict_fast(model, pre, scen.original, scen.script)
            entry = scen.edited[-1]
            _, d_full = model.generate_greedy(full.copy(), entry, 64,
                                              return_distributions=True)
            _, d_pie = model.generate_greedy(pie.copy(), entry, 64,
                                             return_distributions=True)
            _, d_cfe = model.generate_greedy(cfe.copy(), entry, 64,
                                             return_distributions=True)
            kl_pie = statistics.fmean(kl_divergence(p, q) for p, q in zip(d_full, d_pie))
            kl_cfe = statistics.fmean(kl_divergence(p, q) for p, q in zip(d_full, d_cfe))
            wins += kl_pie < kl_cfe
        assert wins >= 95, f"PIE beat conflict-fast on only {wins}/100 cases"


# -- criterion 6 -----------------------------------------------------------------

def test_criterion_6_latency_ratio():
    with criterion(6, "PIE update <= 0.15x full recompute at context 4096"):
        start = time.perf_counter()
        tok = ByteTokenizer()
        document = tile_document(DEFAULT_CORPUS, 4096)
        lines = document.splitlines(keepends=True)
        ids = tok.encode(document)
        # 5-line insertion at ~10% into the context
        target = len(ids) // 10
        consumed = 0
        boundary = 0
        while consumed < target:
            consumed += len(lines[boundary].encode())
            boundary += 1
        block = "".join(lines[boundary:boundary + 5])
        pos = sum(len(l.encode()) for l in lines[:boundary])
        script = EditScript((EditOp(pos, pos, tuple(tok.encode(block))),))
        model = init_model(DESK)
        pre, _ = model.encode(ids)
        update_full_recompute(model, pre, ids, script)  # warm-up, excluded
        update_pie(model, pre, ids, script)
        full_ms, pie_ms = [], []
        for _ in range(20):
            _, t_full = update_full_recompute(model, pre, ids, script)
            full_ms.append(t_full.update_ms)
            _, t_pie = update_pie(model, pre, ids, script)
            pie_ms.append(t_pie.update_ms)
        ratio = statistics.median(pie_ms) / statistics.median(full_ms)
        elapsed = time.perf_counter() - start
        print(f"  median full {statistics.median(full_ms):.1f} ms, "
              f"median pie {statistics.median(pie_ms):.1f} ms, ratio {ratio:.4f}")
        assert ratio <= 0.15, f"latency ratio {ratio:.4f}"
        assert elapsed < 300.0, f"runtime {elapsed:.1f}s"


# -- criterion 7 -----------------------------------------------------------------

def test_criterion_7_delta_zero_identity():
    with criterion(7, "same-length replacements: PIE bit-identical to conflict-fast"):
        rng = np.random.default_rng(7)
        model = init_model(DESK)
        for _ in range(100):
            n = int(rng.integers(32, 193))
            seq = [int(t) for t in rng.integers(0, DESK.vocab_size, n)]
            ops = []
            pos = 0
            for _ in range(int(rng.integers(1, 4))):
                if pos >= n - 2:
                    break
                start = int(rng.integers(pos, n - 1))
                span = int(rng.integers(1, min(9, n - start) + 1))
                repl = tuple(int(t) for t in rng.integers(0, DESK.vocab_size, span))
                ops.append(EditOp(start, start + span, repl))
                pos = start + span + 1
            script = EditScript(tuple(ops))
            assert script.net_delta == 0
            pre, _ = model.encode(seq)
            pie, _ = update_pie(model, pre, seq, script)
            cfe, _ = update_conflict_fast(model, pre, seq, script)
            assert pie.logical_len == cfe.logical_len == n
            assert np.array_equal(pie.keys[:, :n], cfe.keys[:, :n])
            assert np.array_equal(pie.values[:, :n], cfe.values[:, :n])


# -- criterion 8 -----------------------------------------------------------------

def _oracle_levenshtein(a: str, b: str) -> int:
    m = [[i + j for j in range(len(b) + 1)] for i in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            m[i][j] = min(m[i - 1][j] + 1, m[i][j - 1] + 1,
                          m[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return m[len(a)][len(b)]


def test_criterion_8_metric_oracles():
    with criterion(8, "edit similarity vs DP oracle; KL closed forms to 1e-9"):
        rng = np.random.default_rng(88)
        alphabet = "abcdef _=#()"
        for _ in range(1000):
            la, lb = (int(x) for x in rng.integers(0, 65, size=2))
            a = "".join(alphabet[i] for i in rng.integers(0, len(alphabet), la))
            b = "".join(alphabet[i] for i in rng.integers(0, len(alphabet), lb))
            expected = (100.0 * (1.0 - _oracle_levenshtein(a, b) / max(la, lb))
                        if max(la, lb) else 100.0)
            assert edit_similarity(a, b) == expected, (a, b)
        assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert abs(kl_divergence([0.5, 0.5], [0.25, 0.75])
                   - (0.5 * math.log(2) + 0.5 * math.log(2 / 3))) < 1e-9
        assert abs(kl_divergence([1.0, 0.0], [0.5, 0.5]) - math.log(2)) < 1e-9


# -- criterion 9 -----------------------------------------------------------------

def test_criterion_9_scenario_round_trips():
    with criterion(9, "500 scenarios of every kind validate and round-trip"):
        document = tile_document(DEFAULT_CORPUS, 700)
        kinds = ("insertion", "deletion", "edition", "contextual",
                 "multi_place_contextual")
        total = 0
        for kind in kinds:
            for i in range(100):
                sites = 2 + (i % 14) if kind == "multi_place_contextual" else 1
                cfg = ScenarioConfig(kind=kind, rng_seed=900 + i, num_sites=sites)
                scen = gen_scenario(document, cfg)
                scen.script.validate(len(scen.original))
                starts = [op.start for op in scen.script.ops]
                assert starts == sorted(starts)
                for prev, cur in zip(scen.script.ops, scen.script.ops[1:]):
                    assert cur.start >= prev.end and cur.start > prev.start
                assert apply_edit_tokens(scen.original, scen.script) == scen.edited
                if kind == "multi_place_contextual":
                    assert len(scen.script.ops) == sites
                total += 1
        assert total == 500


# -- criterion 10 ----------------------------------------------------------------

def test_criterion_10_multi_place_composition():
    with criterion(10, "k-op PIE == folding the ops one at a time (k <= 5)"):
        rng = np.random.default_rng(1010)
        model = init_model(DESK)
        for _ in range(20):
            n = int(rng.integers(64, 513))
            seq = [int(t) for t in rng.integers(0, DESK.vocab_size, n)]
            script = random_script(n, rng, max_ops=5, max_span=24, max_new=24,
                                   vocab_size=DESK.vocab_size)
            pre, _ = model.encode(seq)
            single, _ = update_pie(model, pre, seq, script)
            cache, seq_now, shift = pre, list(seq), 0
            for op in script.ops:
                one = EditScript((EditOp(op.start + shift, op.end + shift,
                                         op.new_tokens),))
                cache, _ = update_pie(model, cache, seq_now, one)
                seq_now = apply_edit_tokens(seq_now, one)
                shift += op.delta
            assert cache.logical_len == single.logical_len
            np.testing.assert_allclose(cache.keys[:, :cache.logical_len],
                                       single.keys[:, :single.logical_len], atol=1e-5)
            np.testing.assert_allclose(cache.values[:, :cache.logical_len],
                                       single.values[:, :single.logical_len], atol=1e-5)
