"""Acceptance gate: one pass/fail line per criterion.

Each test prints exactly one "PASS:" or "FAIL:" line on the real terminal
(bypassing capture) and then asserts, so a plain pytest run shows the
verdict for every criterion.
"""

import math
import os
import time

import numpy as np
import pytest

from mmkge.data import (
    FeatureFileError,
    build_known_index,
    generate_features,
    load_features,
    load_graph,
    write_features,
)
from mmkge.evaluation import EvalConfig, bench_inference, evaluate, rank_triple
from mmkge.model import (
    CheckpointError,
    ModelParams,
    ScoreMask,
    composite_score,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from mmkge.sampling import (
    MODE_ENTITY,
    MODE_MODAL,
    SLOT_HEAD,
    SLOT_TAIL,
    NegativeBatch,
    sample_normal,
    sample_twins,
)
from mmkge.training import TrainConfig, batch_gradients, batch_loss, train

from conftest import make_graph, planted_grid, random_features, random_graph


def verdict(capsys, ok: bool, label: str, detail: str = "") -> None:
    with capsys.disabled():
        print(f"{'PASS' if ok else 'FAIL'}: {label}"
              + (f" ({detail})" if detail else ""))
    assert ok, f"{label}: {detail}"


def test_gradient_correctness(capsys):
    """Analytic gradients match central finite differences on 10 random
    small instances (d_e=4, d_m=6, <=5 entities, p=2, full mask),
    elementwise relative error < 1e-4, in under 10 s."""
    start = time.perf_counter()
    worst = 0.0
    for trial in range(10):
        rng = np.random.default_rng(100 + trial)
        E = int(rng.integers(3, 6))
        g = random_graph(rng, entity_count=E, relation_count=2,
                         n_triples=min(3 * E, E * 2 * E - 1))
        feats = random_features(rng, E, 6)
        params = init_params(E, 2, d_e=4, d_m=6, seed=200 + trial)
        batch = g.train[:4]
        strategy = "twins" if trial % 2 else "normal"
        cfg = TrainConfig(margin=4.0, strategy=strategy, p=2, k=3,
                          per_pair=bool(trial % 3), d_e=4, d_m=6)
        if strategy == "twins":
            negs = sample_twins(g, batch, cfg.k, seed=trial)
        else:
            negs = sample_normal(g, batch, cfg.k, seed=trial)
        grads, _ = batch_gradients(params, feats, batch, negs, cfg)

        eps = 1e-6
        for name, tensor in (("struct", params.struct_emb),
                             ("rel", params.rel_emb),
                             ("proj", params.proj)):
            flat = tensor.ravel()
            analytic = grads[name].ravel()
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                up = batch_loss(params, feats, batch, negs, cfg)
                flat[i] = old - eps
                down = batch_loss(params, feats, batch, negs, cfg)
                flat[i] = old
                fd = (up - down) / (2 * eps)
                denom = max(abs(analytic[i]), abs(fd))
                if denom < 1e-6:
                    # both effectively zero: absolute agreement suffices
                    assert abs(analytic[i] - fd) < 1e-6
                    continue
                worst = max(worst, abs(analytic[i] - fd) / denom)
    elapsed = time.perf_counter() - start
    verdict(capsys, worst < 1e-4 and elapsed < 10.0,
            "gradient correctness (10 instances, p=2, full mask)",
            f"max rel err {worst:.2e}, {elapsed:.1f}s")


def _sorted_oracle_rank(params, feats, graph, triple, direction, cfg):
    """Brute-force sort-based filtered optimistic rank."""
    h, r, t = (int(x) for x in triple)
    known = build_known_index(graph, cfg.filter_splits)
    target = t if direction == "tail" else h
    kept, scores = [], []
    for c in range(graph.entity_count):
        cand = (h, r, c) if direction == "tail" else (c, r, t)
        if c != target and cand in known:
            continue
        kept.append(c)
        scores.append(composite_score(params, feats, cand, cfg.mask, cfg.p))
    order = sorted(range(len(kept)), key=lambda i: -scores[i])
    target_score = scores[kept.index(target)]
    for pos, i in enumerate(order):  # first slot with the target's score
        if scores[i] == target_score:
            return pos + 1
    raise AssertionError("target disappeared from candidate list")


def test_rank_metric_oracle_equivalence(capsys):
    """evaluate() matches an independent brute-force sort-based ranker on 20
    random toy graphs under both filter settings, in under 30 s."""
    start = time.perf_counter()
    checked = 0
    for trial in range(20):
        rng = np.random.default_rng(300 + trial)
        E = int(rng.integers(8, 26))
        g = random_graph(rng, entity_count=E, relation_count=3,
                         n_triples=int(rng.integers(30, 90)))
        feats = random_features(rng, E, 5)
        params = init_params(E, 3, d_e=4, d_m=5, seed=400 + trial)
        for splits in (("train", "valid", "test"), ("train", "valid")):
            cfg = EvalConfig(filter_splits=splits)
            hr, tr = [], []
            for triple in g.test:
                for direction, ranks in (("head", hr), ("tail", tr)):
                    want = _sorted_oracle_rank(params, feats, g, triple,
                                               direction, cfg)
                    got = rank_triple(params, feats, g, triple, direction, cfg)
                    assert got == want, (trial, splits, tuple(triple), direction)
                    ranks.append(want)
                    checked += 1
            hr, tr = np.array(hr, float), np.array(tr, float)
            n = len(g.test)
            oracle_mrr = (np.sum(1.0 / hr) + np.sum(1.0 / tr)) / (2 * n)
            oracle_hits = {k: (np.sum(hr <= k) + np.sum(tr <= k)) / (2 * n)
                           for k in cfg.ks}
            rep = evaluate(params, feats, g, cfg)
            assert rep.mrr == oracle_mrr
            assert rep.hits == oracle_hits
    elapsed = time.perf_counter() - start
    verdict(capsys, elapsed < 30.0,
            "rank/metric oracle equivalence (20 graphs, both filter settings)",
            f"{checked} ranks compared, {elapsed:.1f}s")


def _forced_slot_twins(positives, slot_value, rng, entity_count):
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    B = len(positives)
    slot = np.full((B, 1), slot_value, dtype=np.int64)
    original = positives[:, 0] if slot_value == SLOT_HEAD else positives[:, 2]
    repl = rng.integers(0, entity_count - 1, size=(B, 1))
    repl = repl + (repl >= original[:, None])
    entity = NegativeBatch(positives, slot, repl, MODE_ENTITY)
    modal = NegativeBatch(positives, slot, repl, MODE_MODAL)
    return entity, modal


def test_twins_cancellation(capsys):
    """For tail-corrupted twins negatives the ms component cancels exactly
    between F(pos) and F(neg); symmetrically sm for head corruption.
    1000 random cases each, machine precision (bitwise)."""
    rng = np.random.default_rng(55)
    E, R, B = 40, 4, 1000
    heads = rng.integers(0, E, size=B)
    rels = rng.integers(0, R, size=B)
    tails = rng.integers(0, E, size=B)
    positives = np.stack([heads, rels, tails], axis=1).astype(np.int64)
    params = init_params(E, R, d_e=8, d_m=12, seed=56)
    feats = random_features(rng, E, 12)
    gamma = 8.0
    ok = True
    for slot_value, comp in ((SLOT_TAIL, "ms"), (SLOT_HEAD, "sm")):
        negs = _forced_slot_twins(positives, slot_value, rng, E)
        cfg = TrainConfig(margin=gamma, strategy="twins", k=1,
                          mask=ScoreMask.from_names(comp), p=1)
        # with only the cancelling component enabled, F(neg) == F(pos)
        # bitwise, so every hinge is exactly max(gamma - 0, 0) = gamma
        loss = batch_loss(params, feats, positives, negs, cfg)
        ok = ok and (loss == gamma * B)
    verdict(capsys, ok,
            "twins cancellation (ms under tail, sm under head corruption)",
            f"2x{B} cases, loss == margin * batch exactly")


def test_loss_arithmetic(capsys):
    """Hand-computed hinge max(4 - (-1) + (-4), 0) = 1 is reproduced exactly;
    a zero-hinge batch yields exactly zero gradients."""
    params = ModelParams(struct_emb=np.array([[0.0], [-1.0], [3.0], [5.0]]),
                         rel_emb=np.array([[0.0]]),
                         proj=np.zeros((1, 1)))
    feats = generate_features(4, 1, mode="zeros")
    positives = np.array([(0, 0, 1)], dtype=np.int64)
    negs = NegativeBatch(positives,
                         slot=np.array([[SLOT_TAIL, SLOT_TAIL]]),
                         replacement=np.array([[2, 3]]),
                         mode=MODE_ENTITY)
    # F(pos) = -|0 + 0 - (-1)| = -1; negatives score -3 and -5, mean -4
    cfg = TrainConfig(margin=4.0, strategy="normal",
                      mask=ScoreMask.from_names("ss"), p=1)
    loss = batch_loss(params, feats, positives, negs, cfg)

    relaxed = cfg.with_overrides(margin=3.0)  # hinge closes at margin 3
    grads, report = batch_gradients(params, feats, positives, negs, relaxed)
    zero_grads = (report.loss == 0.0
                  and all(np.all(g == 0.0) for g in grads.values()))
    verdict(capsys, loss == 1.0 and zero_grads,
            "hinge arithmetic (hand example exact, zero-hinge => zero grads)",
            f"loss={loss}")


def test_learning_sanity(capsys):
    """Planted-translation graph (20 entities, features correlated to
    structure): both strategies reach filtered test MRR >= 0.9 with the
    full mask in <= 500 epochs and under 5 minutes total."""
    start = time.perf_counter()
    graph, feats = planted_grid(seed=0, nx=5, ny=4, d_m=32)
    results = {}
    for strategy in ("normal", "twins"):
        cfg = TrainConfig(margin=8.0, learning_rate=0.02, n_batches=2, k=16,
                          epochs=500, seed=1, strategy=strategy, p=1,
                          d_e=16, d_m=32, per_pair=True,
                          eval_every=50, patience=3)
        params, _ = train(graph, feats, cfg)
        results[strategy] = evaluate(params, feats, graph, EvalConfig()).mrr
    elapsed = time.perf_counter() - start
    ok = all(m >= 0.9 for m in results.values()) and elapsed < 300
    verdict(capsys, ok,
            "learning sanity (planted translations, both strategies)",
            f"normal MRR {results['normal']:.3f}, "
            f"twins MRR {results['twins']:.3f}, {elapsed:.0f}s")


def test_wn9_structural_reproduction(capsys):
    """Structural-only training on the WN9 split with the published
    hyperparameters lands in MRR 0.766 +/- 0.06. Needs the dataset on disk
    (MMKGE_WN9_DIR); it cannot be downloaded in this sandbox."""
    wn9_dir = os.environ.get("MMKGE_WN9_DIR")
    if not wn9_dir:
        with capsys.disabled():
            print("SKIP: WN9 structural reproduction "
                  "(set MMKGE_WN9_DIR to a WN9 dataset directory)")
        pytest.skip("WN9 dataset not available offline")
    graph = load_graph(wn9_dir)
    assert len(graph.train) == 11741
    feats = generate_features(graph.entity_count, 768, "xavier", seed=0)
    base = TrainConfig(margin=8.0, learning_rate=2e-5, n_batches=100, k=16,
                       epochs=1000, seed=0, mask=ScoreMask.from_names("ss"),
                       eval_every=25, patience=4)
    mrrs = {}
    for strategy in ("normal", "twins"):
        params, _ = train(graph, feats, base.with_overrides(strategy=strategy))
        mrrs[strategy] = evaluate(params, feats, graph, EvalConfig(
            mask=ScoreMask.from_names("ss"))).mrr
    ok = (abs(mrrs["normal"] - 0.766) <= 0.06
          and mrrs["twins"] >= mrrs["normal"] - 1e-9)
    verdict(capsys, ok, "WN9 structural-only reproduction",
            f"normal MRR {mrrs['normal']:.3f}, twins MRR {mrrs['twins']:.3f}")


def _synthetic_large_graph(rng, entity_count, relation_count,
                           n_train, n_valid, n_test):
    total = n_train + n_valid + n_test
    seen, rows = set(), []
    while len(rows) < total:
        need = total - len(rows)
        h = rng.integers(0, entity_count, size=need)
        r = rng.integers(0, relation_count, size=need)
        t = rng.integers(0, entity_count, size=need)
        for trip in zip(h.tolist(), r.tolist(), t.tolist()):
            if trip not in seen:
                seen.add(trip)
                rows.append(trip)
    trips = np.array(rows, dtype=np.int64)
    return make_graph(entity_count, relation_count,
                      train=trips[:n_train],
                      valid=trips[n_train:n_train + n_valid],
                      test=trips[n_train + n_valid:])


def test_inference_speed(capsys):
    """Cached-projection evaluation of a 14541-entity synthetic graph:
    a full 20466-triple test pass (both directions) finishes in minutes,
    and on a common subset the cached path is not slower than recomputing
    projections per triple (median of 3 timed repeats each)."""
    rng = np.random.default_rng(77)
    g = _synthetic_large_graph(rng, 14541, 237, 30000, 1000, 20466)
    feats = random_features(rng, 14541, 768)
    params = init_params(14541, 237, d_e=128, d_m=768, seed=77)

    full = evaluate(params, feats, g, EvalConfig())
    subset_cached = bench_inference(params, feats, g, EvalConfig(),
                                    repeats=3, limit=20)
    subset_recompute = bench_inference(
        params, feats, g, EvalConfig(cache_projections=False),
        repeats=3, limit=20)
    with capsys.disabled():
        print(f"timing: full cached pass {full.seconds:.1f}s for "
              f"{full.n_triples} triples; 20-triple subset medians "
              f"cached {subset_cached['median']:.3f}s vs "
              f"recompute {subset_recompute['median']:.3f}s")
    ok = (full.seconds < 900.0
          and subset_cached["median"] <= subset_recompute["median"])
    verdict(capsys, ok, "inference speed (cached projections, 14541 entities)",
            f"full pass {full.seconds:.1f}s")


def test_format_roundtrips(capsys, tmp_path):
    """MMKF and MMKC round-trip bit-exactly; truncated or bad-magic files
    are rejected with the dedicated error types."""
    rng = np.random.default_rng(88)
    g = random_graph(rng, entity_count=7, n_triples=25)
    feats = random_features(rng, 7, 9)

    fpath = tmp_path / "f.mmkf"
    write_features(fpath, feats)
    loaded = load_features(fpath, g)
    fpath2 = tmp_path / "f2.mmkf"
    write_features(fpath2, loaded)
    mmkf_ok = (fpath.read_bytes() == fpath2.read_bytes()
               and np.array_equal(loaded.vectors, feats.vectors))

    params = init_params(7, g.relation_count, d_e=4, d_m=9, seed=88)
    cpath = tmp_path / "c.mmkc"
    save_checkpoint(cpath, params)
    reloaded = load_checkpoint(cpath)
    cpath2 = tmp_path / "c2.mmkc"
    save_checkpoint(cpath2, reloaded)
    mmkc_ok = cpath.read_bytes() == cpath2.read_bytes()

    errors_ok = True
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"JUNKJUNKJUNKJUNKJUNKJUNK")
    for loader, err in ((lambda p: load_features(p, g), FeatureFileError),
                        (load_checkpoint, CheckpointError)):
        try:
            loader(bad)
            errors_ok = False
        except err:
            pass
        trunc = tmp_path / f"trunc-{err.__name__}.bin"
        src = fpath if err is FeatureFileError else cpath
        trunc.write_bytes(src.read_bytes()[:-7])
        try:
            loader(trunc)
            errors_ok = False
        except err:
            pass

    verdict(capsys, mmkf_ok and mmkc_ok and errors_ok,
            "format round-trips (MMKF/MMKC bit-exact, corrupt files rejected)")
