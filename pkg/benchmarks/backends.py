"""Compare the numba and numpy kernel backends on synthetic data.

Times training steps (loss + gradients) and full filtered evaluation
passes for each backend and prints a small table. Run as:

    python3 benchmarks/backends.py [--entities N] [--d-e D] [--d-m D]
"""

import argparse
import time

import numpy as np

from mmkge.data import FeatureTable, PROV_SYNTHETIC
from mmkge.evaluation import EvalConfig, evaluate
from mmkge.kernels import available_backends
from mmkge.model import init_params
from mmkge.sampling import sample_twins
from mmkge.training import TrainConfig, batch_gradients


def synthetic(rng, entities, relations, n_train, n_test):
    from mmkge.data import KnowledgeGraph

    def draw(n):
        return np.stack([rng.integers(0, entities, n),
                         rng.integers(0, relations, n),
                         rng.integers(0, entities, n)], axis=1).astype(np.int64)

    return KnowledgeGraph(
        entity_count=entities, relation_count=relations,
        entity_names={}, relation_names={},
        train=draw(n_train), valid=draw(50), test=draw(n_test))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--entities", type=int, default=2000)
    ap.add_argument("--relations", type=int, default=20)
    ap.add_argument("--d-e", type=int, default=64)
    ap.add_argument("--d-m", type=int, default=256)
    ap.add_argument("--train-steps", type=int, default=20)
    ap.add_argument("--batch-size", type=int, default=128)
    ap.add_argument("--k", type=int, default=16)
    ap.add_argument("--test-triples", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    graph = synthetic(rng, args.entities, args.relations, 5000,
                      args.test_triples)
    feats = FeatureTable(
        args.d_m,
        rng.normal(scale=0.3, size=(args.entities, args.d_m)).astype(np.float32),
        np.full(args.entities, PROV_SYNTHETIC, np.uint8))
    params = init_params(args.entities, args.relations, args.d_e, args.d_m)
    batch = graph.train[:args.batch_size]
    negs = sample_twins(graph, batch, args.k, seed=1)

    print(f"entities={args.entities} d_e={args.d_e} d_m={args.d_m} "
          f"batch={args.batch_size} k={args.k} test={args.test_triples}")
    print(f"{'backend':<8} {'train step (ms)':>16} {'eval pass (s)':>14}")
    for name in available_backends():
        cfg = TrainConfig(d_e=args.d_e, d_m=args.d_m, k=args.k, backend=name)
        batch_gradients(params, feats, batch, negs, cfg)  # warm up / compile
        t0 = time.perf_counter()
        for _ in range(args.train_steps):
            batch_gradients(params, feats, batch, negs, cfg)
        step_ms = (time.perf_counter() - t0) / args.train_steps * 1e3
        report = evaluate(params, feats, graph, EvalConfig(backend=name))
        print(f"{name:<8} {step_ms:>16.2f} {report.seconds:>14.2f}")


if __name__ == "__main__":
    main()
