"""Train a small unrolled network and compare it with FBP, Norm and WaveFFT.

Defaults follow the desk acceptance setup (K=5, 8 channels, 200 training
samples, FBP backward operator). 5000 steps take roughly ten minutes on
one core; use ``--steps 500`` for a quick look.

    python demos/train_desk.py --steps 500 --mode full --ckpt /tmp/full.srwt
"""
import argparse
import logging
import time

from threadpoolctl import threadpool_limits

from ringct.evaluate import estimator_scores, evaluate
from ringct.geometry import geometry_preset
from ringct.model import MODES
from ringct.synthesis import generate_corpus
from ringct.train import TrainConfig, save_checkpoint, train

ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
ap.add_argument("--steps", type=int, default=5000)
ap.add_argument("--mode", choices=MODES, default="full")
ap.add_argument("--adjoint", action="store_true", help="use A^T instead of FBP in the gradient step")
ap.add_argument("--train-count", type=int, default=200)
ap.add_argument("--test-count", type=int, default=40)
ap.add_argument("--ckpt", default=None)
args = ap.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

g = geometry_preset("desk")
with threadpool_limits(limits=1):
    tr = generate_corpus(g, args.train_count, seed=1)
    te = generate_corpus(g, args.test_count, seed=2)
    cfg = TrainConfig(steps=args.steps, mode=args.mode, K=5, channels=8,
                      precond="adjoint" if args.adjoint else "fbp", log_every=max(1, args.steps // 10))
    t0 = time.perf_counter()
    model, state = train(tr, cfg, g)
    print(f"trained {args.steps} steps in {time.perf_counter() - t0:.0f} s")
    if args.ckpt:
        save_checkpoint(args.ckpt, model, state, cfg)

    report = evaluate(te, "fbp,norm,wavefft,synthrar", g, [model])
    print()
    print(report.table())
    for key, val in estimator_scores(te, model, g).items():
        print(f"{key:<14} {val}")
