#=========================================================================
# 03_train_synthetic.py
#=========================================================================
# Train on synthetic vessel trees and compare held-out predictions with a
# greedy nearest-neighbour linker.  Pass an epoch count to run longer:
#
#     python demos/03_train_synthetic.py 60

import sys
import time

import numpy as np

from mfnrefine.experiment import split_folds
from mfnrefine.inference import threshold
from mfnrefine.metrics import evaluate_edges, greedy_nn_edges
from mfnrefine.network import TrainConfig, infer, train
from mfnrefine.synth import make_dataset

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 30

#-------------------------------------------------------------------------
# Data: 8 corrupted trees, fold 0 held out
#-------------------------------------------------------------------------

graphs = make_dataset(8, seed=1)
train_set, test_set = split_folds(graphs, 0)
print(f"{len(train_set)} training graphs, {len(test_set)} held out, "
      f"{graphs[0].n_nodes} nodes / {graphs[0].n_pairs} candidate pairs in the first")

#-------------------------------------------------------------------------
# Training
#-------------------------------------------------------------------------

t0 = time.perf_counter()
# a larger step than the default so a short run gets past the initial plateau
theta, curves, _ = train(train_set, TrainConfig(epochs=epochs, lr=0.01))
print(f"trained {epochs} epochs in {time.perf_counter() - t0:.1f} s")
for c in curves[:: max(1, epochs // 5)]:
    print(f"  epoch {c['epoch']:3d}  train {c['train_loss']:.4f}  val {c['val_loss']:.4f}  acc {c['val_acc']:.4f}")

elbos = np.array(curves[-1]["elbo_per_layer"])
print("per-layer ELBO at the last epoch:", np.round(elbos, 2))

#-------------------------------------------------------------------------
# Held-out evaluation
#-------------------------------------------------------------------------

print("\ngraph   F1     d_err   greedy d_err")
for g in test_set:
    pred = threshold(infer(g, theta)).undirected_edges()
    ours = evaluate_edges(g, pred)
    base = evaluate_edges(g, greedy_nn_edges(g))
    d = ours["centerline"]["d_err"]  # None when nothing is predicted
    print(f"{g.meta['index']:5d}   {ours['undirected']['f1']:.3f}  "
          f"{'  n/a ' if d is None else f'{d:.4f}'}  {base['centerline']['d_err']:.4f}")
