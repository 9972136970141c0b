"""
Pruning the edges of a trained KAN actor
=========================================

Edges whose mean |phi| over visited states is small contribute little to the
action, so masking them barely changes the return.
"""

import tempfile
from pathlib import Path

from kanppo.harness import RunConfig, cmd_prune, cmd_train

out = Path(tempfile.mkdtemp())
cfg = RunConfig.from_mapping({"env": "point-reacher", "arch": "kan-actor", "seeds": [0],
                              "total_steps": 100_000, "lr": 1e-3, "out_dir": str(out)})
ckpt = cmd_train(cfg)[0].checkpoint_path

for threshold in (0.0, 0.01, 0.05, None):
    rep = cmd_prune(ckpt, threshold, probe_episodes=5, eval_episodes=50, out=out / "pruned.json")
    label = "searched" if threshold is None else f"{threshold:g}"
    print(f"threshold {label:<8} -> {rep.threshold:.4f}: {rep.edges_pruned}/{rep.edges_total} edges pruned, "
          f"return {rep.return_before:.1f} -> {rep.return_after:.1f}")
