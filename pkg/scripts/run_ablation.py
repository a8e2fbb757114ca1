"""Post-processing x objective ablation on synthetic picks over several seeds."""
import argparse
import dataclasses
import json

from collab_act.toy_policy import TrainConfig, flag_grid, run_ablation
from collab_act.trajectory_store import generate_synthetic_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--n", type=int, default=60, help="demonstrations per task")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--jobs", type=int, default=4)
    args = ap.parse_args()
    grid = flag_grid(use_postprocessing=[True, False], action_objective=["l2", "directional"])
    for seed in args.seeds:
        picks = [t for t in generate_synthetic_dataset(seed, args.n) if t.task_id == "pick"]
        cfg = TrainConfig(seed=seed, epochs=args.epochs)
        for r in run_ablation(picks, cfg, grid, jobs=args.jobs):
            m = r.metrics
            print(json.dumps({"seed": seed, **r.flags, "raw_nmse": round(m["raw_nmse"], 5),
                              "raw_mse": round(m["raw_mse"], 5)}))


if __name__ == "__main__":
    main()
