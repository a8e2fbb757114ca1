"""Held-out aux loss on the training collaborator vs. every other collaborator."""
import argparse

from collab_act.toy_policy import trainer_overfit_experiment
from collab_act.trajectory_store.synthetic import COLLABORATORS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1])
    args = ap.parse_args()
    for seed in args.seeds:
        for name in sorted(COLLABORATORS):
            same, other = trainer_overfit_experiment(seed, name)
            print(f"seed {seed} A->{name}: same {same[-1]:.4f} other {other[-1]:.4f} ratio {other[-1] / same[-1]:.2f}")


if __name__ == "__main__":
    main()
