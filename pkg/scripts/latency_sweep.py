"""Replay-oracle latency and drop rate across policy delays and sensor rates."""
import argparse

from collab_act.inference_sim import ReplayPolicy, SimConfig, SyntheticWorld, latency_report, run_episode


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rates", type=float, nargs="+", default=[5.0, 10.0, 20.0])
    ap.add_argument("--delays", type=float, nargs="+", default=[0.05, 0.1, 0.25, 0.5])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print("rate_hz delay_s  status  mean_s  p95_s  drop_rate")
    for rate in args.rates:
        for delay in args.delays:
            world = SyntheticWorld(args.seed, 0)
            res = run_episode(ReplayPolicy(world.demo_actions, 16), world,
                              SimConfig(sensor_rate_hz=rate, policy_delay_s=delay))
            rep = latency_report(res.records)
            print(f"{rate:7.1f} {delay:7.2f} {res.status:>7} {rep['mean']:7.3f} {rep['p95']:6.3f} {rep['drop_rate']:10.3f}")


if __name__ == "__main__":
    main()
