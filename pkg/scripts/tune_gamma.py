"""Grid-search the consensus step-size on a validation split, then score the winner on test.

    python3 scripts/tune_gamma.py --algorithm adag --compressor topk:0.99 \
        --grid 3e-4,1e-3,3e-3,1e-2,3e-2,0.1,0.3
"""

import argparse

from adagossip.harness import parse_config, run_experiment, sweep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--algorithm", required=True, choices=["deepsqueeze", "choco", "adag"])
    ap.add_argument("--compressor", default="topk:0.99")
    ap.add_argument("--topology", default="ring")
    ap.add_argument("--agents", type=int, default=16)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seeds", default="1,2,3")
    ap.add_argument("--val-samples", type=int, default=1000)
    ap.add_argument("--grid", default="3e-4,1e-3,3e-3,1e-2,3e-2,0.1,0.3")
    ap.add_argument("--out", help="sweep CSV for the validation scores")
    args = ap.parse_args()

    grid = [float(g) for g in args.grid.split(",")]
    common = dict(
        algorithm=args.algorithm,
        compressor=args.compressor,
        topology=args.topology,
        agents=args.agents,
        epochs=args.epochs,
        seeds=args.seeds,
    )
    val_cfg = parse_config(overrides=dict(common, gamma=grid[0], val_samples=args.val_samples))
    rows = sweep(val_cfg, "gamma", grid, out=args.out)
    for r in rows:
        mark = "  <- best" if r["best"] else ""
        print(f"gamma={r['value']:<8g} val acc {100 * r['mean_acc']:.3f} +- {100 * r['std_acc']:.3f}{mark}")
    best = next(r["value"] for r in rows if r["best"])
    test = run_experiment(parse_config(overrides=dict(common, gamma=best))).summary
    print(f"test acc at gamma={best:g}: {100 * test['mean_acc']:.3f} +- {100 * test['std_acc']:.3f}")


if __name__ == "__main__":
    main()
