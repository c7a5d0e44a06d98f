#!/usr/bin/env python3
"""Generate a synthetic dataset and run the full ablation grid on it.

This is the desk-scale version of the evaluation protocol: twelve rows
(six modality masks, each with and without auxiliary pretraining), each row
trained over several seeds and reported as mean +/- std of the per-seed
maximum accuracy. With --quick the grid shrinks to two seeds and short
training so the whole thing finishes in a few minutes.
"""
import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from dataclasses import replace

from inon.harness import (
    ExperimentConfig,
    ablation_rows,
    baseline_majority_class,
    baseline_random_report,
    load_task_data,
    render_table,
    run_protocol,
)
from inon.synth import SynthConfig, generate_dataset


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join("runs", "synth_experiment"))
    ap.add_argument("--relation", default="in", choices=("in", "on"))
    ap.add_argument("--n-objects", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--difficulty", default="separable",
                    choices=("separable", "noisy"))
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--n-seeds", type=int, default=10)
    ap.add_argument("--quick", action="store_true",
                    help="2 seeds, 6 epochs, smaller model")
    args = ap.parse_args(argv)

    if args.quick:
        args.epochs, args.n_seeds = 6, 2

    t0 = time.monotonic()
    data_dir = os.path.join(args.out, "data")
    synth = SynthConfig(seed=args.seed, n_objects=args.n_objects,
                        container_fraction=0.4, relation=args.relation,
                        difficulty=args.difficulty)
    ds = generate_dataset(synth, data_dir)
    print(f"dataset: {len(ds.catalog.objects)} objects under {data_dir} "
          f"({time.monotonic() - t0:.0f}s)")

    config = ExperimentConfig(
        ds.manifest_path, ds.store_path, args.relation,
        epochs=args.epochs, seeds=tuple(range(args.n_seeds)),
        base_filters=4 if args.quick else 8,
        hidden=32 if args.quick else 64,
        dropout_p=0.0 if args.quick else 0.3,
    )
    data = load_task_data(config.manifest_path, config.store_path, args.relation)

    rows = []
    for name, mask, pre in ablation_rows():
        kind = "ego_obj" if mask.ego else "obj_only"
        report = run_protocol(replace(config, kind=kind, mask=mask, pretrain=pre),
                              data)
        rows.append((name, report))
        md, sd = report.summary("dev")
        print(f"  {name:<14} dev {md:.2f} ± {sd:.2f} "
              f"({time.monotonic() - t0:.0f}s elapsed)")

    mc_dev = baseline_majority_class(data.robot["train"], data.robot["dev"])
    mc_test = baseline_majority_class(data.robot["train"], data.robot["test"])
    rnd_dev = baseline_random_report(data.robot["dev"], range(args.n_seeds))
    rnd_test = baseline_random_report(data.robot["test"], range(args.n_seeds))

    table = render_table(rows)
    table += (f"{'MC':<14}  {mc_dev:10.2f}    {mc_test:10.2f}\n"
              f"{'Rand':<14}  {rnd_dev[0]:.2f} ± {rnd_dev[1]:.2f}"
              f"   {rnd_test[0]:.2f} ± {rnd_test[1]:.2f}\n")
    print()
    print(table)
    with open(os.path.join(args.out, "table.txt"), "w", encoding="utf-8") as f:
        f.write(table)
    print(f"total {time.monotonic() - t0:.0f}s; table under {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
