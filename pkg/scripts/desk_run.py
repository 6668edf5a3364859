"""Full desk-scale experiment: data, joint and channel-wise training, evaluation, timing.

    python3 scripts/desk_run.py --workdir runs/ci --preset ci

Every stage goes through the ``sctk`` command line, so the outputs are the
same files the individual commands would write.  Stages whose outputs already
exist are skipped; pass --fresh to redo them.
"""

import argparse
import shutil
import sys
import time
from pathlib import Path

from sctk.cli import main
from sctk.io import read_csv


def stage(name, done: Path, argv, fresh):
    if done.exists() and not fresh:
        print(f"[skip] {name}: {done} exists")
        return
    t0 = time.perf_counter()
    code = main(argv)
    if code:
        sys.exit(f"{name} failed with exit code {code}")
    print(f"[done] {name} in {time.perf_counter() - t0:.0f} s")


def run(args):
    work = Path(args.workdir)
    if args.fresh and work.exists():
        shutil.rmtree(work)
    common = ["--preset", args.preset, "--seed", str(args.seed), "--threads", str(args.threads)]
    if args.config:
        common += ["--config", args.config]
    data, models = work / "data", work / "models"
    stage("gen-data", data / "manifest.jsonl", ["gen-data", "--out", str(data), "--pgm", "3"] + common, args.fresh)
    stage("train joint", models / "joint.sctm",
          ["train", "--data", str(data), "--out", str(models / "joint.sctm")] + common, args.fresh)
    if not args.skip_single:
        stage("train single-channel", models / "single.sctm",
              ["train", "--data", str(data), "--out", str(models / "single.sctm"), "--single-channel"] + common,
              args.fresh)
    stage("evaluate", work / "eval" / "summary.csv",
          ["evaluate", "--data", str(data), "--out", str(work / "eval"), "--model", str(models / "joint.sctm"),
           "--noise-study", "--save-recon"] + common, args.fresh)
    if not args.skip_single:
        stage("evaluate single-channel", work / "eval_single" / "summary.csv",
              ["evaluate", "--data", str(data), "--out", str(work / "eval_single"), "--methods", "dsir",
               "--model", str(models / "single.sctm")] + common, args.fresh)
    if not args.skip_bench:
        stage("bench", work / "timing.csv",
              ["bench", "--out", str(work / "timing.csv"), "--single-thread"] + common, args.fresh)

    print("\nmethod    views   TV        SSIM     MAE")
    for row in read_csv(work / "eval" / "summary.csv"):
        print(f"{row['method']:<9} {row['views']:>5}   {float(row['tv']):.4f}    {float(row['ssim']):.4f}   "
              f"{float(row['mae']):.4f}")
    if not args.skip_single:
        single = read_csv(work / "eval_single" / "summary.csv")[0]
        print(f"{'dsir-1ch':<9} {single['views']:>5}   {float(single['tv']):.4f}    {float(single['ssim']):.4f}   "
              f"{float(single['mae']):.4f}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--workdir", default="runs/ci")
    p.add_argument("--preset", default="ci", choices=("ci", "paper"))
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--fresh", action="store_true")
    p.add_argument("--skip-single", action="store_true")
    p.add_argument("--skip-bench", action="store_true")
    run(p.parse_args())
