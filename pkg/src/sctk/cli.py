"""``sctk`` command line: gen-data, reconstruct, train, evaluate, bench."""

from __future__ import annotations

import argparse
import logging
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, slice_seed
from .core import NumericalFailure, ScaleReference
from .dataset import generate_slice
from .fbp import fbp_stack
from .io import (append_csv_row, dump_channels_pgm, read_manifest, read_volume, write_csv, write_json,
                 write_manifest, write_volume)
from .iterative import art_tv_stack, select_tnv_lambda, tnv_stack
from .metrics import image_tv, mae, spectral_profile, ssim
from .network import (build_unet, checkpoint_metadata, forward, load_checkpoint,
                      refine, save_checkpoint, train)
from .network.unet import StateError
from .phantom import NoiseConfig, add_noise, build_material_library, subsample_indices

log = logging.getLogger("sctk")

EXIT_OK, EXIT_ARGS, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
METHODS = ("fbp", "art-tv", "tnv", "dsir")
SPLITS = ("train", "val", "test")
REF = ScaleReference()


class ArgumentProblem(ValueError):
    pass


# --- shared helpers -----------------------------------------------------------

def _pool_map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _limit_threads(single: bool):
    if not single:
        return None
    import numba
    from threadpoolctl import threadpool_limits
    numba.set_num_threads(1)
    return threadpool_limits(1)


def _meta(cfg: RunConfig, kind: str, **extra) -> dict:
    return {"kind": kind, "config_hash": cfg.digest(), "geometry_hash": cfg.geometry_digest(),
            "energies_keV": list(cfg.grid.energies_keV), "config": cfg.to_flat(), **extra}


def _geometry_for(cfg: RunConfig, views: int):
    if views == cfg.geometry.num_views_sparse:
        return cfg.geometry.sparse()
    if views == cfg.geometry.num_views_dense:
        return cfg.geometry.dense()
    raise ArgumentProblem(f"sinogram has {views} views; config expects {cfg.geometry.num_views_sparse} "
                          f"or {cfg.geometry.num_views_dense}")


def _check_geometry(cfg: RunConfig, meta: dict, what: str):
    found = meta.get("geometry_hash")
    if found != cfg.geometry_digest():
        raise ArgumentProblem(f"{what}: geometry hash {found} does not match config ({cfg.geometry_digest()})")


def _load_model(path, cfg: RunConfig):
    if path is None:
        raise ArgumentProblem("dsir needs --model")
    model = load_checkpoint(path)
    mc = model.config
    if mc.input_size != cfg.geometry.image_size or mc.in_channels not in (1, cfg.energy.num_channels):
        raise ArgumentProblem(f"model ({mc.in_channels} ch, {mc.input_size}px) does not fit the configured "
                              f"data ({cfg.energy.num_channels} ch, {cfg.geometry.image_size}px)")
    return model


def reconstruct_array(cfg: RunConfig, method: str, sino: np.ndarray, model=None, lam: float | None = None):
    """Reconstruct an (S, V, D) sinogram with the named method; returns (S, N, N)."""
    geo = _geometry_for(cfg, sino.shape[1])
    sino = np.asarray(sino, dtype=np.float64)
    if method == "fbp":
        return fbp_stack(sino, geo, cfg.filter)
    if method == "art-tv":
        return art_tv_stack(sino, geo, cfg.art)
    if method == "tnv":
        tnv_cfg = cfg.tnv if lam is None else replace(cfg.tnv, lam=lam)
        return tnv_stack(sino, geo, tnv_cfg)
    if method == "dsir":
        if model is None:
            raise ArgumentProblem("dsir needs a trained model")
        return refine(model, fbp_stack(sino, geo, cfg.filter)[None], REF)[0]
    raise ArgumentProblem(f"unknown method {method!r}; expected one of {METHODS}")


# --- gen-data -----------------------------------------------------------------

def _gen_one(job):
    cfg, out_dir, split, index = job
    seed = slice_seed(cfg.data.seed, split, index)
    sid = f"{split}_{index:05d}"
    d = generate_slice(seed, cfg.geometry, cfg.grid, build_material_library(), cfg.scene, cfg.noise, cfg.filter)
    items = {"phantom": ("image", d.phantom), "dense": ("sinogram", d.dense_sino),
             "sparse": ("sinogram", d.sparse_sino), "fbp9": ("image", d.fbp_sparse)}
    if cfg.data.art_targets or cfg.data.target == "art-tv-74":
        items["art74"] = ("image", art_tv_stack(d.dense_sino, cfg.geometry.dense(), cfg.art))
    files = {}
    for kind, (axis, arr) in items.items():
        rel = f"{split}/{sid}_{kind}.sctv"
        write_volume(out_dir / rel, arr, axis, _meta(cfg, kind, slice_id=sid, seed=seed))
        files[kind] = rel
    return {"id": sid, "split": split, "index": index, "seed": seed, "files": files,
            "config_hash": cfg.digest(), "geometry_hash": cfg.geometry_digest()}


def cmd_gen_data(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    counts = {"train": cfg.data.train_count, "val": cfg.data.val_count, "test": cfg.data.test_count}
    jobs = [(cfg, out, split, i) for split in SPLITS for i in range(counts[split])]
    records = _pool_map(_gen_one, jobs, args.workers)
    write_manifest(out / "manifest.jsonl", records)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    if args.pgm:
        for rec in records[: args.pgm]:
            for kind in ("phantom", "fbp9"):
                vol = read_volume(out / rec["files"][kind])
                dump_channels_pgm(out / "pgm", f"{rec['id']}_{kind}", vol.data)
    write_json(out / "timing.json", {"wall_s": time.perf_counter() - t0, "slices": len(records)})
    log.info("wrote %d slices to %s", len(records), out)
    return EXIT_OK


# --- reconstruct ----------------------------------------------------------------

def cmd_reconstruct(args, cfg: RunConfig) -> int:
    if args.method == "dsir" and args.model is None:
        raise ArgumentProblem("--method dsir requires --model")
    vol = read_volume(args.input)
    if vol.axis != "sinogram":
        raise ArgumentProblem(f"{args.input} holds an {vol.axis}, not a sinogram")
    _check_geometry(cfg, vol.meta, str(args.input))
    model = _load_model(args.model, cfg) if args.method == "dsir" else None
    t0 = time.perf_counter()
    rec = reconstruct_array(cfg, args.method, vol.data, model, args.lam)
    wall = time.perf_counter() - t0
    extra = {"method": args.method, "views": int(vol.data.shape[1]), "source": vol.meta.get("slice_id")}
    if args.method == "tnv":
        extra["tnv_lambda"] = args.lam if args.lam is not None else cfg.tnv.lam
    if model is not None:
        extra["model_config_hash"] = checkpoint_metadata(args.model).get("config_hash")
    write_volume(args.output, rec, "image", _meta(cfg, "reconstruction", **extra))
    write_json(str(args.output) + ".timing.json", {"wall_ms": 1e3 * wall, "method": args.method})
    if args.pgm_dir:
        dump_channels_pgm(args.pgm_dir, Path(args.output).stem, rec)
    log.info("%s reconstruction written to %s (%.1f ms)", args.method, args.output, 1e3 * wall)
    return EXIT_OK


# --- train ----------------------------------------------------------------------

def _load_split(root: Path, records, kind: str) -> np.ndarray:
    return np.stack([read_volume(root / r["files"][kind]).data for r in records])


def _records(cfg: RunConfig, root: Path) -> dict[str, list[dict]]:
    records = read_manifest(root / "manifest.jsonl")
    for rec in records:
        _check_geometry(cfg, rec, f"manifest record {rec.get('id')}")
    return {s: [r for r in records if r["split"] == s] for s in SPLITS}


def pick_channels(count: int, channels: int, seed: int) -> np.ndarray:
    """One channel per slice for the single-channel variant, fixed by seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, 77])).integers(channels, size=count)


def cmd_train(args, cfg: RunConfig) -> int:
    root = Path(args.data)
    splits = _records(cfg, root)
    if not splits["train"]:
        raise ArgumentProblem("manifest has no training slices")
    target_kind = "phantom" if cfg.data.target == "phantom" else "art74"
    x = (_load_split(root, splits["train"], "fbp9") / REF.max_attenuation).astype(np.float32)
    y = (_load_split(root, splits["train"], target_kind) / REF.max_attenuation).astype(np.float32)
    vx = vy = None
    if splits["val"]:
        vx = (_load_split(root, splits["val"], "fbp9") / REF.max_attenuation).astype(np.float32)
        vy = (_load_split(root, splits["val"], target_kind) / REF.max_attenuation).astype(np.float32)
    net_cfg = cfg.unet
    if args.single_channel:
        net_cfg = replace(net_cfg, in_channels=1, out_channels=1)
        pick = pick_channels(len(x), x.shape[1], cfg.train.seed)
        x, y = x[np.arange(len(x)), pick][:, None], y[np.arange(len(y)), pick][:, None]
        if vx is not None:
            vpick = pick_channels(len(vx), vx.shape[1], cfg.train.seed + 1)
            vx, vy = vx[np.arange(len(vx)), vpick][:, None], vy[np.arange(len(vy)), vpick][:, None]
    model = build_unet(net_cfg, cfg.train.seed).astype(np.float32)
    out = Path(args.out)
    loss_csv = Path(args.loss_csv) if args.loss_csv else out.with_name(out.name + ".losses.csv")
    loss_csv.parent.mkdir(parents=True, exist_ok=True)
    loss_csv.unlink(missing_ok=True)
    header = ["epoch", "train_loss", "val_loss"]

    def on_epoch(epoch, tr, va):
        if epoch == 0:
            loss_csv.unlink(missing_ok=True)  # a collapse restart begins a fresh curve
        append_csv_row(loss_csv, header, [epoch, float(tr), "" if va is None else float(va)])

    t0 = time.perf_counter()
    result = train(model, x, y, vx, vy, cfg.train, callback=on_epoch)
    wall = time.perf_counter() - t0
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out, {"config_hash": cfg.digest(), "geometry_hash": cfg.geometry_digest(),
                                 "config": cfg.to_flat(), "single_channel": bool(args.single_channel),
                                 "train_slices": len(x), "target": cfg.data.target,
                                 "restarts": result.restarts})
    write_json(str(out) + ".timing.json", {"wall_s": wall, "epochs": cfg.train.epochs})
    log.info("checkpoint written to %s after %.0f s", out, wall)
    return EXIT_OK


# --- evaluate -------------------------------------------------------------------

def _recon_job(job):
    cfg, method, sino, lam = job
    return reconstruct_array(cfg, method, sino, None, lam)


def _choose_lambda(cfg: RunConfig, root: Path, splits) -> float:
    if not cfg.eval.select_lambda or not splits["val"]:
        return cfg.tnv.lam
    rec = splits["val"][0]
    sino = read_volume(root / rec["files"]["sparse"]).data.astype(np.float64)
    truth = read_volume(root / rec["files"]["phantom"]).data.astype(np.float64)
    lam = select_tnv_lambda(sino, truth, cfg.geometry.sparse(), lambda r, t: ssim(r, t)[0], iters=cfg.tnv.iters)
    log.info("tnv lambda %.3g selected on %s", lam, rec["id"])
    return lam


def _collect(cfg, args, root, tests, method, model, lam):
    """Reconstructions for one method, keyed by slice id; missing ones are skipped."""
    out, missing = {}, []
    if args.recon_dir:
        for rec in tests:
            path = Path(args.recon_dir) / f"{rec['id']}_{method}.sctv"
            if not path.exists():
                missing.append(rec["id"])
                continue
            vol = read_volume(path)
            _check_geometry(cfg, vol.meta, str(path))
            out[rec["id"]] = vol.data.astype(np.float64)
        return out, missing
    if method == "dsir" and model is None:
        return out, [r["id"] for r in tests]
    sinos = [read_volume(root / r["files"]["sparse"]).data for r in tests]
    if method == "dsir":
        geo = cfg.geometry.sparse()
        fbps = np.stack([fbp_stack(s.astype(np.float64), geo, cfg.filter) for s in sinos])
        recs = refine(model, fbps, REF)
    else:
        recs = _pool_map(_recon_job, [(cfg, method, s, lam) for s in sinos], args.workers)
    return {r["id"]: img for r, img in zip(tests, recs)}, missing


def _noise_study(cfg, args, root, tests, model, lam, out_dir: Path):
    grid = cfg.grid
    targets = tuple(sorted({grid.nearest_channel(e) for e in cfg.eval.noise_energies_keV}))
    methods = [m for m in ("dsir", "tnv") if m != "dsir" or model is not None]
    inj_rows, ssim_rows = [], []
    sparse_idx = subsample_indices(cfg.geometry.num_views_dense, cfg.geometry.num_views_sparse)
    for sigma in cfg.eval.noise_sigmas:
        noise = NoiseConfig("gaussian", sigma=sigma, target_channels=targets)
        for rec in tests[: cfg.eval.noise_slices]:
            # noise enters at acquisition, before view subsampling
            base = read_volume(root / rec["files"]["dense"]).data.astype(np.float64)
            truth = read_volume(root / rec["files"]["phantom"]).data.astype(np.float64)
            dense_noisy = add_noise(base, noise, rec["seed"])
            delta = dense_noisy - base
            noisy = dense_noisy[:, sparse_idx]
            for c in range(grid.num_channels):
                inj_rows.append([sigma, rec["id"], c, grid.energies_keV[c], int(c in targets),
                                 sigma if c in targets else 0.0, float(delta[c].std())])
            for method in methods:
                img = reconstruct_array(cfg, method, noisy, model, lam)
                per = ssim(img, truth)[1]
                for c in range(grid.num_channels):
                    ssim_rows.append([sigma, rec["id"], method, c, grid.energies_keV[c], int(c in targets),
                                      float(per[c])])
    write_csv(out_dir / "noise_injection.csv",
              ["sigma", "slice", "channel", "energy_keV", "affected", "target_std", "measured_std"], inj_rows)
    write_csv(out_dir / "noise_ssim.csv",
              ["sigma", "slice", "method", "channel", "energy_keV", "affected", "ssim"], ssim_rows)
    summary = []
    for sigma in cfg.eval.noise_sigmas:
        for method in methods:
            for affected in (1, 0):
                vals = [r[6] for r in ssim_rows if r[0] == sigma and r[2] == method and r[5] == affected]
                summary.append([sigma, method, affected, float(np.mean(vals)) if vals else float("nan")])
    write_csv(out_dir / "noise_summary.csv", ["sigma", "method", "affected", "mean_ssim"], summary)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    root = Path(args.data)
    out_dir = Path(args.out)
    splits = _records(cfg, root)
    tests = splits["test"]
    if not tests:
        raise ArgumentProblem("manifest has no test slices")
    methods = tuple(args.methods.split(",")) if args.methods else cfg.eval.methods
    for m in methods:
        if m not in METHODS:
            raise ArgumentProblem(f"unknown method {m!r}")
    model = _load_model(args.model, cfg) if args.model else None
    lam = _choose_lambda(cfg, root, splits) if "tnv" in methods or args.noise_study else cfg.tnv.lam
    reference = args.reference
    truths = {r["id"]: read_volume(root / r["files"]["phantom"]).data.astype(np.float64) for r in tests}
    recons, skipped = {}, {}
    for method in methods:
        recons[method], missing = _collect(cfg, args, root, tests, method, model, lam)
        if missing:
            skipped[method] = missing
            log.warning("%s: %d reconstruction(s) missing, skipped: %s", method, len(missing),
                        ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else ""))
    if reference != "phantom":
        if reference not in recons:
            raise ArgumentProblem(f"reference {reference!r} is neither 'phantom' nor an evaluated method")
        truths = recons[reference]
    grid = cfg.grid
    views = cfg.geometry.num_views_sparse
    rows, ch_rows, prof_rows = [], [], []
    patches = cfg.eval.patch_specs()
    for method in methods:
        for rec in tests:
            img = recons[method].get(rec["id"])
            if img is None or rec["id"] not in truths:
                continue
            truth = truths[rec["id"]]
            tv, tv_c = image_tv(img)
            s, s_c = ssim(img, truth)
            m, m_c = mae(img, truth)
            rows.append([rec["id"], method, views, tv, s, m])
            for c in range(grid.num_channels):
                ch_rows.append([rec["id"], method, views, c, grid.energies_keV[c], float(tv_c[c]), float(s_c[c]),
                                float(m_c[c])])
            for patch in patches:
                mean, std = spectral_profile(img, patch)
                ref_mean, _ = spectral_profile(truth, patch)
                for c in range(grid.num_channels):
                    prof_rows.append([rec["id"], method, patch.label, c, grid.energies_keV[c], float(mean[c]),
                                      float(std[c]), float(ref_mean[c])])
    write_csv(out_dir / "metrics.csv", ["slice", "method", "views", "tv", "ssim", "mae"], rows)
    write_csv(out_dir / "metrics_per_channel.csv",
              ["slice", "method", "views", "channel", "energy_keV", "tv", "ssim", "mae"], ch_rows)
    if patches:
        write_csv(out_dir / "profiles.csv",
                  ["slice", "method", "patch", "channel", "energy_keV", "mean", "std", "reference_mean"], prof_rows)
    summary = []
    for method in methods:
        sel = [r for r in rows if r[1] == method]
        if sel:
            summary.append(["mean", method, views, len(sel)] + [float(np.mean([r[k] for r in sel])) for k in (3, 4, 5)])
    write_csv(out_dir / "summary.csv", ["row", "method", "views", "slices", "tv", "ssim", "mae"], summary)
    if args.save_recon:
        for method in methods:
            for sid, img in recons[method].items():
                write_volume(out_dir / "recon" / f"{sid}_{method}.sctv", img, "image",
                             _meta(cfg, "reconstruction", method=method, slice_id=sid, views=views))
    if args.noise_study:
        _noise_study(cfg, args, root, tests, model, lam, out_dir)
    write_json(out_dir / "report.json", {"config_hash": cfg.digest(), "methods": list(methods), "reference": reference,
                                         "tnv_lambda": lam, "skipped": skipped, "test_slices": len(tests)})
    for row in summary:
        log.info("%-7s tv %.4f ssim %.4f mae %.4f (%d slices)", row[1], row[4], row[5], row[6], row[3])
    return EXIT_OK


# --- bench ----------------------------------------------------------------------

def _median_ms(fn, repeats: int) -> float:
    fn()  # warm-up (jit, caches)
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return 1e3 * statistics.median(times)


def cmd_bench(args, cfg: RunConfig) -> int:
    reps = cfg.bench.repeats
    d = generate_slice(slice_seed(cfg.data.seed, "test", 0), cfg.geometry, cfg.grid, build_material_library(),
                       cfg.scene, cfg.noise, cfg.filter)
    geo = cfg.geometry.sparse()
    s = cfg.energy.num_channels
    art_cfg = replace(cfg.art, outer_iters=cfg.bench.art_outer_iters)
    tnv_cfg = replace(cfg.tnv, iters=cfg.bench.tnv_iters, tol=0.0)
    joint = load_checkpoint(args.model) if args.model else build_unet(cfg.unet, 0)
    single = build_unet(replace(joint.config, in_channels=1, out_channels=1), 0)
    fbp_full = fbp_stack(d.sparse_sino, geo, cfg.filter)
    rows = []
    for channels in (1, s):
        sino = d.sparse_sino[:channels]
        fbp_in = fbp_full[None, :channels] / REF.max_attenuation
        net = single if channels == 1 else joint
        timed = {
            "fbp": lambda: fbp_stack(sino, geo, cfg.filter),
            "art-tv": lambda: art_tv_stack(sino, geo, art_cfg),
            "tnv": lambda: tnv_stack(sino, geo, tnv_cfg),
            "network": lambda: forward(net, fbp_in),
            "dsir": lambda: np.clip(forward(net, fbp_stack(sino, geo, cfg.filter)[None] / REF.max_attenuation),
                                    0, 1),
        }
        for name, fn in timed.items():
            ms = _median_ms(fn, reps)
            rows.append([name, channels, ms, ms / channels, reps])
            log.info("%-8s %2d ch  %10.2f ms", name, channels, ms)
    get = {(r[0], r[1]): r[2] for r in rows}
    summary = {
        "channels": s,
        "single_thread": bool(args.single_thread),
        "fbp_speedup_vs_art_per_channel": get[("art-tv", s)] / get[("fbp", s)],
        "joint_vs_channelwise_network": get[("network", s)] / (s * get[("network", 1)]),
        "dsir_vs_fbp_plus_network": get[("dsir", s)] / (get[("fbp", s)] + get[("network", s)]),
    }
    out = Path(args.out)
    write_csv(out, ["method", "channels", "median_ms", "per_channel_ms", "repeats"], rows)
    write_json(out.with_suffix(".json"), summary)
    log.info("joint/channelwise network ratio %.3f, fbp speed-up over art-tv %.0fx",
             summary["joint_vs_channelwise_network"], summary["fbp_speedup_vs_art_per_channel"])
    return EXIT_OK


# --- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'section.key = value' file")
    common.add_argument("--preset", choices=("ci", "paper"), default="ci")
    common.add_argument("--seed", type=int, help="overrides data.seed and train.seed")
    threads = common.add_mutually_exclusive_group()
    threads.add_argument("--threads", type=int, default=1, help="worker processes for per-slice work")
    threads.add_argument("--single-thread", action="store_true", help="one worker, one BLAS/numba thread")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sctk", description="Sparse-view spectral CT toolkit")
    parser.add_argument("--version", action="version", version=f"sctk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="simulate a dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", type=int, default=0, metavar="K", help="dump PGMs for the first K slices")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct one sinogram volume")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--model")
    p.add_argument("--lam", type=float, help="TNV lambda (default tnv.lam)")
    p.add_argument("--pgm-dir")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", parents=[common], help="train the refinement network")
    p.add_argument("--data", required=True, help="directory holding manifest.jsonl")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-csv")
    p.add_argument("--single-channel", action="store_true", help="train the channel-wise variant")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="metrics on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model")
    p.add_argument("--methods", help="comma list (default eval.methods)")
    p.add_argument("--recon-dir", help="read <slice>_<method>.sctv instead of reconstructing")
    p.add_argument("--reference", default="phantom", help="'phantom' or a method name")
    p.add_argument("--save-recon", action="store_true")
    p.add_argument("--noise-study", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", parents=[common], help="timing table")
    p.add_argument("--out", required=True, help="timing CSV path")
    p.add_argument("--model")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args.workers = 1 if args.single_thread else max(1, args.threads)
    try:
        cfg = load_config(args.config, args.preset, args.seed)
        with _limit_threads(args.single_thread) or nullcontext():
            return args.func(args, cfg)
    except NumericalFailure as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return EXIT_IO
    except (ValueError, StateError) as exc:
        log.error("%s", exc)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
