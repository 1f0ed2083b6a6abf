"""Command line pipeline.

Five stages share one config and one output directory:

    generate  synthesize train/test trajectories and noisy training chunks
    reduce    singular spectrum, reduced basis, memory diagnostic
    train     fit every configured model family as a seeded ensemble
    predict   roll the ensembles forward on test windows, record errors
    report    merge per-model error curves, write a run summary

`run` chains all five. Every stage resolves the config the same way, so a
stage can be rerun in isolation; the first stage writes manifest.json into
the output directory and later stages refuse to run if their resolved
config disagrees with it. All artifacts are deterministic for a fixed
config and backend: no timestamps, fixed float formatting, seeded RNG.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import kernels
from .config import load_config
from .datagen import (add_noise, gen_heat1d, gen_wave1d, gen_wave2d,
                      heat1d_grid, sample_chunks)
from .dataio import (FORMAT_VERSION, ensure_dir, load_model, read_csv_columns,
                     read_dataset, save_model, write_csv, write_dataset)
from .errors import ConfigError, DivergenceError, FlowromError
from .models import count_params
from .reduction import (ReducedBasis, analyze_spectrum, assemble_data_matrix,
                        fixed_basis, memory_qr_diagnostic)
from .rng import make_rng
from .training import (Ensemble, ModelSpec, TrainConfig, avg_l2_error,
                       rollout_batch, train_ensemble)

TRAIN_TRAJS = "train_trajectories"
TRAIN_CHUNKS = "train_chunks"
TEST_TRAJS = "test_trajectories"
MANIFEST = "manifest.json"


def _path(cfg, *parts):
    return os.path.join(cfg.out_dir, *parts)


def _model_dir(cfg, name):
    return _path(cfg, "models", name)


def _manifest_dict(cfg):
    return {"format_version": FORMAT_VERSION, "config": cfg.resolved()}


def _sync_manifest(cfg):
    """Write the run manifest, or verify an existing one matches."""
    ensure_dir(cfg.out_dir)
    path = _path(cfg, MANIFEST)
    want = _manifest_dict(cfg)
    if os.path.exists(path):
        with open(path) as fh:
            have = json.load(fh)
        if have != want:
            raise ConfigError(
                f"{path} belongs to a different configuration; point --out "
                f"at a fresh directory or rerun generate there"
            )
        return
    with open(path, "w") as fh:
        json.dump(want, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _generate_set(cfg, n_traj, n_steps, seed):
    rng = make_rng(seed)
    if cfg.example_id == "heat1d":
        grid = heat1d_grid(cfg.stream_seed("grid"))
        return gen_heat1d(n_traj, rng, grid=grid, n_steps=n_steps, dt=cfg.dt)
    if cfg.example_id == "wave1d":
        return gen_wave1d(n_traj, rng, n_steps=n_steps, dt=cfg.dt)
    return gen_wave2d(n_traj, cfg.solver, rng, n_steps=n_steps, dt=cfg.dt)


def cmd_generate(cfg):
    _sync_manifest(cfg)
    t0 = time.perf_counter()
    train = _generate_set(cfg, cfg.n_traj, cfg.train_steps,
                          cfg.stream_seed("train_data"))
    # test trajectories must cover the window plus the full horizon
    test = _generate_set(cfg, cfg.n_test, cfg.n_mem + cfg.horizon - 1,
                         cfg.stream_seed("test_data"))
    chunks = sample_chunks(train, cfg.n_mem, cfg.n_rec,
                           make_rng(cfg.stream_seed("chunks")))
    if cfg.sigma > 0:
        chunks = add_noise(chunks, cfg.sigma,
                           make_rng(cfg.stream_seed("train_noise")))
    write_dataset(_path(cfg, TRAIN_TRAJS), train,
                  seed=cfg.stream_seed("train_data"))
    write_dataset(_path(cfg, TEST_TRAJS), test,
                  seed=cfg.stream_seed("test_data"))
    write_dataset(_path(cfg, TRAIN_CHUNKS), chunks,
                  seed=cfg.stream_seed("chunks"))
    print(f"generate: {cfg.n_traj} train + {cfg.n_test} test trajectories "
          f"({cfg.example_id}, sigma={cfg.sigma:g}) "
          f"in {time.perf_counter() - t0:.1f}s -> {cfg.out_dir}")
    return []


def _grid_columns(grid):
    if grid.dim == 1:
        return ["x"], [grid.points]
    return ["x", "y"], [grid.points[:, 0], grid.points[:, 1]]


def cmd_reduce(cfg):
    _sync_manifest(cfg)
    chunks = read_dataset(_path(cfg, TRAIN_CHUNKS))
    d = assemble_data_matrix(chunks)
    max_rank = min(min(d.shape), max(cfg.n_red + 10, 20))
    spectrum = analyze_spectrum(d, max_rank)
    write_csv(
        _path(cfg, "spectrum.csv"),
        ["rank", "sigma", "sigma_rel", "frob_err", "max_err"],
        [spectrum.ranks, spectrum.singular_values[:max_rank],
         spectrum.relative_values[:max_rank], spectrum.frob_errors,
         spectrum.max_errors],
    )
    basis = fixed_basis(d, cfg.n_red)
    names, cols = _grid_columns(chunks.grid)
    names += [f"mode_{j + 1}" for j in range(cfg.n_red)]
    cols += [basis.v_red[:, j] for j in range(cfg.n_red)]
    write_csv(_path(cfg, "basis.csv"), names, cols)
    trajs = read_dataset(_path(cfg, TRAIN_TRAJS))
    mem = memory_qr_diagnostic(trajs)
    write_csv(_path(cfg, "memory.csv"), ["k", "r_diag", "relative"],
              [np.arange(len(mem.r_diag)), mem.r_diag, mem.relative])
    print(f"reduce: n_red={cfg.n_red}, "
          f"sigma_rel at cutoff+1 = "
          f"{spectrum.relative_values[cfg.n_red]:.3e} -> {cfg.out_dir}")
    return []


def _read_basis(cfg, n_full):
    path = _path(cfg, "basis.csv")
    cols = read_csv_columns(path)
    modes = [f"mode_{j + 1}" for j in range(cfg.n_red)]
    missing = [m for m in modes if m not in cols]
    if missing:
        raise ConfigError(
            f"{path} lacks columns {missing}; rerun reduce with "
            f"n_red={cfg.n_red}"
        )
    v = np.column_stack([cols[m] for m in modes])
    if v.shape[0] != n_full:
        raise ConfigError(
            f"{path} has {v.shape[0]} rows, data has {n_full} points"
        )
    return ReducedBasis(cfg.n_red, v)


def _model_spec(cfg, name, n_full, basis):
    if name == "nodal":
        return ModelSpec("nodal", n_full, cfg.n_mem, cfg.nodal_hidden)
    return ModelSpec("pcfml", n_full, cfg.n_mem, cfg.hidden_width,
                     mode=name, n_red=cfg.n_red,
                     basis=basis if name == "fixed" else None,
                     project_skip=cfg.project_skip)


def cmd_train(cfg):
    _sync_manifest(cfg)
    ds = read_dataset(_path(cfg, TRAIN_CHUNKS))
    basis = _read_basis(cfg, ds.n_full) if "fixed" in cfg.models else None
    failures = []
    for name in cfg.models:
        spec = _model_spec(cfg, name, ds.n_full, basis)
        tc = TrainConfig(epochs=cfg.epochs, lr=cfg.lr, lam=cfg.lam,
                         seed=cfg.train_seed(name))
        t0 = time.perf_counter()
        try:
            ens = train_ensemble(spec, ds, tc, n_members=cfg.ensemble)
        except DivergenceError as exc:
            failures.append(f"model {name!r}: {exc}")
            continue
        mdir = ensure_dir(_model_dir(cfg, name))
        for i, member in enumerate(ens.members):
            save_model(os.path.join(mdir, f"member_{i}"), member,
                       extra={"model_name": name,
                              "member_seed": ens.member_seeds[i]})
        hist = ens.loss_history
        write_csv(os.path.join(mdir, "loss_history.csv"),
                  ["epoch"] + [f"member_{i}" for i in range(len(ens.members))],
                  [np.arange(hist.shape[1])] + [hist[i] for i in
                                                range(hist.shape[0])])
        final = float(np.mean(hist[:, -1])) if hist.shape[1] else float("nan")
        print(f"train[{name}]: {cfg.ensemble} members x {cfg.epochs} epochs, "
              f"mean final loss {final:.3e}, "
              f"{time.perf_counter() - t0:.1f}s")
    return failures


def _test_windows_and_truth(cfg, test):
    if test.n_steps + 1 < cfg.n_mem + cfg.horizon:
        raise ConfigError(
            f"test trajectories hold {test.n_steps + 1} samples, need "
            f"{cfg.n_mem + cfg.horizon}; rerun generate"
        )
    # window rows are most recent first: row i is the state i steps back
    w = test.data[:, :, :cfg.n_mem][:, :, ::-1].transpose(0, 2, 1)
    truth = test.data[:, :, cfg.n_mem:cfg.n_mem + cfg.horizon]
    return np.ascontiguousarray(w), np.ascontiguousarray(
        truth.transpose(0, 2, 1))


def cmd_predict(cfg):
    _sync_manifest(cfg)
    test = read_dataset(_path(cfg, TEST_TRAJS))
    windows, truth = _test_windows_and_truth(cfg, test)
    if cfg.sigma > 0:
        windows = add_noise(windows, cfg.sigma,
                            make_rng(cfg.stream_seed("window_noise")))
    steps = np.arange(1, cfg.horizon + 1)
    times = (cfg.n_mem - 1 + steps) * cfg.dt
    failures = []
    for name in cfg.models:
        mdir = _model_dir(cfg, name)
        try:
            members = [load_model(os.path.join(mdir, f"member_{i}"))
                       for i in range(cfg.ensemble)]
        except (FlowromError, OSError) as exc:
            failures.append(f"model {name!r}: cannot load checkpoints: {exc}")
            continue
        ens = Ensemble(members, np.zeros((len(members), 0)),
                       list(range(len(members))))
        states, blowup = rollout_batch(ens, windows, cfg.horizon)
        curve = avg_l2_error(states, truth)
        write_csv(os.path.join(mdir, "errors.csv"), ["step", "t", "e"],
                  [steps, times, curve.values])
        bad = np.nonzero(blowup >= 0)[0]
        write_csv(os.path.join(mdir, "blowups.csv"), ["trajectory", "step"],
                  [bad, blowup[bad]])
        for l in cfg.snapshot_trajectories:
            names, cols = _grid_columns(test.grid)
            for s in cfg.snapshot_steps:
                names += [f"pred_{s}", f"truth_{s}"]
                cols += [states[l, s - 1], truth[l, s - 1]]
            write_csv(os.path.join(mdir, f"trajectory_{l}.csv"), names, cols)
        tail = curve.values[-1]
        note = f", {len(bad)} blow-ups" if len(bad) else ""
        print(f"predict[{name}]: e({cfg.horizon}) = {tail:.4e}{note}")
    return failures


def cmd_report(cfg):
    _sync_manifest(cfg)
    merged_names = ["step", "t"]
    merged_cols = []
    summary = {
        "example_id": cfg.example_id,
        "sigma": cfg.sigma,
        "horizon": cfg.horizon,
        "backend": kernels.BACKEND,
        "models": {},
    }
    failures = []
    for name in cfg.models:
        mdir = _model_dir(cfg, name)
        try:
            cols = read_csv_columns(os.path.join(mdir, "errors.csv"))
            member0 = load_model(os.path.join(mdir, "member_0"))
            blow = read_csv_columns(os.path.join(mdir, "blowups.csv"))
        except (FlowromError, OSError) as exc:
            failures.append(f"model {name!r}: missing artifacts: {exc}")
            continue
        if not merged_cols:
            merged_cols = [cols["step"].astype(int), cols["t"]]
        e = cols["e"]
        merged_names.append(f"e_{name}")
        merged_cols.append(e)
        finite = e[np.isfinite(e)]
        summary["models"][name] = {
            "params": count_params(member0),
            "final_error": float(e[-1]),
            "max_error": float(np.max(finite)) if finite.size else None,
            "blowups": int(len(blow["trajectory"])),
        }
    if merged_cols:
        write_csv(_path(cfg, "report.csv"), merged_names, merged_cols)
    with open(_path(cfg, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    for name, info in summary["models"].items():
        print(f"report[{name}]: params={info['params']} "
              f"final_error={info['final_error']:.4e} "
              f"blowups={info['blowups']}")
    return failures


def cmd_run(cfg):
    failures = []
    for fn in (cmd_generate, cmd_reduce, cmd_train, cmd_predict, cmd_report):
        failures += fn(cfg)
    return failures


COMMANDS = {
    "generate": cmd_generate,
    "reduce": cmd_reduce,
    "train": cmd_train,
    "predict": cmd_predict,
    "report": cmd_report,
    "run": cmd_run,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="flowrom",
        description="Learn reduced flow maps of PDE dynamics from "
                    "trajectory data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "generate": "synthesize training and test data",
        "reduce": "compute spectrum, reduced basis, and memory diagnostic",
        "train": "train the configured model ensembles",
        "predict": "roll trained ensembles on test windows",
        "report": "merge error curves and write the run summary",
        "run": "all stages in order",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True,
                       help="path to an experiment config (JSON)")
        p.add_argument("--sigma", type=float, default=None,
                       help="override the observation noise level")
        p.add_argument("--out", default=None,
                       help="override the output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, sigma=args.sigma, out_dir=args.out,
                          seed=args.seed)
    except FlowromError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        failures = COMMANDS[args.command](cfg)
    except FlowromError as exc:
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return 1
    for f in failures:
        print(f"{args.command}: {f}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
