"""Experiment configuration: JSON in, fully-resolved values out.

A config names one example problem and (optionally) overrides the shared
defaults. Values that legitimately differ between the clean and noisy
variants of one experiment (n_red, horizon, nodal_hidden) may be written as
{"noiseless": x, "noisy": y} and are resolved by sigma. Unknown keys are
hard errors so hyperparameter typos cannot pass silently.

Seed derivation: one master seed fans out into fixed named streams (grid,
train_data, test_data, chunks, train_noise, window_noise) plus a per-model
training base; ensemble member i trains from base+i. Any stream can be
pinned explicitly under "seeds".
"""

import json
from dataclasses import dataclass, field

from .datagen import Wave2dSolverConfig
from .errors import ConfigError

EXAMPLES = ("heat1d", "wave1d", "wave2d")
MODEL_NAMES = ("fixed", "constrained", "unconstrained", "nodal")

# offsets applied to the master seed for each named stream
SEED_STREAMS = {
    "grid": 11,
    "train_data": 23,
    "test_data": 37,
    "chunks": 41,
    "train_noise": 53,
    "window_noise": 67,
}
TRAIN_SEED_BASE = 101
TRAIN_SEED_STRIDE = 1000  # per model family, in MODEL_NAMES order

_COMMON_DEFAULTS = {
    "sigma": 0.0,
    "models": list(MODEL_NAMES),
    "n_mem": 20,
    "n_rec": 10,
    "n_traj": 100,
    "n_test": 100,
    "dt": 1e-2,
    "epochs": 10000,
    "lr": 1e-3,
    "lambda": 1e-2,
    "ensemble": 10,
    "project_skip": True,
    "snapshot_steps": [],
    "snapshot_trajectories": [0],
    "out_dir": None,
    "seeds": {},
    "solver": None,
}

_EXAMPLE_DEFAULTS = {
    "heat1d": {
        "train_steps": 200,
        "n_red": 2,
        "hidden_width": 10,
        "nodal_hidden": 100,
        "horizon": 500,
    },
    "wave1d": {
        "train_steps": 100,
        "n_red": 5,
        "hidden_width": 15,
        "nodal_hidden": 50,
        "horizon": {"noiseless": 150, "noisy": 100},
    },
    "wave2d": {
        "train_steps": 400,
        "n_red": {"noiseless": 13, "noisy": 5},
        "hidden_width": 15,
        "nodal_hidden": {"noiseless": 13, "noisy": 5},
        "horizon": {"noiseless": 1000, "noisy": 200},
        "solver": {"nx": 101, "ny": 101, "substep": 5e-3},
    },
}

_SIGMA_KEYED = ("n_red", "horizon", "nodal_hidden")


@dataclass
class ExperimentConfig:
    example_id: str
    sigma: float
    n_red: int
    models: list
    n_mem: int
    n_rec: int
    n_traj: int
    n_test: int
    dt: float
    train_steps: int
    epochs: int
    lr: float
    lam: float
    ensemble: int
    hidden_width: int
    nodal_hidden: int
    horizon: int
    project_skip: bool
    solver: object
    seeds: dict
    snapshot_steps: list
    snapshot_trajectories: list
    out_dir: str
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def master_seed(self):
        return int(self.seeds["master"])

    def n_full_expected(self):
        return {"heat1d": 100, "wave1d": 50, "wave2d": 1537}[self.example_id]

    def stream_seed(self, name):
        if name in self.seeds:
            return int(self.seeds[name])
        if name not in SEED_STREAMS:
            raise ConfigError(f"unknown seed stream {name!r}")
        return self.master_seed + SEED_STREAMS[name]

    def train_seed(self, model_name):
        key = f"train_{model_name}"
        if key in self.seeds:
            return int(self.seeds[key])
        idx = MODEL_NAMES.index(model_name)
        return self.master_seed + TRAIN_SEED_BASE + TRAIN_SEED_STRIDE * idx

    def resolved(self):
        """Plain dict of every resolved value (goes into run manifests)."""
        out = {
            "example_id": self.example_id,
            "sigma": self.sigma,
            "n_red": self.n_red,
            "models": list(self.models),
            "n_mem": self.n_mem,
            "n_rec": self.n_rec,
            "n_traj": self.n_traj,
            "n_test": self.n_test,
            "dt": self.dt,
            "train_steps": self.train_steps,
            "epochs": self.epochs,
            "lr": self.lr,
            "lambda": self.lam,
            "ensemble": self.ensemble,
            "hidden_width": self.hidden_width,
            "nodal_hidden": self.nodal_hidden,
            "horizon": self.horizon,
            "project_skip": self.project_skip,
            "snapshot_steps": list(self.snapshot_steps),
            "snapshot_trajectories": list(self.snapshot_trajectories),
            "out_dir": self.out_dir,
            "seeds": {
                "master": self.master_seed,
                **{k: self.stream_seed(k) for k in SEED_STREAMS},
                **{f"train_{m}": self.train_seed(m) for m in self.models},
            },
        }
        if self.solver is not None:
            out["solver"] = {
                "nx": self.solver.nx,
                "ny": self.solver.ny,
                "substep": self.solver.substep,
            }
        return out


def _resolve_sigma_keyed(value, sigma, key):
    if isinstance(value, dict):
        extra = set(value) - {"noiseless", "noisy"}
        if extra:
            raise ConfigError(
                f"{key}: sigma-keyed dict allows only 'noiseless'/'noisy' "
                f"keys, got {sorted(extra)}"
            )
        variant = "noisy" if sigma > 0 else "noiseless"
        if variant not in value:
            raise ConfigError(f"{key}: missing {variant!r} entry")
        return value[variant]
    return value


def load_config(path, sigma=None, out_dir=None, seed=None):
    """Parse and resolve a config file, applying CLI overrides."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return resolve_config(raw, sigma=sigma, out_dir=out_dir, seed=seed)


def resolve_config(raw, sigma=None, out_dir=None, seed=None):
    example_id = raw.get("example_id")
    if example_id not in EXAMPLES:
        raise ConfigError(
            f"example_id must be one of {EXAMPLES}, got {example_id!r}"
        )
    defaults = dict(_COMMON_DEFAULTS)
    defaults.update(_EXAMPLE_DEFAULTS[example_id])
    known = set(defaults) | {"example_id"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update({k: v for k, v in raw.items() if k != "example_id"})

    if sigma is not None:
        merged["sigma"] = sigma
    sig = float(merged["sigma"])
    if sig < 0:
        raise ConfigError(f"sigma must be >= 0, got {sig}")

    vals = {k: _resolve_sigma_keyed(merged[k], sig, k) for k in _SIGMA_KEYED}

    models = merged["models"]
    if not isinstance(models, list) or not models:
        raise ConfigError("models must be a non-empty list")
    bad = [m for m in models if m not in MODEL_NAMES]
    if bad:
        raise ConfigError(f"unknown model names {bad}; allowed: {MODEL_NAMES}")
    if len(set(models)) != len(models):
        raise ConfigError("models list has duplicates")

    solver = None
    if example_id == "wave2d":
        sv = merged["solver"] or {}
        extra = set(sv) - {"nx", "ny", "substep"}
        if extra:
            raise ConfigError(f"unknown solver keys: {sorted(extra)}")
        solver = Wave2dSolverConfig(
            nx=int(sv.get("nx", 101)),
            ny=int(sv.get("ny", 101)),
            substep=float(sv.get("substep", 5e-3)),
        )
        solver.validate(float(merged["dt"]))
    elif merged["solver"] is not None:
        raise ConfigError(f"'solver' only applies to wave2d, not {example_id}")

    seeds = dict(merged["seeds"] or {})
    allowed_seed_keys = (
        {"master"} | set(SEED_STREAMS)
        | {f"train_{m}" for m in MODEL_NAMES}
    )
    extra = set(seeds) - allowed_seed_keys
    if extra:
        raise ConfigError(f"unknown seed names: {sorted(extra)}")
    if seed is not None:
        seeds["master"] = int(seed)
    seeds.setdefault("master", 0)

    resolved_out = out_dir or merged["out_dir"] or \
        f"runs/{example_id}-sigma{sig:g}"

    cfg = ExperimentConfig(
        example_id=example_id,
        sigma=sig,
        n_red=int(vals["n_red"]),
        models=list(models),
        n_mem=int(merged["n_mem"]),
        n_rec=int(merged["n_rec"]),
        n_traj=int(merged["n_traj"]),
        n_test=int(merged["n_test"]),
        dt=float(merged["dt"]),
        train_steps=int(merged["train_steps"]),
        epochs=int(merged["epochs"]),
        lr=float(merged["lr"]),
        lam=float(merged["lambda"]),
        ensemble=int(merged["ensemble"]),
        hidden_width=int(merged["hidden_width"]),
        nodal_hidden=int(vals["nodal_hidden"]),
        horizon=int(vals["horizon"]),
        project_skip=bool(merged["project_skip"]),
        solver=solver,
        seeds=seeds,
        snapshot_steps=[int(s) for s in merged["snapshot_steps"]],
        snapshot_trajectories=[int(t) for t in merged["snapshot_trajectories"]],
        out_dir=resolved_out,
        raw=dict(raw),
    )
    for name, value in (("n_mem", cfg.n_mem), ("n_rec", cfg.n_rec),
                        ("n_traj", cfg.n_traj), ("n_test", cfg.n_test),
                        ("ensemble", cfg.ensemble), ("horizon", cfg.horizon),
                        ("n_red", cfg.n_red), ("hidden_width", cfg.hidden_width),
                        ("nodal_hidden", cfg.nodal_hidden)):
        if value < 1:
            raise ConfigError(f"{name} must be >= 1, got {value}")
    if cfg.epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {cfg.epochs}")
    if cfg.train_steps + 1 < cfg.n_mem + cfg.n_rec:
        raise ConfigError(
            f"train_steps={cfg.train_steps} gives trajectories shorter than "
            f"one chunk (n_mem+n_rec={cfg.n_mem + cfg.n_rec})"
        )
    if cfg.n_red >= cfg.n_full_expected():
        raise ConfigError(
            f"n_red={cfg.n_red} must be below the observation size "
            f"{cfg.n_full_expected()}"
        )
    for s in cfg.snapshot_steps:
        if not 1 <= s <= cfg.horizon:
            raise ConfigError(
                f"snapshot step {s} outside prediction range 1..{cfg.horizon}"
            )
    for t in cfg.snapshot_trajectories:
        if not 0 <= t < cfg.n_test:
            raise ConfigError(
                f"snapshot trajectory {t} outside 0..{cfg.n_test - 1}"
            )
    return cfg
