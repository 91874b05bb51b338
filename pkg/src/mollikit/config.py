"""Flat ``key = value`` configuration with strict key checking.

All settings live under dotted keys (``train.lr``, ``schedule.kind`` ...).
Values are parsed according to the type of the default.  Recipes are just
named override dictionaries layered on top of the defaults; precedence is
command-line flag > config file > recipe > default.
"""

from __future__ import annotations

from pathlib import Path

DEFAULTS: dict[str, object] = {
    "data.name": "gmm",
    "data.path": "",
    "data.drop": "",
    "data.split_seed": 0,
    "data.n_train": 10_000,
    "data.n_test": 10_000,
    "model.kind": "realnvp",
    "model.layers": 5,
    "model.hidden": 64,
    "model.n_hidden": 2,
    "model.batchnorm": False,
    "model.scale_activation": "tanh",
    "model.shift_activation": "relu",
    "model.activation": "tanh",
    "model.bound_init": 2.0,
    "model.latent": 2,
    "model.sample_mean": True,
    "train.iterations": 20_000,
    "train.epochs": 0,
    "train.batch_size": 256,
    "train.lr": 5e-4,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.clip_norm": 100.0,
    "train.mollify_fraction": 0.5,
    "train.eval_every": 100,
    "train.metric_every": 1000,
    "train.seed": 0,
    "train.objective": "nll",
    "train.beta": 1.0,
    "train.iwae_k": 5,
    "train.divergence": 1e6,
    "train.record_wall_time": True,
    "schedule.kind": "sigmoid",
    "schedule.tau": 0.7,
    "schedule.start": 0.0,
    "schedule.end": 3.0,
    "schedule.ns": 0.0002,
    "schedule.ds": 0.00025,
    "schedule.clip_min": 1e-9,
    "eval.mmd": True,
    "eval.mmd_samples": 2000,
    "eval.final_mmd_samples": 10_000,
    "eval.lengthscale": 1.0,
    "eval.variance": 1e-4,
    "eval.iwae_k": 100,
}

_TOY = {
    "data.name": "gmm",
    "model.kind": "realnvp",
    "model.layers": 5,
    "model.hidden": 64,
    "model.n_hidden": 2,
    "model.batchnorm": False,
    "train.iterations": 20_000,
    "train.batch_size": 256,
    "train.lr": 5e-4,
    "train.mollify_fraction": 0.5,
    "eval.mmd": True,
}

_UCI = {
    "data.name": "csv",
    "data.drop": "",
    "model.kind": "maf",
    "model.layers": 5,
    "model.hidden": 512,
    "model.n_hidden": 1,
    "model.batchnorm": True,
    "train.iterations": 0,
    "train.epochs": 150,
    "train.batch_size": 100,
    "train.lr": 1e-4,
    "train.mollify_fraction": 1.0,
    "train.eval_every": 50,
    "train.metric_every": 500,
    "eval.mmd": False,
}

_UCI_FILES = {
    "red-wine": "winequality-red.csv",
    "white-wine": "winequality-white.csv",
}

RECIPES: dict[str, dict[str, object]] = {
    "toy-gmm": dict(_TOY),
    "toy-vonmises": {**_TOY, "data.name": "vonmises"},
}
for _name, _file in _UCI_FILES.items():
    RECIPES[f"uci-{_name}"] = {**_UCI, "data.path": _file}
    RECIPES[f"uci-{_name}-realnvp"] = {**_UCI, "data.path": _file, "model.kind": "realnvp"}
    RECIPES[f"uci-{_name}-small"] = {**_UCI, "data.path": _file, "model.hidden": 128,
                                     "train.epochs": 50}
    RECIPES[f"uci-{_name}-realnvp-small"] = {**_UCI, "data.path": _file, "model.kind": "realnvp",
                                             "model.hidden": 128, "train.epochs": 50}


class ConfigError(ValueError):
    pass


def _parse_value(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def check_key(key: str) -> None:
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")


def coerce(overrides: dict[str, object]) -> dict[str, object]:
    """Validate keys and parse string values."""
    out = {}
    for key, val in overrides.items():
        check_key(key)
        out[key] = _parse_value(key, val) if isinstance(val, str) else val
    return out


def parse_text(text: str, source: str = "<config>") -> dict[str, object]:
    out: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            check_key(key)
            out[key] = _parse_value(key, val)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def parse_file(path: str | Path) -> dict[str, object]:
    return parse_text(Path(path).read_text(encoding="utf-8"), str(path))


def resolve(recipe: str | None = None, file_values: dict | None = None,
            flags: dict | None = None) -> dict[str, object]:
    cfg = dict(DEFAULTS)
    if recipe is not None:
        if recipe not in RECIPES:
            raise ConfigError(f"unknown recipe {recipe!r}; available: {', '.join(sorted(RECIPES))}")
        cfg.update(RECIPES[recipe])
    cfg.update(coerce(file_values or {}))
    cfg.update(coerce(flags or {}))
    return cfg


def dumps(cfg: dict[str, object]) -> str:
    def fmt(v):
        return repr(v) if isinstance(v, float) else str(v)
    return "".join(f"{k} = {fmt(cfg[k])}\n" for k in sorted(cfg))
