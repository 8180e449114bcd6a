"""Run configuration: a sectioned key/value file mirroring all knobs."""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass

from .attention import GateMode, HopAggregation
from .errors import ConfigError
from .model import Metric, ModelVariant, TrainConfig

# section -> key -> (type tag, default)
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "dataset": {
        "type": ("str", "sbm"),          # sbm | files
        "edges": ("str", ""),
        "features": ("str", ""),
        "labels": ("str", ""),
        "blocks": ("int", 2),
        "per_block": ("int", 200),
        "p_in": ("float", 0.05),
        "p_out": ("float", 0.005),
        "signal": ("float", 3.0),
    },
    "model": {
        "hops": ("int", 5),
        "heads": ("int", 4),
        "hidden": ("int", 64),
        "gate_mode": ("str", "softmax"),     # softmax | raw | none
        "aggregation": ("str", "gpr"),       # gpr | sum | concat | attn
        "pe_dims": ("int", 3),
        "variant": ("str", "stagnn"),        # stagnn | ga_sta
        "ga_hops": ("int", 2),
    },
    "train": {
        "lr": ("float", 0.01),
        "dropout": ("float", 0.0),
        "weight_decay": ("float", 0.0),
        "max_epochs": ("int", 3000),
        "patience": ("int", 200),
        "metric": ("str", "accuracy"),       # accuracy | roc_auc
        "train_ratio": ("float", 0.5),
        "val_ratio": ("float", 0.25),
        "test_ratio": ("float", 0.25),
    },
    "run": {
        "seed": ("int", 0),
        "out_dir": ("str", "out"),
    },
}

_CHOICES = {
    ("dataset", "type"): {"sbm", "files"},
    ("model", "gate_mode"): {m.value for m in GateMode},
    ("model", "aggregation"): {a.value for a in HopAggregation},
    ("model", "variant"): {"stagnn", "ga_sta"},
    ("train", "metric"): {m.value for m in Metric},
}


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]]

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({sec: {k: default for k, (_, default) in keys.items()}
                    for sec, keys in _SCHEMA.items()})

    @classmethod
    def from_ini_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config parse failure: {exc}") from exc
        cfg = cls.defaults()
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{section}]")
                cfg.values[section][key] = _parse_value(section, key, raw)
        cfg.validate()
        return cfg

    @classmethod
    def from_ini(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_ini_text(fh.read())

    def to_ini_text(self) -> str:
        out = io.StringIO()
        for section in _SCHEMA:
            out.write(f"[{section}]\n")
            for key in _SCHEMA[section]:
                out.write(f"{key} = {_format_value(self.values[section][key])}\n")
            out.write("\n")
        return out.getvalue()

    def write_ini(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_ini_text())

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, value) -> None:
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown config entry [{section}] {key}")
        kind = _SCHEMA[section][key][0]
        caster = {"int": int, "float": float, "str": str}[kind]
        self.values[section][key] = caster(value)

    def validate(self) -> None:
        for (section, key), allowed in _CHOICES.items():
            value = self.values[section][key]
            if value not in allowed:
                raise ConfigError(
                    f"[{section}] {key} must be one of {sorted(allowed)}, "
                    f"got {value!r}")
        if self.values["dataset"]["type"] == "files":
            for key in ("edges", "features", "labels"):
                if not self.values["dataset"][key]:
                    raise ConfigError(
                        f"[dataset] {key} path required when type = files")

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_ini_text().encode("utf-8")).hexdigest()[:16]

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            lr=v["train"]["lr"],
            dropout=v["train"]["dropout"],
            weight_decay=v["train"]["weight_decay"],
            hops=v["model"]["hops"],
            heads=v["model"]["heads"],
            hidden=v["model"]["hidden"],
            gate_mode=GateMode(v["model"]["gate_mode"]),
            aggregation=HopAggregation(v["model"]["aggregation"]),
            max_epochs=v["train"]["max_epochs"],
            patience=v["train"]["patience"],
            seed=v["run"]["seed"],
            train_ratio=v["train"]["train_ratio"],
            val_ratio=v["train"]["val_ratio"],
            test_ratio=v["train"]["test_ratio"],
            metric=Metric(v["train"]["metric"]),
            pe_dims=v["model"]["pe_dims"],
            variant=ModelVariant(v["model"]["variant"]),
            ga_hops=v["model"]["ga_hops"],
        )


def _parse_value(section: str, key: str, raw: str):
    kind = _SCHEMA[section][key][0]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(
            f"[{section}] {key}: cannot parse {raw!r} as {kind}") from exc


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
