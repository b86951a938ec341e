"""Container and on-disk format for posterior draws."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_open, read_json, write_json
from .errors import DataError

STAT_COLUMNS = ("energy", "tree_depth", "accept_stat", "divergent", "step_size")
RUN_FILE = "run.json"


def chain_file(chain):
    return f"chain_{chain}.csv"


@dataclass
class PosteriorDraws:
    """Post-warmup draws from several chains.

    ``samples`` has shape (chains, draws, dim); ``energy`` and every entry
    of ``stats`` have shape (chains, draws).
    """

    samples: np.ndarray
    energy: np.ndarray
    stats: dict
    param_names: list
    config: dict = field(default_factory=dict)
    step_size: np.ndarray = None
    inv_mass: np.ndarray = None
    warmup_accept: np.ndarray = None
    wall_time: float = 0.0
    map_logp: float = None
    model: dict = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 3:
            raise DataError("samples must have shape (chains, draws, dim)")
        c, n, d = self.samples.shape
        if len(self.param_names) != d:
            raise DataError(f"{len(self.param_names)} parameter names for dimension {d}")
        self.energy = np.asarray(self.energy, dtype=float)
        if self.energy.shape != (c, n):
            raise DataError("energy trace length must equal the draw count of every chain")
        for key, v in self.stats.items():
            if np.shape(v) != (c, n):
                raise DataError(f"stat {key!r} has shape {np.shape(v)}, expected {(c, n)}")

    @property
    def n_chains(self):
        return self.samples.shape[0]

    @property
    def n_draws(self):
        return self.samples.shape[1]

    @property
    def dim(self):
        return self.samples.shape[2]

    @property
    def divergences(self):
        return int(np.sum(self.stats.get("divergent", 0)))

    def index(self, name):
        try:
            return self.param_names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def param(self, name):
        """Draws of one named parameter, shape (chains, draws)."""
        return self.samples[:, :, self.index(name)]

    def flat(self):
        """All draws stacked chain after chain, shape (chains * draws, dim)."""
        return self.samples.reshape(-1, self.dim)

    # -- persistence --------------------------------------------------------

    def to_directory(self, path):
        """Write one CSV per chain plus ``run.json`` under `path`."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow([*self.param_names, *STAT_COLUMNS])
        header = buf.getvalue()
        for c in range(self.n_chains):
            cols = [
                self.samples[c],
                self.energy[c][:, None],
                np.asarray(self.stats["tree_depth"][c], dtype=float)[:, None],
                np.asarray(self.stats["accept_stat"][c], dtype=float)[:, None],
                np.asarray(self.stats["divergent"][c], dtype=float)[:, None],
                np.asarray(self.stats["step_size"][c], dtype=float)[:, None],
            ]
            block = np.hstack(cols)
            fmt = ["%r"] * (self.dim + 1) + ["%d", "%r", "%d", "%r"]
            with atomic_open(path / chain_file(c)) as fh:
                fh.write(header)
                line = ",".join(fmt) + "\n"
                for row in block:
                    fh.write(line % tuple(
                        int(v) if f == "%d" else float(v) for f, v in zip(fmt, row)))
        meta = {
            "chains": self.n_chains,
            "draws": self.n_draws,
            "config": self.config,
            "seed": self.config.get("seed"),
            "param_names": list(self.param_names),
            "wall_time": self.wall_time,
            "map_logp": self.map_logp,
            "model": self.model,
            "step_size": None if self.step_size is None else [float(v) for v in self.step_size],
            "inv_mass": None if self.inv_mass is None else np.asarray(self.inv_mass).tolist(),
            "extra": self.extra,
        }
        write_json(path / RUN_FILE, meta)

    @classmethod
    def from_directory(cls, path):
        import pandas as pd

        path = Path(path)
        if not (path / RUN_FILE).exists():
            raise DataError(f"{path}: missing {RUN_FILE}")
        meta = read_json(path / RUN_FILE)
        names = meta["param_names"]
        samples, energy = [], []
        stats = {"tree_depth": [], "accept_stat": [], "divergent": [], "step_size": []}
        for c in range(meta["chains"]):
            f = path / chain_file(c)
            if not f.exists():
                raise DataError(f"{path}: chain {c} missing ({f.name})")
            df = pd.read_csv(f, float_precision="round_trip")
            if list(df.columns) != [*names, *STAT_COLUMNS]:
                raise DataError(f"{f}: header does not match run metadata")
            if len(df) != meta["draws"]:
                raise DataError(f"{f}: {len(df)} draws, expected {meta['draws']}")
            samples.append(df[names].to_numpy(dtype=float))
            energy.append(df["energy"].to_numpy(dtype=float))
            stats["tree_depth"].append(df["tree_depth"].to_numpy(dtype=np.int64))
            stats["accept_stat"].append(df["accept_stat"].to_numpy(dtype=float))
            stats["divergent"].append(df["divergent"].to_numpy() != 0)
            stats["step_size"].append(df["step_size"].to_numpy(dtype=float))
        return cls(
            samples=np.stack(samples),
            energy=np.stack(energy),
            stats={k: np.stack(v) for k, v in stats.items()},
            param_names=names,
            config=meta.get("config") or {},
            step_size=None if meta.get("step_size") is None else np.array(meta["step_size"]),
            inv_mass=None if meta.get("inv_mass") is None else np.array(meta["inv_mass"]),
            wall_time=meta.get("wall_time", 0.0),
            map_logp=meta.get("map_logp"),
            model=meta.get("model"),
            extra=meta.get("extra") or {},
        )
