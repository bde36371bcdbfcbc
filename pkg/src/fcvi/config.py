"""TOML scenario files: schema, defaults, validation and the resolved dump.

Every section and key is listed in ``SCHEMA``; anything else is rejected so a
typo fails loudly instead of silently falling back to a default. Errors are
raised as ConfigError carrying the dotted key.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .dataset import ClientSpec, GaussianSpec, ScenarioSchedule
from .errors import ConfigError, ContractError
from .federation import AggregationWeights, FederationConfig, Mode
from .monitor import MonitorThresholds
from .nn_core import TrainConfig
from .selftrain import SelfTrainConfig

_REQUIRED = object()

# section -> key -> (accepted python types, default)
SCHEMA = {
    "scenario": {
        "name": ((str,), "scenario"),
        "rounds": ((int,), _REQUIRED),
        "beta": ((float, int), 0.3),
        "test_per_class": ((int,), 200),
        "sample_rounds": ((list,), None),
    },
    "data": {
        "num_classes": ((int,), _REQUIRED),
        "dim": ((int,), 16),
        "mean_scale": ((float, int), 3.0),
        "sigma": ((float, int), 1.0),
    },
    "model": {
        "hidden_width": ((int,), 32),
    },
    "train": {
        "learning_rate": ((float, int), 0.05),
        "batch_size": ((int,), 32),
        "local_epochs": ((int,), 1),
    },
    "monitor": {
        "eps_zero": ((float, int), 0.05),
        "eps_steady": ((float, int), 0.05),
        "eps_denominator_rel": ((float, int), 1e-9),
        "every_round": ((bool,), False),
    },
    "selftrain": {
        "tau": ((float, int), 0.90),
        "max_iters": ((int,), 3),
        "consume_selected": ((bool,), True),
    },
    "federation": {
        "weighting": ((str,), "uniform"),
    },
    "run": {
        "modes": ((list,), [m.value for m in Mode]),
        "seeds": ((list,), list(range(10))),
    },
}

CLIENT_KEYS = {"id", "join", "leave", "counts", "labeled", "unlabeled"}


@dataclass(frozen=True)
class RunConfig:
    modes: tuple
    seeds: tuple
    sample_rounds: tuple
    monitor_every_round: bool = False


@dataclass(frozen=True, eq=False)
class LoadedConfig:
    schedule: ScenarioSchedule
    federation: FederationConfig
    run: RunConfig
    resolved: dict = field(default_factory=dict)

    def dumps(self) -> str:
        return tomli_w.dumps(self.resolved)


def _check_type(value, types, key):
    # bool is an int subclass; don't let true/false pass as a number
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"expected {types[0].__name__}, got boolean", key)
    if not isinstance(value, types):
        raise ConfigError(f"expected {types[0].__name__}, got {type(value).__name__}", key)
    return float(value) if float in types else value


def _resolve_sections(raw: dict) -> dict:
    unknown = set(raw) - set(SCHEMA) - {"clients"}
    if unknown:
        raise ConfigError("unknown section", sorted(unknown)[0])
    out = {}
    for sec, keys in SCHEMA.items():
        given = raw.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError("must be a table", sec)
        extra = set(given) - set(keys)
        if extra:
            raise ConfigError("unknown key", f"{sec}.{sorted(extra)[0]}")
        res = {}
        for key, (types, default) in keys.items():
            dotted = f"{sec}.{key}"
            if key in given:
                res[key] = _check_type(given[key], types, dotted)
            elif default is _REQUIRED:
                raise ConfigError("missing required key", dotted)
            elif default is not None:
                res[key] = default
        out[sec] = res
    return out


def _int_list(values, key, lo=None, hi=None) -> list:
    if not isinstance(values, list):
        raise ConfigError("expected a list", key)
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"expected integers, got {v!r}", key)
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise ConfigError(f"value {v} outside [{lo}, {hi}]", key)
        out.append(v)
    return out


def _resolve_clients(raw_clients, rounds: int, L: int, beta: float) -> list:
    if not isinstance(raw_clients, list) or not raw_clients:
        raise ConfigError("at least one [[clients]] entry is required", "clients")
    resolved = []
    for i, c in enumerate(raw_clients):
        key = f"clients[{i}]"
        if not isinstance(c, dict):
            raise ConfigError("must be a table", key)
        extra = set(c) - CLIENT_KEYS
        if extra:
            raise ConfigError("unknown key", f"{key}.{sorted(extra)[0]}")
        if "id" not in c:
            raise ConfigError("missing required key", f"{key}.id")
        cid = _check_type(c["id"], (int,), f"{key}.id")
        join = _check_type(c.get("join", 1), (int,), f"{key}.join")
        leave = _check_type(c.get("leave", rounds + 1), (int,), f"{key}.leave")
        if "counts" in c:
            if "labeled" in c or "unlabeled" in c:
                raise ConfigError("give either counts or labeled/unlabeled, not both", f"{key}.counts")
            counts = _int_list(c["counts"], f"{key}.counts", lo=0)
            if len(counts) != L:
                raise ConfigError(f"need {L} entries, got {len(counts)}", f"{key}.counts")
            spec = ClientSpec.from_totals(cid, join, leave, counts, beta)
        else:
            for part in ("labeled", "unlabeled"):
                if part not in c:
                    raise ConfigError("missing required key (or give counts)", f"{key}.{part}")
            lab = _int_list(c["labeled"], f"{key}.labeled", lo=0)
            unl = _int_list(c["unlabeled"], f"{key}.unlabeled", lo=0)
            for part, arr in (("labeled", lab), ("unlabeled", unl)):
                if len(arr) != L:
                    raise ConfigError(f"need {L} entries, got {len(arr)}", f"{key}.{part}")
            spec = ClientSpec(cid, join, leave, lab, unl)
        resolved.append(spec)
    return resolved


def parse_config(raw: dict) -> LoadedConfig:
    """Validate a decoded TOML document and build the run objects."""
    sec = _resolve_sections(raw)
    sc, dt = sec["scenario"], sec["data"]
    T, L = sc["rounds"], dt["num_classes"]
    if T < 1:
        raise ConfigError("must be >= 1", "scenario.rounds")
    if L < 2:
        raise ConfigError("must be >= 2", "data.num_classes")
    if L > dt["dim"]:
        raise ConfigError(f"must be >= data.num_classes ({L})", "data.dim")
    if not 0.0 <= sc["beta"] <= 1.0:
        raise ConfigError("must lie in [0, 1]", "scenario.beta")
    try:
        data = GaussianSpec.simplex(L, dt["dim"], dt["mean_scale"], dt["sigma"])
    except ContractError as e:
        raise ConfigError(str(e), "data") from None
    clients = _resolve_clients(raw.get("clients"), T, L, sc["beta"])
    schedule = ScenarioSchedule(T, data, tuple(clients), sc["beta"], sc["test_per_class"], sc["name"])

    if "sample_rounds" in sc:
        sample = _int_list(sc["sample_rounds"], "scenario.sample_rounds", lo=1, hi=T)
    else:
        sample = sorted(set(schedule.change_rounds()) | {T})
    sc["sample_rounds"] = sample

    try:
        train = TrainConfig(sec["train"]["learning_rate"], sec["train"]["batch_size"],
                            sec["train"]["local_epochs"])
    except ContractError as e:
        raise ConfigError(str(e), "train") from None
    try:
        mon = MonitorThresholds(sec["monitor"]["eps_zero"], sec["monitor"]["eps_steady"],
                                sec["monitor"]["eps_denominator_rel"])
    except ContractError as e:
        raise ConfigError(str(e), "monitor") from None
    try:
        st = SelfTrainConfig(sec["selftrain"]["tau"], sec["selftrain"]["max_iters"],
                             sec["selftrain"]["consume_selected"])
    except ContractError as e:
        raise ConfigError(str(e), "selftrain") from None
    try:
        weighting = AggregationWeights(sec["federation"]["weighting"])
    except ValueError:
        raise ConfigError(f"expected one of {[w.value for w in AggregationWeights]}",
                          "federation.weighting") from None
    if sec["model"]["hidden_width"] < 1:
        raise ConfigError("must be >= 1", "model.hidden_width")
    fed = FederationConfig(sec["model"]["hidden_width"], train, mon, st, weighting,
                           sec["monitor"]["every_round"])

    modes = sec["run"]["modes"]
    try:
        modes = [Mode(m).value for m in modes]
    except ValueError:
        raise ConfigError(f"expected modes from {[m.value for m in Mode]}", "run.modes") from None
    seeds = _int_list(sec["run"]["seeds"], "run.seeds", lo=0)
    if not modes:
        raise ConfigError("at least one mode is required", "run.modes")
    if not seeds:
        raise ConfigError("at least one seed is required", "run.seeds")
    sec["run"]["modes"], sec["run"]["seeds"] = modes, seeds

    sec["clients"] = [{"id": c.client_id, "join": c.join_round, "leave": c.leave_round,
                       "labeled": c.labeled_counts.tolist(),
                       "unlabeled": c.unlabeled_counts.tolist()} for c in schedule.clients]
    run = RunConfig(tuple(modes), tuple(seeds), tuple(sample), sec["monitor"]["every_round"])
    return LoadedConfig(schedule, fed, run, sec)


def load_config(path) -> LoadedConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path)) from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(str(e), str(path)) from None
    return parse_config(raw)


def with_overrides(cfg: LoadedConfig, modes=None, seeds=None,
                   monitor_every_round: bool | None = None) -> LoadedConfig:
    """Apply command-line overrides, keeping the resolved dump in sync."""
    resolved = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.resolved.items()}
    fed, run = cfg.federation, cfg.run
    if modes is not None:
        try:
            modes = [Mode(m).value for m in modes]
        except ValueError:
            raise ConfigError(f"expected modes from {[m.value for m in Mode]}", "--modes") from None
        resolved["run"]["modes"] = modes
        run = RunConfig(tuple(modes), run.seeds, run.sample_rounds, run.monitor_every_round)
    if seeds is not None:
        seeds = [int(s) for s in seeds]
        if not seeds or min(seeds) < 0:
            raise ConfigError("need at least one nonnegative seed", "--seeds")
        resolved["run"]["seeds"] = seeds
        run = RunConfig(run.modes, tuple(seeds), run.sample_rounds, run.monitor_every_round)
    if monitor_every_round:
        resolved["monitor"]["every_round"] = True
        fed = FederationConfig(fed.hidden_width, fed.train, fed.monitor, fed.selftrain,
                               fed.weighting, True)
        run = RunConfig(run.modes, run.seeds, run.sample_rounds, True)
    return LoadedConfig(cfg.schedule, fed, run, resolved)


def shipped_config(name: str) -> Path:
    """Path of a config bundled with the package, e.g. ``class_decrease``."""
    p = Path(__file__).parent / "configs" / f"{name}.toml"
    if not p.exists():
        raise ConfigError("no such shipped config", name)
    return p

