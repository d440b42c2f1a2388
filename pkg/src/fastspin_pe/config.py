"""Experiment configuration: TOML in, validated dataclass out.

Everything is nondimensional; keys holding such quantities carry a
_nondim suffix so nobody goes hunting for units. Validation errors name
the offending field by path. The config hash is the digest of the
canonical JSON form of the parsed document and is stamped into every
report, so any artifact can be traced to the exact inputs.
"""

import hashlib
import json
from dataclasses import dataclass, field as dc_field

try:
    import tomllib as tomli
except ModuleNotFoundError:
    import tomli

from .errors import ConfigError
from .grid import Grid
from .noise import NoiseSpec, RngStream
from .profiles import PROFILE_NAMES, initial_state

EXPERIMENTS = ("equivalence", "averaging", "covariance", "mixing", "coupling", "main-limit")

_OPTION_KEYS = {
    "equivalence": {"n_paths", "transformed_t_nondim"},
    "averaging": set(),
    "covariance": {"n_steps", "cesaro_t_nondim", "cesaro_steps"},
    "mixing": {"t_list_nondim", "bootstrap"},
    "coupling": {"n_cutoff", "n_pairs", "q_record_stride"},
    "main-limit": {"t_list_nondim", "mixing_rate_nondim", "burnin_factor", "mu_members"},
}


@dataclass
class ExperimentConfig:
    experiment: str
    grid: Grid
    nu: float
    alpha_list: tuple
    t_final: float
    dt: float
    n_members: int
    record_stride: int
    noise_table: dict
    initial: dict
    initial_b: dict | None
    master_seed: int
    output_dir: str | None
    threads: int
    options: dict
    raw: dict = dc_field(repr=False, default_factory=dict)

    def noise_spec(self) -> NoiseSpec:
        return noise_from_table(self.grid, self.noise_table)

    def initial_state(self, which: str = "a"):
        desc = self.initial if which == "a" else self.initial_b
        if desc is None:
            raise ConfigError("initial_b: required by this experiment but missing")
        return state_from_descriptor(self.grid, desc, RngStream(self.master_seed))

    def hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    """Digest of the canonical JSON form of the parsed document.

    Execution placement (output directory, worker count) is excluded:
    the same study written elsewhere or run on more threads must report
    the same hash, or determinism checks across thread counts would
    trip on the hash field itself.
    """
    doc = {k: v for k, v in raw.items() if k != "output_dir"}
    if "ensemble" in doc:
        doc["ensemble"] = {k: v for k, v in doc["ensemble"].items() if k != "threads"}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# field access with path-carrying errors


def _get(table: dict, path: str, key: str, types, required: bool = True, default=None):
    if key not in table:
        if required:
            raise ConfigError(f"{path}{key}: missing required field")
        return default
    v = table[key]
    if isinstance(v, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}{key}: expected {types}, got bool")
    if not isinstance(v, types):
        tn = getattr(types, "__name__", str(types))
        raise ConfigError(f"{path}{key}: expected {tn}, got {type(v).__name__}")
    return v


def _positive(value, path: str):
    if not (value > 0) or value != value:
        raise ConfigError(f"{path}: must be positive, got {value}")
    return value


def noise_from_table(grid: Grid, table: dict) -> NoiseSpec:
    kind = _get(table, "noise.", "kind", str)
    if kind == "zero":
        return NoiseSpec.zero(grid)
    if kind == "powerlaw":
        amp = float(_get(table, "noise.", "amplitude_nondim", (int, float)))
        if amp < 0:
            raise ConfigError("noise.amplitude_nondim: must be nonnegative")
        exponent = float(_get(table, "noise.", "exponent", (int, float)))
        return NoiseSpec.from_powerlaw(grid, amp, exponent)
    if kind == "explicit":
        modes = _get(table, "noise.", "modes", list)
        try:
            return NoiseSpec.from_explicit(grid, modes)
        except ValueError as e:
            raise ConfigError(f"noise.modes: {e}") from e
    raise ConfigError(f"noise.kind: unknown kind {kind!r}")


def state_from_descriptor(grid: Grid, desc: dict, master: RngStream):
    from .fields import read_spef
    from .dynamics import State

    path_label = desc.get("_path_label", "initial")
    if "spef" in desc:
        try:
            f = read_spef(desc["spef"], grid=grid)
        except (OSError, ValueError) as e:
            raise ConfigError(f"{path_label}.spef: {e}") from e
        s = State.from_field(f)
        s.validate()
        return s
    name = _get(desc, f"{path_label}.", "profile", str)
    if name not in PROFILE_NAMES:
        raise ConfigError(
            f"{path_label}.profile: unknown profile {name!r}; expected one of {PROFILE_NAMES}"
        )
    amp = float(_get(desc, f"{path_label}.", "amplitude_nondim", (int, float),
                     required=False, default=1.0))
    _positive(amp, f"{path_label}.amplitude_nondim")
    return initial_state(grid, name, amp, master.child(channel=f"{path_label}-profile"))


# ---------------------------------------------------------------------------
# parse


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"config is not valid TOML: {e}") from e
    return from_dict(raw)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text)


def from_dict(raw: dict) -> ExperimentConfig:
    experiment = _get(raw, "", "experiment", str)
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"experiment: unknown experiment {experiment!r}; expected one of {EXPERIMENTS}"
        )

    g = _get(raw, "", "grid", dict)
    nx = _get(g, "grid.", "nx", int)
    ny = _get(g, "grid.", "ny", int)
    nz = _get(g, "grid.", "nz", int)
    for label, n in (("nx", nx), ("ny", ny), ("nz", nz)):
        if n < 4 or n % 2:
            raise ConfigError(f"grid.{label}: must be an even integer >= 4, got {n}")
    grid = Grid(nx, ny, nz)

    tt = _get(raw, "", "time", dict)
    t_final = float(_positive(_get(tt, "time.", "T_nondim", (int, float)), "time.T_nondim"))
    dt = float(_positive(_get(tt, "time.", "dt_nondim", (int, float)), "time.dt_nondim"))
    if dt > t_final:
        raise ConfigError("time.dt_nondim: larger than time.T_nondim")
    n_steps = t_final / dt
    if abs(n_steps - round(n_steps)) > 1e-8:
        raise ConfigError("time.dt_nondim: T_nondim must be an integer number of steps")
    stride = _get(tt, "time.", "record_stride", int, required=False, default=1)
    if stride < 1:
        raise ConfigError(f"time.record_stride: must be >= 1, got {stride}")

    ph = _get(raw, "", "physics", dict)
    nu = float(_positive(_get(ph, "physics.", "nu_nondim", (int, float)), "physics.nu_nondim"))
    alist = _get(ph, "physics.", "alpha_list", list)
    if not alist:
        raise ConfigError("physics.alpha_list: must not be empty")
    alpha_list = []
    for i, a in enumerate(alist):
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not a > 0:
            raise ConfigError(f"physics.alpha_list[{i}]: must be a positive real, got {a!r}")
        alpha_list.append(float(a))

    en = _get(raw, "", "ensemble", dict)
    n_members = _get(en, "ensemble.", "n_members", int)
    if n_members < 1:
        raise ConfigError(f"ensemble.n_members: must be >= 1, got {n_members}")
    threads = _get(en, "ensemble.", "threads", int, required=False, default=1)
    if threads < 1:
        raise ConfigError(f"ensemble.threads: must be >= 1, got {threads}")

    noise_table = _get(raw, "", "noise", dict)
    noise_from_table(grid, noise_table)

    initial = dict(_get(raw, "", "initial", dict))
    initial["_path_label"] = "initial"
    initial_b = raw.get("initial_b")
    if initial_b is not None:
        initial_b = dict(initial_b)
        initial_b["_path_label"] = "initial_b"
    if experiment in ("mixing", "coupling") and initial_b is None:
        raise ConfigError(f"initial_b: required by the {experiment} experiment")

    master_seed = _get(raw, "", "master_seed", int, required=False, default=0)
    if not (0 <= master_seed < 2**64):
        raise ConfigError(f"master_seed: must fit in 64 unsigned bits, got {master_seed}")
    output_dir = _get(raw, "", "output_dir", str, required=False)

    options = dict(raw.get(experiment, {}))
    unknown = set(options) - _OPTION_KEYS[experiment]
    if unknown:
        raise ConfigError(
            f"{experiment}.{sorted(unknown)[0]}: unknown option for this experiment"
        )
    if experiment == "coupling" and "n_cutoff" not in options:
        raise ConfigError("coupling.n_cutoff: missing required field")
    if experiment == "main-limit" and "mixing_rate_nondim" not in options:
        raise ConfigError(
            "main-limit.mixing_rate_nondim: missing required field "
            "(take the fitted rate from a mixing run; it sets the burn-in)"
        )

    cfg = ExperimentConfig(
        experiment=experiment, grid=grid, nu=nu, alpha_list=tuple(alpha_list),
        t_final=t_final, dt=dt, n_members=n_members, record_stride=stride,
        noise_table=noise_table, initial=initial, initial_b=initial_b,
        master_seed=master_seed, output_dir=output_dir, threads=threads,
        options=options, raw=raw,
    )
    state_from_descriptor(grid, cfg.initial, RngStream(master_seed))
    if cfg.initial_b is not None:
        state_from_descriptor(grid, cfg.initial_b, RngStream(master_seed))
    return cfg


# ---------------------------------------------------------------------------
# serialize

# tomllib has no writer in this interpreter, so a small emitter lives
# here; it covers the subset the schema uses (scalars, arrays, nested
# tables, arrays of tables) and round-trips through the parser.


def _fmt_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        r = repr(v)
        return r if ("e" in r or "." in r or "inf" in r or "nan" in r) else r + ".0"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_fmt_scalar(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize value of type {type(v).__name__}")


def dumps_toml(doc: dict) -> str:
    lines = []

    def emit_table(table: dict, prefix: str):
        sub_tables = []
        table_arrays = []
        for k, v in table.items():
            if k.startswith("_"):
                continue
            if isinstance(v, dict):
                sub_tables.append((k, v))
            elif isinstance(v, list) and v and all(isinstance(x, dict) for x in v):
                table_arrays.append((k, v))
            else:
                lines.append(f"{_key(k)} = {_fmt_scalar(v)}")
        for k, v in sub_tables:
            name = f"{prefix}{_key(k)}"
            lines.append("")
            lines.append(f"[{name}]")
            emit_table(v, name + ".")
        for k, arr in table_arrays:
            name = f"{prefix}{_key(k)}"
            for item in arr:
                lines.append("")
                lines.append(f"[[{name}]]")
                emit_table(item, name + ".")

    def _key(k: str) -> str:
        if k and all(c.isalnum() or c in "-_" for c in k):
            return k
        return json.dumps(k)

    emit_table(doc, "")
    return "\n".join(lines).lstrip("\n") + "\n"


def dump_config(cfg: ExperimentConfig) -> str:
    return dumps_toml(cfg.raw)
