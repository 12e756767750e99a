"""Flat ``key = value`` experiment configuration files.

One assignment per line, ``#`` starts a comment.  Lists are comma
separated.  Every error names the line and column it was found at.
"""
from dataclasses import dataclass, field

KIND_NAMES = (
    "isometry", "duality", "pushthrough", "qv", "cross", "bdg", "strat_convert", "collapse", "solve",
    "truncation", "energy", "ito_formula",
)


class ConfigError(ValueError):
    def __init__(self, message, line=None, column=None):
        self.line, self.column = line, column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# key -> (type, check, description of check)
SCHEMA = {
    "kind": ("str", lambda v: v in KIND_NAMES, f"one of {', '.join(KIND_NAMES)}"),
    "n_paths": ("int", _positive, "a positive integer"),
    "seed": ("int", _nonneg, "a nonnegative 64-bit integer"),
    "dt": ("float", _positive, "positive"),
    "t_final": ("float", _positive, "positive"),
    "k_modes": ("int", _positive, "a positive integer"),
    "workers": ("int", _positive, "a positive integer"),
    "tolerance": ("float", _positive, "positive"),
    "out": ("str", None, None),
    "verbosity": ("int", _nonneg, "nonnegative"),
    "integrand": ("str", lambda v: v in ("constant", "brownian", "cylindrical", "smooth"),
                  "constant, brownian, cylindrical or smooth"),
    "a": ("floats", None, None),
    "v": ("floats", None, None),
    "phi": ("floats", None, None),
    "lambdas": ("floats", None, None),
    "strides": ("ints", lambda v: all(s > 0 for s in v), "positive integers"),
    "dim": ("int", _positive, "a positive integer"),
    "pathwise_tol": ("float", _positive, "positive"),
    "cases": ("int", _positive, "a positive integer"),
    "suite_seed": ("int", _nonneg, "nonnegative"),
    "doob_bound": ("float", _positive, "positive"),
    "stability": ("float", _positive, "positive"),
    "psi0": ("float", None, None),
    "theta": ("float", _nonneg, "nonnegative"),
    "sigma": ("float", None, None),
    "gap_dt": ("float", _positive, "positive"),
    "gap_paths": ("int", _positive, "a positive integer"),
    "min_slope": ("float", None, None),
    "k_max": ("int", _positive, "a positive integer"),
    "zero_noise": ("bool", None, None),
    "js": ("ints", lambda v: all(j > 0 for j in v), "positive integers"),
    "ratio_low": ("float", _positive, "positive"),
    "ratio_high": ("float", _positive, "positive"),
    "halving_band": ("float", _positive, "positive"),
    "match_tol": ("float", _positive, "positive"),
    "ladder": ("floats", lambda v: len(v) > 0 and all(x > 0 for x in v), "positive numbers"),
    "expected_slope": ("float", None, None),
    "slope_tol": ("float", _positive, "positive"),
}

# experiment-record keys; everything else is a kind parameter
CORE_KEYS = ("kind", "n_paths", "seed", "dt", "t_final", "k_modes", "workers", "tolerance", "out", "verbosity")
REFINE_KEYS = ("ladder", "expected_slope", "slope_tol")


def _parse_scalar(kind, text):
    if kind == "int":
        return int(text, 10)
    if kind == "float":
        value = float(text)
        return value
    if kind == "bool":
        if text in ("true", "false"):
            return text == "true"
        raise ValueError(text)
    if kind == "str":
        if not text:
            raise ValueError(text)
        return text
    raise AssertionError(kind)


def _parse_value(kind, text):
    if kind in ("ints", "floats"):
        parts = [p.strip() for p in text.split(",")]
        if not parts or any(not p for p in parts):
            raise ValueError(text)
        return [_parse_scalar(kind[:-1], p) for p in parts]
    return _parse_scalar(kind, text)


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class Config:
    """Explicitly assigned values in file order, with the line each came from."""

    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def __contains__(self, key):
        return key in self.values

    @property
    def kind(self):
        return self.values.get("kind")

    def params(self):
        return {k: v for k, v in self.values.items() if k not in CORE_KEYS and k not in REFINE_KEYS}

    def require(self, *keys):
        missing = [k for k in keys if k not in self.values]
        if missing:
            raise ConfigError(f"missing required key(s): {', '.join(missing)}")


def _split_line(raw):
    return raw.split("#", 1)[0]


def parse_config(text, required=()):
    """Parse config text; raise :class:`ConfigError` with line and column on any problem."""
    cfg = Config()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _split_line(raw)
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col)
        key_part, value_part = body.split("=", 1)
        key = key_part.strip()
        key_col = len(key_part) - len(key_part.lstrip()) + 1
        value_col = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, key_col)
        if key in cfg.values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {cfg.lines[key]})", lineno, key_col)
        kind, check, desc = SCHEMA[key]
        text_value = value_part.strip()
        try:
            value = _parse_value(kind, text_value)
        except ValueError:
            raise ConfigError(f"{key} expects a value of type {kind}, got {text_value!r}", lineno, value_col) from None
        if check is not None and not check(value):
            raise ConfigError(f"{key} must be {desc}, got {text_value!r}", lineno, value_col)
        cfg.values[key] = value
        cfg.lines[key] = lineno
    cfg.require(*required)
    return cfg


def serialize(cfg):
    """Canonical text: one ``key = value`` line per assigned key, in file order."""
    return "".join(f"{k} = {format_value(v)}\n" for k, v in cfg.values.items())


def normalize(text):
    """Drop comments and blank lines and canonicalise spacing around ``=`` and commas."""
    out = []
    for raw in text.splitlines():
        body = _split_line(raw).strip()
        if not body:
            continue
        key, value = body.split("=", 1)
        value = ", ".join(p.strip() for p in value.split(","))
        out.append(f"{key.strip()} = {value.strip()}\n")
    return "".join(out)
