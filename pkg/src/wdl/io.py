"""Deterministic CSV writing and flat ``key=value`` configuration files."""

import math
from pathlib import Path

from .errors import ConfigError


def format_value(v):
    """17 significant digits for floats, lower-case booleans, plain text otherwise."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.17g}"
    return str(v)


def csv_text(header, rows, manifest=None):
    lines = []
    for key, value in (manifest or {}).items():
        lines.append(f"# {key}={format_value(value)}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows, manifest=None):
    """Write a comma-separated file with ``#``-prefixed manifest lines above the header."""
    path = Path(path)
    path.write_text(csv_text(header, rows, manifest), encoding="utf-8", newline="\n")
    return path


def read_csv(path):
    """Return ``(manifest, header, rows)`` with every cell as a string."""
    manifest, header, rows = {}, None, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            manifest[key] = value
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    return manifest, header, rows


def parse_scalar(text):
    """Interpret a config value as bool, int, float or string, in that order."""
    low = text.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip()


def read_config(path, allowed=None):
    """Parse a flat ``key=value`` file; ``#`` starts a comment line.

    Keys are normalised to lower case with ``-`` mapped to ``_``.  With
    ``allowed`` given, unknown keys raise :class:`ConfigError`.
    """
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if allowed is not None and key not in allowed:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = parse_scalar(value)
    return out
