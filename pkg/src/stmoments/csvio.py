"""CSV output with a provenance header: '# key=value' lines, a column row, 17 significant digits."""
from __future__ import annotations

import subprocess
from importlib import metadata
from pathlib import Path
from typing import Iterable, Optional, Sequence


def version_string() -> str:
    try:
        v = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        v = "0+unknown"
    try:
        d = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                           text=True, cwd=Path(__file__).parent, timeout=5)
        if d.returncode == 0 and d.stdout.strip():
            v += "+" + d.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return v


def fmt(v) -> str:
    if isinstance(v, (bool,)):
        return str(v).lower()
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    if isinstance(v, float) or hasattr(v, "dtype"):
        return f"{float(v):.17g}"
    return str(v)


def render_csv(columns: Sequence[str], rows: Iterable[Sequence], provenance: Optional[dict] = None) -> str:
    lines = [f"# version={version_string()}"]
    for k, v in (provenance or {}).items():
        lines.append(f"# {k}={fmt(v) if not isinstance(v, (list, tuple)) else ';'.join(fmt(x) for x in v)}")
    lines.append(",".join(columns))
    for r in rows:
        lines.append(",".join(fmt(v) for v in r))
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows, provenance=None) -> str:
    text = render_csv(columns, rows, provenance)
    if path is None or str(path) == "-":
        import sys
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as f:
            f.write(text)
    return text


def read_csv(text: str):
    """Parse render_csv output into (provenance dict, columns, rows of strings)."""
    prov, rows, cols = {}, [], None
    for ln in text.splitlines():
        if ln.startswith("#"):
            k, _, v = ln[1:].strip().partition("=")
            prov[k] = v
        elif cols is None:
            cols = ln.split(",")
        elif ln:
            rows.append(ln.split(","))
    return prov, cols, rows
