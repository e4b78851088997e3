"""CSV tables at 17 significant digits, YAML reports, law tables and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .equilibrium import TabulatedProfile
from .errors import ConfigError
from .model import GameSpec


def fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def _plain(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_report(path: Path, data: dict) -> Path:
    with open(path, "w") as fh:
        yaml.safe_dump(_plain(data), fh, sort_keys=False, width=120)
    return path


def law_header(game: GameSpec) -> list[str]:
    da, d = game.d_a, game.d
    h = ["t"]
    h += [f"A_{r}_{c}" for r in range(da) for c in range(d)]
    h += [f"A_hat_{r}_{c}" for r in range(da) for c in range(d)]
    h += [f"R_{r}" for r in range(da)]
    h += [f"R_hat_{r}" for r in range(da)]
    return h


def law_rows(times: np.ndarray, table: dict[str, np.ndarray]) -> list[list[float]]:
    rows = []
    for j, t in enumerate(times):
        rows.append(
            [float(t)]
            + list(table["A"][j].ravel())
            + list(table["A_hat"][j].ravel())
            + list(table["R"][j])
            + list(table["R_hat"][j])
        )
    return rows


def read_law(game: GameSpec, path: Path) -> TabulatedProfile:
    """Law table written by ``solve`` (columns from :func:`law_header`)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"law file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = law_header(game)
    if not rows or rows[0] != header:
        raise ConfigError(f"{path}: header does not match a law table for this game")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[0] == 0:
        raise ConfigError(f"{path}: no rows")
    da, d = game.d_a, game.d
    m = data.shape[0]
    k = 1
    A = data[:, k : k + da * d].reshape(m, da, d)
    k += da * d
    Ah = data[:, k : k + da * d].reshape(m, da, d)
    k += da * d
    R = data[:, k : k + da]
    c = data[:, k + da : k + 2 * da]
    if np.any(R != 0.0):
        raise ConfigError(f"{path}: nonzero R columns (deterministic coefficients give R = 0)")
    return TabulatedProfile(game, data[:, 0], A, Ah, c)


def file_hash(path: Path | None) -> str | None:
    if path is None:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, inputs: dict[str, Path | None], settings: dict, files: list[Path]) -> Path:
    import numpy
    import scipy

    from . import __version__

    data = {
        "command": command,
        "inputs": {k: {"path": str(v), "sha256": file_hash(v)} for k, v in inputs.items() if v is not None},
        "settings": _plain(settings),
        "versions": {
            "lqmkv": __version__,
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "pyyaml": yaml.__version__,
        },
        "outputs": {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(files)},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path
