"""Run manifests and CSV emission.

Every CSV opens with comment lines recording the manifest that produced
it; re-running the same subcommand with the recorded flags (including the
recorded timestamp) reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

__all__ = ["RunManifest", "spec_digest", "format_cell", "write_csv"]


def spec_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Inputs that determine a command's outputs."""

    subcommand: str
    spec_path: str
    spec_sha256: str
    out_dir: str
    timestamp: str
    seed: int
    version: str
    options: tuple[tuple[str, str], ...] = ()

    def header_lines(self) -> list[str]:
        pairs = [
            ("subcommand", self.subcommand),
            ("spec_path", self.spec_path),
            ("spec_sha256", self.spec_sha256),
            ("out_dir", self.out_dir),
            ("timestamp", self.timestamp),
            ("seed", str(self.seed)),
            ("version", self.version),
        ]
        pairs.extend(self.options)
        return [f"# {key}: {value}" for key, value in pairs]


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, manifest: RunManifest, columns: list[str], rows, warnings=(), comments=()) -> None:
    """Write one CSV with the manifest comment header.

    Cells are formatted deterministically: floats through repr (shortest
    round-trip form), None as the empty cell.
    """
    lines = manifest.header_lines()
    lines.extend(f"# {c}" for c in comments)
    lines.extend(f"# warning: {w}" for w in warnings)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_cell(cell) for cell in row))
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
