"""Extended-XYZ trajectories, binary checkpoints and CSV tables."""

from __future__ import annotations

import csv
import json
import shlex
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import CheckpointFormatError, CheckpointVersionError, ParseError, SchemaError
from .graph import MolecularFrame, Trajectory

SYMBOLS = (
    "X", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P",
    "S", "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr",
)
ATOMIC_NUMBERS = {s: z for z, s in enumerate(SYMBOLS) if z}


def symbol_to_z(symbol: str) -> int:
    try:
        return ATOMIC_NUMBERS[symbol.capitalize()]
    except KeyError:
        raise ValueError(f"unknown element {symbol!r}") from None


def z_to_symbol(z: int) -> str:
    if not 0 < z < len(SYMBOLS):
        raise ValueError(f"no symbol for atomic number {z}")
    return SYMBOLS[z]


# ---------------------------------------------------------------- trajectories

def _parse_comment(line: str, lineno: int) -> dict:
    try:
        tokens = shlex.split(line)
    except ValueError as exc:
        raise ParseError(f"bad metadata: {exc}", lineno) from None
    meta = {}
    for tok in tokens:
        if "=" not in tok:
            continue
        key, value = tok.split("=", 1)
        meta[key.strip().lower()] = value
    return meta


def parse_xyz(text: str, name: str = "") -> Trajectory:
    """Parse extended-XYZ text into a trajectory (frames sorted by ``time``)."""
    lines = text.splitlines()
    frames = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        lineno = i + 1
        try:
            n = int(lines[i].split()[0])
        except (ValueError, IndexError):
            raise ParseError(f"expected atom count, got {lines[i]!r}", lineno) from None
        if n < 1:
            raise ParseError("atom count must be positive", lineno)
        if i + 1 >= len(lines):
            raise ParseError("missing metadata line", lineno + 1)
        meta = _parse_comment(lines[i + 1], lineno + 1)
        if "time" not in meta:
            raise ParseError("metadata lacks time=<real>", lineno + 1)
        try:
            time = float(meta["time"])
        except ValueError:
            raise ParseError(f"bad time value {meta['time']!r}", lineno + 1) from None
        pos = np.zeros((n, 3))
        vel = np.zeros((n, 3))
        zs = np.zeros(n, dtype=np.int64)
        for a in range(n):
            row = i + 2 + a
            if row >= len(lines):
                raise ParseError(f"frame {len(frames)} ends after {a} of {n} atoms", row + 1)
            parts = lines[row].split()
            if len(parts) not in (4, 7):
                # A short row usually means the next frame started early.
                if len(parts) == 1 and parts[0].isdigit():
                    raise SchemaError(f"frame {len(frames)} has {a} atoms, header says {n}")
                raise ParseError(f"expected 4 or 7 fields, got {len(parts)}", row + 1)
            try:
                zs[a] = symbol_to_z(parts[0])
                pos[a] = [float(p) for p in parts[1:4]]
                if len(parts) == 7:
                    vel[a] = [float(p) for p in parts[4:7]]
            except ValueError as exc:
                raise ParseError(str(exc), row + 1) from None
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise ParseError(f"non-finite coordinates in frame {len(frames)}", lineno)
        frames.append(MolecularFrame(pos, vel, zs, time))
        i += 2 + n
    if not frames:
        raise ParseError("no frames found", 1)
    for k, frame in enumerate(frames[1:], start=1):
        if frame.num_atoms != frames[0].num_atoms:
            raise SchemaError(
                f"frame {k} has {frame.num_atoms} atoms, frame 0 has {frames[0].num_atoms}")
        if not np.array_equal(frame.atomic_numbers, frames[0].atomic_numbers):
            raise SchemaError(f"frame {k} changes the atomic numbers")
    frames.sort(key=lambda f: f.timestamp)
    try:
        return Trajectory(tuple(frames), name)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    return parse_xyz(path.read_text(encoding="utf-8"), path.stem)


def format_xyz(frames: Sequence[MolecularFrame], lattice=None) -> str:
    """Extended-XYZ text with 17 significant digits per number."""
    out = []
    for frame in frames:
        comment = f"time={float(frame.timestamp)!r} Properties=species:S:1:pos:R:3:vel:R:3"
        if lattice is not None:
            lat = " ".join(repr(float(x)) for x in np.asarray(lattice).ravel())
            comment = f'Lattice="{lat}" ' + comment
        out.append(str(frame.num_atoms))
        out.append(comment)
        for z, p, v in zip(frame.atomic_numbers, frame.positions, frame.velocities):
            nums = " ".join(f"{x:.17g}" for x in (*p, *v))
            out.append(f"{z_to_symbol(int(z))} {nums}")
    return "\n".join(out) + "\n"


def save_trajectory(path, frames, lattice=None) -> None:
    frames = frames.frames if isinstance(frames, Trajectory) else frames
    Path(path).write_text(format_xyz(frames, lattice), encoding="utf-8")


# ----------------------------------------------------------------- checkpoints

MAGIC = b"GFNODECK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: dict
    params: dict                    # name -> float64 array
    num_atoms: int
    epoch: int = 0
    best_val_loss: float = float("inf")
    optimizer_state: dict | None = None
    format_version: int = FORMAT_VERSION
    extra: dict = field(default_factory=dict)


def _flatten_optimizer(state: Mapping, arrays: list) -> dict:
    """Replace tensors in a torch optimizer state dict by payload references."""
    def walk(obj):
        if hasattr(obj, "detach"):
            arr = obj.detach().cpu().numpy().astype(np.float64)
            arrays.append(arr)
            return {"__array__": len(arrays) - 1}
        if isinstance(obj, np.ndarray):
            arrays.append(obj.astype(np.float64))
            return {"__array__": len(arrays) - 1}
        if isinstance(obj, Mapping):
            return {"__keys__": [[walk(k), walk(v)] for k, v in obj.items()]}
        if isinstance(obj, (list, tuple)):
            return [walk(x) for x in obj]
        return obj
    return walk(state)


def _unflatten_optimizer(obj, arrays: list):
    if isinstance(obj, dict) and "__array__" in obj:
        return arrays[obj["__array__"]]
    if isinstance(obj, dict) and "__keys__" in obj:
        return {_unflatten_optimizer(k, arrays): _unflatten_optimizer(v, arrays)
                for k, v in obj["__keys__"]}
    if isinstance(obj, list):
        return [_unflatten_optimizer(x, arrays) for x in obj]
    return obj


def save_checkpoint(path, cp: Checkpoint) -> None:
    """Write ``magic | uint64 header length | JSON header | float64 LE payload``."""
    names = list(cp.params)
    arrays = [np.asarray(cp.params[n], dtype=np.float64) for n in names]
    opt_arrays: list = []
    opt = None if cp.optimizer_state is None else _flatten_optimizer(cp.optimizer_state, opt_arrays)
    header = {
        "format_version": cp.format_version,
        "config": cp.config,
        "num_atoms": cp.num_atoms,
        "epoch": cp.epoch,
        # JSON has no infinity literal; repr keeps floats exact.
        "best_val_loss": repr(float(cp.best_val_loss)),
        "extra": cp.extra,
        "params": [{"name": n, "shape": list(a.shape)} for n, a in zip(names, arrays)],
        "optimizer": opt,
        "optimizer_arrays": [list(a.shape) for a in opt_arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays + opt_arrays)
    Path(path).write_bytes(MAGIC + struct.pack("<Q", len(blob)) + blob + payload)


def _read_arrays(data: bytes, offset: int, shapes) -> tuple[list, int]:
    out = []
    for shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise CheckpointFormatError("payload is truncated")
        out.append(np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).astype(np.float64))
        offset = end
    return out, offset


def load_checkpoint(path, expected_config: Mapping | None = None) -> Checkpoint:
    """Read a checkpoint; warn with the changed keys if ``expected_config`` differs."""
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if 16 + hlen > len(data):
        raise CheckpointFormatError("header is truncated")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
        version = header["format_version"]
        specs = header["params"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"corrupt header: {exc}") from None
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, expected {FORMAT_VERSION}")
    try:
        arrays, offset = _read_arrays(data, 16 + hlen, [tuple(s["shape"]) for s in specs])
        opt_arrays, offset = _read_arrays(data, offset,
                                          [tuple(s) for s in header["optimizer_arrays"]])
        if offset != len(data):
            raise CheckpointFormatError(f"{len(data) - offset} trailing bytes")
        cp = Checkpoint(
            config=header["config"],
            params={s["name"]: a for s, a in zip(specs, arrays)},
            num_atoms=int(header["num_atoms"]),
            epoch=int(header["epoch"]),
            best_val_loss=float(header["best_val_loss"]),
            optimizer_state=(None if header["optimizer"] is None
                             else _unflatten_optimizer(header["optimizer"], opt_arrays)),
            format_version=version,
            extra=header.get("extra", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointFormatError):
            raise
        raise CheckpointFormatError(f"corrupt header: {exc}") from None
    if expected_config is not None:
        changed = config_drift(cp.config, expected_config)
        if changed:
            warnings.warn(f"config drift: checkpoint differs in {', '.join(changed)}",
                          UserWarning)
    return cp


def config_drift(old: Mapping, new: Mapping) -> list:
    """Sorted keys whose values differ (or exist on one side only)."""
    keys = set(old) | set(new)
    return sorted(k for k in keys if old.get(k, object()) != new.get(k, object()))


# ------------------------------------------------------------------------- csv

def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                             for x in row])
