"""Persistence of manifolds, trajectories, grid solutions and reports.

Binary container (checkpoints and trajectories)::

    bytes 0..N     ASCII magic line  "MADNGM\\n"
    next line      UTF-8 JSON header with sorted keys, terminated by "\\n"
    remainder      little-endian float64 payload, ``header["n_values"]`` items

Text tables are comma-separated with a fixed header line; floats are written
with ``repr`` (shortest round-trip form), so parsing returns identical bits.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptHeaderError, TruncatedPayloadError, VersionMismatchError
from .galerkin import Trajectory
from .madtrain import Manifold
from .neuralnet import NetworkArch
from .spectralref import GridSolution

MAGIC = b"MADNGM\n"
FORMAT_VERSION = 1
_F64 = np.dtype("<f8")


def atomic_write(path, data: bytes | str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --------------------------------------------------------------------------
# binary container


def _pack(header: dict, arrays: list[np.ndarray]) -> bytes:
    payload = np.concatenate([np.ravel(a).astype(_F64) for a in arrays]) if arrays else np.zeros(0, _F64)
    header = {**header, "version": header.get("version", FORMAT_VERSION), "n_values": int(payload.size)}
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + head + b"\n" + payload.astype(_F64).tobytes()


def _unpack(path, kind: str) -> tuple[dict, np.ndarray]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if not raw.startswith(MAGIC):
        raise CorruptHeaderError(f"{path}: bad magic")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise CorruptHeaderError(f"{path}: unterminated header")
    try:
        header = json.loads(raw[len(MAGIC) : end].decode("utf-8"))
        version, n_values, got_kind = header["version"], int(header["n_values"]), header["kind"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptHeaderError(f"{path}: unreadable header ({exc})") from exc
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if got_kind != kind:
        raise CorruptHeaderError(f"{path}: holds a {got_kind!r}, expected {kind!r}")
    body = raw[end + 1 :]
    want = n_values * _F64.itemsize
    if len(body) < want:
        raise TruncatedPayloadError(f"{path}: payload has {len(body)} bytes, expected {want}")
    if len(body) > want:
        raise CorruptHeaderError(f"{path}: {len(body) - want} trailing bytes after payload")
    return header, np.frombuffer(body, dtype=_F64).astype(np.float64)


def _split(payload: np.ndarray, sizes: list[int]) -> list[np.ndarray]:
    out, pos = [], 0
    for n in sizes:
        out.append(payload[pos : pos + n].copy())
        pos += n
    return out


def save_checkpoint(manifold: Manifold, path, provenance: dict | None = None):
    N, n = manifold.codes.shape
    header = {
        "kind": "manifold",
        "arch": manifold.arch.describe(),
        "latent_dim": n,
        "n_codes": N,
        "sigma": float(manifold.sigma),
        "n_losses": int(len(manifold.losses)),
        "provenance": provenance or {},
    }
    atomic_write(path, _pack(header, [manifold.theta, manifold.codes, manifold.losses]))


def load_checkpoint(path) -> Manifold:
    header, payload = _unpack(path, "manifold")
    try:
        arch = NetworkArch(**{**header["arch"], "hidden_widths": tuple(header["arch"]["hidden_widths"])})
        N, n = header["n_codes"], header["latent_dim"]
        sizes = [arch.n_params, N * n, header["n_losses"]]
    except (KeyError, TypeError) as exc:
        raise CorruptHeaderError(f"{path}: incomplete header ({exc})") from exc
    if sum(sizes) != payload.size:
        raise CorruptHeaderError(f"{path}: header sizes {sizes} disagree with payload {payload.size}")
    theta, codes, losses = _split(payload, sizes)
    return Manifold(arch, theta, codes.reshape(N, n), header["sigma"], losses)


def checkpoint_provenance(path) -> dict:
    return _unpack(path, "manifold")[0].get("provenance", {})


def save_trajectory(traj: Trajectory, path, provenance: dict | None = None):
    thetas = traj.as_array()
    header = {
        "kind": "trajectory",
        "n_times": len(traj.times),
        "n_params": thetas.shape[1],
        "latent_dim": int(np.size(traj.z)),
        "n_residuals": len(traj.residuals),
        "provenance": provenance or {},
    }
    atomic_write(path, _pack(header, [np.asarray(traj.times), thetas, np.asarray(traj.z), np.asarray(traj.residuals)]))


def load_trajectory(path) -> Trajectory:
    header, payload = _unpack(path, "trajectory")
    try:
        K, p, n, r = header["n_times"], header["n_params"], header["latent_dim"], header["n_residuals"]
    except KeyError as exc:
        raise CorruptHeaderError(f"{path}: incomplete header ({exc})") from exc
    sizes = [K, K * p, n, r]
    if sum(sizes) != payload.size:
        raise CorruptHeaderError(f"{path}: header sizes {sizes} disagree with payload {payload.size}")
    times, thetas, z, res = _split(payload, sizes)
    thetas = thetas.reshape(K, p)
    return Trajectory([row.copy() for row in thetas], z, times.tolist(), res.tolist())


# --------------------------------------------------------------------------
# delimited text


def _fmt(v: float) -> str:
    return repr(float(v))


def grid_solution_text(sol: GridSolution) -> str:
    dim = sol.points.shape[1]
    cols = ["time", "x", "y"][: dim + 1] + ["value"]
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    pts = [[_fmt(c) for c in row] for row in sol.points]
    for t, row in zip(sol.times, sol.fields):
        ts = _fmt(t)
        buf.writelines(f"{ts},{','.join(p)},{_fmt(v)}\n" for p, v in zip(pts, row))
    return buf.getvalue()


def export_grid_solution(sol: GridSolution, path):
    try:
        atomic_write(path, grid_solution_text(sol))
    except OSError as exc:
        raise OSError(f"cannot write grid solution to {path}: {exc}") from exc


def load_grid_solution(path) -> GridSolution:
    """Parse a file written by :func:`export_grid_solution`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 2
        if header[0] != "time" or header[-1] != "value" or dim not in (1, 2):
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [[float(c) for c in r] for r in reader]
    if not rows:
        return GridSolution(np.zeros(0), np.zeros((0, 0)), np.zeros((0, dim)))
    data = np.array(rows)
    n_pts = int(np.sum(data[:, 0] == data[0, 0]))
    times = data[::n_pts, 0]
    points = data[:n_pts, 1 : 1 + dim]
    return GridSolution(times, data[:, -1].reshape(len(times), n_pts), points)


@dataclass
class ExperimentReport:
    """MSE rows keyed by (sample, time, mode) plus run metadata.

    ``wall_times`` is written to a sidecar file so the main report stays
    byte-identical across reruns.
    """

    benchmark: str
    config: dict
    seeds: list[int]
    rows: list[dict] = field(default_factory=list)
    wall_times: dict = field(default_factory=dict)

    def add(self, sample, time, mode, mse_value):
        self.rows.append({"sample": sample, "time": float(time), "mode": mode, "mse": float(mse_value)})

    def table(self) -> dict:
        """{mode: {time: mean MSE over samples}}."""
        acc: dict = {}
        for r in self.rows:
            acc.setdefault(r["mode"], {}).setdefault(r["time"], []).append(r["mse"])
        return {m: {t: float(np.mean(v)) for t, v in d.items()} for m, d in acc.items()}

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "config_hash": config_hash(self.config),
            "seeds": list(self.seeds),
            "mse_table": {m: {_fmt(t): v for t, v in d.items()} for m, d in self.table().items()},
            "rows": self.rows,
            "config": self.config,
        }


def export_report(report: ExperimentReport, path):
    """Write ``report.json``-style text plus a ``.timing.json`` sidecar and a CSV table."""
    path = Path(path)
    atomic_write(path, json.dumps(report.to_dict(), indent=2) + "\n")
    lines = ["sample,time,mode,mse"] + [
        f"{r['sample']},{_fmt(r['time'])},{r['mode']},{_fmt(r['mse'])}" for r in report.rows
    ]
    atomic_write(path.with_suffix(".csv"), "\n".join(lines) + "\n")
    if report.wall_times:
        atomic_write(path.with_suffix(".timing.json"), json.dumps(report.wall_times, indent=2) + "\n")


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())
