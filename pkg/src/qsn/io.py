"""On-disk formats: trajectory CSV + JSON sidecar, JSON artifacts, curve CSVs."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from qsn.errors import ConfigurationError
from qsn.features import BinningScheme, FeatureSpec, StandardScaler
from qsn.l96 import Trajectory

FLOAT_FMT = "%.17g"


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_hash(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def artifact_hash(spec: FeatureSpec, scaler: StandardScaler, scheme: BinningScheme) -> str:
    """Content hash tying a trained network to the features it was trained on."""
    payload = {"spec": spec.to_dict(), "scaler": scaler.to_dict(), "bins": scheme.to_dict()}
    return sha256_bytes(_canonical(payload))[:16]


def write_json(path, obj, indent: int | None = 1):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=indent, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def trajectory_header(N: int) -> list[str]:
    return ["t"] + [f"X_{n}" for n in range(N)] + [f"r_{n}" for n in range(N)]


def write_trajectory(path, traj: Trajectory, sidecar: dict | None = None):
    """CSV with columns ``t, X_0..X_{N-1}, r_0..r_{N-1}`` at 17 significant digits.

    ``sidecar`` (if given) is written next to it as ``<stem>.json``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([traj.times, traj.X, traj.r])
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",",
               header=",".join(trajectory_header(traj.N)), comments="")
    if sidecar is not None:
        write_json(sidecar_path(path), sidecar)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "t" or (len(header) - 1) % 2:
        raise ConfigurationError(f"{path}: unexpected trajectory header {header[:3]}...")
    N = (len(header) - 1) // 2
    if header != trajectory_header(N):
        raise ConfigurationError(f"{path}: header does not match t, X_0..X_{N-1}, r_0..r_{N-1}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(data[:, 0], data[:, 1: N + 1], data[:, N + 1:])


def read_sidecar(path) -> dict:
    p = sidecar_path(path)
    return read_json(p) if p.exists() else {}


def write_curves(path, columns: dict):
    """Equal-length named columns as a CSV (grid first)."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(names), comments="")


def save_scaler(path, scaler: StandardScaler):
    write_json(path, scaler.to_dict())


def load_scaler(path) -> StandardScaler:
    return StandardScaler.from_dict(read_json(path))


def save_bins(path, scheme: BinningScheme):
    write_json(path, scheme.to_dict(), indent=None)


def load_bins(path) -> BinningScheme:
    return BinningScheme.from_dict(read_json(path))


def save_network(path, net):
    write_json(path, net.to_dict(), indent=None)


def load_network(path):
    from qsn.network import QSNetwork

    return QSNetwork.from_dict(read_json(path))
