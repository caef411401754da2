"""
Artifact Writer

Manifests, summaries and checkpoints are JSON with sorted keys; tabular
outputs are CSV written through pandas with round-trip float precision.
Nothing time-dependent is written so repeated runs are byte-identical.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import numpy as np
import pandas as pd

from sgrd.exceptions import ArtifactIOError
from sgrd.models import HorizontalCurve, TrajectoryRecord

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


def to_jsonable(obj: Any) -> Any:
    """Convert numpy values and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def write_json(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + '\n')
    except OSError as e:
        raise ArtifactIOError(f"could not write {path}: {e}") from e
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactIOError(f"could not read {path}: {e}") from e


def write_frame(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    except OSError as e:
        raise ArtifactIOError(f"could not write {path}: {e}") from e
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def write_manifest(out_dir: Union[str, Path], config: Dict[str, Any], grid: Dict[str, Any],
                   code_version: str) -> Path:
    return write_json(Path(out_dir) / 'manifest.json',
                      {'config': config, 'grid': grid, 'code_version': code_version})


def write_summary(out_dir: Union[str, Path], summary: Dict[str, Any]) -> Path:
    return write_json(Path(out_dir) / 'summary.json', summary)


def trajectory_frame(record: TrajectoryRecord) -> pd.DataFrame:
    """Long-format table, one block of rows per trajectory in a batched record."""
    s = np.asarray(record.s, dtype=float).reshape(record.times.size, -1)
    q = np.asarray(record.q_norm, dtype=float).reshape(record.times.size, -1)
    frames = []
    for j in range(s.shape[1]):
        frames.append(pd.DataFrame({
            'trajectory': j,
            't': record.times,
            's_unreduced': s[:, j],
            's_mod2pi': np.mod(s[:, j], 2 * np.pi),
            'q_norm': q[:, j],
        }))
    return pd.concat(frames, ignore_index=True)


def curve_frame(curve: HorizontalCurve) -> pd.DataFrame:
    """Columns ``p``, ``u_1..u_{N-1}``, ``v_0..v_{N-1}``; ``u_0`` is fixed by ``v_0`` on Q."""
    n_modes = curve.phi_points.shape[-1]
    data = {'p': curve.p_grid}
    for i in range(1, n_modes):
        data[f'u_{i}'] = curve.phi_points[:, 0, i]
    for i in range(n_modes):
        data[f'v_{i}'] = curve.phi_points[:, 1, i]
    return pd.DataFrame(data)


def rows_frame(rows: Iterable[Dict[str, Any]], columns: List[str]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=columns)


def save_checkpoint(out_dir: Union[str, Path], name: str, state: np.ndarray,
                    manifest: Dict[str, Any]) -> Path:
    """State dump (little-endian float64, coefficient-major) with a JSON sidecar."""
    out_dir = Path(out_dir)
    arr = np.asarray(state, dtype=float)
    # (..., 2, N) -> (..., N, 2): each coefficient's (u_i, v_i) pair is contiguous
    body = np.ascontiguousarray(np.swapaxes(arr, -1, -2), dtype='<f8')
    target = out_dir / f'{name}.bin'
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        target.write_bytes(body.tobytes())
    except OSError as e:
        raise ArtifactIOError(f"could not write checkpoint {target}: {e}") from e
    write_json(out_dir / f'{name}.json', {**manifest, 'state_shape': list(arr.shape), 'state_file': target.name})
    return target


def load_checkpoint(out_dir: Union[str, Path], name: str):
    out_dir = Path(out_dir)
    meta = read_json(out_dir / f'{name}.json')
    shape = tuple(meta['state_shape'])
    try:
        raw = (out_dir / meta['state_file']).read_bytes()
    except OSError as e:
        raise ArtifactIOError(f"could not read checkpoint {name}: {e}") from e
    swapped = shape[:-2] + (shape[-1], shape[-2])
    body = np.frombuffer(raw, dtype='<f8')
    if body.size != int(np.prod(shape)):
        raise ArtifactIOError(f"checkpoint {name}: expected {int(np.prod(shape))} values, found {body.size}")
    state = np.swapaxes(body.reshape(swapped), -1, -2).astype(float)
    return state, meta
