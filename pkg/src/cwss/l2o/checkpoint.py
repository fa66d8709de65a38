"""JSON checkpoints with hex-float arrays."""

from __future__ import annotations

import json
from pathlib import Path

from ..numerics import hex_array, unhex_array
from .adam import AdamMoments
from .model import LSTM_KEYS, MLP_KEYS, L2OModel, param_shapes

__all__ = ["CheckpointError", "checkpoint_to_json", "checkpoint_from_json", "save_checkpoint", "load_checkpoint"]

SCHEMA = 1


class CheckpointError(ValueError):
    pass


def _group(params, keys):
    return {k: hex_array(params[k]) for k in keys}


def checkpoint_to_json(model: L2OModel, moments: AdamMoments, adam_t: int, update_count: int) -> dict:
    keys = LSTM_KEYS + MLP_KEYS
    return {
        "schema": SCHEMA,
        "hd": model.hd,
        "hm": model.hm,
        "lstm": _group(model.params, LSTM_KEYS),
        "mlp": _group(model.params, MLP_KEYS),
        "adam_moments": {
            "t": adam_t,
            "m": {k: hex_array(moments.m[k]) for k in keys},
            "v": {k: hex_array(moments.v[k]) for k in keys},
        },
        "update_count": update_count,
    }


def checkpoint_from_json(data: dict):
    """Returns ``(model, moments, adam_t, update_count)``."""
    if not isinstance(data, dict) or data.get("schema") != SCHEMA:
        raise CheckpointError(f"unsupported checkpoint schema {data.get('schema') if isinstance(data, dict) else None!r}")
    try:
        hd, hm = int(data["hd"]), int(data["hm"])
        shapes = param_shapes(hd, hm)
        params = {k: unhex_array(data["lstm"][k], shapes[k]) for k in LSTM_KEYS}
        params.update({k: unhex_array(data["mlp"][k], shapes[k]) for k in MLP_KEYS})
        am = data["adam_moments"]
        moments = AdamMoments(
            {k: unhex_array(am["m"][k], shapes[k]) for k in shapes},
            {k: unhex_array(am["v"][k], shapes[k]) for k in shapes},
        )
        return L2OModel(params, hd, hm), moments, int(am["t"]), int(data["update_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc


def save_checkpoint(path, model, moments, adam_t, update_count) -> None:
    Path(path).write_text(json.dumps(checkpoint_to_json(model, moments, adam_t, update_count), indent=1))


def load_checkpoint(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    return checkpoint_from_json(data)
