"""Single-file checkpoints: JSON header plus raw little-endian float64 data.

The format is fully deterministic (no timestamps, sorted keys, manifest
order), so identical states serialize to identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import InputError
from ..objectives import LossWeights, SboParams
from .adam import AdamState
from .encoder import EncoderConfig
from .train import TrainState

_MAGIC = b"FMLMCKPT"
_VERSION = 1


def save_checkpoint(path: str | Path, state: TrainState) -> None:
    arrays = dict(state.named_arrays())
    for name, m in state.opt.m.items():
        arrays[f"opt.m.{name}"] = m
    for name, v in state.opt.v.items():
        arrays[f"opt.v.{name}"] = v
    manifest = [[name, list(arrays[name].shape)] for name in sorted(arrays)]
    header = {
        "config": state.config.to_json(),
        "epoch": state.epoch,
        "opt_t": state.opt.t,
        "policy_digest": state.policy_digest,
        "seed": state.seed,
        "tensors": manifest,
        "weights": {
            "lambda1": state.weights.lambda1,
            "lambda2": state.weights.lambda2,
            "lambda_cls": state.weights.lambda_cls,
            "temperature": state.weights.temperature,
        },
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for name, _shape in manifest:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> TrainState:
    p = Path(path)
    try:
        blob = p.read_bytes()
    except OSError as exc:
        raise InputError("cannot read checkpoint", str(p)) from exc
    if blob[: len(_MAGIC)] != _MAGIC:
        raise InputError("not a checkpoint file (bad magic)", str(p))
    version, header_len = struct.unpack_from("<II", blob, len(_MAGIC))
    if version != _VERSION:
        raise InputError(f"unsupported checkpoint version {version}", str(p))
    offset = len(_MAGIC) + 8
    header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    offset += header_len

    arrays: dict[str, np.ndarray] = {}
    for name, shape in header["tensors"]:
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(shape)
        arrays[name] = arr.astype(np.float64)  # own, writable copy
        offset += size * 8

    config = EncoderConfig.from_json(header["config"])
    weights = LossWeights(**header["weights"])
    gen = {k[len("gen.") :]: v for k, v in arrays.items() if k.startswith("gen.")}
    disc = {k[len("disc.") :]: v for k, v in arrays.items() if k.startswith("disc.")}
    sbo_fields = {k[len("sbo.") :]: v for k, v in arrays.items() if k.startswith("sbo.")}
    opt = AdamState(t=header["opt_t"])
    state = TrainState(
        config=config,
        weights=weights,
        gen=gen,
        disc=disc,
        sbo=SboParams(**sbo_fields),
        opt=opt,
        epoch=header["epoch"],
        seed=header["seed"],
        policy_digest=header["policy_digest"],
    )
    named = state.named_arrays()
    for k, v in arrays.items():
        if k.startswith("opt.m."):
            opt.m[k[len("opt.m.") :]] = v
        elif k.startswith("opt.v."):
            opt.v[k[len("opt.v.") :]] = v
    # Moments must reference the same param names that exist in the state.
    for name in list(opt.m):
        if name not in named:
            raise InputError(f"checkpoint moment for unknown tensor {name!r}", str(p))
    return state
