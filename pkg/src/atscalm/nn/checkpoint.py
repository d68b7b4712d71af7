"""Flat binary checkpoint: JSON header + named little-endian float64 payloads."""

from __future__ import annotations

import json
import struct

import numpy as np

from ..util import PipelineError

MAGIC = b"ATSNN001"


def save_checkpoint(path: str, tensors: dict[str, np.ndarray], meta: dict) -> None:
    index = []
    payloads = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        blob = arr.tobytes()
        index.append({"name": name, "dtype": "<f8", "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(blob)})
        payloads.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "tensors": index},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise PipelineError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    header = json.loads(blob[start : start + hlen].decode("utf-8"))
    payload = blob[start + hlen :]
    tensors = {}
    for item in header["tensors"]:
        raw = payload[item["offset"] : item["offset"] + item["nbytes"]]
        arr = np.frombuffer(raw, dtype=item["dtype"]).reshape(item["shape"]).astype(np.float64)
        tensors[item["name"]] = arr
    return tensors, header["meta"]
