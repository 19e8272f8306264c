"""Checkpoint container: a directory holding ``manifest.json`` and ``params.bin``.

``params.bin`` layout, all integers little-endian::

    magic    8 bytes   b"DFAPARAM"
    version  u32       1
    count    u32       number of entries
    entry    repeated ``count`` times:
        name_len  u16, then name_len bytes of UTF-8
        dtype     u8   (1 float32, 2 float64, 3 int64, 4 uint8)
        ndim      u8, then ndim x u64 shape
        data      prod(shape) * itemsize bytes, little-endian, C order

Extractor parameters are stored under ``extractor.<name>``, the frozen head
under ``head.weight``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from dfa.errors import FormatError
from dfa.models import Classifier, ModelSnapshot, build_extractor
from dfa.ortho_head import OrthogonalHead

MAGIC = b"DFAPARAM"
VERSION = 1
_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8"), 4: np.dtype("u1")}
_BY_DTYPE = {dt.newbyteorder("="): code for code, dt in _CODES.items()}


def write_arrays(path, arrays: dict[str, np.ndarray]):
    out = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        code = _BY_DTYPE.get(arr.dtype.newbyteorder("="))
        if code is None:
            raise FormatError(f"{name}: unsupported dtype {arr.dtype}")
        encoded = name.encode()
        out += [struct.pack("<H", len(encoded)), encoded,
                struct.pack("<BB", code, arr.ndim), struct.pack(f"<{arr.ndim}Q", *arr.shape),
                arr.astype(_CODES[code], copy=False).tobytes()]
    Path(path).write_bytes(b"".join(out))


def read_arrays(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise FormatError(f"{path}: truncated parameter file", offset=pos)
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    if take(8) != MAGIC:
        raise FormatError(f"{path}: bad magic", offset=0)
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=8)
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode()
        start = pos
        code, ndim = struct.unpack("<BB", take(2))
        if code not in _CODES:
            raise FormatError(f"{path}: unknown dtype code {code} for {name}", offset=start)
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        dt = _CODES[code]
        data = take(int(np.prod(shape, dtype=np.int64)) * dt.itemsize)
        arrays[name] = np.frombuffer(data, dtype=dt).reshape(shape).copy()
    if pos != len(raw):
        raise FormatError(f"{path}: trailing bytes after last entry", offset=pos)
    return arrays


def save_checkpoint(directory, snapshot: ModelSnapshot, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model = snapshot.model
    arrays = {f"extractor.{k}": v.detach().cpu().numpy()
              for k, v in model.extractor.state_dict().items()}
    arrays["head.weight"] = model.head.weight.detach().cpu().numpy()
    write_arrays(directory / "params.bin", arrays)
    manifest = {
        "format": "dfa-checkpoint/1",
        "architecture": model.extractor.arch,
        "embed_dim": model.head.embed_dim,
        "n_classes": model.head.n_classes,
        "softmax_scale": model.head.scale,
        "config_hash": snapshot.config_hash,
        "epoch": snapshot.epoch,
        "rng_state": snapshot.rng_state,
        **(extra or {}),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_checkpoint(directory) -> ModelSnapshot:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{directory}: no manifest.json")
    arrays = read_arrays(directory / "params.bin")
    extractor = build_extractor(manifest["architecture"])
    state = {k.removeprefix("extractor."): torch.from_numpy(v)
             for k, v in arrays.items() if k.startswith("extractor.")}
    if state:
        extractor = extractor.to(next(iter(state.values())).dtype)
    extractor.load_state_dict(state)
    head = OrthogonalHead(torch.from_numpy(arrays["head.weight"]), scale=manifest["softmax_scale"])
    model = Classifier(extractor, head).eval()
    return ModelSnapshot(model, manifest["config_hash"], manifest["rng_state"], manifest["epoch"])


def read_manifest(directory) -> dict:
    return json.loads((Path(directory) / "manifest.json").read_text())
