"""Single-file checkpoints: a JSON manifest followed by raw little-endian arrays.

Layout::

    b"DSLCKPT\\0" | u32 format version | u64 manifest length | manifest | payloads

Each manifest tensor entry records name, dtype, shape, offset and byte count
relative to the start of the payload block.
"""
import json
import struct
from pathlib import Path

import numpy as np

from dualsl.errors import CheckpointError
from dualsl.lm import LanguageModel
from dualsl.made import MadeEnsemble, MadeNetwork, MaskedLayerSet
from dualsl.models import NlgModel, NluModel

MAGIC = b"DSLCKPT\0"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQ")


def write_archive(path, module, arrays, config=None, seed=None, extra=None):
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype.kind == "f":
            arr = arr.astype("<f8")
        elif arr.dtype.kind in "iu" and arr.dtype.itemsize == 1:
            arr = arr.astype("|u1")
        else:
            arr = arr.astype("<i8")
        blob = np.ascontiguousarray(arr).tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    manifest = {"format_version": FORMAT_VERSION, "module": module,
                "config": config or {}, "seed": seed, "extra": extra or {},
                "tensors": entries}
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(head)))
        f.write(head)
        for blob in blobs:
            f.write(blob)


def read_archive(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError("file shorter than the header", field="header")
    magic, version, head_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file", field="magic")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported version {version}, expected {FORMAT_VERSION}",
                              field="format_version")
    start = _HEADER.size
    if len(data) < start + head_len:
        raise CheckpointError("truncated manifest", field="manifest")
    try:
        manifest = json.loads(data[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest: {exc}", field="manifest") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError("manifest version mismatch", field="format_version")
    payload = memoryview(data)[start + head_len:]
    arrays = {}
    for entry in manifest.get("tensors", []):
        name = entry["name"]
        lo, n = entry["offset"], entry["nbytes"]
        if lo + n > len(payload):
            raise CheckpointError("payload truncated", field=name)
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        if int(np.prod(shape, dtype=np.int64)) * dtype.itemsize != n:
            raise CheckpointError(f"shape {shape} inconsistent with {n} bytes", field=name)
        arrays[name] = np.frombuffer(payload[lo:lo + n], dtype=dtype).reshape(shape).copy()
    return manifest, arrays


def _load_params(model, arrays):
    for name, p in model.named_parameters().items():
        if name not in arrays:
            raise CheckpointError("missing parameter", field=name)
        if arrays[name].shape != p.shape:
            raise CheckpointError(f"shape {arrays[name].shape} != expected {p.shape}",
                                  field=name)
        p.values[...] = arrays[name]


def save_checkpoint(model, path, seed=None, extra=None):
    if isinstance(model, MadeEnsemble):
        arrays = {}
        for k, member in enumerate(model.members):
            ls = member.layer_set
            arrays[f"member{k}.input_degrees"] = ls.input_degrees
            for j, deg in enumerate(ls.hidden_degrees):
                arrays[f"member{k}.hidden{j}.degrees"] = deg
            for i, mask in enumerate(ls.masks):
                arrays[f"member{k}.mask{i}"] = mask
            arrays.update(member.state_arrays())
        config = {"size": len(model), "n_hidden_layers": len(model.members[0].layer_set.hidden_degrees),
                  "activation": model.members[0].activation}
        write_archive(path, "made_ensemble", arrays, config, seed, extra)
        return
    module = {LanguageModel: "lm", NlgModel: "nlg", NluModel: "nlu"}.get(type(model))
    if module is None:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    write_archive(path, module, model.state_arrays(), model.config(), seed, extra)


def load_checkpoint(path, expect=None):
    manifest, arrays = read_archive(path)
    module = manifest.get("module")
    if expect is not None and module != expect:
        raise CheckpointError(f"expected a {expect} checkpoint, found {module}", field="module")
    cfg = manifest.get("config", {})
    try:
        if module == "lm":
            model = LanguageModel(cfg["vocab_size"], cfg["embedding_dim"], cfg["hidden_size"])
        elif module == "nlg":
            model = NlgModel(cfg["n_labels"], cfg["vocab_size"], cfg["embedding_dim"],
                             cfg["hidden_size"])
        elif module == "nlu":
            model = NluModel(cfg["n_labels"], cfg["vocab_size"], cfg["embedding_dim"],
                             cfg["hidden_size"])
        elif module == "made_ensemble":
            return _load_made(cfg, arrays)
        else:
            raise CheckpointError(f"unknown module {module!r}", field="module")
    except KeyError as exc:
        raise CheckpointError("missing config entry", field=f"config.{exc.args[0]}") from exc
    _load_params(model, arrays)
    return model


def _load_made(cfg, arrays):
    members = []
    for k in range(cfg["size"]):
        try:
            inputs = arrays[f"member{k}.input_degrees"]
            hidden = [arrays[f"member{k}.hidden{j}.degrees"] for j in range(cfg["n_hidden_layers"])]
            masks = [arrays[f"member{k}.mask{i}"] for i in range(cfg["n_hidden_layers"] + 1)]
        except KeyError as exc:
            raise CheckpointError("missing mask payload", field=exc.args[0]) from exc
        layer_set = MaskedLayerSet(inputs, hidden, masks)
        net = MadeNetwork(layer_set, activation=cfg["activation"], name=f"made{k}")
        _load_params(net, arrays)
        members.append(net)
    return MadeEnsemble(members)
