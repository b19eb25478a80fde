"""Text model files: versioned header, config, shape table, row-major weights.

    pedtrack-model 1
    config {"input_dim": 12, ...}
    params <count>
    <name> <dim> <dim> ...        (one line per array)
    ...
    <name> v0 v1 v2 ...           (one line per array, repr() floats)
    end <total values>
"""

import json

import numpy as np

from .model import ModelConfig, ModelParams, param_shapes

MAGIC = "pedtrack-model"
VERSION = 1


class ModelFileError(ValueError):
    pass


def save_model(params, path):
    arrays = params.arrays
    lines = [f"{MAGIC} {VERSION}", "config " + json.dumps(params.config.to_dict(), sort_keys=True)]
    lines.append(f"params {len(arrays)}")
    for name, a in arrays.items():
        lines.append(" ".join([name, *map(str, a.shape)]))
    total = 0
    for name, a in arrays.items():
        flat = a.ravel()
        total += flat.size
        lines.append(name + " " + " ".join(repr(float(v)) for v in flat))
    lines.append(f"end {total}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_model(path):
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0].split() != [MAGIC, str(VERSION)]:
        raise ModelFileError(f"{path}: not a {MAGIC} v{VERSION} file")
    try:
        cfg = ModelConfig(**json.loads(lines[1].removeprefix("config ")))
        n = int(lines[2].split()[1])
        shapes = {}
        for line in lines[3 : 3 + n]:
            name, *dims = line.split()
            shapes[name] = tuple(int(d) for d in dims)
        if shapes != param_shapes(cfg):
            raise ModelFileError(f"{path}: shape table does not match config")
        arrays = {}
        for line in lines[3 + n : 3 + 2 * n]:
            name, *vals = line.split(" ")
            a = np.array([float(v) for v in vals], dtype=np.float64)
            if a.size != int(np.prod(shapes[name])):
                raise ModelFileError(f"{path}: {name} has {a.size} values, expected {shapes[name]}")
            arrays[name] = a.reshape(shapes[name])
        tail = lines[3 + 2 * n].split()
    except (IndexError, KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(f"{path}: truncated or malformed model file ({exc})") from exc
    if len(arrays) != n or tail != ["end", str(sum(a.size for a in arrays.values()))]:
        raise ModelFileError(f"{path}: truncated model file")
    return ModelParams(cfg, {name: arrays[name] for name in shapes})
