"""
Misc helper functions.

"""
import json
import shutil
import numpy as np

FLOAT_FORMAT = "%.17g"


def deep_merge(base, override):
    """
    Return a copy of base with override merged in. Nested dictionaries are
    merged key by key, every other value in override replaces the one in base.

    Args:
        base (dict): default values
        override (dict): user values

    Returns:
        dict: merged dict
    """
    merged = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = deep_merge(merged[k], v)
        else:
            merged[k] = v
    return merged


def recursive_encoder(to_encode):
    """
    This method takes a datastructure and makes it JSON-ready by
    recursively calling itself on the datastructure at all depths.
    Objects that know how to encode themselves expose either a json_repr
    property or a serialize() method; numpy arrays and scalars become
    lists and Python numbers.

    :param to_encode: datastructure for conversion to JSON

    :return: JSON-encodable representation of to_encode
    """
    if isinstance(to_encode, (str, bool, int, float, type(None))):
        return to_encode
    elif isinstance(to_encode, np.ndarray):
        return recursive_encoder(to_encode.tolist())
    elif isinstance(to_encode, np.bool_):
        return bool(to_encode)
    elif isinstance(to_encode, np.integer):
        return int(to_encode)
    elif isinstance(to_encode, np.floating):
        return float(to_encode)
    elif isinstance(to_encode, (list, tuple, set)):
        return [recursive_encoder(x) for x in to_encode]
    elif isinstance(to_encode, dict):
        return {str(k): recursive_encoder(v) for k, v in to_encode.items()}
    elif hasattr(to_encode, "json_repr"):
        return to_encode.json_repr
    elif hasattr(to_encode, "serialize"):
        return recursive_encoder(to_encode.serialize())
    raise TypeError(f"cannot encode object of type {type(to_encode).__name__}")


def write_json(obj, path):
    """
    Write obj as JSON to path. The file is written to path + '.tmp' first
    and moved into place, so readers never see a partial file.
    """
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(recursive_encoder(obj), fh, indent=4, allow_nan=True)
    file_operations["move"](tmp, path)
    return path


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


file_operations = {
    "move": shutil.move,
}
