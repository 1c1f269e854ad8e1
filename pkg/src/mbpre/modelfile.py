"""JSON model files.

Layout::

    {"p": 2,
     "states": [{"prob": 0.5,
                 "laws": [[{"z": [0, 0], "prob": 0.25}, ...],   # type 1
                          [{"z": [1, 0], "prob": 1.0}]]}]}       # type 2

Validation errors carry ``<source>:<line>:`` prefixes pointing at the JSON
object that is wrong.
"""

from __future__ import annotations

import json
import json.decoder
import json.scanner
from pathlib import Path

import numpy as np

from .envmodel import EnvModel, EnvState, OffspringLaw
from .errors import ModelError


class _Obj(dict):
    line = 0


class _LineDecoder(json.JSONDecoder):
    # pure-python scanner, so the object hook below sees source offsets
    def __init__(self):
        super().__init__()

        def parse_object(s_and_end, strict, scan_once, object_hook, pairs_hook, memo=None):
            s, end = s_and_end
            obj, new_end = json.decoder.JSONObject(
                s_and_end, strict, scan_once, object_hook, pairs_hook, memo
            )
            out = _Obj(obj)
            out.line = s.count("\n", 0, end) + 1
            return out, new_end

        self.parse_object = parse_object
        self.scan_once = json.scanner.py_make_scanner(self)


def _fail(source, line, msg):
    raise ModelError(f"{source}:{line}: {msg}")


def parse_model(text: str, source: str = "<model>") -> EnvModel:
    try:
        doc = _LineDecoder().decode(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        _fail(source, 1, "top level must be an object")
    line = getattr(doc, "line", 1)
    p = doc.get("p")
    if not isinstance(p, int) or isinstance(p, bool) or p < 1:
        _fail(source, line, f"'p' must be a positive integer, got {p!r}")
    states_doc = doc.get("states")
    if not isinstance(states_doc, list) or not states_doc:
        _fail(source, line, "'states' must be a nonempty list")
    states, probs = [], []
    for e, sd in enumerate(states_doc):
        sl = getattr(sd, "line", line)
        if not isinstance(sd, dict):
            _fail(source, sl, f"state {e} must be an object")
        prob = sd.get("prob")
        if not isinstance(prob, (int, float)) or isinstance(prob, bool):
            _fail(source, sl, f"state {e}: 'prob' must be a number")
        laws_doc = sd.get("laws")
        if not isinstance(laws_doc, list) or len(laws_doc) != p:
            _fail(source, sl, f"state {e}: 'laws' must list exactly p={p} laws")
        laws = []
        for k, ld in enumerate(laws_doc):
            if not isinstance(ld, list) or not ld:
                _fail(source, sl, f"state {e}, law {k}: must be a nonempty list of atoms")
            ll = getattr(ld[0], "line", sl)
            supp, pr = [], []
            for atom in ld:
                al = getattr(atom, "line", ll)
                if not isinstance(atom, dict) or "z" not in atom or "prob" not in atom:
                    _fail(source, al, f"state {e}, law {k}: atoms need 'z' and 'prob'")
                z = atom["z"]
                if not isinstance(z, list) or len(z) != p or not all(
                    isinstance(c, int) and not isinstance(c, bool) and c >= 0 for c in z
                ):
                    _fail(source, al, f"state {e}, law {k}: 'z' must be {p} nonnegative integers, got {z!r}")
                q = atom["prob"]
                if not isinstance(q, (int, float)) or isinstance(q, bool):
                    _fail(source, al, f"state {e}, law {k}: 'prob' must be a number")
                supp.append(z)
                pr.append(float(q))
            try:
                laws.append(OffspringLaw(np.array(supp, dtype=np.int64), np.array(pr)))
            except ModelError as exc:
                _fail(source, ll, f"state {e}, law {k}: {exc}")
        states.append(EnvState(tuple(laws)))
        probs.append(float(prob))
    try:
        return EnvModel(tuple(states), np.array(probs), name=str(doc.get("name", "")))
    except ModelError as exc:
        _fail(source, line, str(exc))


def load_model(path) -> EnvModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"{path}: cannot read model file: {exc.strerror}") from None
    return parse_model(text, source=str(path))


def model_to_dict(model: EnvModel) -> dict:
    doc = {"p": model.p, "states": []}
    if model.name:
        doc["name"] = model.name
    for prob, st in zip(model.probs, model.states):
        laws = [
            [{"z": [int(c) for c in z], "prob": float(q)} for z, q in zip(law.support, law.probs)]
            for law in st.laws
        ]
        doc["states"].append({"prob": float(prob), "laws": laws})
    return doc


def format_model(model: EnvModel) -> str:
    """Model file text with one atom per line."""
    doc = model_to_dict(model)
    out = ["{"]
    if "name" in doc:
        out.append(f' "name": {json.dumps(doc["name"])},')
    out.append(f' "p": {doc["p"]},')
    out.append(' "states": [')
    for e, st in enumerate(doc["states"]):
        out.append(f'  {{"prob": {st["prob"]!r},')
        out.append('   "laws": [')
        for k, law in enumerate(st["laws"]):
            atoms = [f'     {{"z": {json.dumps(a["z"])}, "prob": {a["prob"]!r}}}' for a in law]
            out.append("    [\n" + ",\n".join(atoms) + "\n    ]" + ("," if k < len(st["laws"]) - 1 else ""))
        out.append("   ]}" + ("," if e < len(doc["states"]) - 1 else ""))
    out.append(" ]")
    out.append("}")
    return "\n".join(out) + "\n"


def dump_model(model: EnvModel, path) -> None:
    Path(path).write_text(format_model(model), encoding="utf-8")
