"""Model file reading and writing.

Schema::

    {"version": 1, "dims": [...], "weights": [... row-major ...],
     "marginals": [{"kind": "continuous", "bandwidth": h, "sorted_values": [...]}
                   | {"kind": "discrete", "support": [...], "probs": [...]}],
     "fit": {"loglik_trace": [...], "iterations": i, "converged": b, "aic": a}}

An empty ``marginals`` list means uniform marginals (a copula-level model).
"""

from __future__ import annotations

import json
from typing import Optional

from .copula import BakerModel, ParamTensor
from .marginals import MarginalModel

VERSION = 1


def model_to_dict(model: BakerModel, fit: Optional[dict] = None) -> dict:
    data = {"version": VERSION}
    data.update(model.params.to_dict())
    data["marginals"] = [m.to_dict() for m in (model.marginals or [])]
    if fit is not None:
        data["fit"] = fit
    return data


def dumps(data: dict) -> str:
    return json.dumps(data, indent=2) + "\n"


def write_model(path, model: BakerModel, fit: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model_to_dict(model, fit)))


def model_from_dict(data: dict) -> BakerModel:
    if data.get("version") != VERSION:
        raise ValueError(f"unsupported model version {data.get('version')!r}")
    params = ParamTensor.from_dict(data)
    marginals = [MarginalModel.from_dict(m) for m in data.get("marginals", [])]
    return BakerModel(params, marginals or None)


def read_model(path):
    """Return ``(model, raw_dict)``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return model_from_dict(data), data
