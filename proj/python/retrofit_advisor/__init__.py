"""Python access to the retrofit recommendation core."""

import json

import numpy as np

from . import _core
from ._core import RetrofitError, energy_classes, energy_delta, ks_complement, tv_complement

__all__ = [
    "RetrofitError",
    "Service",
    "energy_classes",
    "energy_delta",
    "evaluate",
    "ks_complement",
    "map_measures",
    "train",
    "tv_complement",
]


def evaluate(predicted, truth):
    """Per-label and macro metrics for 0/1 matrices of shape (rows, 4)."""
    return json.loads(_core.evaluate(np.asarray(predicted, float), np.asarray(truth, float)))


def map_measures(measures, map_path=None):
    """Returns (labels, unmatched) for a list of raw improvement descriptions."""
    labels, unmatched = _core.map_measures(list(measures), map_path or "")
    return labels, unmatched


def train(schema_path, data_path, model_out, split_seed=0, mlp=None, delta_path=None):
    """Trains on real data only and writes the model artifact; returns the test metrics."""
    return json.loads(
        _core.train(str(schema_path), str(data_path), str(model_out), split_seed,
                    json.dumps(mlp) if mlp else "", str(delta_path) if delta_path else "")
    )


class Service:
    """In-process equivalent of the HTTP endpoints; each call returns (status, body)."""

    def __init__(self, model_path=None):
        self._service = _core.Service()
        if model_path is not None:
            self._service.load(str(model_path))

    def load(self, model_path):
        self._service.load(str(model_path))

    def recommend(self, request):
        return self._call(self._service.recommend, request)

    def explain(self, request):
        return self._call(self._service.explain, request)

    def model_info(self):
        status, body = self._service.model_info()
        return status, json.loads(body)

    @staticmethod
    def _call(fn, request):
        status, body = fn(request if isinstance(request, str) else json.dumps(request))
        return status, json.loads(body)
