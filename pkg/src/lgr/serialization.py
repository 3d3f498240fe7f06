"""Versioned JSON dump of fitted models.

Layout (``format_version`` 1)::

    {
      "format": "lgr-model",
      "format_version": 1,
      "type": "lgr" | "lwr",
      "dim": D,
      "n_models": M,
      ...type-specific fields...
    }

``lgr`` adds ``beta_y``, ``config`` (the full FitConfig) and ``models``, a list
of ``{center, log_lambda, mu_w, sigma_w_lower, beta_f, alpha}`` where
``sigma_w_lower`` is the row-major lower triangle of the weight covariance.
``lwr`` adds ``ridge`` and ``models`` as ``{center, scales, weights}``.

Floats are written with Python's shortest round-tripping repr, so loading
reproduces every stored value exactly.
"""

import json
from pathlib import Path

import numpy as np

from . import variational as vi
from .baseline_lwr import LWRModel
from .errors import ModelFileError
from .model import FitConfig, LGRModel

FORMAT = "lgr-model"
FORMAT_VERSION = 1


def _lgr_to_dict(model):
    K = model.dim + 1
    rows, cols = np.tril_indices(K)
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "type": "lgr",
        "dim": model.dim,
        "n_models": model.n_models,
        "beta_y": float(model.beta_y),
        "config": model.config.to_dict(),
        "models": [
            {
                "center": model.centers[m].tolist(),
                "log_lambda": model.log_lambdas[m].tolist(),
                "mu_w": model.weights.mean[m].tolist(),
                "sigma_w_lower": model.weights.cov[m][rows, cols].tolist(),
                "beta_f": float(model.beta_f[m]),
                "alpha": model.alpha[m].tolist(),
            }
            for m in range(model.n_models)
        ],
    }


def _lwr_to_dict(model):
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "type": "lwr",
        "dim": model.dim,
        "n_models": model.n_models,
        "ridge": float(model.ridge),
        "models": [
            {
                "center": model.centers[m].tolist(),
                "scales": model.scales[m].tolist(),
                "weights": model.weights[m].tolist(),
            }
            for m in range(model.n_models)
        ],
    }


def to_dict(model):
    if isinstance(model, LGRModel):
        return _lgr_to_dict(model)
    if isinstance(model, LWRModel):
        return _lwr_to_dict(model)
    raise TypeError(f"cannot serialize {type(model).__name__}")


def _lgr_from_dict(d):
    D = int(d["dim"])
    K = D + 1
    model = LGRModel(D, FitConfig.from_dict(d["config"]), beta_y=d["beta_y"])
    entries = d["models"]
    M = len(entries)
    rows, cols = np.tril_indices(K)
    cov = np.zeros((M, K, K))
    for m, e in enumerate(entries):
        cov[m][rows, cols] = e["sigma_w_lower"]
        cov[m][cols, rows] = e["sigma_w_lower"]
    model.centers = np.array([e["center"] for e in entries], dtype=float).reshape(M, D)
    model.log_lambdas = np.array([e["log_lambda"] for e in entries], dtype=float).reshape(M, D)
    mean = np.array([e["mu_w"] for e in entries], dtype=float).reshape(M, K)
    model.weights = vi.WeightPosteriors(mean, cov)
    model.beta_f = np.array([e["beta_f"] for e in entries], dtype=float)
    model.alpha = np.array([e["alpha"] for e in entries], dtype=float).reshape(M, K)
    return model


def _lwr_from_dict(d):
    D = int(d["dim"])
    entries = d["models"]
    M = len(entries)
    return LWRModel(
        centers=np.array([e["center"] for e in entries], dtype=float).reshape(M, D),
        scales=np.array([e["scales"] for e in entries], dtype=float).reshape(M, D),
        weights=np.array([e["weights"] for e in entries], dtype=float).reshape(M, D + 1),
        ridge=float(d["ridge"]),
    )


def from_dict(d):
    if d.get("format") != FORMAT:
        raise ModelFileError(f"not a model dump (format={d.get('format')!r})")
    if d.get("format_version") != FORMAT_VERSION:
        raise ModelFileError(f"unsupported format_version {d.get('format_version')!r}")
    kind = d.get("type")
    try:
        if kind == "lgr":
            model = _lgr_from_dict(d)
        elif kind == "lwr":
            model = _lwr_from_dict(d)
        else:
            raise ModelFileError(f"unknown model type {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(f"malformed {kind} model: {exc}") from None
    if model.n_models != d["n_models"]:
        raise ModelFileError(f"n_models={d['n_models']} but {model.n_models} models stored")
    return model


def save_model(model, path):
    Path(path).write_text(json.dumps(to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise ModelFileError(f"{path}: no such model file")
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not valid JSON ({exc})") from None
    return from_dict(d)
