import json

import numpy as np
import pytest

from lgr import data
from lgr.baseline_lwr import lwr_fit, lwr_place_centers
from lgr.errors import ModelFileError
from lgr.model import FitConfig, fit
from lgr.serialization import from_dict, load_model, save_model, to_dict


@pytest.fixture(scope="module")
def lgr_model():
    return fit(data.gen_cross2d(120, seed=1), FitConfig(convergence_iters=10, lambda_init=[0.3, 0.4]))[0]


def test_lgr_round_trip_is_exact(tmp_path, lgr_model):
    p = tmp_path / "m.json"
    save_model(lgr_model, p)
    back = load_model(p)
    assert back.dim == 2 and back.n_models == lgr_model.n_models
    assert back.beta_y == lgr_model.beta_y
    assert back.config == FitConfig(**{**lgr_model.config.to_dict()})
    for name in ("centers", "log_lambdas", "beta_f", "alpha"):
        np.testing.assert_array_equal(getattr(back, name), getattr(lgr_model, name))
    np.testing.assert_array_equal(back.weights.mean, lgr_model.weights.mean)
    np.testing.assert_array_equal(back.weights.cov, lgr_model.weights.cov)
    X = np.random.default_rng(0).uniform(-1, 1, (30, 2))
    np.testing.assert_array_equal(back.predict_batch(X)[0], lgr_model.predict_batch(X)[0])


def test_lwr_round_trip_is_exact(tmp_path):
    ds = data.gen_cross2d(150, seed=2)
    model = lwr_fit(ds, lwr_place_centers(ds, 0.3, 0.3), 0.3)
    p = tmp_path / "w.json"
    save_model(model, p)
    back = load_model(p)
    for name in ("centers", "scales", "weights"):
        np.testing.assert_array_equal(getattr(back, name), getattr(model, name))
    assert back.ridge == model.ridge


@pytest.mark.parametrize("edit,match", [
    (lambda d: d.update(format="other"), "not a model dump"),
    (lambda d: d.update(format_version=99), "format_version"),
    (lambda d: d.update(type="gp"), "unknown model type"),
    (lambda d: d["models"][0].pop("mu_w"), "malformed"),
    (lambda d: d.update(n_models=999), "n_models"),
])
def test_bad_dumps_rejected(lgr_model, edit, match):
    d = json.loads(json.dumps(to_dict(lgr_model)))
    edit(d)
    with pytest.raises(ModelFileError, match=match):
        from_dict(d)


def test_unreadable_files(tmp_path):
    with pytest.raises(ModelFileError, match="no such"):
        load_model(tmp_path / "missing.json")
    p = tmp_path / "junk.json"
    p.write_text("{not json")
    with pytest.raises(ModelFileError, match="not valid JSON"):
        load_model(p)


def test_unknown_object_type():
    with pytest.raises(TypeError):
        to_dict(object())
