import numpy as np
import pytest
from sklearn.base import clone

from kslsda import KohnShamLSDA
from kslsda.config import parse_config
from kslsda.exceptions import ConfigError


def test_params_round_trip():
    est = KohnShamLSDA(n=9, L=8.0, lam=0.5, mode="noninteracting")
    params = est.get_params()
    assert params["n"] == 9 and params["mode"] == "noninteracting"
    assert clone(est).get_params() == params
    cfg = est.to_config()
    assert KohnShamLSDA.from_config(cfg).to_config() == cfg


def test_fit_sets_attributes():
    est = KohnShamLSDA(n=9, L=8.0, lam=1.0, mode="noninteracting", nuclei=((1, (0.1, 0.0, 0.0)),)).fit()
    assert est.converged_
    assert est.energy_.total == pytest.approx(est.eigenvalues_[0], abs=1e-8)
    assert est.score() == -est.energy_.total
    assert est.occupations_.sum() == pytest.approx(1.0)


def test_invalid_params_raise_on_fit():
    with pytest.raises(ConfigError):
        KohnShamLSDA(n=9, L=-1.0).fit()
    with pytest.raises(ValueError):
        KohnShamLSDA(mode="relativistic").fit()


def test_from_parsed_config():
    cfg = parse_config("lambda = 0.7\n[grid]\nn = 8\nL = 6.0\n[nucleus]\nz = 1\nposition = 0.1 0 0\n")
    est = KohnShamLSDA.from_config(cfg)
    assert est.lam == 0.7 and est.n == 8
