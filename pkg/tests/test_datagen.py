import numpy as np
import pytest

from sgcsim.datagen import CsvFormatError, Dataset, SynthConfig, generate_synthetic, load_csv, normalize_spectral
from sgcsim.numerics import least_squares_optimum, spectral_norm


def test_default_recipe_shapes_and_coefficients():
    d = generate_synthetic(SynthConfig())
    assert d.X.shape == (1000, 100) and d.y.shape == (1000,)
    assert d.beta_bar.min() >= 1 and d.beta_bar.max() <= 10
    assert np.all(d.beta_bar == np.round(d.beta_bar))


def test_feature_and_noise_statistics():
    cfg = SynthConfig(feature_std=10.0, seed=99)
    d = generate_synthetic(cfg)
    ratio = d.X.var(axis=0, ddof=1) / cfg.feature_std**2
    # one column's sample variance has relative sd sqrt(2/999) ~ 4.5%
    assert abs(ratio.mean() - 1) < 0.02
    assert np.mean(np.abs(ratio - 1) < 0.1) > 0.9
    noise = d.y - d.X @ d.beta_bar
    assert abs(noise.std(ddof=1) / cfg.label_noise_std - 1) < 0.1


def test_determinism():
    a = generate_synthetic(SynthConfig(m=30, ell=4, seed=5))
    b = generate_synthetic(SynthConfig(m=30, ell=4, seed=5))
    c = generate_synthetic(SynthConfig(m=30, ell=4, seed=6))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.X, c.X)


def test_noiseless_recovers_planted_model():
    d = generate_synthetic(SynthConfig(m=200, ell=10, label_noise_std=0.0, seed=3))
    assert np.allclose(least_squares_optimum(d.X, d.y), d.beta_bar, rtol=0, atol=1e-8)


def test_unit_rows():
    d = generate_synthetic(SynthConfig(m=20, ell=3, unit_rows=True))
    assert np.allclose(np.linalg.norm(d.X, axis=1), 1.0)


@pytest.mark.parametrize("kw", [dict(m=0), dict(ell=0), dict(feature_std=0.0), dict(coeff_low=5, coeff_high=2)])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        SynthConfig(**kw)


def test_normalization_keeps_optimum_and_sets_unit_gram_norm():
    d = generate_synthetic(SynthConfig(m=100, ell=5, seed=1))
    lam = spectral_norm(d.X)
    nd = normalize_spectral(d, lam)
    assert spectral_norm(nd.X) == pytest.approx(1.0, rel=1e-9)
    assert np.allclose(least_squares_optimum(nd.X, nd.y), least_squares_optimum(d.X, d.y), rtol=1e-9)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(X=np.zeros((3, 2)), y=np.zeros(2))


def test_load_csv(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("1,2,3\n4,5,6")
    d = load_csv(f)
    assert np.array_equal(d.X, [[1, 2], [4, 5]]) and np.array_equal(d.y, [3, 6])
    g = tmp_path / "b.csv"
    g.write_text("x1,x2,y\n1,2,3\n")
    assert load_csv(g, has_header=True).X.shape == (1, 2)


@pytest.mark.parametrize(
    "text,line",
    [("1,2,3\nabc,2,3\n", 2), ("1,2,3\n1,2\n", 2), ("1,nan,3\n", 1), ("", None), ("1,inf,2\n", 1)],
)
def test_load_csv_errors_name_line(tmp_path, text, line):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(CsvFormatError) as ei:
        load_csv(f)
    if line is not None:
        assert f"bad.csv:{line}:" in str(ei.value)
