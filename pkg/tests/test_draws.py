import numpy as np
import pytest

from cfxg.draws import RUN_FILE, PosteriorDraws, chain_file
from cfxg.errors import DataError
from cfxg.nuts import StandardNormal, sample


@pytest.fixture(scope="module")
def draws():
    return sample(StandardNormal(3), chains=2, warmup=150, draws=40, seed=3)


def test_round_trip_exact(draws, tmp_path):
    draws.to_directory(tmp_path)
    back = PosteriorDraws.from_directory(tmp_path)
    assert np.array_equal(back.samples, draws.samples)
    assert np.array_equal(back.energy, draws.energy)
    for k in ("tree_depth", "accept_stat", "divergent", "step_size"):
        assert np.array_equal(back.stats[k], draws.stats[k])
    assert np.array_equal(back.inv_mass, draws.inv_mass)
    assert np.array_equal(back.step_size, draws.step_size)
    assert back.param_names == draws.param_names
    assert back.config["seed"] == 3


def test_files_written(draws, tmp_path):
    draws.to_directory(tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["chain_0.csv", "chain_1.csv", RUN_FILE]
    lines = (tmp_path / "chain_0.csv").read_text().splitlines()
    assert len(lines) == 41
    assert lines[0].endswith("energy,tree_depth,accept_stat,divergent,step_size")


def test_missing_chain(draws, tmp_path):
    draws.to_directory(tmp_path)
    (tmp_path / chain_file(1)).unlink()
    with pytest.raises(DataError, match="chain 1"):
        PosteriorDraws.from_directory(tmp_path)


def test_truncated_chain(draws, tmp_path):
    draws.to_directory(tmp_path)
    f = tmp_path / chain_file(0)
    f.write_text("\n".join(f.read_text().splitlines()[:-5]) + "\n")
    with pytest.raises(DataError, match="35 draws"):
        PosteriorDraws.from_directory(tmp_path)


def test_header_mismatch(draws, tmp_path):
    draws.to_directory(tmp_path)
    f = tmp_path / chain_file(0)
    text = f.read_text()
    f.write_text(text.replace(draws.param_names[0], "renamed", 1))
    with pytest.raises(DataError, match="header"):
        PosteriorDraws.from_directory(tmp_path)


def test_missing_run_file(tmp_path):
    with pytest.raises(DataError):
        PosteriorDraws.from_directory(tmp_path)


def test_shape_checks():
    with pytest.raises(DataError):
        PosteriorDraws(np.zeros((2, 5)), np.zeros((2, 5)), {}, ["a"])
    with pytest.raises(DataError):
        PosteriorDraws(np.zeros((2, 5, 1)), np.zeros((2, 4)), {}, ["a"])
    with pytest.raises(DataError):
        PosteriorDraws(np.zeros((2, 5, 1)), np.zeros((2, 5)), {}, ["a", "b"])


def test_accessors(draws):
    assert (draws.n_chains, draws.n_draws, draws.dim) == (2, 40, 3)
    assert np.array_equal(draws.param(draws.param_names[1]), draws.samples[:, :, 1])
    assert draws.flat().shape == (80, 3)
    with pytest.raises(KeyError):
        draws.index("nope")
