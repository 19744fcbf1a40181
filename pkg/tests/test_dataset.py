import numpy as np
import pytest

from smauq.Material import MPA
from smauq.Dataset import ExperimentalDataset, ParseError, ValidationError, ingest_dataset


def _write(tmp_path, name, lines):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def _rows(n=12):
    cooling = [f"cooling,{340.0 - i},{0.004 * i}" for i in range(n)]
    heating = [f"heating,{329.0 - n + 1 + i},{0.004 * (n - 1 - i)}" for i in range(n)]
    return cooling + heating


def test_well_formed_file(tmp_path):
    path = _write(tmp_path, "run150.csv", ["# stress_MPa=150", "branch,T_K,eps_t"] + _rows())
    ds = ingest_dataset(path)
    assert ds.stress == 150 * MPA
    assert ds.label == "run150"
    assert ds.n_points == 24
    assert np.all(np.diff(ds.cooling_T) < 0)
    assert np.all(np.diff(ds.heating_T) > 0)
    assert ds.cooling_eps[0] == 0.0
    assert ds.cooling_eps[-1] == pytest.approx(0.044)


def test_stress_column_in_place_of_header(tmp_path):
    rows = [r + ",200" for r in _rows()]
    path = _write(tmp_path, "col.csv", ["branch,T_K,eps_t,stress_MPa"] + rows)
    assert ingest_dataset(path, label="x").stress == 200 * MPA


def test_missing_stress_is_a_parse_error(tmp_path):
    path = _write(tmp_path, "nostress.csv", ["branch,T_K,eps_t"] + _rows())
    with pytest.raises(ParseError, match="stress_MPa"):
        ingest_dataset(path)


def test_missing_column_is_named(tmp_path):
    rows = [",".join(r.split(",")[:2]) for r in _rows()]
    path = _write(tmp_path, "noeps.csv", ["# stress_MPa=150", "branch,T_K"] + rows)
    with pytest.raises(ParseError, match="eps_t"):
        ingest_dataset(path)


def test_bad_value_reports_file_row(tmp_path):
    rows = _rows()
    rows[3] = "cooling,337.0,oops"
    path = _write(tmp_path, "bad.csv", ["# stress_MPa=150", "branch,T_K,eps_t"] + rows)
    # comment line, header, then rows: the fourth row is line 6
    with pytest.raises(ParseError, match="row 6"):
        ingest_dataset(path)


def test_unknown_branch(tmp_path):
    rows = _rows()
    rows[0] = "sideways,340.0,0.0"
    path = _write(tmp_path, "branch.csv", ["# stress_MPa=150", "branch,T_K,eps_t"] + rows)
    with pytest.raises(ParseError, match="sideways"):
        ingest_dataset(path)


def test_too_few_points(tmp_path):
    path = _write(tmp_path, "short.csv", ["# stress_MPa=150", "branch,T_K,eps_t"] + _rows(9))
    with pytest.raises(ValidationError, match="at least 10"):
        ingest_dataset(path)


def test_repeated_temperatures_are_averaged(tmp_path):
    rows = _rows() + ["cooling,335.0,0.03"]
    path = _write(tmp_path, "dupes.csv", ["# stress_MPa=150", "branch,T_K,eps_t"] + rows)
    ds = ingest_dataset(path)
    assert ds.cooling_T.shape[0] == 12
    i = int(np.flatnonzero(ds.cooling_T == 335.0)[0])
    assert ds.cooling_eps[i] == pytest.approx(0.5 * (0.02 + 0.03))


def test_simulated_loop_round_trips_as_data(tmp_path, loop150):
    path = loop150.save(str(tmp_path / "loop_150MPa.csv"))
    ds = ingest_dataset(path)
    assert ds.stress == loop150.stress
    assert np.array_equal(ds.cooling_T, loop150.cooling.T)
    assert np.array_equal(ds.eps_vector, loop150.eps_vector)
    assert ds.squared_distance(loop150) == 0.0


def test_dataset_json_and_csv_round_trip(tmp_path, loop150):
    ds = ExperimentalDataset.from_loop(loop150, label="sim")
    assert ExperimentalDataset.load_dataset(ds.json_repr) == ds
    again = ingest_dataset(ds.save(str(tmp_path / "sim.csv")))
    assert again == ds


def test_model_grid_covers_data(calibrated_niti, loop150):
    ds = ExperimentalDataset.from_loop(loop150)
    grid = ds.model_grid(calibrated_niti, n_grid=60)
    lo, hi = ds.temperature_range
    assert grid.T_min <= lo and grid.T_max >= hi
    assert grid.n_grid == 60
