import json
import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest

from wick_utils.chaos2 import Chaos2Kernel, trace_product
from wick_utils.errors import GridMismatchError
from wick_utils.storage import (
    dumps,
    kernels_to_dataset,
    open_kernel,
    open_kernels,
    read_json,
    save_kernel,
    save_kernels,
    table_to_dataset,
    validate_artifact,
    write_csv,
    write_json,
)


@pytest.mark.integration
class TestKernelStores:
    """Test zarr and JSON kernel stores."""

    @pytest.fixture
    def temp_dir(self):
        path = tempfile.mkdtemp()
        yield path
        shutil.rmtree(path)

    @pytest.fixture
    def kernels(self):
        rng = np.random.default_rng(0)
        weights = rng.uniform(0.5, 1.5, 6)
        points = np.cumsum(weights)
        result = []
        for k in range(2):
            a = rng.standard_normal((6, 6))
            result.append(
                Chaos2Kernel.from_orthonormal(
                    a + a.T, weights, label=f"f{k}", points=points, attrs={"t": 0.5 * (k + 1)}
                )
            )
        return result

    def test_dataset_layout(self, kernels):
        ds = kernels_to_dataset(kernels)
        assert ds["matrix"].dims == ("kernel", "x1", "x2")
        assert ds.sizes["kernel"] == 2
        assert ds.attrs["kind"] == "chaos2-kernels"
        assert json.loads(ds.attrs["labels"]) == ["f0", "f1"]

    def test_zarr_round_trip(self, kernels, temp_dir):
        url = str(Path(temp_dir) / "kernels.zarr")
        assert save_kernels(kernels, url) == "zarr"
        loaded = open_kernels(url)
        assert [k.label for k in loaded] == ["f0", "f1"]
        np.testing.assert_allclose(loaded[1].matrix, kernels[1].matrix)
        np.testing.assert_allclose(loaded[0].points, kernels[0].points)
        assert loaded[1].attrs == {"t": 1.0}
        assert trace_product(*loaded) == pytest.approx(trace_product(*kernels))

    def test_json_round_trip(self, kernels, temp_dir):
        url = str(Path(temp_dir) / "kernel.json")
        assert save_kernel(kernels[0], url) == "json"
        loaded = open_kernel(url)
        np.testing.assert_allclose(loaded.matrix, kernels[0].matrix)
        assert loaded.same_grid(kernels[0])
        assert read_json(url)["kind"] == "chaos2-kernels"

    def test_single_kernel_open(self, kernels, temp_dir):
        url = str(Path(temp_dir) / "kernels.zarr")
        save_kernels(kernels, url)
        with pytest.raises(ValueError, match="open_kernels"):
            open_kernel(url)

    def test_explicit_format(self, kernels, temp_dir):
        url = str(Path(temp_dir) / "kernel.store")
        save_kernel(kernels[0], url, format="json")
        assert open_kernel(url, format="json").label == "f0"
        with pytest.raises(ValueError, match="format"):
            save_kernel(kernels[0], url, format="hdf5")

    def test_mismatched_grids(self, kernels):
        other = Chaos2Kernel.from_orthonormal(np.eye(6), np.ones(6))
        with pytest.raises(GridMismatchError):
            kernels_to_dataset([kernels[0], other])

    def test_not_a_kernel_file(self, temp_dir):
        url = str(Path(temp_dir) / "other.json")
        write_json({"kind": "something-else"}, url)
        with pytest.raises(ValueError, match="Not a kernel"):
            open_kernel(url)


class TestTables:
    """Test tabular output."""

    def test_csv_text(self):
        rows = [{"n_intervals": 16, "residual": 0.5}, {"n_intervals": 32, "residual": 0.25}]
        text = write_csv(rows)
        assert text.splitlines() == ["n_intervals,residual", "16,0.5", "32,0.25"]

    def test_nested_values_become_json(self):
        ds = table_to_dataset([{"edges": [[0, 1]], "index": 0}])
        assert ds["edges"].values[0] == "[[0, 1]]"

    def test_empty_table(self):
        assert table_to_dataset([]).sizes["row"] == 0

    def test_csv_file(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            url = str(Path(temp_dir) / "table.csv")
            assert write_csv([{"a": 1}], url) is None
            assert Path(url).read_text().splitlines() == ["a", "1"]


class TestArtifacts:
    """Test JSON artifacts."""

    def test_dumps_is_canonical(self):
        text = dumps({"b": np.float64(0.5), "a": np.int64(2), "c": np.array([1, 2])})
        assert json.loads(text) == {"a": 2, "b": 0.5, "c": [1, 2]}
        assert text.index('"a"') < text.index('"b"')

    def test_valid_artifact(self, capsys):
        artifact = {"command": "appell", "args": {"degree": 2}, "polynomial": {}, "text": "x^2"}
        report = validate_artifact(artifact, verbose=True)
        assert report["valid"]
        assert report["kind"] == "appell"
        assert "✓ Valid" in capsys.readouterr().out

    def test_invalid_artifacts(self, capsys):
        assert not validate_artifact([1, 2])["valid"]
        report = validate_artifact({"command": "mc", "args": {}}, verbose=True)
        assert not report["valid"]
        assert any("Missing keys" in issue for issue in report["issues"])
        assert "⚠" in capsys.readouterr().out
        unknown = validate_artifact({"command": "plot", "args": {}})
        assert any("Unknown command" in issue for issue in unknown["issues"])
        no_args = validate_artifact({"command": "appell", "polynomial": {}, "text": ""})
        assert any("replayed" in issue for issue in no_args["issues"])
