import json
import os
import shutil
import tempfile

import pytest

from wick_utils.config import (
    DEFAULT_SLOT_CAP,
    check_slot_cap,
    get_slot_cap,
    load_experiment_config,
    parse_scalar,
)
from wick_utils.errors import ConfigurationError, SlotCapError


class TestSlotCap:
    """Test slot cap resolution."""

    def test_default(self, monkeypatch):
        monkeypatch.delenv("WICK_SLOT_CAP", raising=False)
        assert get_slot_cap() == DEFAULT_SLOT_CAP == 12

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("WICK_SLOT_CAP", "20")
        assert get_slot_cap() == 20
        # explicit argument wins
        assert get_slot_cap(5) == 5

    def test_invalid_environment(self, monkeypatch):
        monkeypatch.setenv("WICK_SLOT_CAP", "many")
        with pytest.raises(ConfigurationError, match="WICK_SLOT_CAP"):
            get_slot_cap()
        monkeypatch.setenv("WICK_SLOT_CAP", "-1")
        with pytest.raises(ConfigurationError):
            get_slot_cap()

    def test_check(self):
        assert check_slot_cap(4, 4) == 4
        with pytest.raises(SlotCapError):
            check_slot_cap(5, 4)


class TestExperimentConfig:
    """Test loading experiment configuration files."""

    @pytest.fixture
    def temp_dir(self):
        temp_dir = tempfile.mkdtemp()
        yield temp_dir
        shutil.rmtree(temp_dir)

    def test_parse_scalar(self):
        assert parse_scalar("yes") is True
        assert parse_scalar("off") is False
        assert parse_scalar("12") == 12
        assert parse_scalar("0.7") == 0.7
        assert parse_scalar(" x^2 ") == "x^2"

    def test_json_file(self, temp_dir):
        path = os.path.join(temp_dir, "exp.json")
        with open(path, "w") as f:
            json.dump({"H": 0.7, "grid": 64}, f)
        assert load_experiment_config(path) == {"H": 0.7, "grid": 64}

    def test_key_value_file(self, temp_dir):
        path = os.path.join(temp_dir, "exp.cfg")
        with open(path, "w") as f:
            f.write("# young mean setup\nH = 0.7\ngrid=128  # dyadic\n\nrule = left\n")
        assert load_experiment_config(path) == {"H": 0.7, "grid": 128, "rule": "left"}

    def test_bad_files(self, temp_dir):
        path = os.path.join(temp_dir, "bad.cfg")
        with open(path, "w") as f:
            f.write("H 0.7\n")
        with pytest.raises(ConfigurationError, match=":1:"):
            load_experiment_config(path)

        with open(path, "w") as f:
            f.write("{not json")
        with pytest.raises(ConfigurationError, match="Invalid JSON"):
            load_experiment_config(path)

        with open(path, "w") as f:
            f.write("[1, 2]")
        # a JSON array is not mistaken for key=value text
        with pytest.raises(ConfigurationError):
            load_experiment_config(path)
