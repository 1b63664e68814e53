import pytest


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    # keep dense-operator cache entries out of the user's directory
    monkeypatch.setenv("DISPERSIVE_LAB_CACHE", str(tmp_path / "cache"))
