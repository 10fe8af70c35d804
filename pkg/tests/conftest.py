import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bhshader import shading, starfield, tables

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def timed_tables():
    """Default-resolution tables at epsilon = 1e-5 and the wall time it took."""
    start = time.perf_counter()
    tb = tables.precompute(1e-5)
    return tb, time.perf_counter() - start


@pytest.fixture(scope="session")
def geo_tables(timed_tables):
    return timed_tables[0]


@pytest.fixture(scope="session")
def coarse_tables():
    return tables.precompute(1e-4, (64, 64), (16, 8))


@pytest.fixture(scope="session")
def color_table():
    return shading.precompute_color_table()


@pytest.fixture(scope="session")
def small_catalog():
    return starfield.generate_catalog(seed=3, count=2000)


@pytest.fixture(scope="session")
def small_starmap(small_catalog):
    return starfield.build_starmap(small_catalog, face_size=64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def table_files(tmp_path_factory, geo_tables, color_table):
    """The default geodesic tables and the color table written to disk."""
    root = tmp_path_factory.mktemp("tables")
    paths = {"tables": root / "tables.bht", "color_table": root / "colors.bct"}
    tables.save(geo_tables, paths["tables"])
    shading.save_color_table(color_table, paths["color_table"])
    return paths
