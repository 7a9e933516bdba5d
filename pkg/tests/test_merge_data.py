# test_merge_data.py
import numpy as np
import pandas as pd
import pytest

from geograph import EdgeClass
from merge_data import build_merged_covariates, node_covariates_from_edges


@pytest.fixture
def edge_cov():
    return pd.DataFrame(
        {"speed": [40.0, 60.0, 30.0], "surface": ["asphalt", "gravel", "asphalt"]},
        index=pd.Index([10, 11, 12], name="edge_id"),
    )


def test_edge_covariates_become_node_means_and_proportions(mixed_star, edge_cov):
    derived = node_covariates_from_edges(mixed_star, edge_cov)
    assert list(derived.columns) == ["speed", "surface = asphalt", "surface = gravel"]
    assert derived.loc[1, "speed"] == pytest.approx(130.0 / 3)
    assert derived.loc[1, "surface = asphalt"] == pytest.approx(2 / 3)
    assert derived.loc[3, "surface = gravel"] == pytest.approx(1.0)
    assert np.isnan(derived.loc[5, "speed"])


def test_edge_aggregation_respects_mode(mixed_star, edge_cov):
    derived = node_covariates_from_edges(mixed_star, edge_cov, EdgeClass.OUT)
    assert derived.loc[1, "speed"] == pytest.approx(30.0)
    assert np.isnan(derived.loc[2, "speed"])


def test_merge_prefers_node_columns(mixed_star, edge_cov, covariate_frame):
    node_cov = covariate_frame({"speed": [1.0, 2.0], "z": [0.5, 0.7]}, [2, 1])
    merged = build_merged_covariates(mixed_star, node_cov, edge_cov)
    assert list(merged.index) == [1, 2, 3, 4, 5]
    assert merged.index.name == "node_id"
    assert merged.loc[1, "speed"] == pytest.approx(2.0)
    assert merged.loc[1, "z"] == pytest.approx(0.7)
    assert np.isnan(merged.loc[3, "z"])
    assert "surface = asphalt" in merged.columns


def test_merge_without_tables(path3):
    merged = build_merged_covariates(path3)
    assert list(merged.index) == [1, 2, 3] and merged.columns.empty
