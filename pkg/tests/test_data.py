"""Data model, loaders, and descriptive statistics."""
from __future__ import annotations

import numpy as np
import pytest

from adoptnet.data import (
    AdoptionMatrix,
    CandidateNetwork,
    DataFormatError,
    EmptyDataError,
    NetworkStack,
    adoption_lines,
    dataset_stats,
    filter_min_users,
    load_adoptions,
    load_network_edge_list,
    network_edge_lines,
    normalize_network,
    popularity_counts,
    restrict_adoption_users,
    restrict_users,
)


def square(entries, n):
    w = np.zeros((n, n))
    for i, j, v in entries:
        w[i, j] = w[j, i] = v
    return w


class TestCandidateNetwork:
    def test_valid_construction_freezes_weights(self):
        g = CandidateNetwork(num_users=3, weights=square([(0, 1, 2.0)], 3), name="g")
        assert g.num_edges == 1
        with pytest.raises(ValueError):
            g.weights[0, 1] = 5.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            CandidateNetwork(num_users=3, weights=np.zeros((2, 2)))

    def test_asymmetric_rejected(self):
        w = np.zeros((2, 2))
        w[0, 1] = 1.0
        with pytest.raises(ValueError, match="symmetric"):
            CandidateNetwork(num_users=2, weights=w)

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            CandidateNetwork(num_users=2, weights=square([(0, 1, -1.0)], 2))

    def test_self_loop_rejected(self):
        w = np.zeros((2, 2))
        w[0, 0] = 1.0
        with pytest.raises(ValueError, match="diagonal"):
            CandidateNetwork(num_users=2, weights=w)

    def test_binary_kind_enforced(self):
        with pytest.raises(ValueError, match="binary"):
            CandidateNetwork(num_users=2, weights=square([(0, 1, 2.0)], 2), kind="binary")
        g = CandidateNetwork(num_users=2, weights=square([(0, 1, 1.0)], 2), kind="binary")
        assert g.kind == "binary"

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            CandidateNetwork(num_users=2, weights=square([(0, 1, np.inf)], 2))


class TestAdoptionMatrix:
    def test_timestamp_only_on_installed(self):
        installed = np.zeros((2, 2), dtype=bool)
        installed[0, 0] = True
        times = np.full((2, 2), np.nan)
        times[1, 1] = 3.0
        with pytest.raises(ValueError, match="not installed"):
            AdoptionMatrix(num_users=2, num_apps=2, installed=installed, install_times=times)

    def test_has_timestamps_requires_full_coverage(self):
        installed = np.zeros((2, 2), dtype=bool)
        installed[0, 0] = installed[1, 1] = True
        times = np.full((2, 2), np.nan)
        times[0, 0] = 1.0
        m = AdoptionMatrix(num_users=2, num_apps=2, installed=installed, install_times=times)
        assert not m.has_timestamps
        full = np.full((2, 2), np.nan)
        full[0, 0] = 1.0
        full[1, 1] = 2.0
        m = AdoptionMatrix(num_users=2, num_apps=2, installed=installed, install_times=full)
        assert m.has_timestamps

    def test_default_app_labels(self):
        m = AdoptionMatrix(num_users=1, num_apps=2, installed=np.zeros((1, 2), dtype=bool))
        assert m.app_labels == ("app0", "app1")

    def test_counts(self):
        installed = np.array([[True, True, False], [False, True, False]])
        m = AdoptionMatrix(num_users=2, num_apps=3, installed=installed)
        assert m.counts_per_app().tolist() == [1, 2, 0]
        assert m.counts_per_user().tolist() == [2, 1]
        assert m.adopters_of(1).tolist() == [0, 1]


class TestNetworkStack:
    def test_user_universe_must_agree(self):
        g2 = CandidateNetwork(num_users=2, weights=np.zeros((2, 2)))
        g3 = CandidateNetwork(num_users=3, weights=np.zeros((3, 3)))
        with pytest.raises(ValueError, match="user universe"):
            NetworkStack(networks=(g2, g3))

    def test_empty_stack_rejected(self):
        with pytest.raises(ValueError):
            NetworkStack(networks=())

    def test_negative_popularity_rejected(self):
        g = CandidateNetwork(num_users=2, weights=np.zeros((2, 2)))
        with pytest.raises(ValueError, match="non-negative"):
            NetworkStack(networks=(g,), popularity=np.array([1.0, -1.0]))


class TestLoadNetworkEdgeList:
    def test_single_edge_mirrored(self):
        g = load_network_edge_list("0,1,2.0", num_users=2)
        assert g.weights[0, 1] == 2.0 and g.weights[1, 0] == 2.0

    def test_sum_combines_directions(self):
        g = load_network_edge_list("0,1,2.0\n1,0,3.0", num_users=2, symmetrize="sum")
        assert g.weights[0, 1] == 5.0

    def test_max_takes_larger(self):
        g = load_network_edge_list("0,1,2.0\n1,0,3.0", num_users=2, symmetrize="max")
        assert g.weights[0, 1] == 3.0

    def test_strict_requires_matching_pair(self):
        g = load_network_edge_list("0,1,2.0\n1,0,2.0", num_users=2, symmetrize="strict")
        assert g.weights[0, 1] == 2.0
        with pytest.raises(DataFormatError, match="symmetric"):
            load_network_edge_list("0,1,2.0", num_users=2, symmetrize="strict")
        with pytest.raises(DataFormatError, match="symmetric"):
            load_network_edge_list("0,1,2.0\n1,0,3.0", num_users=2, symmetrize="strict")

    def test_strict_duplicate_rejected(self):
        with pytest.raises(DataFormatError, match="duplicate"):
            load_network_edge_list("0,1,2.0\n0,1,2.0", num_users=2, symmetrize="strict")

    def test_default_weight_and_comments(self):
        g = load_network_edge_list("# header\n0,1  # trailing\n", num_users=2)
        assert g.weights[0, 1] == 1.0

    def test_negative_weight_line_numbered(self):
        with pytest.raises(DataFormatError, match="line 2.*negative"):
            load_network_edge_list("0,1,1.0\n0,1,-1.0", num_users=2)

    def test_out_of_range_id(self):
        with pytest.raises(DataFormatError, match="line 1.*range"):
            load_network_edge_list("0,5,1.0", num_users=2)

    def test_self_loop(self):
        with pytest.raises(DataFormatError, match="self-loop"):
            load_network_edge_list("1,1,1.0", num_users=2)

    def test_binary_checks_weights(self):
        with pytest.raises(DataFormatError, match="binary"):
            load_network_edge_list("0,1,0.5", num_users=2, kind="binary")
        with pytest.raises(DataFormatError, match="binary"):
            load_network_edge_list("0,1,1\n1,0,1", num_users=2, kind="binary",
                                   symmetrize="sum")
        g = load_network_edge_list("0,1,1\n1,0,1", num_users=2, kind="binary",
                                   symmetrize="max")
        assert g.weights[0, 1] == 1.0

    def test_round_trip_random(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            n = int(rng.integers(2, 12))
            density = rng.uniform(0.1, 0.6)
            w = np.triu(rng.random((n, n)) * (rng.random((n, n)) < density), k=1)
            w = w + w.T
            g = CandidateNetwork(num_users=n, weights=w, name="rt")
            text = "\n".join(network_edge_lines(g))
            back = load_network_edge_list(text, num_users=n, symmetrize="max", name="rt")
            np.testing.assert_array_equal(back.weights, g.weights)


class TestLoadAdoptions:
    def test_basic_entry_with_timestamp(self):
        m = load_adoptions("3,7,1590000000", num_users=5, num_apps=10)
        assert m.installed[3, 7]
        assert m.install_times[3, 7] == 1590000000.0

    def test_empty_stream(self):
        m = load_adoptions("", num_users=3, num_apps=4)
        assert not m.installed.any()
        assert m.install_times is None

    def test_identical_duplicates_collapse(self):
        m = load_adoptions("1,2\n1,2\n", num_users=3, num_apps=4)
        assert m.installed.sum() == 1

    def test_conflicting_duplicates_rejected(self):
        with pytest.raises(DataFormatError, match="conflicts"):
            load_adoptions("1,2,5.0\n1,2,6.0", num_users=3, num_apps=4)
        with pytest.raises(DataFormatError, match="conflicts"):
            load_adoptions("1,2,5.0\n1,2", num_users=3, num_apps=4)

    def test_out_of_range(self):
        with pytest.raises(DataFormatError, match="range"):
            load_adoptions("9,0", num_users=3, num_apps=4)
        with pytest.raises(DataFormatError, match="range"):
            load_adoptions("0,9", num_users=3, num_apps=4)

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        installed = rng.random((6, 9)) < 0.3
        times = np.where(installed, rng.integers(0, 100, (6, 9)).astype(float), np.nan)
        m = AdoptionMatrix(num_users=6, num_apps=9, installed=installed, install_times=times)
        back = load_adoptions("\n".join(adoption_lines(m)), num_users=6, num_apps=9)
        np.testing.assert_array_equal(back.installed, m.installed)
        np.testing.assert_array_equal(back.install_times, m.install_times)


class TestFilterMinUsers:
    def test_direct_count(self):
        installed = np.array([[1, 0], [1, 0], [1, 1]], dtype=bool)
        m = AdoptionMatrix(num_users=3, num_apps=2, installed=installed)
        kept_m, kept = filter_min_users(m, 2)
        assert kept.tolist() == [0]
        assert kept_m.num_apps == 1
        assert kept_m.app_labels == ("app0",)

    def test_min_one_keeps_adopted(self):
        installed = np.array([[1, 0, 1]], dtype=bool)
        m = AdoptionMatrix(num_users=1, num_apps=3, installed=installed)
        kept_m, kept = filter_min_users(m, 1)
        assert kept.tolist() == [0, 2]

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        installed = rng.random((10, 20)) < 0.2
        m = AdoptionMatrix(num_users=10, num_apps=20, installed=installed)
        once, _ = filter_min_users(m, 2)
        twice, kept = filter_min_users(once, 2)
        np.testing.assert_array_equal(twice.installed, once.installed)
        assert kept.tolist() == list(range(once.num_apps))


class TestNormalizeNetwork:
    def test_max_divides_by_largest(self):
        g = CandidateNetwork(num_users=3, weights=square([(0, 1, 2.0), (1, 2, 4.0)], 3))
        out = normalize_network(g, "max")
        assert out.weights[0, 1] == 0.5 and out.weights[1, 2] == 1.0

    def test_total_divides_by_sum(self):
        g = CandidateNetwork(num_users=2, weights=square([(0, 1, 2.0)], 2))
        out = normalize_network(g, "total")
        # the sum counts both triangle copies
        assert out.weights[0, 1] == 0.5

    def test_all_zero_unchanged(self):
        g = CandidateNetwork(num_users=2, weights=np.zeros((2, 2)))
        out = normalize_network(g, "max")
        np.testing.assert_array_equal(out.weights, g.weights)

    def test_binary_max_is_identity(self):
        g = CandidateNetwork(num_users=2, weights=square([(0, 1, 1.0)], 2), kind="binary")
        out = normalize_network(g, "max")
        np.testing.assert_array_equal(out.weights, g.weights)
        assert out.kind == "binary"

    def test_none_is_identity(self):
        g = CandidateNetwork(num_users=2, weights=square([(0, 1, 3.0)], 2))
        assert normalize_network(g, "none") is g


class TestPopularityCounts:
    def test_subset_intersection(self):
        installed = np.zeros((6, 1), dtype=bool)
        installed[[1, 2, 5], 0] = True
        m = AdoptionMatrix(num_users=6, num_apps=1, installed=installed)
        assert popularity_counts(m, [1, 2, 3]).tolist() == [2.0]

    def test_empty_visible(self):
        installed = np.ones((3, 2), dtype=bool)
        m = AdoptionMatrix(num_users=3, num_apps=2, installed=installed)
        assert popularity_counts(m, []).tolist() == [0.0, 0.0]

    def test_all_users_equals_column_sums(self):
        rng = np.random.default_rng(11)
        installed = rng.random((8, 14)) < 0.4
        m = AdoptionMatrix(num_users=8, num_apps=14, installed=installed)
        np.testing.assert_array_equal(
            popularity_counts(m), installed.sum(axis=0).astype(float)
        )
        np.testing.assert_array_equal(
            popularity_counts(m, np.arange(8)), installed.sum(axis=0).astype(float)
        )


class TestDatasetStats:
    def test_two_user_example(self):
        installed = np.zeros((2, 4), dtype=bool)
        installed[0, :3] = True
        installed[1, 0] = True
        m = AdoptionMatrix(num_users=2, num_apps=4, installed=installed)
        st = dataset_stats(m)
        assert st.apps_per_user == {1: 1, 3: 1}
        assert st.exp_rate == 0.5
        assert st.mean_apps_per_user == 2.0

    def test_single_app_histogram(self):
        installed = np.ones((4, 1), dtype=bool)
        m = AdoptionMatrix(num_users=4, num_apps=1, installed=installed)
        assert dataset_stats(m).users_per_app == {4: 1}

    def test_histogram_mass(self):
        rng = np.random.default_rng(5)
        installed = rng.random((9, 13)) < 0.3
        installed[0, 0] = True
        m = AdoptionMatrix(num_users=9, num_apps=13, installed=installed)
        st = dataset_stats(m)
        assert sum(st.users_per_app.values()) == 13
        assert sum(st.apps_per_user.values()) == 9

    def test_empty_matrix_rejected(self):
        m = AdoptionMatrix(num_users=2, num_apps=2, installed=np.zeros((2, 2), dtype=bool))
        with pytest.raises(EmptyDataError):
            dataset_stats(m)

    def test_json_round_trips(self):
        import json

        installed = np.ones((2, 2), dtype=bool)
        m = AdoptionMatrix(num_users=2, num_apps=2, installed=installed)
        payload = json.loads(dataset_stats(m).to_json())
        assert payload["num_users"] == 2
        assert payload["users_per_app"] == [[2, 2]]


class TestRestriction:
    def test_restrict_users_induced_subgraph(self):
        w = square([(0, 1, 2.0), (1, 2, 3.0), (0, 2, 5.0)], 3)
        g = CandidateNetwork(num_users=3, weights=w, name="phone", kind="weighted")
        sub = restrict_users(g, [2, 0])
        assert sub.num_users == 2
        assert sub.weights[0, 1] == 5.0
        assert sub.name == "phone"

    def test_restrict_adoption_users(self):
        installed = np.array([[1, 0], [0, 1], [1, 1]], dtype=bool)
        times = np.where(installed, 7.0, np.nan)
        m = AdoptionMatrix(num_users=3, num_apps=2, installed=installed, install_times=times)
        sub = restrict_adoption_users(m, [2, 1])
        assert sub.installed.tolist() == [[True, True], [False, True]]
        assert sub.install_times[0, 0] == 7.0
