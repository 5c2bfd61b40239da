import numpy as np
import pytest

from volgen.evalx import (ColorHistogram, EvalReport, color_emd,
                          evaluate_holdout, mean_image_predictions,
                          nearest_training_predictions, parameter_vectors,
                          random_training_predictions, rmse, study_harness,
                          transport_distance, write_comparison_table)


def simplex_emd(mass_a, centers_a, mass_b, centers_b, ground=None):
    """Independent oracle: min-cost flow on integer-scaled masses."""
    import networkx as nx
    if ground is None:
        diff = centers_a[:, None, :] - centers_b[None, :, :]
        ground = np.sqrt(np.square(diff).sum(axis=2))
    MASS, COST = 10 ** 9, 10 ** 6
    a = np.round(np.asarray(mass_a) * MASS).astype(int)
    b = np.round(np.asarray(mass_b) * MASS).astype(int)
    a[0] += MASS - a.sum()      # absorb rounding in one cell
    b[0] += MASS - b.sum()
    g = nx.DiGraph()
    for i, m in enumerate(a):
        g.add_node(("s", i), demand=-int(m))
    for j, m in enumerate(b):
        g.add_node(("t", j), demand=int(m))
    for i in range(len(a)):
        for j in range(len(b)):
            g.add_edge(("s", i), ("t", j),
                       weight=int(round(ground[i, j] * COST)))
    cost, _ = nx.network_simplex(g)
    return cost / (MASS * COST)


def random_histogram(rng, max_support=27):
    k = int(rng.integers(1, max_support + 1))
    mass = rng.random(k)
    mass /= mass.sum()
    centers = rng.random((k, 3))
    return mass, centers


class TestRmse:
    def test_known_value(self):
        assert rmse(np.zeros((2, 2)), np.ones((2, 2))) == 1.0
        assert rmse([0.0, 1.0], [1.0, 1.0]) == pytest.approx(np.sqrt(0.5))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            rmse(np.zeros((2, 2)), np.zeros((2, 3)))


class TestColorHistogram:
    def test_uniform_color_single_bin(self):
        img = np.full((4, 4, 3), 0.99)
        h = ColorHistogram.of_image(img)
        assert len(h.mass) == 1
        assert h.mass[0] == 1.0
        assert np.allclose(h.centers[0], (7 + 0.5) / 8)

    def test_mass_normalized(self, rng):
        h = ColorHistogram.of_image(rng.random((16, 16, 3)))
        assert h.mass.sum() == pytest.approx(1.0)
        assert h.centers.shape == (len(h.mass), 3)

    def test_boundary_value_lands_in_last_bin(self):
        h = ColorHistogram.of_image(np.ones((1, 1, 3)))
        assert np.allclose(h.centers[0], 7.5 / 8)


class TestTransportDistance:
    def test_identical_histograms_zero(self, rng):
        mass, centers = random_histogram(rng)
        assert transport_distance(mass, centers, mass, centers) < 1e-9

    def test_two_point_hand_value(self):
        # all mass moves distance 1
        m = np.array([1.0])
        assert transport_distance(m, np.array([[0.0, 0, 0]]),
                                  m, np.array([[1.0, 0, 0]])) == pytest.approx(1.0)

    def test_split_mass_hand_value(self):
        a = np.array([0.5, 0.5])
        ca = np.array([[0.0, 0, 0], [1.0, 0, 0]])
        b = np.array([1.0])
        cb = np.array([[0.5, 0.0, 0.0]])
        assert transport_distance(a, ca, b, cb) == pytest.approx(0.5)

    def test_matches_network_simplex(self, rng):
        for _ in range(25):
            ma, ca = random_histogram(rng)
            mb, cb = random_histogram(rng)
            lp = transport_distance(ma, ca, mb, cb)
            oracle = simplex_emd(ma, ca, mb, cb)
            assert abs(lp - oracle) < 1e-6


class TestColorEmd:
    def test_identical_images_zero(self, rng):
        img = rng.random((8, 8, 3))
        assert color_emd(img, img) < 1e-9

    def test_black_vs_white_is_one(self):
        black = np.zeros((4, 4, 3))
        white = np.ones((4, 4, 3))
        assert color_emd(black, white) == pytest.approx(1.0)

    def test_bounded_unit_interval(self, rng):
        for _ in range(10):
            d = color_emd(rng.random((6, 6, 3)), rng.random((6, 6, 3)))
            assert 0.0 <= d <= 1.0 + 1e-9

    def test_symmetry(self, rng):
        a, b = rng.random((6, 6, 3)), rng.random((6, 6, 3))
        assert color_emd(a, b) == pytest.approx(color_emd(b, a), abs=1e-9)

    def test_triangle_inequality(self, rng):
        for _ in range(10):
            a, b, c = (rng.random((5, 5, 3)) for _ in range(3))
            assert color_emd(a, c) <= color_emd(a, b) + color_emd(b, c) + 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            color_emd(np.zeros((4, 4, 3)), np.zeros((5, 5, 3)))


class TestEvalReport:
    def test_means_and_round_trip(self, tmp_path):
        r = EvalReport(label="x", dataset="d",
                       rmse_per_sample=[0.1, 0.3], emd_per_sample=[0.2, 0.4])
        assert r.mean_rmse == pytest.approx(0.2)
        assert r.mean_emd == pytest.approx(0.3)
        p = tmp_path / "r.json"
        r.save(str(p))
        import json
        doc = json.loads(p.read_text())
        assert doc["mean_rmse"] == pytest.approx(0.2)

    def test_comparison_table(self, tmp_path):
        rs = [EvalReport(label=l, dataset="d",
                         rmse_per_sample=[0.1], emd_per_sample=[0.2])
              for l in ("a", "b")]
        path = tmp_path / "t.csv"
        write_comparison_table(rs, str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("variant,")
        assert len(lines) == 3


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    from volgen.nets import TrainingData
    from volgen.paramgen import generate_dataset
    from volgen.volume import two_shell_volume
    out = tmp_path_factory.mktemp("evds")
    generate_dataset(two_shell_volume(16), 15, str(out), seed=41,
                     color_size=8, opacity_size=8, holdout=3)
    return TrainingData(str(out))


class TestBaselinePredictors:
    def test_parameter_vectors_shape(self, data):
        vecs = parameter_vectors(data)
        assert vecs.shape == (15, 5 + 256 + 768)

    def test_nearest_neighbor_exact_on_duplicate(self, data):
        imgs, picks = nearest_training_predictions(data)
        assert imgs.shape[0] == len(data.holdout_ids)
        assert all(p in data.train_ids for p in picks)

    def test_mean_predictor_constant(self, data):
        preds = mean_image_predictions(data)
        assert preds.shape[0] == len(data.holdout_ids)
        assert np.array_equal(preds[0], preds[-1])

    def test_random_predictor_deterministic(self, data):
        a = random_training_predictions(data, seed=5)
        b = random_training_predictions(data, seed=5)
        assert np.array_equal(a, b)

    def test_truth_as_prediction_scores_zero(self, data):
        from volgen.evalx import _holdout_truth
        report = evaluate_holdout(None, data,
                                  predictions=_holdout_truth(data))
        assert report.mean_rmse == 0.0
        assert report.mean_emd < 1e-9


class TestStudyHarness:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            study_harness("dropout", None, None, None)
