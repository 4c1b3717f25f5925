import unittest
import math
import sys
import os

import numpy as np

# Add the src directory to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from src.analysis.separation import centroid_depth, kde_overlap, separation_analysis, silverman_bandwidth
from src.core.errors import DegenerateInputError, InsufficientDataError
from src.core.manifold import ManifoldSpec
from src.data.bundle import BundleManifest, SceneRecord, SlotBundle
from src.data.synthetic import SyntheticConfig, generate_synthetic

MANIFOLDS = [ManifoldSpec.euclidean(), ManifoldSpec.lorentz(0.5), ManifoldSpec.lorentz(1.0)]


def depth_bundle(depths_per_level, d=4, patches=4, seed=0, shared_direction=False):
    """
    Bundle whose slots at one level of one scene all coincide, so the centroid
    depth of that level equals the given value under every manifold.
    """
    rng = np.random.default_rng(seed)
    levels = tuple(sorted(depths_per_level))
    n_scenes = len(next(iter(depths_per_level.values())))
    scenes = []
    for i in range(n_scenes):
        if i == 0 or not shared_direction:
            direction = rng.standard_normal(d)
            direction /= np.linalg.norm(direction)
        slots = {n: np.tile(depths_per_level[n][i] * direction, (n, 1)) for n in levels}
        masks = {n: np.full((n, patches), 1.0 / n) for n in levels}
        scenes.append(SceneRecord(f"scene_{i:05d}", slots, masks))
    return SlotBundle(BundleManifest(d, patches, levels), scenes)


class TestCentroidDepth(unittest.TestCase):
    def test_single_slot_lorentz(self):
        s = np.array([[0.3, -1.1, 0.4]])
        self.assertAlmostEqual(centroid_depth(s, ManifoldSpec.lorentz(0.5)), float(np.linalg.norm(s)), delta=1e-8)

    def test_symmetric_slots(self):
        slots = np.array([[1.0, 0.0], [-1.0, 0.0]])
        self.assertEqual(centroid_depth(slots, ManifoldSpec.euclidean()), 0.0)
        self.assertAlmostEqual(centroid_depth(slots, ManifoldSpec.lorentz(1.0)), 0.0, delta=1e-9)

    def test_lorentz_centroid_is_pulled_toward_origin(self):
        slots = np.array([[2.0, 0.0], [0.0, 2.0]])
        self.assertLess(centroid_depth(slots, ManifoldSpec.lorentz(1.0)), centroid_depth(slots, ManifoldSpec.euclidean()))


class TestKdeOverlap(unittest.TestCase):
    def setUp(self):
        """Set up a shared random generator."""
        self.rng = np.random.default_rng(99)

    def test_identical_samples(self):
        a = self.rng.standard_normal(200)
        self.assertAlmostEqual(kde_overlap(a, a), 1.0, delta=1e-3)

    def test_disjoint_samples(self):
        a = self.rng.standard_normal(200)
        self.assertLessEqual(kde_overlap(a, a + 1000 * np.std(a)), 0.01)

    def test_unit_gaussians_two_apart(self):
        """Test that two N(0,1)/N(2,1) samples overlap by about 2 * Phi(-1)."""
        a = self.rng.normal(0.0, 1.0, 5000)
        b = self.rng.normal(2.0, 1.0, 5000)
        expected = math.erfc(1.0 / math.sqrt(2.0))
        self.assertAlmostEqual(kde_overlap(a, b), expected, delta=0.03)

    def test_symmetric(self):
        a = self.rng.normal(0.0, 1.0, 300)
        b = self.rng.normal(0.7, 1.5, 150)
        self.assertEqual(kde_overlap(a, b), kde_overlap(b, a))

    def test_degenerate_sample(self):
        with self.assertRaises(DegenerateInputError):
            kde_overlap([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])

    def test_silverman_falls_back_to_std_when_iqr_is_zero(self):
        samples = np.array([0.0] * 10 + [1.0])
        expected = 0.9 * float(np.std(samples, ddof=1)) * samples.size ** (-0.2)
        self.assertAlmostEqual(silverman_bandwidth(samples), expected, places=12)


class TestSeparationAnalysis(unittest.TestCase):
    def test_same_distribution_overlaps(self):
        """Test that levels drawn from one depth distribution are not separated."""
        rng = np.random.default_rng(7)
        bundle = depth_bundle({3: rng.normal(2.0, 0.1, 2000), 5: rng.normal(2.0, 0.1, 2000)})

        results = separation_analysis(bundle, MANIFOLDS)

        for result in results:
            self.assertGreaterEqual(result.ov_mean, 0.9, result.manifold.label)

    def test_well_separated_levels(self):
        rng = np.random.default_rng(8)
        bundle = depth_bundle({
            3: rng.normal(3.0, 0.05, 50),
            5: rng.normal(2.0, 0.05, 50),
            7: rng.normal(1.0, 0.05, 50),
        })

        results = separation_analysis(bundle, MANIFOLDS)

        for result in results:
            self.assertLessEqual(result.ov_mean, 0.05)
            self.assertEqual(result.depth_order, [3, 5, 7])
            self.assertTrue(result.inverted)
            self.assertEqual(result.ov_matrix.shape, (3, 3))
            np.testing.assert_array_equal(result.ov_matrix, result.ov_matrix.T)

    def test_planted_norm_profile_gives_inverted_order(self):
        """Test that a decreasing norm profile is recovered as depth order."""
        bundle = generate_synthetic(SyntheticConfig(n_scenes=30, d_s=32, patches=144, norm_profile="decreasing", seed=5))

        results = separation_analysis(bundle, MANIFOLDS)

        for result in results:
            self.assertEqual(result.depth_order, [3, 5, 7, 11, 13], result.manifold.label)
            self.assertTrue(result.inverted)
            self.assertEqual(len(result.scene_ids), 30)
            self.assertEqual(sorted(result.pair_centroid_distance), [(3, 5), (5, 7), (7, 11), (11, 13)])

    def test_constant_level_gives_nan_entry(self):
        bundle = depth_bundle({3: np.full(10, 2.0), 5: np.linspace(0.5, 1.5, 10)}, shared_direction=True)
        result = separation_analysis(bundle, [ManifoldSpec.euclidean()])[0]
        self.assertTrue(math.isnan(result.ov_matrix[0, 1]))
        self.assertTrue(math.isnan(result.ov_mean))

    def test_too_few_scenes(self):
        bundle = depth_bundle({3: [1.0], 5: [2.0]})
        with self.assertRaises(InsufficientDataError):
            separation_analysis(bundle, MANIFOLDS)


if __name__ == '__main__':
    unittest.main()
