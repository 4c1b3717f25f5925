import unittest
import math
import sys
import os

import numpy as np

# Add the src directory to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from src.analysis.norms import norm_stats
from src.core.errors import InsufficientDataError
from src.core.manifold import ManifoldSpec
from src.data.bundle import BundleManifest, SceneRecord, SlotBundle


def fixed_norm_bundle(norms, n_scenes=5, d=6, seed=0):
    """Every slot at level N has norm norms[N]; directions are random."""
    rng = np.random.default_rng(seed)
    levels = tuple(sorted(norms))
    scenes = []
    for i in range(n_scenes):
        slots = {}
        for n in levels:
            directions = rng.standard_normal((n, d))
            directions /= np.linalg.norm(directions, axis=1, keepdims=True)
            slots[n] = norms[n] * directions
        masks = {n: np.full((n, 4), 1.0 / n) for n in levels}
        scenes.append(SceneRecord(f"scene_{i:05d}", slots, masks))
    return SlotBundle(BundleManifest(d, 4, levels), scenes)


class TestNormStats(unittest.TestCase):
    def test_identical_slots(self):
        """Test that identical slots give mean 2, std 0 and a unit spread ratio."""
        slot = np.array([2.0, 0.0, 0.0])
        scenes = [
            SceneRecord(f"scene_{i:05d}", {n: np.tile(slot, (n, 1)) for n in (3, 13)},
                        {n: np.full((n, 4), 1.0 / n) for n in (3, 13)})
            for i in range(3)
        ]
        bundle = SlotBundle(BundleManifest(3, 4, (3, 13)), scenes)

        for manifold in (ManifoldSpec.euclidean(), ManifoldSpec.lorentz(0.5)):
            stats = norm_stats(bundle, manifold)
            for level in (3, 13):
                mean, std = stats.per_level[level]
                self.assertAlmostEqual(mean, 2.0, places=9)
                self.assertAlmostEqual(std, 0.0, places=9)
            self.assertAlmostEqual(stats.spread_ratio, 1.0, places=9)
            self.assertAlmostEqual(stats.centroid_spread_ratio, 1.0, places=9)

    def test_planted_norm_ratio(self):
        bundle = fixed_norm_bundle({3: 1.446, 13: 1.137})
        stats = norm_stats(bundle, ManifoldSpec.euclidean())
        self.assertAlmostEqual(stats.spread_ratio, 1.272, delta=1e-3)
        self.assertIsNone(stats.time_component)

    def test_lorentz_depths_match_euclidean_norms(self):
        """Test that exp-mapped slot depths reproduce Euclidean norms for every curvature."""
        bundle = fixed_norm_bundle({3: 1.446, 13: 1.137})
        euclidean = norm_stats(bundle, ManifoldSpec.euclidean())

        for c in (0.2, 0.5, 1.0):
            stats = norm_stats(bundle, ManifoldSpec.lorentz(c))
            for level in (3, 13):
                self.assertAlmostEqual(stats.per_level[level][0], euclidean.per_level[level][0], delta=1e-8)
                # Check that the time component follows cosh(sqrt(c) * r) / sqrt(c)
                expected = math.cosh(math.sqrt(c) * (1.446 if level == 3 else 1.137)) / math.sqrt(c)
                self.assertAlmostEqual(stats.time_component[level], expected, delta=1e-9)

    def test_centroid_ratio_differs_from_slot_ratio(self):
        bundle = fixed_norm_bundle({3: 1.446, 13: 1.137}, n_scenes=20, seed=4)
        euclidean = norm_stats(bundle, ManifoldSpec.euclidean())
        lorentz = norm_stats(bundle, ManifoldSpec.lorentz(1.0))
        self.assertAlmostEqual(euclidean.spread_ratio, lorentz.spread_ratio, delta=1e-8)
        self.assertNotAlmostEqual(euclidean.centroid_spread_ratio, lorentz.centroid_spread_ratio, places=3)

    def test_levels_subset(self):
        bundle = fixed_norm_bundle({3: 2.0, 5: 1.5, 13: 1.0})
        stats = norm_stats(bundle, ManifoldSpec.euclidean(), levels=[3, 5])
        self.assertEqual(sorted(stats.per_level), [3, 5])
        self.assertAlmostEqual(stats.spread_ratio, 2.0 / 1.5, places=9)

    def test_no_data(self):
        bundle = SlotBundle(BundleManifest(3, 4, (3, 5)), [])
        with self.assertRaises(InsufficientDataError):
            norm_stats(bundle, ManifoldSpec.euclidean())


if __name__ == '__main__':
    unittest.main()
