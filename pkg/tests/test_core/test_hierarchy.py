import unittest
import sys
import os

import numpy as np

# Add the src directory to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from src.core.errors import (
    EmptyChildError,
    IncompleteSceneError,
    InvalidInputError,
    InvalidParameterError,
)
from src.core.hierarchy import (
    REASON_EMPTY,
    REASON_NEAR_DUPLICATE,
    AttentionMaskSet,
    BinarizationPolicy,
    BinaryMaskSet,
    assign_parents,
    binarize_masks,
    build_hierarchy,
    inclusion_matrix,
    inclusion_score,
)

ARGMAX = BinarizationPolicy()


def binary(level, rows):
    return BinaryMaskSet(level, np.array(rows, dtype=np.uint8), ARGMAX)


def random_scene(rng, levels=(3, 5, 7, 11, 13), patches=49):
    return {n: AttentionMaskSet(n, rng.uniform(0.0, 1.0, size=(n, patches))) for n in levels}


class TestBinarizationPolicy(unittest.TestCase):
    def test_parse_argmax(self):
        policy = BinarizationPolicy.parse("argmax")
        self.assertEqual(policy, ARGMAX)
        self.assertEqual(policy.label, "argmax")

    def test_parse_threshold(self):
        policy = BinarizationPolicy.parse("threshold:0.5")
        self.assertEqual(policy.threshold, 0.5)
        self.assertEqual(policy.label, "threshold:0.5")

    def test_threshold_out_of_range(self):
        for text in ("threshold:0", "threshold:1", "threshold:1.5", "threshold:abc", "otsu"):
            with self.assertRaises(InvalidParameterError):
                BinarizationPolicy.parse(text)


class TestBinarizeMasks(unittest.TestCase):
    def test_argmax_column(self):
        masks = AttentionMaskSet(3, np.array([[0.7], [0.2], [0.1]]))
        bits = binarize_masks(masks, ARGMAX).bits
        np.testing.assert_array_equal(bits[:, 0], [1, 0, 0])

    def test_argmax_tie_goes_to_lowest_index(self):
        masks = AttentionMaskSet(3, np.array([[0.5], [0.5], [0.0]]))
        np.testing.assert_array_equal(binarize_masks(masks).bits[:, 0], [1, 0, 0])

    def test_threshold_column(self):
        masks = AttentionMaskSet(3, np.array([[0.6], [0.55], [0.3]]))
        bits = binarize_masks(masks, BinarizationPolicy.parse("threshold:0.5")).bits
        np.testing.assert_array_equal(bits[:, 0], [1, 1, 0])

    def test_argmax_partitions_patches(self):
        rng = np.random.default_rng(5)
        masks = AttentionMaskSet(7, rng.uniform(size=(7, 64)))
        bits = binarize_masks(masks).bits
        np.testing.assert_array_equal(bits.sum(axis=0), np.ones(64))

    def test_binarization_is_idempotent(self):
        rng = np.random.default_rng(6)
        once = binarize_masks(AttentionMaskSet(5, rng.uniform(size=(5, 36)))).bits
        twice = binarize_masks(AttentionMaskSet(5, once.astype(np.float64))).bits
        np.testing.assert_array_equal(once, twice)

    def test_rejects_out_of_range_weights(self):
        with self.assertRaises(InvalidInputError):
            AttentionMaskSet(2, np.array([[1.5, 0.0], [0.0, 1.0]]))

    def test_rejects_level_mismatch(self):
        with self.assertRaises(InvalidInputError):
            AttentionMaskSet(3, np.zeros((2, 4)))


class TestInclusion(unittest.TestCase):
    def test_subset(self):
        self.assertEqual(inclusion_score([1, 1, 0, 0], [1, 1, 1, 0]), 1.0)

    def test_disjoint(self):
        self.assertEqual(inclusion_score([1, 1, 0, 0], [0, 0, 1, 1]), 0.0)

    def test_half_overlap(self):
        self.assertEqual(inclusion_score([1, 1, 0, 0], [0, 1, 1, 0]), 0.5)

    def test_empty_child(self):
        with self.assertRaises(EmptyChildError):
            inclusion_score([0, 0, 0, 0], [1, 1, 0, 0])

    def test_matrix_marks_empty_rows(self):
        scores = inclusion_matrix(np.array([[1, 0], [0, 0]]), np.array([[1, 1]]))
        self.assertEqual(scores[0, 0], 1.0)
        self.assertTrue(np.isnan(scores[1, 0]))


class TestAssignParents(unittest.TestCase):
    def setUp(self):
        """Set up three coarse regions over six patches."""
        self.coarse = binary(3, [
            [1, 1, 0, 0, 0, 0],
            [0, 0, 1, 1, 0, 0],
            [0, 0, 0, 0, 1, 1],
        ])

    def test_fine_slot_inside_parent_is_excluded(self):
        """Test that a fine slot fully inside coarse slot 2 is assigned to it and excluded."""
        fine = binary(5, [
            [0, 0, 0, 0, 1, 0],
            [1, 0, 0, 0, 0, 0],
            [0, 1, 1, 0, 0, 0],
            [0, 0, 0, 1, 0, 0],
            [0, 0, 0, 0, 0, 1],
        ])
        assignment = assign_parents(fine, self.coarse)

        self.assertEqual(assignment.parent_of[0], 2)
        self.assertEqual(assignment.inclusion[0], 1.0)
        self.assertEqual(assignment.excluded[0], REASON_NEAR_DUPLICATE)
        # Fine slot 2 straddles two coarse slots and stays in evaluation
        self.assertEqual(assignment.parent_of[2], 0)
        self.assertEqual(assignment.inclusion[2], 0.5)
        self.assertEqual(assignment.evaluated(), [2])
        self.assertEqual(assignment.level_pair, (3, 5))

    def test_tie_goes_to_lowest_coarse_index(self):
        coarse = binary(2, [[1, 0, 0, 0], [0, 1, 1, 1]])
        fine = binary(3, [[1, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
        assignment = assign_parents(fine, coarse)
        self.assertEqual(assignment.parent_of[0], 0)
        self.assertEqual(assignment.inclusion[0], 0.5)
        self.assertNotIn(0, assignment.excluded)

    def test_partial_inclusion_not_excluded(self):
        coarse = binary(2, [[1, 1, 0, 0], [0, 0, 1, 1]])
        fine = binary(3, [[1, 1, 1, 0], [0, 0, 0, 1], [0, 0, 0, 0]])
        assignment = assign_parents(fine, coarse)
        self.assertEqual(assignment.parent_of[0], 0)
        self.assertAlmostEqual(assignment.inclusion[0], 2.0 / 3.0, places=12)
        self.assertNotIn(0, assignment.excluded)

    def test_empty_fine_mask_is_excluded(self):
        coarse = binary(2, [[1, 1, 0, 0], [0, 0, 1, 1]])
        fine = binary(3, [[1, 1, 1, 0], [0, 0, 0, 1], [0, 0, 0, 0]])
        assignment = assign_parents(fine, coarse)
        self.assertEqual(assignment.excluded[2], REASON_EMPTY)
        self.assertEqual(assignment.to_dict()["excluded"], {"1": REASON_NEAR_DUPLICATE, "2": REASON_EMPTY})

    def test_tau_excl_one_keeps_full_inclusion(self):
        coarse = binary(2, [[1, 1, 0, 0], [0, 0, 1, 1]])
        fine = binary(3, [[1, 0, 0, 0], [0, 1, 1, 0], [0, 0, 0, 1]])
        assignment = assign_parents(fine, coarse, tau_excl=1.0)
        self.assertEqual(assignment.excluded, {})

    def test_invalid_arguments(self):
        fine = binary(5, np.eye(5, 6, dtype=np.uint8))
        with self.assertRaises(InvalidParameterError):
            assign_parents(fine, self.coarse, tau_excl=0.0)
        with self.assertRaises(InvalidInputError):
            assign_parents(binary(5, np.eye(5, 4, dtype=np.uint8)), self.coarse)
        with self.assertRaises(InvalidInputError):
            assign_parents(self.coarse, fine)


class TestBuildHierarchy(unittest.TestCase):
    def test_all_levels_give_four_assignments(self):
        """Test that a complete scene yields one assignment per consecutive pair."""
        graph = build_hierarchy(random_scene(np.random.default_rng(1)), scene_id="scene_00000")

        self.assertEqual(sorted(graph.assignments), [(3, 5), (5, 7), (7, 11), (11, 13)])
        self.assertEqual(graph.fine_slot_count(), 36)
        self.assertEqual(graph.scene_id, "scene_00000")

    def test_missing_level(self):
        scene = random_scene(np.random.default_rng(2))
        del scene[7]
        with self.assertRaises(IncompleteSceneError):
            build_hierarchy(scene)

    def test_inconsistent_patch_counts(self):
        rng = np.random.default_rng(3)
        scene = random_scene(rng)
        scene[11] = AttentionMaskSet(11, rng.uniform(size=(11, 36)))
        with self.assertRaises(InvalidInputError):
            build_hierarchy(scene)

    def test_duplicated_masks_are_excluded(self):
        """Test that level-5 slots copying level-3 masks are excluded at the (3, 5) pair."""
        coarse = np.zeros((3, 10))
        coarse[0, 0:4] = 1.0
        coarse[1, 4:7] = 1.0
        coarse[2, 7:10] = 1.0
        fine = np.zeros((5, 10))
        fine[0:3] = coarse
        fine[3, 3:5] = 0.6
        fine[4, 6:8] = 0.6
        scene = {3: AttentionMaskSet(3, coarse), 5: AttentionMaskSet(5, fine)}

        # Call the method
        graph = build_hierarchy(scene, BinarizationPolicy.parse("threshold:0.5"), pairs=((3, 5),))

        # Check that only the copied slots are excluded
        assignment = graph.assignments[(3, 5)]
        self.assertEqual(sorted(assignment.excluded), [0, 1, 2])
        self.assertTrue(all(r == REASON_NEAR_DUPLICATE for r in assignment.excluded.values()))
        np.testing.assert_array_equal(assignment.parent_of[:3], [0, 1, 2])
        self.assertEqual(assignment.evaluated(), [3, 4])


if __name__ == '__main__':
    unittest.main()
