"""Fixed BRIEF sampling pattern.

256 point pairs (ax, ay, bx, by), offsets in pixels relative to the
keypoint, drawn once from an isotropic Gaussian (sigma 6.5, clipped to
+/-15) and frozen here so descriptors are stable across platforms and
library versions. Bit j of a descriptor is set when the smoothed
intensity at a is less than at b.
"""

import numpy as np

BRIEF_PAIRS = np.array([
    (-8, -6, -5, -5), (-6, -11, -4, 3), (4, -1, -2, 11), (-11, 6, 4, -6),
    (-2, -12, -14, -9), (-2, -8, -3, 15), (-2, 11, 2, -4), (-1, -1, 4, 10),
    (-13, 0, 6, -3), (1, 9, -7, -9), (-2, 2, 0, 2), (1, -9, 4, 7),
    (-1, -15, -2, 0), (10, 5, -6, -2), (4, -8, -1, 13), (1, -8, -4, -6),
    (5, -6, 7, -2), (-9, -5, 6, 3), (-1, -4, 7, 1), (-11, 6, 3, -9),
    (-4, -1, -10, 9), (6, -5, 1, 8), (10, 0, -2, -5), (7, 3, -5, 1),
    (-2, -11, -8, -6), (-4, -3, 8, 10), (-15, 0, -6, 7), (7, 2, 0, -1),
    (7, -10, 4, -9), (15, 1, 6, -1), (1, 10, 7, 3), (-2, -15, 7, 9),
    (1, -7, 7, -7), (-4, 5, 11, 2), (4, 2, 0, -1), (1, 6, 11, 4),
    (-2, -4, 0, 0), (-4, 0, 0, -7), (5, 10, 2, -5), (4, -7, -9, 10),
    (-3, -11, 1, -1), (11, 1, -2, 3), (4, 0, -2, 0), (-9, -11, -11, 0),
    (9, -1, -9, 2), (-7, 1, -9, 6), (3, -10, 8, -3), (-6, -3, 5, -3),
    (-5, 4, 5, 0), (-6, -2, 1, 0), (11, 4, -2, -2), (-3, -7, -7, -3),
    (-2, -3, 12, -2), (-4, -15, -8, 4), (-10, -1, -6, 0), (6, 4, -3, 9),
    (-6, 5, 3, 2), (15, 3, -6, 6), (-5, -3, -11, -6), (3, 1, 5, 1),
    (7, -9, 4, -8), (10, 2, 6, 0), (10, -12, 5, -2), (3, 4, -2, -5),
    (2, 6, -4, 1), (0, -5, 2, 4), (-9, -7, 0, 5), (2, -2, 0, 8),
    (0, 5, -10, -4), (-5, -4, 7, -3), (2, 7, 4, 15), (-1, 5, 6, 0),
    (5, 6, -2, -11), (5, -6, -13, -13), (-8, 1, 4, 12), (5, 14, 0, 2),
    (-1, -5, 0, -3), (-5, 0, -4, 4), (-3, 3, -8, -3), (-15, 3, -5, 2),
    (1, -7, 3, 7), (-4, 0, 9, -9), (-4, 5, 1, 4), (-2, -6, 0, -8),
    (-1, 0, 3, -6), (-4, 3, 3, -4), (2, 5, -14, -4), (7, -14, -3, 1),
    (11, 5, -5, 2), (-2, 8, -3, 4), (10, 6, -4, -1), (-5, -15, -7, 7),
    (9, 0, 2, 13), (3, 5, 13, -5), (-6, 2, 11, -4), (-1, -5, 14, 12),
    (-4, -4, -4, 6), (2, -3, 6, -3), (11, -11, 1, -9), (2, -3, 1, -1),
    (4, 8, 3, -1), (2, -8, -6, 10), (-2, 6, -12, 2), (8, -3, 5, -7),
    (-8, 1, 12, -1), (-2, 1, -3, 5), (4, 4, -3, -4), (-3, 2, 5, -3),
    (3, 0, -10, -7), (-6, -2, 4, 9), (-2, 5, -3, -7), (-3, -13, 2, 3),
    (-4, 4, 14, 1), (6, 3, 8, 1), (-9, 3, 6, 9), (-11, -9, 4, 2),
    (4, 7, 6, -3), (-7, 0, -10, -5), (-9, 0, -2, -10), (-1, 5, 9, -6),
    (1, -4, -6, -4), (3, 4, 3, 6), (-12, 7, 3, 10), (4, 7, 6, 6),
    (0, 0, -6, 0), (-2, -8, -1, -1), (3, -5, -9, 2), (5, 5, -8, -15),
    (-6, 5, 0, 0), (1, -6, 7, 15), (-9, 4, 15, -11), (0, -4, 6, -12),
    (2, 2, 0, 0), (-1, 5, 4, -6), (14, 4, -2, 5), (11, -9, 0, 0),
    (-3, -6, 6, 3), (8, -2, -3, -4), (-1, 4, 9, -7), (-3, 1, 5, 6),
    (8, 2, -1, 2), (-13, 6, -14, 0), (-7, -4, 4, 2), (-12, 1, -15, -3),
    (11, -12, -9, -5), (12, 4, 9, -1), (-7, -3, -15, -15), (0, 8, -7, -3),
    (4, -5, 2, 8), (-3, -11, -3, 5), (-15, -7, 5, -2), (3, 10, 6, -4),
    (-5, -2, -3, 3), (3, 4, -15, -15), (-7, -1, -10, 1), (15, 3, 2, -11),
    (-4, 6, 4, 3), (-4, -6, -1, -7), (-4, 5, 6, 11), (-6, 15, 3, 9),
    (2, 5, -8, -7), (11, -9, -3, 6), (5, -6, -7, -1), (4, 2, 0, 4),
    (15, -8, 1, 11), (-15, 2, -4, -2), (-4, -6, 3, -1), (2, -8, 0, -3),
    (-8, -5, -7, -9), (-8, -10, 7, -1), (5, -3, -3, -9), (-1, -9, 2, -3),
    (-5, 5, 5, -7), (1, -4, 7, 6), (4, 1, 8, 6), (3, -6, 0, 4),
    (-2, 4, 3, 7), (-9, 7, 6, 4), (3, 1, -6, 4), (5, -2, -3, 3),
    (2, -6, 9, -10), (4, -5, -3, -1), (2, -4, -6, 3), (4, -2, 3, -14),
    (-3, -1, 7, 0), (-3, 2, 1, -8), (-15, 9, 8, -9), (-10, 1, -4, 15),
    (7, -15, -1, -14), (-4, -2, -4, 1), (-4, -5, 5, 2), (4, -4, 2, 3),
    (3, -8, -9, -3), (-10, -7, 5, 4), (12, 2, 8, -14), (-12, 4, -15, 4),
    (7, -3, 11, 7), (0, 6, -2, 2), (-3, 0, -10, -4), (-3, 7, 9, 11),
    (-11, 4, -7, -4), (-12, -4, -3, 7), (-8, 10, 10, 1), (-9, 12, 10, 2),
    (-7, 3, -7, -5), (3, -2, 6, -4), (2, 2, -7, 9), (-2, 8, 2, 1),
    (13, -8, 8, -4), (-15, 2, -15, 5), (-12, -6, 7, -10), (-4, -3, -11, 1),
    (7, 0, 5, -9), (0, 12, 1, -7), (2, 9, 1, 4), (-11, 0, 2, -7),
    (6, -1, 5, -2), (2, -2, 1, 3), (4, 8, 2, 1), (2, 10, -8, 4),
    (-3, 2, 15, 5), (-2, -5, -3, 3), (-15, -3, 7, 0), (-6, -4, -2, 0),
    (0, 11, 1, -9), (-3, -13, 5, 3), (7, 4, 4, 9), (-6, -4, 1, 1),
    (-12, -2, -8, -2), (-4, 4, 3, 3), (-4, -5, -14, -2), (-4, 4, 13, -6),
    (-8, -2, -2, -7), (-6, -9, 4, -9), (7, 8, 0, 1), (-2, -10, -15, 3),
    (-9, 1, 5, -7), (-14, 6, 1, -5), (4, -10, 1, 8), (6, 0, 1, -15),
    (-9, 1, 4, -1), (-2, 6, 4, 4), (-3, 14, 2, -8), (-5, 4, 10, -2),
    (-12, -3, -3, -8), (0, 11, 15, 6), (-1, -11, -2, 10), (-2, -3, 8, 1),
    (-5, -3, -7, -3), (6, 0, -4, -2), (-10, 2, 2, 12), (4, 8, -5, -4),
    (-5, -7, -1, 6), (-8, -3, -10, 1), (4, 11, -1, 2), (6, 8, -9, -3),
], dtype=np.int64)

PATCH_MARGIN = 16  # pairs reach +/-15 px; smoothing needs one more
