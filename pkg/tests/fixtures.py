"""Frozen reference fixtures.

All expected values below were produced once by the independent oracles in
oracles.py and are pinned as literals; the tests assert that both the
library and a fresh oracle run still reproduce them.
"""

from __future__ import annotations

import numpy as np

# --- 5-asset sensitivity embedding in 3 driver coordinates -----------------

EMBEDDING_5 = np.array(
    [
        [0.012, -0.034, 0.051],
        [0.009, -0.028, 0.047],
        [-0.041, 0.022, 0.005],
        [0.033, 0.014, -0.019],
        [-0.008, -0.003, 0.002],
    ]
)

# single-linkage merges on the Euclidean distances of EMBEDDING_5:
# (left, right, distance, size), new cluster ids 5, 6, 7, 8; within a merge
# the taller child sits left, equal heights ordered by outside-distance
# profile then id
LINKAGE_5 = [
    (1, 0, 0.007810249675906654, 2),
    (4, 2, 0.04150903516103452, 2),
    (6, 3, 0.04910193478876367, 3),
    (7, 5, 0.0542125446737192, 5),
]

LEAF_ORDER_5 = [4, 2, 3, 1, 0]

# recursive bisection on the double-centered Gram of EMBEDDING_5 in
# LEAF_ORDER_5, which is also the composed allocation for the embedding
HSP_WEIGHTS_5 = np.array(
    [
        0.07933944282150554,
        0.11304366047545608,
        0.07477049778839466,
        0.1050808915358265,
        0.6277655073788173,
    ]
)

# --- standalone bisection fixture: explicit PSD Gram and ordering ----------

GRAM_5 = np.array(
    [
        [1.8399999999999999, -0.36, -0.32000000000000006, 0.2, 0.41999999999999993],
        [-0.36, 0.9800000000000001, -0.09999999999999998, 0.34, -0.45],
        [-0.32000000000000006, -0.09999999999999998, 1.3100000000000003, -0.26000000000000006, 0.4],
        [0.2, 0.34, -0.26000000000000006, 0.20000000000000004, -0.16],
        [0.41999999999999993, -0.45, 0.4, -0.16, 0.37999999999999995],
    ]
)

GRAM_5_ORDER = [2, 0, 4, 1, 3]

BISECTION_WEIGHTS_5 = np.array(
    [
        0.061507797536400406,
        0.10420055422691797,
        0.0863926316541807,
        0.5105827157118981,
        0.23731630087060285,
    ]
)

# --- cap fixture -----------------------------------------------------------

CAP_INPUT = np.array([0.5, 0.3, 0.1, 0.07, 0.03])
CAP_LEVEL = 0.25
CAP_EXPECTED = np.array([0.25, 0.25, 0.25, 0.17500000000000002, 0.075])

# --- HRP fixture: 12 observations of 5 asset returns -----------------------

RETURNS_5 = np.array(
    [
        [0.003381, -0.011875, 0.004414, -0.004817, -0.007105],
        [-0.002344, 0.002653, 0.012273, -0.014557, -0.006395],
        [-0.005308, -0.000740, 0.002776, 0.003529, 0.003868],
        [0.005956, -0.000138, 0.010626, -0.004788, -0.000809],
        [0.004656, -0.007358, 0.002804, -0.002691, -0.003362],
        [-0.008943, -0.004189, 0.002619, 0.000899, -0.000274],
        [0.006324, 0.014461, 0.013425, 0.011998, 0.006505],
        [0.014239, -0.009596, 0.002854, 0.007141, -0.007668],
        [-0.000591, 0.003393, 0.003554, -0.000921, 0.000088],
        [-0.004249, 0.000555, -0.013309, -0.012173, 0.015144],
        [0.005517, 0.016781, 0.022827, 0.013194, 0.006621],
        [-0.006853, 0.001378, -0.009002, -0.009976, -0.023377],
    ]
)

HRP_WEIGHTS_5 = np.array(
    [
        0.41710610295094613,
        0.17865654494973177,
        0.09020313233844753,
        0.10493309177892816,
        0.20910112798194644,
    ]
)
