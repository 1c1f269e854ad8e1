"""Values computed once by the reference code in ``oracles.py`` and frozen.

Regenerate with the snippets quoted next to each block.
"""

# perron_2x2(annealed(F3_RAW)); annealed mean is [[12/25, 1/4], [11/50, 11/20]]
F3_LAMBDA = 0.7521181140275874
F3_U = (0.9533605559442536, 1.0377067058873704)
F3_V = (0.447047149310312, 0.5529528506896881)

# survival_enumerated(F3_RAW, z, n) over all 2^n environment sequences
F3_SURVIVAL = {
    ((1, 0), 1): 0.59,
    ((1, 0), 5): 0.13989240727899693,
    ((1, 0), 10): 0.030890294732091338,
    ((0, 1), 1): 0.64,
    ((0, 1), 5): 0.1537550850876599,
    ((0, 1), 10): 0.033702793776459385,
    ((1, 1), 1): 0.846,
    ((1, 1), 5): 0.26975435800864567,
    ((1, 1), 10): 0.063258884407124,
    ((2, 1), 1): 0.9327,
    ((2, 1), 5): 0.36806737099200904,
    ((2, 1), 10): 0.09165132676387808,
}

# kernel_row(F3_RAW, (1, 1)) as exact fractions (numerator, denominator)
F3_ROW_11 = {
    (0, 0): (77, 500), (1, 0): (39, 250), (0, 1): (427, 2000), (1, 1): (431, 2000),
    (0, 2): (1, 16), (2, 0): (11, 250), (2, 1): (111, 2000), (1, 2): (67, 1000),
    (0, 3): (3, 1000), (2, 2): (31, 2000), (1, 3): (9, 2000), (3, 0): (3, 500), (3, 1): (3, 1000),
}

# qsd_dense(build_chain(f3(), 40).Q): the truncated chain's top eigenpair
F3_QSD_RATE_K40 = 0.7521180849810283
F3_W_K40 = 1.84475451016511
F3_T_K40 = {
    (1, 0): 0.21011477401430276,
    (0, 1): 0.30464997399658683,
    (2, 0): 0.03635796622821948,
    (1, 1): 0.18501704037369276,
    (0, 2): 0.06244202662910637,
    (3, 0): 0.006010574113937027,
}

# F2 closed forms: lambda(theta) = ((1/4)^theta + (1/2)^theta) / 2
F2_LAMBDA_PRIME_1 = -0.9241962407465937  # ((1/4)log(1/4) + (1/2)log(1/2)) / 2 / (3/8)
