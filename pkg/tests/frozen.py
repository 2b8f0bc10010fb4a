"""Reference values computed with mpmath at 40 significant digits before the
library existed.  Normal integrals come from ``mpmath.ncdf``; bivariate
orthant probabilities from a one-dimensional ``mpmath.quad`` of the
conditional normal tail, independent of the library's algorithm."""

PHI_1_96 = 0.97500210485177956
Q_0_975 = 1.9599639845400542
ORTHANT_RHO_HALF = 1.0 / 3.0
P_SAA00_ETA1 = 0.14168772526865318
ETA_PRIME = {0.5: 0.35014196521517441, 1.0: 0.31491182889821148, 2.0: 0.055696482254661044}
ROOT_PHI_0_62361 = 0.3149758370862654
MAXMIN_P00_ENTRY = 0.70786098173714102
LUMPSUM_SLOPE_A9_E12 = 0.00883976665008498
PHI_INV_0_75 = 0.67448975019608174
PHI_INV_0_8 = 0.84162123357291436

# (h, k, rho) -> P(X > h, Y > k)
BVN_UPPER = {
    (0.3, -0.2, 0.6): 0.31411612037228972,
    (-1.0, 1.5, -0.7): 0.021531327501401993,
    (2.0, 2.0, 0.95): 0.016024483704266529,
    (8.0, -4.0, -0.5): 2.9373842978268417e-16,
    (-2.0, -3.0, -0.99): 0.9758999700201907,
}
