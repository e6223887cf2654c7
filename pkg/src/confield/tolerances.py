"""Shared numerical tolerances.

Every rank/kernel decision in the package goes through RANK_RTOL so that
subspace dimensions agree across modules.  The remaining knobs are the
documented thresholds for the discrete decisions (is this point a zero,
is this gradient in that image, ...).
"""

# Relative rank tolerance: singular values below RANK_RTOL * s_max count as zero.
RANK_RTOL = 1e-10

# |v(z)| <= ZERO_RTOL * (1 + |z|) * param_scale  qualifies z as a zero.
ZERO_RTOL = 1e-8

# |phi(z)| > PHI_NONZERO_RTOL * param_scale  counts as "conformal factor nonzero".
PHI_NONZERO_RTOL = 1e-8

# Relative least-squares residual below which a vector counts as lying in
# the image of an operator (float path; exact mode decides exactly).
GRAD_IN_IMAGE_RTOL = 1e-6

# Zero-sample deduplication radius, relative to the search-box radius.
DEDUPE_RRADIUS = 1e-6

# Single-linkage component labelling radius, relative to the box radius.
LINKING_RRADIUS = 10 * DEDUPE_RRADIUS

# Conformal-factor spread allowed within one zero-set component.
PHI_SPREAD_RTOL = 1e-8
