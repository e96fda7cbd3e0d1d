"""Canonical landmark tables shared by the landmarking and synthesis code.

Landmark ids are 1-based in all external formats; arrays are 0-indexed in
id order.
"""

LANDMARK_NAMES = (
    "right_exocanthion",    # 1  right outer eye corner
    "right_endocanthion",   # 2  right inner eye corner
    "nasion",               # 3  nose bridge
    "left_endocanthion",    # 4  left inner eye corner
    "left_exocanthion",     # 5  left outer eye corner
    "pronasale",            # 6  nose tip
    "right_alar_curvature", # 7  right nose corner
    "left_alar_curvature",  # 8  left nose corner
    "subnasale",            # 9  base of nose
    "right_chelion",        # 10 right mouth corner
    "left_chelion",         # 11 left mouth corner
    "labiale_superius",     # 12 top of upper lip
    "labiale_inferius",     # 13 bottom of lower lip
    "pognion",              # 14 chin tip
)

LANDMARK_IDS = {name: i + 1 for i, name in enumerate(LANDMARK_NAMES)}

# Bilaterally mirrored pairs (right id, left id); each pair shares one
# scoring function.
MIRROR_PAIRS = ((1, 5), (2, 4), (7, 8), (10, 11))

# Landmarks lying on the sagittal midline.
MIDLINE_IDS = (3, 6, 9, 12, 13, 14)

# The 10 scoring groups: 4 mirrored pairs + 6 midline singletons, in a fixed
# order so scoring-function indices are stable.
SCORING_GROUPS = ((1, 5), (2, 4), (7, 8), (10, 11), (3,), (6,), (9,), (12,), (13,), (14,))

# Sagittal profile landmarks from nasion down to pognion, in arc order.
PROFILE_LANDMARK_NAMES = (
    "nasion",
    "pronasale",
    "subnasale",
    "labiale_superius",
    "lip_centre",
    "labiale_inferius",
    "chin_cleft",
    "pognion",
)

# Interior sample counts between consecutive profile landmarks; together with
# the 8 landmarks these make the 128 face model points.
FACE_GAP_COUNTS = (17, 17, 17, 17, 17, 17, 18)

# Cranial sampling: 1-degree rays spanning 210 degrees from the nasion ray.
CRANIAL_STEP_DEG = 1.0
CRANIAL_SPAN_DEG = 210.0

N_LANDMARKS = len(LANDMARK_NAMES)
N_FACE_POINTS = sum(FACE_GAP_COUNTS) + len(PROFILE_LANDMARK_NAMES)
N_CRANIAL_POINTS = int(CRANIAL_SPAN_DEG / CRANIAL_STEP_DEG) + 1
