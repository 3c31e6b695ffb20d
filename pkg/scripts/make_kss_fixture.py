"""Regenerate the bundled KSS validation-set measurements.

Only per-cell mean CERs are available for this set (64 utterances, 10
augmentation repeats each), so every trial of a cell carries that mean. The
resulting file drives ``melaug dpd-search --bundled-fixture``.

    python scripts/make_kss_fixture.py src/melaug/data/kss_validation_measurements.tsv
"""

import sys

from melaug.augment import make_params
from melaug.search import BASELINE, DEFAULT_SCHEDULES, Trial, write_measurements

N_UTTERANCES = 64
N_REPEATS = 10
BASELINE_CER = 0.201

# Mean CER per schedule point, in schedule order.
STAGE1_CER = {
    "tm": [0.215, 0.217, 0.225, 0.222, 0.232, 0.234, 0.240, 0.248],
    "fm": [0.217, 0.227, 0.235, 0.271, 0.266, 0.302, 0.340, 0.347],
    "tw": [0.218, 0.217, 0.220, 0.223, 0.242, 0.256, 0.265, 0.280],
    "fw": [0.225, 0.237, 0.286, 0.341, 0.400, 0.437, 0.515, 0.545],
    "tlc": [0.211, 0.210, 0.220, 0.211, 0.216, 0.205, 0.219, 0.213],
    "lc": [0.213, 0.217, 0.218, 0.221, 0.254, 0.406],
}

# (width, count) -> mean CER for the second masking stage. The (8, 1) and
# (6, 1) cells repeat stage-1 measurements and are not listed again.
STAGE2_CER = {
    "tm": {(1, 8): 0.216, (2, 4): 0.218, (4, 2): 0.212},
    "fm": {(1, 6): 0.218, (2, 3): 0.213, (3, 2): 0.212},
}

UTT_IDS = [f"kss_val_{i:03d}" for i in range(N_UTTERANCES)]


def _cell(params, index, value):
    return [
        Trial(params.tag, index, params.describe(), utt, r, value)
        for utt in UTT_IDS
        for r in range(N_REPEATS)
    ]


def build_trials():
    trials = [Trial(BASELINE, 0, "-", utt, 0, BASELINE_CER) for utt in UTT_IDS]
    for tag, values in STAGE1_CER.items():
        for i, (point, value) in enumerate(zip(DEFAULT_SCHEDULES[tag].values(), values)):
            trials += _cell(make_params(tag, point), i, value)
    for tag, cells in STAGE2_CER.items():
        offset = DEFAULT_SCHEDULES[tag].count
        pairs = sorted(cells)
        for i, (width, count) in enumerate(pairs):
            trials += _cell(make_params(tag, width, count), offset + i, cells[(width, count)])
    return trials


if __name__ == "__main__":
    write_measurements(build_trials(), sys.argv[1])
