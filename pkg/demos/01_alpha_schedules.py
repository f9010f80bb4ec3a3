#!/usr/bin/env python3
"""Walk through the continuation-parameter schedules.

Alpha drives every experiment in this package: 0 means "train on the focused
variant only", 1 means "train on the full data only".  This script prints how
each policy moves alpha across a 20-epoch run.
"""

import numpy as np

from featcont.schedule import alpha_at, parse_schedule

EPOCHS = 20

policies = [
    "linear",            # alpha grows by 1/epochs per epoch
    "constant:0.5",      # fixed half/half mixture throughout
    "step:0.25,1.0",     # domain-adaptation style: focused first, then full
    "piecewise:0.8,0.5", # slow start: reach 0.5 after 80% of the epochs, then sprint to 1
]

schedules = {text: parse_schedule(text) for text in policies}

header = "epoch " + "".join(f"{text:>18s}" for text in policies)
print(header)
print("-" * len(header))
for epoch in range(EPOCHS):
    row = f"{epoch:5d} "
    for text in policies:
        row += f"{alpha_at(schedules[text], epoch, EPOCHS):18.3f}"
    print(row)

# The ramping policies land exactly on 1.0 at the end of the run:
for text in ("linear", "piecewise:0.8,0.5"):
    assert alpha_at(schedules[text], EPOCHS, EPOCHS) == 1.0

# piecewise with equal knees degenerates to the plain linear ramp
lin = [alpha_at(parse_schedule("linear"), e, EPOCHS) for e in range(EPOCHS + 1)]
pw = [alpha_at(parse_schedule("piecewise:0.4,0.4"), e, EPOCHS) for e in range(EPOCHS + 1)]
print("\npiecewise:0.4,0.4 equals linear:", np.allclose(lin, pw, atol=1e-12))
