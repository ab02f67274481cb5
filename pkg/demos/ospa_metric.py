"""
The OSPA distance
=================

"""

import numpy as np

from mscphd.metrics import OspaParams, ospa

truth = np.array([[0.0, 0.0], [100.0, 0.0]])
params = OspaParams(c=100.0, p=1.0)

print(ospa(truth, truth, params))                                   # perfect
print(ospa(truth, truth + [3.0, 4.0], params))                      # 5 m off each
print(ospa(truth, truth[:1], params))                               # one missed target
print(ospa(truth, np.vstack([truth, [[900.0, 900.0]]]), params))    # one false alarm
