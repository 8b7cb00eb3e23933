"""Common type definitions used across the codebase."""

from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import numpy.typing as npt

# Common type aliases for better readability
JSONDict = Dict[str, Any]
FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]
Walk = List[int]
WalkList = List[Walk]
Edge = Tuple[int, int]
Flip = Tuple[str, int]
FlipList = Sequence[Flip]
