import math
from typing import Iterable

NEG_INF = -math.inf


def logsumexp(values: Iterable[float]) -> float:
    """log(sum(exp(v))) with the max-shift trick; -inf terms drop out."""
    values = [v for v in values if v != NEG_INF]
    if not values:
        return NEG_INF
    top = max(values)
    if len(values) == 1:
        return top
    return top + math.log(math.fsum(math.exp(v - top) for v in values))
