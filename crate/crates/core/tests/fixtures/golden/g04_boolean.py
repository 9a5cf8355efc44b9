def in_range(x, lo, hi, strict=False):
    if x > lo and x < hi or strict and x == lo:
        return True
    ok = x is not None and x not in (lo, hi)
    return ok or False
