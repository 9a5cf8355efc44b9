def squares(xs):
    """Return the squares of the positive values."""
    return [x * x for x in xs if x > 0 if x < 100]


def pairs(xs, ys):
    return {(a, b) for a in xs for b in ys if a != b and b}
