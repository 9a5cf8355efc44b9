from functools import reduce


def product(xs):
    return reduce(lambda a, b: a * b if b else a, xs, 1)


sort_key = lambda pair: (pair[1], -pair[0])
