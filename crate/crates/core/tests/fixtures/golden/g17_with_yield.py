def read_pairs(path):
    '''Yield (left, right) pairs.

    Lines without a tab are skipped.
    '''
    with open(path) as handle:
        for raw in handle:
            if "\t" not in raw:
                continue
            left, right = raw.rstrip("\n").split("\t", 1)
            yield left, right


def evens(n):
    yield from (i for i in range(n) if not i % 2)
