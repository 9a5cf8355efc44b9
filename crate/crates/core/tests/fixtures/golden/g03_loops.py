def count_evens(xs):
    # count even entries
    count = 0
    for x in xs:
        if x % 2 == 0:
            count += 1
    i = 0
    while i < len(xs):
        i += 1
    return count
