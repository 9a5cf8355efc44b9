def summarize(orders):
    totals = {}
    for order in orders:
        key = order["customer"]
        amount = order["amount"]
        if key not in totals:
            totals[key] = 0
        totals[key] += amount
    ranked = sorted(totals.items(), key=lambda kv: -kv[1])
    best = ranked[0] if ranked else None
    count = len(totals)
    return {"best": best, "count": count}
