from personasim.ingest import Dataset, InteractionRecord, ItemMetadata

DAY = 86400
T0 = 1_600_000_000


def rec(user="u", item="i", ts=T0, rating=4.0, category="c", text=None):
    return InteractionRecord(user, item, ts, rating, category, text)


def meta(item, price=None, category="c", title="", description=""):
    return ItemMetadata(item, title, description, price, category)


def dataset(triples, metadata=None):
    """Dataset from (user, item, timestamp) triples."""
    return Dataset([rec(u, i, t) for u, i, t in triples], metadata or {})
